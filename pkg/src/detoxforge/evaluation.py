"""Evaluation harness: score detox outputs per platform and overall.

Input rows are JSON-lines with fields {platform, input, output, reference?}.
Per platform the harness computes the six-metric row: style accuracy and
fluency through classifier endpoints, the two embedding-similarity columns
through embedder endpoints, BLEU natively, and the joint metric from the
row's own accuracy/similarity/fluency.

BLEU referent is configurable: "self" scores output against the input
(deployment-style monitoring), "reference" scores output against the gold
rewrite and is the default for test-set evaluation. In reference mode rows
whose output is a detected refusal are excluded from BLEU and counted
separately instead.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional

from .errors import DataError, EmptyMetricInputError
from .metrics import (
    BleuConfig,
    PlatformReport,
    RefusalLexicon,
    aggregate_overall,
    bleu,
    content_similarity,
    detect_refusal,
    fluency_rate,
    joint_metric,
    style_accuracy,
)

log = logging.getLogger(__name__)


class BleuReferent(str, Enum):
    SELF = "self"
    REFERENCE = "reference"


@dataclass(frozen=True)
class EvalRow:
    platform: str
    input: str
    output: str
    reference: Optional[str] = None

    @classmethod
    def from_json(cls, d: dict) -> "EvalRow":
        return cls(platform=d["platform"], input=d["input"], output=d["output"],
                   reference=d.get("reference"))


@dataclass(frozen=True)
class EvalEndpoints:
    style_classifier: str = "style_classifier"
    fluency_classifier: str = "fluency_classifier"
    bertscore_embedder: str = "bertscore_embedder"
    sim_embedder: str = "sim_embedder"


@dataclass
class EvaluationReport:
    rows: list[PlatformReport]
    overall: PlatformReport
    refusals: dict = field(default_factory=dict)   # platform -> refusal count
    bleu_referent: str = BleuReferent.REFERENCE.value

    def to_json(self) -> dict:
        return {
            "bleu_referent": self.bleu_referent,
            "platforms": [r.to_json() for r in self.rows],
            "overall": self.overall.to_json(),
            "refusals": self.refusals,
        }


def evaluate_corpus(rows: Iterable[EvalRow], gateway,
                    endpoints: EvalEndpoints = EvalEndpoints(),
                    bleu_cfg: BleuConfig = BleuConfig(),
                    referent: BleuReferent = BleuReferent.REFERENCE,
                    lexicon: RefusalLexicon = RefusalLexicon()) -> EvaluationReport:
    rows = list(rows)
    if not rows:
        raise EmptyMetricInputError("no evaluation rows")

    by_platform: dict[str, list[EvalRow]] = {}
    for row in rows:
        by_platform.setdefault(row.platform, []).append(row)

    style_spec = gateway.endpoint(endpoints.style_classifier)
    fluency_spec = gateway.endpoint(endpoints.fluency_classifier)

    reports: list[PlatformReport] = []
    refusal_counts: dict[str, int] = {}
    for platform in sorted(by_platform):
        group = by_platform[platform]
        nontoxic_flags = []
        fluent_flags = []
        bs_values = []
        sim_values = []
        refusal_flags = []
        for row in group:
            # Style accuracy counts outputs the toxicity classifier clears.
            verdict = gateway.classify(endpoints.style_classifier, row.output)
            nontoxic_flags.append(verdict.label == style_spec.negative_label)
            # Fluency counts outputs the acceptability classifier accepts.
            verdict = gateway.classify(endpoints.fluency_classifier, row.output)
            fluent_flags.append(verdict.label == fluency_spec.positive_label)
            bs_values.append(content_similarity(
                gateway.embed(endpoints.bertscore_embedder, row.input),
                gateway.embed(endpoints.bertscore_embedder, row.output)))
            sim_values.append(content_similarity(
                gateway.embed(endpoints.sim_embedder, row.input),
                gateway.embed(endpoints.sim_embedder, row.output)))
            refusal_flags.append(detect_refusal(row.output, lexicon))

        refusal_counts[platform] = sum(refusal_flags)

        if referent is BleuReferent.REFERENCE:
            pairs = [(row.output, row.reference)
                     for row, refusal in zip(group, refusal_flags) if not refusal]
            missing = [row for row, _ in zip(group, refusal_flags) if row.reference is None]
            if missing:
                raise DataError(
                    f"{platform}: {len(missing)} rows missing the reference field "
                    "required for reference-mode BLEU")
            if pairs:
                bl = bleu([h for h, _ in pairs], [r for _, r in pairs], bleu_cfg)
            else:
                log.warning("%s: every output was a refusal; BLEU reported as 0", platform)
                bl = 0.0
        else:
            bl = bleu([row.output for row in group], [row.input for row in group], bleu_cfg)

        acc = style_accuracy(nontoxic_flags)
        fl = fluency_rate(fluent_flags)
        sim = sum(sim_values) / len(sim_values)
        bs = sum(bs_values) / len(bs_values)
        reports.append(PlatformReport(
            platform=platform, acc=acc, bertscore=bs, sim=sim, fluency=fl,
            joint=joint_metric(acc, sim, fl), bleu=bl, n=len(group)))

    overall = aggregate_overall(reports)
    return EvaluationReport(rows=reports, overall=overall,
                            refusals=refusal_counts,
                            bleu_referent=referent.value)
