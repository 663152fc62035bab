"""Ensemble filtration of cross-platform-ambiguous parallel pairs.

A pair is kept iff at least one ensemble classifier calls the source text
toxic AND every classifier calls the target text non-toxic. The default
ensemble mirrors the six platform classifiers used for corpus construction.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Sequence

from .corpus import Label, ParallelRecord
from .errors import DataError, EmptyEnsembleError, GatewayError, MismatchedEnsemblesError

log = logging.getLogger(__name__)

DEFAULT_ENSEMBLE = ("fb_yt", "fox", "twitter", "stormfront", "wiki", "hatecheck")


@dataclass(frozen=True)
class EnsemblePrediction:
    classifier_id: str
    verdict: Label


class FilterReason(str, Enum):
    KEPT = "kept"
    SOURCE_NEVER_TOXIC = "source_never_toxic"
    TARGET_SOMETIMES_TOXIC = "target_sometimes_toxic"


@dataclass(frozen=True)
class FilterDecision:
    keep: bool
    reason: FilterReason
    source_preds: tuple[EnsemblePrediction, ...]
    target_preds: tuple[EnsemblePrediction, ...]

    def __post_init__(self):
        if self.keep != (self.reason is FilterReason.KEPT):
            raise DataError("decision reason inconsistent with keep flag")


def filter_pair(source_preds: Sequence[EnsemblePrediction],
                target_preds: Sequence[EnsemblePrediction]) -> FilterDecision:
    """keep <=> (any source verdict toxic) and (all target verdicts non-toxic).

    The source clause is checked first, so a pair failing both reports
    source_never_toxic.
    """
    if not source_preds or not target_preds:
        raise EmptyEnsembleError("prediction lists must be non-empty")
    src_ids = {p.classifier_id for p in source_preds}
    tgt_ids = {p.classifier_id for p in target_preds}
    if len(src_ids) != len(source_preds) or len(tgt_ids) != len(target_preds):
        raise MismatchedEnsemblesError("duplicate classifier ids in predictions")
    if src_ids != tgt_ids:
        raise MismatchedEnsemblesError(
            f"source ensemble {sorted(src_ids)} != target ensemble {sorted(tgt_ids)}")

    if not any(p.verdict is Label.TOXIC for p in source_preds):
        reason, keep = FilterReason.SOURCE_NEVER_TOXIC, False
    elif any(p.verdict is Label.TOXIC for p in target_preds):
        reason, keep = FilterReason.TARGET_SOMETIMES_TOXIC, False
    else:
        reason, keep = FilterReason.KEPT, True
    return FilterDecision(keep=keep, reason=reason,
                          source_preds=tuple(source_preds),
                          target_preds=tuple(target_preds))


@dataclass
class FilterStats:
    """Per-platform original/kept counts; merge is associative."""

    per_platform: dict = field(default_factory=dict)

    def bucket(self, platform: str) -> dict:
        return self.per_platform.setdefault(platform, {
            "original": 0, "kept": 0, "dropped": 0, "errors": 0,
            "source_never_toxic": 0, "target_sometimes_toxic": 0,
        })

    def record(self, platform: str, decision: FilterDecision) -> None:
        b = self.bucket(platform)
        b["original"] += 1
        if decision.keep:
            b["kept"] += 1
        else:
            b["dropped"] += 1
            b[decision.reason.value] += 1

    def record_error(self, platform: str) -> None:
        b = self.bucket(platform)
        b["original"] += 1
        b["errors"] += 1

    def merge(self, other: "FilterStats") -> "FilterStats":
        out = FilterStats()
        for stats in (self, other):
            for platform, b in stats.per_platform.items():
                tgt = out.bucket(platform)
                for k, v in b.items():
                    tgt[k] += v
        return out

    def totals(self) -> dict:
        total = {"original": 0, "kept": 0, "dropped": 0, "errors": 0,
                 "source_never_toxic": 0, "target_sometimes_toxic": 0}
        for b in self.per_platform.values():
            for k, v in b.items():
                total[k] += v
        return total

    def to_json(self) -> dict:
        """Report mirrors the corpus table's original/filtered columns."""
        rows = {platform: {"original": b["original"], "filtered": b["kept"], **b}
                for platform, b in sorted(self.per_platform.items())}
        return {"platforms": rows, "total": self.totals()}


class ErrorPolicy(str, Enum):
    ABORT = "abort"
    SKIP = "skip"


def classify_with_ensemble(gateway, ensemble: Sequence[str], text: str) -> list[EnsemblePrediction]:
    preds = []
    for classifier_id in ensemble:
        verdict = gateway.classify(classifier_id, text)
        spec = gateway.endpoint(classifier_id)
        label = Label.TOXIC if verdict.label == spec.positive_label else Label.NONTOXIC
        preds.append(EnsemblePrediction(classifier_id=classifier_id, verdict=label))
    return preds


def run_filter(records: Iterable[ParallelRecord], ensemble: Sequence[str],
               gateway, error_policy: ErrorPolicy = ErrorPolicy.SKIP,
               decisions_out: Optional[list] = None) -> tuple[list[ParallelRecord], FilterStats]:
    """Classify each record's source and target, apply the keep rule.

    Output order equals input order. Gateway failures follow error_policy:
    abort re-raises with the record id attached, skip logs and counts the
    record under errors (so original = kept + dropped + errors).
    """
    if not ensemble:
        raise EmptyEnsembleError("ensemble must name at least one classifier")
    kept: list[ParallelRecord] = []
    stats = FilterStats()
    for record in records:
        platform = record.source.platform
        try:
            src_preds = classify_with_ensemble(gateway, ensemble, record.source.text)
            tgt_preds = classify_with_ensemble(gateway, ensemble, record.target_text)
        except GatewayError as e:
            if error_policy is ErrorPolicy.ABORT:
                raise GatewayError(f"record {record.source.id}: {e}",
                                   endpoint_id=getattr(e, "endpoint_id", None)) from e
            log.warning("skipping record %s after gateway error: %s", record.source.id, e)
            stats.record_error(platform)
            continue
        decision = filter_pair(src_preds, tgt_preds)
        stats.record(platform, decision)
        if decisions_out is not None:
            decisions_out.append((record.source.id, decision))
        if decision.keep:
            kept.append(record)
    return kept, stats
