"""Multilingual round-trip measurement: en -> L -> en, then re-classify.

For each parallel pair the source and target are translated into the target
language and back, the back-translations are classified for toxicity, and
embedding similarity against the originals is averaged. The per-pair
intermediates can be persisted as JSON-lines so the report is re-derivable
from artifacts.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Optional

from .corpus import ParallelRecord, write_jsonl
from .errors import EmptyBatchError, GatewayError
from .metrics import content_similarity, round_percent

log = logging.getLogger(__name__)

REFERENCE_SAMPLE_SIZE = 1000  # documented default batch size for the protocol

REPORT_COLUMN_NAMES = {
    "language": "Language",
    "toxicity_pct": "Toxicity",
    "nontoxicity_pct": "Non-toxicity",
    "source_sim": "Source Sim",
    "target_sim": "Target Sim",
}


@dataclass(frozen=True)
class LangReport:
    language: str
    toxicity_pct: float
    nontoxicity_pct: float
    source_sim: float
    target_sim: float
    n: int

    def __post_init__(self):
        for name in ("toxicity_pct", "nontoxicity_pct", "source_sim", "target_sim"):
            v = getattr(self, name)
            if not 0.0 <= v <= 100.0:
                raise EmptyBatchError(f"{name}={v} outside [0, 100]")

    def to_json(self) -> dict:
        """JSON report keyed by the published column names."""
        return {
            REPORT_COLUMN_NAMES["language"]: self.language,
            REPORT_COLUMN_NAMES["toxicity_pct"]: round_percent(self.toxicity_pct),
            REPORT_COLUMN_NAMES["nontoxicity_pct"]: round_percent(self.nontoxicity_pct),
            REPORT_COLUMN_NAMES["source_sim"]: round_percent(self.source_sim),
            REPORT_COLUMN_NAMES["target_sim"]: round_percent(self.target_sim),
            "n": self.n,
        }


def roundtrip(pairs: Iterable[ParallelRecord], language: str,
              translator: str, classifier: str, embedder: str, gateway,
              pivot_lang: str = "en", audit_path=None) -> LangReport:
    """Translate every pair out and back, then measure retention.

    toxicity_pct: percent of back-translated sources classified toxic.
    nontoxicity_pct: percent of back-translated targets classified non-toxic.
    source_sim/target_sim: mean similarity of original vs back-translation.
    Translation or classification failures skip the pair (logged); an empty
    surviving batch is an error.
    """
    pairs = list(pairs)
    if not pairs:
        raise EmptyBatchError("no pairs to round-trip")

    toxic_flags: list[bool] = []
    nontoxic_flags: list[bool] = []
    source_sims: list[float] = []
    target_sims: list[float] = []
    audit_rows: list[dict] = []

    for record in pairs:
        src = record.source.text
        tgt = record.target_text
        try:
            src_fwd = gateway.translate(translator, src, pivot_lang, language)
            src_back = gateway.translate(translator, src_fwd, language, pivot_lang)
            tgt_fwd = gateway.translate(translator, tgt, pivot_lang, language)
            tgt_back = gateway.translate(translator, tgt_fwd, language, pivot_lang)

            src_verdict = gateway.classify(classifier, src_back)
            tgt_verdict = gateway.classify(classifier, tgt_back)
            spec = gateway.endpoint(classifier)
            src_toxic = src_verdict.label == spec.positive_label
            tgt_nontoxic = tgt_verdict.label == spec.negative_label

            src_sim = content_similarity(gateway.embed(embedder, src),
                                         gateway.embed(embedder, src_back))
            tgt_sim = content_similarity(gateway.embed(embedder, tgt),
                                         gateway.embed(embedder, tgt_back))
        except GatewayError as e:
            log.warning("skipping pair %s for %s: %s", record.source.id, language, e)
            continue

        toxic_flags.append(src_toxic)
        nontoxic_flags.append(tgt_nontoxic)
        source_sims.append(src_sim)
        target_sims.append(tgt_sim)
        audit_rows.append({
            "id": record.source.id, "language": language,
            "source": src, "source_translated": src_fwd, "source_back": src_back,
            "target": tgt, "target_translated": tgt_fwd, "target_back": tgt_back,
            "source_toxic": src_toxic, "target_nontoxic": tgt_nontoxic,
            "source_sim": src_sim, "target_sim": tgt_sim,
        })

    if not toxic_flags:
        raise EmptyBatchError(f"every pair failed during the {language} round-trip")

    if audit_path is not None:
        write_jsonl(audit_path, audit_rows)

    n = len(toxic_flags)
    return LangReport(
        language=language,
        toxicity_pct=100.0 * sum(toxic_flags) / n,
        nontoxicity_pct=100.0 * sum(nontoxic_flags) / n,
        source_sim=sum(source_sims) / n,
        target_sim=sum(target_sims) / n,
        n=n,
    )
