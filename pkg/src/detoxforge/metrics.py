"""Native implementations of the six evaluation metrics plus refusal detection.

Metrics: style accuracy, embedding similarity (used both for the
BERTScore-style column and the content-similarity column), fluency rate,
joint metric, corpus BLEU, and the per-platform -> overall aggregation.
All functions are pure; rounding to two decimals happens only at the
reporting boundary (round_percent), internal math stays in double precision.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field, replace
from decimal import Decimal, ROUND_HALF_UP
from enum import Enum
from typing import Iterable, Sequence

from .errors import (
    DimensionMismatchError,
    EmptyMetricInputError,
    LengthMismatchError,
    OutOfRangeError,
    ZeroVectorError,
)

OVERALL = "overall"

# Column order mirrors the evaluation tables: Acc, BS, Sim, Fl, J, BL.
REPORT_COLUMNS = ("acc", "bertscore", "sim", "fluency", "joint", "bleu")


def round_percent(value: float, digits: int = 2) -> float:
    """Half-up rounding for report output; never used in intermediate math."""
    q = Decimal(1).scaleb(-digits)
    return float(Decimal(repr(value)).quantize(q, rounding=ROUND_HALF_UP))


# -- tokenization (BLEU prerequisite) -----------------------------------------

def tokenize(text: str) -> list[str]:
    """Lowercase; maximal alphanumeric runs are tokens, any other
    non-whitespace character is a token by itself."""
    tokens: list[str] = []
    start = None
    text = text.lower()
    for i, ch in enumerate(text):
        if ch.isalnum():
            if start is None:
                start = i
            continue
        if start is not None:
            tokens.append(text[start:i])
            start = None
        if not ch.isspace():
            tokens.append(ch)
    if start is not None:
        tokens.append(text[start:])
    return tokens


# -- BLEU ----------------------------------------------------------------------

class Smoothing(str, Enum):
    NONE = "none"
    ADD_EPSILON = "add-epsilon"


class BleuLevel(str, Enum):
    CORPUS = "corpus"
    SENTENCE_AVERAGED = "sentence-averaged"


BLEU_EPSILON = 1e-9


@dataclass(frozen=True)
class BleuConfig:
    max_order: int = 4
    smoothing: Smoothing = Smoothing.NONE
    level: BleuLevel = BleuLevel.CORPUS

    def __post_init__(self):
        if self.max_order < 1:
            raise OutOfRangeError("max_order must be >= 1")


def _ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


@dataclass
class BleuAccumulator:
    """Pooled corpus statistics; merge() is associative so shards combine."""

    max_order: int = 4
    matches: list[int] = field(default_factory=list)
    totals: list[int] = field(default_factory=list)
    hyp_len: int = 0
    ref_len: int = 0

    def __post_init__(self):
        if not self.matches:
            self.matches = [0] * self.max_order
            self.totals = [0] * self.max_order

    def add_pair(self, hyp_tokens: Sequence[str], ref_tokens: Sequence[str]) -> None:
        self.hyp_len += len(hyp_tokens)
        self.ref_len += len(ref_tokens)
        for n in range(1, self.max_order + 1):
            hyp_counts = _ngram_counts(hyp_tokens, n)
            ref_counts = _ngram_counts(ref_tokens, n)
            self.totals[n - 1] += sum(hyp_counts.values())
            self.matches[n - 1] += sum((hyp_counts & ref_counts).values())

    def merge(self, other: "BleuAccumulator") -> "BleuAccumulator":
        if other.max_order != self.max_order:
            raise LengthMismatchError("cannot merge accumulators of different order")
        out = BleuAccumulator(self.max_order)
        out.matches = [a + b for a, b in zip(self.matches, other.matches)]
        out.totals = [a + b for a, b in zip(self.totals, other.totals)]
        out.hyp_len = self.hyp_len + other.hyp_len
        out.ref_len = self.ref_len + other.ref_len
        return out

    def score(self, smoothing: Smoothing = Smoothing.NONE) -> float:
        # Orders with no hypothesis n-grams at all carry no evidence and are
        # dropped from the geometric mean (so an identity corpus scores 100
        # regardless of sentence length); with none left the score is 0.
        if self.hyp_len == 0:
            return 0.0
        log_sum = 0.0
        orders = 0
        for m, t in zip(self.matches, self.totals):
            if t == 0:
                continue
            orders += 1
            if smoothing is Smoothing.ADD_EPSILON:
                p = (m + BLEU_EPSILON) / (t + BLEU_EPSILON)
            else:
                if m == 0:
                    return 0.0
                p = m / t
            log_sum += math.log(p)
        if orders == 0:
            return 0.0
        geo = math.exp(log_sum / orders)
        bp = 1.0 if self.hyp_len > self.ref_len else math.exp(1.0 - self.ref_len / self.hyp_len)
        return 100.0 * bp * geo


def bleu(hypotheses: Sequence[str], references: Sequence[str],
         cfg: BleuConfig = BleuConfig()) -> float:
    """Corpus BLEU over parallel (hypothesis, reference) string lists, in [0, 100]."""
    if len(hypotheses) != len(references):
        raise LengthMismatchError(
            f"{len(hypotheses)} hypotheses vs {len(references)} references")
    if not hypotheses:
        raise EmptyMetricInputError("need at least one hypothesis/reference pair")
    if cfg.level is BleuLevel.SENTENCE_AVERAGED:
        pair_cfg = replace(cfg, level=BleuLevel.CORPUS)
        return sum(bleu([h], [r], pair_cfg) for h, r in zip(hypotheses, references)) / len(hypotheses)
    acc = BleuAccumulator(cfg.max_order)
    for hyp, ref in zip(hypotheses, references):
        acc.add_pair(tokenize(hyp), tokenize(ref))
    return acc.score(cfg.smoothing)


# -- similarity / rates / joint -------------------------------------------------

def content_similarity(a: Sequence[float], b: Sequence[float]) -> float:
    """100 * cosine(a, b), clamped into [0, 100].

    Identical vectors short-circuit to exactly 100.0: the cosine is 1 by
    definition there, and going through sqrt would lose the last ulp.
    """
    va = getattr(a, "values", a)
    vb = getattr(b, "values", b)
    if len(va) != len(vb):
        raise DimensionMismatchError(f"dim {len(va)} vs {len(vb)}")
    if len(va) == 0:
        raise DimensionMismatchError("empty vectors")
    na = math.sqrt(sum(x * x for x in va))
    nb = math.sqrt(sum(y * y for y in vb))
    if na == 0.0 or nb == 0.0:
        raise ZeroVectorError("cosine undefined for zero-norm vector")
    if tuple(va) == tuple(vb):
        return 100.0
    dot = sum(x * y for x, y in zip(va, vb))
    return 100.0 * min(1.0, max(0.0, dot / (na * nb)))


def _rate(flags: Sequence[bool], what: str) -> float:
    if not flags:
        raise EmptyMetricInputError(f"{what} needs at least one flag")
    return 100.0 * sum(1 for f in flags if f) / len(flags)


def style_accuracy(flags: Sequence[bool]) -> float:
    """Percent of outputs the style classifier marked non-toxic."""
    return _rate(flags, "style_accuracy")


def fluency_rate(flags: Sequence[bool]) -> float:
    """Percent of outputs the acceptability classifier marked fluent."""
    return _rate(flags, "fluency_rate")


def joint_metric(acc: float, sim: float, fl: float) -> float:
    """Product of accuracy, content similarity, and fluency, as a percent."""
    for name, v in (("acc", acc), ("sim", sim), ("fl", fl)):
        if not 0.0 <= v <= 100.0:
            raise OutOfRangeError(f"{name}={v} outside [0, 100]")
    return acc * sim * fl / 10000.0


# -- platform reports ------------------------------------------------------------

JOINT_CONSISTENCY_TOL = 0.005


@dataclass(frozen=True)
class PlatformReport:
    platform: str
    acc: float
    bertscore: float
    sim: float
    fluency: float
    joint: float
    bleu: float
    n: int

    def __post_init__(self):
        for col in REPORT_COLUMNS[:-1]:
            v = getattr(self, col)
            if not 0.0 <= v <= 100.0:
                raise OutOfRangeError(f"{self.platform}: {col}={v} outside [0, 100]")
        if not 0.0 <= self.bleu <= 100.0:
            raise OutOfRangeError(f"{self.platform}: bleu={self.bleu} outside [0, 100]")
        if self.platform != OVERALL:
            expected = self.acc * self.sim * self.fluency / 10000.0
            if abs(self.joint - expected) > JOINT_CONSISTENCY_TOL:
                raise OutOfRangeError(
                    f"{self.platform}: joint={self.joint} inconsistent with "
                    f"acc*sim*fluency/10000={expected}")

    def to_json(self) -> dict:
        d = {col: getattr(self, col) for col in REPORT_COLUMNS}
        d["platform"] = self.platform
        d["n"] = self.n
        return d

    @classmethod
    def from_json(cls, d: dict) -> "PlatformReport":
        return cls(platform=d["platform"], n=d["n"],
                   **{col: d[col] for col in REPORT_COLUMNS})


def aggregate_overall(rows: Iterable[PlatformReport]) -> PlatformReport:
    """Unweighted arithmetic mean of every metric across platforms.

    Overall joint is the mean of per-platform joints, not the product of
    the means, so it is constructed bypassing the per-row consistency check.
    """
    rows = list(rows)
    if not rows:
        raise EmptyMetricInputError("no platform rows to aggregate")
    if any(r.platform == OVERALL for r in rows):
        raise OutOfRangeError("input rows must not already contain an overall row")
    k = len(rows)
    means = {col: sum(getattr(r, col) for r in rows) / k for col in REPORT_COLUMNS}
    return PlatformReport(platform=OVERALL, n=sum(r.n for r in rows), **means)


# -- refusal detection -------------------------------------------------------------

DEFAULT_REFUSAL_PHRASES = ("fulfill", "AI", "I apologize", "I understand", "I'm sorry")


@dataclass(frozen=True)
class RefusalLexicon:
    """Keyword list for spotting generic safety statements.

    Matching rule: a phrase made only of uppercase letters (the acronym
    case, e.g. "AI") must appear as a whole word, case-sensitively; every
    other phrase matches as a case-insensitive substring.
    """

    phrases: tuple[str, ...] = DEFAULT_REFUSAL_PHRASES

    def __post_init__(self):
        if not self.phrases:
            raise EmptyMetricInputError("refusal lexicon must be non-empty")

    def extended(self, extra: Iterable[str]) -> "RefusalLexicon":
        return RefusalLexicon(tuple(self.phrases) + tuple(extra))


def _is_acronym(phrase: str) -> bool:
    return phrase.isalpha() and phrase.isupper()


def _whole_word_match(phrase: str, text: str) -> bool:
    start = 0
    while True:
        idx = text.find(phrase, start)
        if idx < 0:
            return False
        before = text[idx - 1] if idx > 0 else " "
        after_i = idx + len(phrase)
        after = text[after_i] if after_i < len(text) else " "
        if not before.isalnum() and not after.isalnum():
            return True
        start = idx + 1


def detect_refusal(text: str, lexicon: RefusalLexicon = RefusalLexicon()) -> bool:
    """True iff any lexicon phrase occurs in the text (see RefusalLexicon rules)."""
    lowered = text.lower()
    for phrase in lexicon.phrases:
        if _is_acronym(phrase):
            if _whole_word_match(phrase, text):
                return True
        elif phrase.lower() in lowered:
            return True
    return False
