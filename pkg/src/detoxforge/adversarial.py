"""Token-level adversarial toxicity suites.

Two sources: a curated 15-case fixture of masked toxic tokens for manual
inspection, and a seeded generator that builds a large testbed by sampling
(toxic word, sentence template, perturbation character, index, mode) and
masking one character per word through insertion or replacement.

Sampling consumes one SplitMix64 stream in a fixed per-iteration order:
word, template, character, index in [0, len(word)), mode; when the mode
comes up insertion the index is re-drawn in [0, len(word)] so the final
slot after the word is reachable. That consumption order is part of the
reproducibility contract.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path

from .errors import ConfigInvalidError, FixtureMissingError, IndexOutOfRangeError
from .rng import SplitMix64

WORD_SLOT = "<word>"

DEFAULT_PERTURB_CHARS = ("!", "@", "#", "*")

CURATED_SUITE_SIZE = 15


class PerturbMode(str, Enum):
    INSERTION = "insertion"
    REPLACEMENT = "replacement"


def perturb(word: str, char: str, index: int, mode: PerturbMode) -> str:
    """Insert char at index, or replace the character at index."""
    if mode is PerturbMode.INSERTION:
        if not 0 <= index <= len(word):
            raise IndexOutOfRangeError(
                f"insertion index {index} outside [0, {len(word)}] for {len(word)}-char word")
        return word[:index] + char + word[index:]
    if not 0 <= index < len(word):
        raise IndexOutOfRangeError(
            f"replacement index {index} outside [0, {len(word)}) for {len(word)}-char word")
    return word[:index] + char + word[index + 1:]


@dataclass(frozen=True)
class AdversaryConfig:
    toxic_words: tuple[str, ...]
    templates: tuple[str, ...]
    perturb_chars: tuple[str, ...] = DEFAULT_PERTURB_CHARS
    n: int = 5000
    seed: int = 0

    def __post_init__(self):
        if not self.toxic_words or not self.templates or not self.perturb_chars:
            raise ConfigInvalidError("toxic_words, templates, perturb_chars must be non-empty")
        if self.n < 0:
            raise ConfigInvalidError("n must be non-negative")
        for w in self.toxic_words:
            if not w:
                raise ConfigInvalidError("toxic words must be non-empty")
        for c in self.perturb_chars:
            if len(c) != 1:
                raise ConfigInvalidError(f"perturb characters must be single chars, got {c!r}")
            # A replacement must change the word; forbid characters that
            # already occur in a word instead of re-drawing mid-stream.
            for w in self.toxic_words:
                if c in w:
                    raise ConfigInvalidError(
                        f"perturb char {c!r} occurs in toxic word {w!r}")
        for t in self.templates:
            if t.count(WORD_SLOT) != 1:
                raise ConfigInvalidError(
                    f"template must contain the {WORD_SLOT} slot exactly once: {t!r}")
            rest = t.replace(WORD_SLOT, " ")
            rest_tokens = rest.split()
            for w in self.toxic_words:
                if w in rest_tokens:
                    raise ConfigInvalidError(
                        f"template {t!r} contains toxic word {w!r} outside the slot")

    @classmethod
    def from_json(cls, d: dict) -> "AdversaryConfig":
        return cls(toxic_words=tuple(d["toxic_words"]),
                   templates=tuple(d["templates"]),
                   perturb_chars=tuple(d.get("perturb_chars", DEFAULT_PERTURB_CHARS)),
                   n=d.get("n", 5000), seed=d.get("seed", 0))

    def to_json(self) -> dict:
        return {"toxic_words": list(self.toxic_words),
                "templates": list(self.templates),
                "perturb_chars": list(self.perturb_chars),
                "n": self.n, "seed": self.seed}


def default_config(n: int = 5000, seed: int = 0) -> AdversaryConfig:
    path = resources.files("detoxforge") / "data" / "adversary_config.json"
    with open(path, encoding="utf-8") as f:
        cfg = AdversaryConfig.from_json(json.load(f))
    return AdversaryConfig(toxic_words=cfg.toxic_words, templates=cfg.templates,
                           perturb_chars=cfg.perturb_chars, n=n, seed=seed)


@dataclass(frozen=True)
class AdversarialSentence:
    sentence: str
    template: str
    original_word: str
    perturbed_word: str
    mode: PerturbMode
    char: str
    index: int

    def to_json(self) -> dict:
        d = {"sentence": self.sentence, "template": self.template,
             "original_word": self.original_word,
             "perturbed_word": self.perturbed_word,
             "mode": self.mode.value, "char": self.char, "index": self.index}
        return d

    @classmethod
    def from_json(cls, d: dict) -> "AdversarialSentence":
        return cls(sentence=d["sentence"], template=d["template"],
                   original_word=d["original_word"],
                   perturbed_word=d["perturbed_word"],
                   mode=PerturbMode(d["mode"]), char=d["char"], index=d["index"])

    def redacted_word(self) -> str:
        return self.perturbed_word[0] + "*" * max(0, len(self.perturbed_word) - 1)


def generate_testbed(cfg: AdversaryConfig) -> list[AdversarialSentence]:
    """Exactly cfg.n sentences, fully determined by cfg.seed."""
    rng = SplitMix64(cfg.seed)
    out: list[AdversarialSentence] = []
    for _ in range(cfg.n):
        word = cfg.toxic_words[rng.below(len(cfg.toxic_words))]
        template = cfg.templates[rng.below(len(cfg.templates))]
        char = cfg.perturb_chars[rng.below(len(cfg.perturb_chars))]
        index = rng.below(len(word))
        mode = PerturbMode.INSERTION if rng.below(2) == 0 else PerturbMode.REPLACEMENT
        if mode is PerturbMode.INSERTION:
            index = rng.below(len(word) + 1)
        masked = perturb(word, char, index, mode)
        sentence = template.replace(WORD_SLOT, masked)
        out.append(AdversarialSentence(
            sentence=sentence, template=template, original_word=word,
            perturbed_word=masked, mode=mode, char=char, index=index))
    return out


def serialize_testbed(sentences: list[AdversarialSentence]) -> bytes:
    """Canonical JSONL bytes, used for determinism checks and file output."""
    lines = [json.dumps(s.to_json(), ensure_ascii=False, sort_keys=True)
             for s in sentences]
    return ("\n".join(lines) + "\n").encode("utf-8") if lines else b""


@dataclass(frozen=True)
class CuratedAdversary:
    text: str
    adversarial_token: str


def curated_suite(path=None) -> list[CuratedAdversary]:
    """The 15 hand-picked masked-token inputs for manual inspection."""
    if path is None:
        path = resources.files("detoxforge") / "data" / "curated_adversaries.jsonl"
    path = Path(str(path))
    if not path.exists():
        raise FixtureMissingError(f"curated adversary fixture not found: {path}")
    entries = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                d = json.loads(line)
                entries.append(CuratedAdversary(text=d["text"],
                                                adversarial_token=d["adversarial_token"]))
    if len(entries) != CURATED_SUITE_SIZE:
        raise FixtureMissingError(
            f"curated suite must have {CURATED_SUITE_SIZE} entries, found {len(entries)}")
    return entries
