"""Corpus store: ingest, binarize, cap, split, and persist platform corpora.

Storage layout under a data root:

    <root>/<platform>/samples.jsonl    one TextSample JSON object per line
    <root>/<platform>/records.jsonl    one ParallelRecord per line
    <root>/<platform>/manifest.json    DatasetManifest document
    <root>/<platform>/splits.json      {"train": [...], "dev": [...], "test": [...]}

All JSON lines are UTF-8, LF-terminated. Capping uses a seeded
Fisher-Yates shuffle (see rng.py) followed by take-first-cap; stored
sample order is sorted by id so re-runs are byte-identical.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, asdict
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Optional

from .errors import BadRatiosError, DataError, UnknownLabelError
from .rng import SplitMix64

KNOWN_PLATFORMS = frozenset({
    "wiki", "twitter", "fb_yt", "stormfront", "fox",
    "reddit", "convai", "hatecheck", "gab", "yt_reddit",
})

TRAINING_PLATFORMS = frozenset({"wiki", "reddit", "twitter"})

_extra_platforms: set[str] = set()
_PLATFORM_RE = re.compile(r"^[a-z][a-z0-9_]*$")


class Label(str, Enum):
    TOXIC = "toxic"
    NONTOXIC = "nontoxic"


class ParaphraseLabel(str, Enum):
    YES = "yes"
    NO = "no"


def register_platform(name: str) -> str:
    """Register an extension platform tag (lowercase, stable)."""
    if not _PLATFORM_RE.match(name):
        raise DataError(f"platform tag must be lowercase [a-z0-9_]: {name!r}")
    _extra_platforms.add(name)
    return name


def validate_platform(name: str) -> str:
    if name in KNOWN_PLATFORMS or name in _extra_platforms:
        return name
    raise DataError(f"unknown platform tag {name!r}; register it first")


@dataclass(frozen=True)
class TextSample:
    id: str
    text: str
    platform: str
    raw_label: str
    label: Label

    def __post_init__(self):
        if not self.text.strip():
            raise DataError(f"sample {self.id}: text empty after trim")
        validate_platform(self.platform)

    def to_json(self) -> dict:
        d = asdict(self)
        d["label"] = self.label.value
        return d

    @classmethod
    def from_json(cls, d: dict) -> "TextSample":
        return cls(id=d["id"], text=d["text"], platform=d["platform"],
                   raw_label=d["raw_label"], label=Label(d["label"]))


@dataclass(frozen=True)
class Provenance:
    endpoint_id: str
    prompt_hash: str
    timestamp: str


# A sentence terminator is a maximal run of [.!?] followed by whitespace or
# end of string; this avoids counting dots inside dates or abbreviations.
_TERMINATOR_RE = re.compile(r"[.!?]+(?=\s|$)")

MAX_EXPLANATION_SENTENCES = 3


def count_sentence_terminators(text: str) -> int:
    return len(_TERMINATOR_RE.findall(text))


@dataclass(frozen=True)
class ParallelRecord:
    source: TextSample
    target_text: str
    source_label: Label
    explanation: Optional[str] = None
    paraphrase_label: Optional[ParaphraseLabel] = None
    provenance: Optional[Provenance] = None

    def __post_init__(self):
        if not self.target_text.strip():
            raise DataError(f"record for {self.source.id}: target_text empty")
        if self.explanation is not None:
            n = count_sentence_terminators(self.explanation)
            if n > MAX_EXPLANATION_SENTENCES:
                raise DataError(
                    f"record for {self.source.id}: explanation has {n} sentence "
                    f"terminators (max {MAX_EXPLANATION_SENTENCES})")

    def to_json(self) -> dict:
        d = {
            "source": self.source.to_json(),
            "target_text": self.target_text,
            "source_label": self.source_label.value,
            "explanation": self.explanation,
            "paraphrase_label": self.paraphrase_label.value if self.paraphrase_label else None,
            "provenance": asdict(self.provenance) if self.provenance else None,
        }
        return d

    @classmethod
    def from_json(cls, d: dict) -> "ParallelRecord":
        prov = d.get("provenance")
        para = d.get("paraphrase_label")
        return cls(
            source=TextSample.from_json(d["source"]),
            target_text=d["target_text"],
            source_label=Label(d["source_label"]),
            explanation=d.get("explanation"),
            paraphrase_label=ParaphraseLabel(para) if para else None,
            provenance=Provenance(**prov) if prov else None,
        )


@dataclass
class DatasetManifest:
    platform: str
    counts: dict            # {"toxic": int, "nontoxic": int}
    cap: int
    seed: int
    file_paths: list[str]
    split_ratios: tuple[float, float, float]
    sample_ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        validate_platform(self.platform)
        if self.cap < 0 or any(v < 0 for v in self.counts.values()):
            raise DataError("manifest counts and cap must be non-negative")
        validate_ratios(self.split_ratios)

    def to_json(self) -> dict:
        return {
            "platform": self.platform,
            "counts": self.counts,
            "cap": self.cap,
            "seed": self.seed,
            "file_paths": self.file_paths,
            "split_ratios": list(self.split_ratios),
            "sample_ids": self.sample_ids,
        }

    @classmethod
    def from_json(cls, d: dict) -> "DatasetManifest":
        return cls(platform=d["platform"], counts=d["counts"], cap=d["cap"],
                   seed=d["seed"], file_paths=d["file_paths"],
                   split_ratios=tuple(d["split_ratios"]),
                   sample_ids=d.get("sample_ids", []))


def validate_ratios(ratios) -> tuple[float, float, float]:
    if len(ratios) != 3 or any(r < 0 for r in ratios):
        raise BadRatiosError(f"need three non-negative ratios, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise BadRatiosError(f"ratios must sum to 1 within 1e-9, got {ratios}")
    return tuple(ratios)


def binarize_label(raw_label: str, mapping: dict[str, Label]) -> Label:
    """Collapse a dataset-specific label onto {toxic, nontoxic} via an explicit map."""
    try:
        return mapping[raw_label]
    except KeyError:
        raise UnknownLabelError(f"label {raw_label!r} not covered by the label map")


def load_label_map(path) -> dict[str, Label]:
    """Label-map config: JSON object mapping raw label -> "toxic" | "nontoxic"."""
    try:
        with open(path, encoding="utf-8") as f:
            raw = json.load(f)
    except OSError as e:
        raise DataError(f"cannot read label map {path}: {e}") from e
    try:
        return {k: Label(v) for k, v in raw.items()}
    except ValueError as e:
        raise DataError(f"label map {path} has a value outside toxic/nontoxic: {e}") from e


def write_jsonl(path, objs: Iterable[dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as f:
        for obj in objs:
            f.write(json.dumps(obj, ensure_ascii=False, sort_keys=True))
            f.write("\n")
    tmp.replace(path)


def read_jsonl(path) -> Iterator[dict]:
    try:
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    yield json.loads(line)
                except json.JSONDecodeError as e:
                    raise DataError(f"{path}:{lineno}: bad JSON: {e}") from e
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from e


def select_samples(samples: list[TextSample], cap: int, seed: int) -> list[TextSample]:
    """Uniformly keep at most ``cap`` samples; result sorted by id."""
    if cap < 0:
        raise DataError("cap must be non-negative")
    ids = {s.id for s in samples}
    if len(ids) != len(samples):
        raise DataError("duplicate sample ids in ingest stream")
    if len(samples) > cap:
        rng = SplitMix64(seed)
        ordered = sorted(samples, key=lambda s: s.id)
        samples = rng.sample_without_replacement(ordered, cap)
    return sorted(samples, key=lambda s: s.id)


def split_ids(ids: list[str], ratios, seed: int) -> tuple[list[str], list[str], list[str]]:
    """Deterministic disjoint, exhaustive (train, dev, test) partition.

    dev and test take floor(ratio * n) elements; train takes the remainder.
    """
    r_train, r_dev, r_test = validate_ratios(ratios)
    shuffled = sorted(ids)
    SplitMix64(seed).shuffle(shuffled)
    n = len(shuffled)
    n_dev = math.floor(r_dev * n)
    n_test = math.floor(r_test * n)
    n_train = n - n_dev - n_test
    train = shuffled[:n_train]
    dev = shuffled[n_train:n_train + n_dev]
    test = shuffled[n_train + n_dev:]
    return train, dev, test


def select_training_platforms(manifests: Iterable[DatasetManifest]) -> list[DatasetManifest]:
    """Keep only the platforms used for model training (wiki, reddit, twitter)."""
    return [m for m in manifests if m.platform in TRAINING_PLATFORMS]


class CorpusStore:
    """Filesystem-backed store for samples, parallel records, and manifests."""

    def __init__(self, root):
        self.root = Path(root)

    def platform_dir(self, platform: str) -> Path:
        return self.root / validate_platform(platform)

    def ingest(self, platform: str, samples: Iterable[TextSample], cap: int,
               seed: int, split_ratios=(0.8, 0.1, 0.1)) -> DatasetManifest:
        """Cap, sort, persist samples and produce the platform manifest."""
        samples = list(samples)
        for s in samples:
            if s.platform != platform:
                raise DataError(f"sample {s.id} tagged {s.platform}, expected {platform}")
        kept = select_samples(samples, cap, seed)
        pdir = self.platform_dir(platform)
        samples_path = pdir / "samples.jsonl"
        write_jsonl(samples_path, (s.to_json() for s in kept))
        counts = {
            "toxic": sum(1 for s in kept if s.label is Label.TOXIC),
            "nontoxic": sum(1 for s in kept if s.label is Label.NONTOXIC),
        }
        manifest = DatasetManifest(
            platform=platform, counts=counts, cap=cap, seed=seed,
            file_paths=[str(samples_path.relative_to(self.root))],
            split_ratios=tuple(split_ratios),
            sample_ids=[s.id for s in kept],
        )
        self.write_manifest(manifest)
        return manifest

    def write_manifest(self, manifest: DatasetManifest) -> Path:
        path = self.platform_dir(manifest.platform) / "manifest.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        with open(tmp, "w", encoding="utf-8", newline="\n") as f:
            json.dump(manifest.to_json(), f, ensure_ascii=False, sort_keys=True, indent=2)
            f.write("\n")
        tmp.replace(path)
        return path

    def read_manifest(self, platform: str) -> DatasetManifest:
        path = self.platform_dir(platform) / "manifest.json"
        try:
            with open(path, encoding="utf-8") as f:
                return DatasetManifest.from_json(json.load(f))
        except OSError as e:
            raise DataError(f"cannot read manifest {path}: {e}") from e

    def read_samples(self, platform: str) -> list[TextSample]:
        return [TextSample.from_json(d)
                for d in read_jsonl(self.platform_dir(platform) / "samples.jsonl")]

    def write_records(self, platform: str, records: Iterable[ParallelRecord]) -> Path:
        path = self.platform_dir(platform) / "records.jsonl"
        write_jsonl(path, (r.to_json() for r in records))
        return path

    def read_records(self, platform: str) -> list[ParallelRecord]:
        return [ParallelRecord.from_json(d)
                for d in read_jsonl(self.platform_dir(platform) / "records.jsonl")]

    def split(self, manifest: DatasetManifest, ratios=None, seed=None):
        """Partition the manifest's sample ids and persist splits.json."""
        ratios = manifest.split_ratios if ratios is None else ratios
        seed = manifest.seed if seed is None else seed
        train, dev, test = split_ids(manifest.sample_ids, ratios, seed)
        path = self.platform_dir(manifest.platform) / "splits.json"
        tmp = path.with_suffix(".tmp")
        with open(tmp, "w", encoding="utf-8", newline="\n") as f:
            json.dump({"train": train, "dev": dev, "test": test},
                      f, ensure_ascii=False, sort_keys=True, indent=2)
            f.write("\n")
        tmp.replace(path)
        return train, dev, test


def read_source_dump(path, text_field="text", label_field="label",
                     id_field=None, platform="", label_map=None,
                     delimiter=None) -> Iterator[TextSample]:
    """Generic reader for CSV/TSV/JSON-lines source dumps.

    The file format is picked by extension (.csv/.tsv/.jsonl|.json). Rows
    missing the text or label field are a DataError; labels go through the
    explicit label map, never guessed.
    """
    import csv

    path = Path(path)
    if label_map is None:
        raise DataError("a label map is required to binarize source labels")

    def to_sample(i, row):
        try:
            text = row[text_field]
            raw = str(row[label_field])
        except KeyError as e:
            raise DataError(f"{path}: row {i} missing field {e}") from e
        sid = str(row[id_field]) if id_field else f"{platform}-{i:08d}"
        return TextSample(id=sid, text=text, platform=platform,
                          raw_label=raw, label=binarize_label(raw, label_map))

    suffix = path.suffix.lower()
    if suffix in (".jsonl", ".json"):
        for i, row in enumerate(read_jsonl(path)):
            yield to_sample(i, row)
    elif suffix in (".csv", ".tsv"):
        delim = delimiter or ("\t" if suffix == ".tsv" else ",")
        try:
            with open(path, encoding="utf-8", newline="") as f:
                for i, row in enumerate(csv.DictReader(f, delimiter=delim)):
                    yield to_sample(i, row)
        except OSError as e:
            raise DataError(f"cannot read {path}: {e}") from e
    else:
        raise DataError(f"unsupported source dump format: {path}")
