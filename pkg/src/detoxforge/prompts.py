"""Prompt construction for every model-facing task in the pipeline.

Templates live in versioned plain-text files (templates/<task>.txt), split
into sections by lines of the form ``[section_name]``. Section names map to
prompt components (input, task, objective, constraints, response_format,
fewshot); placeholders use double braces ``{{name}}`` and an unresolved
placeholder is a render error. A prompt's rendered string is its section
texts joined by one blank line, in file order.

The fewshot section, when present, is a per-exemplar block template; the
factory renders one block per exemplar (order preserved) and joins the
blocks with blank lines into a single FewShot segment.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

from .corpus import Label, ParaphraseLabel
from .errors import (
    BadFewShotCountError,
    EmptyInputError,
    ExemplarCountMismatchError,
    TemplateError,
)


class TaskKind(str, Enum):
    PARALLEL_GEN = "parallel_gen"
    EXPLANATION = "explanation"
    PARAPHRASE_LABEL = "paraphrase"
    DETOX_INSTRUCT = "detox_instruct"
    COT_DETOX = "cot_detox"


class Component(str, Enum):
    INPUT = "input"
    TASK = "task"
    OBJECTIVE = "objective"
    CONSTRAINTS = "constraints"
    RESPONSE_FORMAT = "response_format"
    FEW_SHOT = "fewshot"


PARALLEL_GEN_COMPONENTS = frozenset({
    Component.INPUT, Component.TASK, Component.OBJECTIVE,
    Component.CONSTRAINTS, Component.RESPONSE_FORMAT,
})


@dataclass(frozen=True)
class DecodingParams:
    temperature: float = 0.7
    max_tokens: Optional[int] = None

    def to_json(self) -> dict:
        d = {"temperature": self.temperature}
        if self.max_tokens is not None:
            d["max_tokens"] = self.max_tokens
        return d


@dataclass(frozen=True)
class Segment:
    component: Component
    text: str


@dataclass(frozen=True)
class Prompt:
    task_kind: TaskKind
    segments: tuple[Segment, ...]
    rendered: str
    params_hint: DecodingParams

    def sha256(self) -> str:
        return hashlib.sha256(self.rendered.encode("utf-8")).hexdigest()

    def segment(self, component: Component) -> str:
        for seg in self.segments:
            if seg.component is component:
                return seg.text
        raise KeyError(component)


def render_segments(segments: Sequence[Segment]) -> str:
    return "\n\n".join(seg.text for seg in segments)


@dataclass(frozen=True)
class FewShotExemplar:
    input_text: str
    output_text: str
    label: Optional[ParaphraseLabel] = None

    def __post_init__(self):
        if not self.input_text.strip() or not self.output_text.strip():
            raise EmptyInputError("few-shot exemplar texts must be non-empty")

    @classmethod
    def from_json(cls, d: dict) -> "FewShotExemplar":
        label = d.get("label")
        return cls(input_text=d["input_text"], output_text=d["output_text"],
                   label=ParaphraseLabel(label) if label else None)

    def to_json(self) -> dict:
        return {"input_text": self.input_text, "output_text": self.output_text,
                "label": self.label.value if self.label else None}


_SECTION_RE = re.compile(r"^\[([a-z_]+)\]\s*$")
_PLACEHOLDER_RE = re.compile(r"\{\{\s*([A-Za-z_][A-Za-z0-9_]*)\s*\}\}")


def parse_template(text: str, name: str) -> list[tuple[Component, str]]:
    sections: list[tuple[Component, list[str]]] = []
    for line in text.splitlines():
        m = _SECTION_RE.match(line)
        if m:
            try:
                comp = Component(m.group(1))
            except ValueError:
                raise TemplateError(f"{name}: unknown section [{m.group(1)}]")
            sections.append((comp, []))
        else:
            if not sections:
                if line.strip():
                    raise TemplateError(f"{name}: text before first section header")
                continue
            sections[-1][1].append(line)
    if not sections:
        raise TemplateError(f"{name}: no sections found")
    return [(comp, "\n".join(lines).strip("\n")) for comp, lines in sections]


def fill(template: str, values: dict, name: str) -> str:
    def sub(m):
        key = m.group(1)
        if key not in values:
            raise TemplateError(f"{name}: unresolved placeholder {{{{{key}}}}}")
        return str(values[key])

    return _PLACEHOLDER_RE.sub(sub, template)


_TEMPLATE_FILES = {
    TaskKind.PARALLEL_GEN: "parallel_gen.txt",
    TaskKind.EXPLANATION: "explanation.txt",
    TaskKind.PARAPHRASE_LABEL: "paraphrase.txt",
    TaskKind.COT_DETOX: "cot_detox.txt",
}

FEWSHOT_PARAPHRASE_COUNT = 5


def default_template_dir() -> Path:
    return Path(resources.files("detoxforge") / "templates")


class PromptFactory:
    """Stateless after template load; safe for unrestricted concurrent use."""

    def __init__(self, template_dir=None,
                 parallel_temperature: float = 0.7,
                 paraphrase_temperature: float = 0.0):
        self.template_dir = Path(template_dir) if template_dir else default_template_dir()
        self._params = {
            TaskKind.PARALLEL_GEN: DecodingParams(parallel_temperature),
            TaskKind.EXPLANATION: DecodingParams(0.7),
            TaskKind.PARAPHRASE_LABEL: DecodingParams(paraphrase_temperature),
            TaskKind.DETOX_INSTRUCT: DecodingParams(0.0),
            TaskKind.COT_DETOX: DecodingParams(0.0),
        }
        self._cache: dict[str, list[tuple[Component, str]]] = {}

    def _load(self, filename: str) -> list[tuple[Component, str]]:
        if filename not in self._cache:
            path = self.template_dir / filename
            try:
                text = path.read_text(encoding="utf-8")
            except OSError as e:
                raise TemplateError(f"cannot read template {path}: {e}") from e
            self._cache[filename] = parse_template(text, filename)
        return self._cache[filename]

    def _build(self, kind: TaskKind, filename: str, values: dict,
               exemplars: Sequence[FewShotExemplar] = (),
               exemplar_values=None) -> Prompt:
        segments = []
        for comp, text in self._load(filename):
            if comp is Component.FEW_SHOT:
                blocks = [fill(text, exemplar_values(e), filename) for e in exemplars]
                if not blocks:
                    continue
                segments.append(Segment(comp, "\n\n".join(blocks)))
            else:
                segments.append(Segment(comp, fill(text, values, filename)))
        return Prompt(task_kind=kind, segments=tuple(segments),
                      rendered=render_segments(segments),
                      params_hint=self._params[kind])

    def build_parallel_prompt(self, input_text: str, source_label: Label) -> Prompt:
        """Jailbreak-style generation prompt; direction flips with the label."""
        if not input_text.strip():
            raise EmptyInputError("parallel prompt needs non-empty input text")
        if source_label is Label.TOXIC:
            source_style, target_style = "toxic", "non-toxic"
        else:
            source_style, target_style = "non-toxic", "toxic"
        prompt = self._build(TaskKind.PARALLEL_GEN, _TEMPLATE_FILES[TaskKind.PARALLEL_GEN],
                             {"input": input_text, "source_style": source_style,
                              "target_style": target_style})
        kinds = [seg.component for seg in prompt.segments]
        if len(kinds) != 5 or set(kinds) != PARALLEL_GEN_COMPONENTS:
            raise TemplateError(
                "parallel_gen template must have the five components exactly once, "
                f"got {[k.value for k in kinds]}")
        return prompt

    def build_explanation_prompt(self, toxic_text: str) -> Prompt:
        if not toxic_text.strip():
            raise EmptyInputError("explanation prompt needs non-empty input text")
        return self._build(TaskKind.EXPLANATION, _TEMPLATE_FILES[TaskKind.EXPLANATION],
                           {"input": toxic_text})

    def build_paraphrase_prompt(self, pair: tuple[str, str],
                                fewshots: Sequence[FewShotExemplar]) -> Prompt:
        toxic, nontoxic = pair
        if not toxic.strip() or not nontoxic.strip():
            raise EmptyInputError("paraphrase prompt needs a non-empty text pair")
        if len(fewshots) != FEWSHOT_PARAPHRASE_COUNT:
            raise BadFewShotCountError(
                f"need exactly {FEWSHOT_PARAPHRASE_COUNT} exemplars, got {len(fewshots)}")
        if any(e.label is None for e in fewshots):
            raise BadFewShotCountError("every paraphrase exemplar needs a yes/no label")
        return self._build(
            TaskKind.PARAPHRASE_LABEL, _TEMPLATE_FILES[TaskKind.PARAPHRASE_LABEL],
            {"toxic": toxic, "nontoxic": nontoxic},
            exemplars=fewshots,
            exemplar_values=lambda e: {"input_text": e.input_text,
                                       "output_text": e.output_text,
                                       "label": e.label.value})

    def build_detox_instruction_prompt(self, input_text: str, shots: int,
                                       exemplars: Sequence[FewShotExemplar] = ()) -> Prompt:
        """0- or 3-shot instruction prompt; blocks end with an open Output Text: cue."""
        if not input_text.strip():
            raise EmptyInputError("detox instruction prompt needs non-empty input text")
        if shots not in (0, 3):
            raise ExemplarCountMismatchError(f"shots must be 0 or 3, got {shots}")
        if len(exemplars) != shots:
            raise ExemplarCountMismatchError(
                f"shots={shots} but {len(exemplars)} exemplars supplied")
        filename = "detox_3shot.txt" if shots == 3 else "detox_0shot.txt"
        return self._build(
            TaskKind.DETOX_INSTRUCT, filename, {"input": input_text},
            exemplars=exemplars,
            exemplar_values=lambda e: {"input_text": e.input_text,
                                       "output_text": e.output_text})

    def build_cot_detox_prompt(self, input_text: str) -> Prompt:
        """Explanation-then-rewrite prompt in the runtime wire format."""
        if not input_text.strip():
            raise EmptyInputError("cot detox prompt needs non-empty input text")
        return self._build(TaskKind.COT_DETOX, _TEMPLATE_FILES[TaskKind.COT_DETOX],
                           {"input": input_text})


def load_fewshot_file(path) -> list[FewShotExemplar]:
    """Few-shot exemplar file: JSON-lines of FewShotExemplar."""
    from .corpus import read_jsonl

    return [FewShotExemplar.from_json(d) for d in read_jsonl(path)]


def default_paraphrase_fewshots() -> list[FewShotExemplar]:
    return load_fewshot_file(resources.files("detoxforge") / "data" / "fewshot_paraphrase.jsonl")


def default_detox_fewshots() -> list[FewShotExemplar]:
    return load_fewshot_file(resources.files("detoxforge") / "data" / "fewshot_detox_3shot.jsonl")
