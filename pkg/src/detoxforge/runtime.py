"""End-to-end detox flow: generate explanation + rewrite, gate, warn.

The runtime builds the mode-appropriate prompt, calls the detox chat
endpoint, parses the reply, runs refusal detection on the rewrite, and asks
the paraphrase classifier whether meaning survived. Whenever the gate does
not positively confirm a paraphrase (including classifier failure), the
result carries the non-detoxifiability warning; the framework never
silently presents a meaning-altered rewrite as faithful.

CoT wire format (two labeled blocks, order fixed):

    Explanation: <why the input is toxic>
    Non-toxic: <the rewrite>

Labels are matched case-insensitively and whitespace around blocks is
ignored. Missing or out-of-order labels degrade to treating the whole reply
as the rewrite, with parse_degraded recorded.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Optional

from .errors import BadInputError, GatewayError, ParseError, StageError
from .metrics import RefusalLexicon, detect_refusal
from .prompts import PromptFactory

DEFAULT_PARAPHRASE_THRESHOLD = 0.5


class DetoxMode(str, Enum):
    VANILLA = "vanilla"
    PROMPTED = "prompted"
    COT_EXPL = "cot_expl"


class ParaphraseVerdict(str, Enum):
    PARAPHRASE = "paraphrase"
    NON_PARAPHRASE = "non_paraphrase"
    UNKNOWN = "unknown"


class Stage(str, Enum):
    GENERATE = "generate"
    PARSE = "parse"
    GATE = "gate"


@dataclass(frozen=True)
class DetoxRequest:
    text: str
    mode: DetoxMode = DetoxMode.COT_EXPL
    detox_endpoint: str = "detox_model"
    paraphrase_endpoint: str = "paraphrase_classifier"

    def __post_init__(self):
        if not self.text.strip():
            raise BadInputError("detox request needs non-empty text")


@dataclass(frozen=True)
class DetoxResult:
    rewrite: str
    explanation: Optional[str]
    paraphrase_verdict: ParaphraseVerdict
    warning: bool
    refusal_detected: bool
    parse_degraded: bool
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.warning != (self.paraphrase_verdict is not ParaphraseVerdict.PARAPHRASE):
            raise ParseError("warning flag inconsistent with paraphrase verdict")

    def to_json(self) -> dict:
        return {
            "rewrite": self.rewrite,
            "explanation": self.explanation,
            "paraphrase_verdict": self.paraphrase_verdict.value,
            "warning": self.warning,
            "refusal_detected": self.refusal_detected,
            "parse_degraded": self.parse_degraded,
            "provenance": self.provenance,
        }

    @classmethod
    def from_json(cls, d: dict) -> "DetoxResult":
        return cls(rewrite=d["rewrite"], explanation=d.get("explanation"),
                   paraphrase_verdict=ParaphraseVerdict(d["paraphrase_verdict"]),
                   warning=d["warning"], refusal_detected=d["refusal_detected"],
                   parse_degraded=d.get("parse_degraded", False),
                   provenance=d.get("provenance", {}))


_EXPLANATION_LABEL = re.compile(r"(?mi)^\s*explanation\s*:")
_REWRITE_LABEL = re.compile(r"(?mi)^\s*non-toxic\s*:")


def parse_model_output(raw: str, mode: DetoxMode) -> tuple[Optional[str], str]:
    """Returns (explanation, rewrite); raises ParseError on a malformed CoT reply."""
    if not raw.strip():
        raise ParseError("model output is empty")
    if mode is not DetoxMode.COT_EXPL:
        return None, raw.strip()
    expl_m = _EXPLANATION_LABEL.search(raw)
    rewrite_m = _REWRITE_LABEL.search(raw)
    if expl_m is None or rewrite_m is None:
        raise ParseError("missing Explanation:/Non-toxic: labels")
    if rewrite_m.start() < expl_m.start():
        raise ParseError("Non-toxic: block precedes Explanation: block")
    explanation = raw[expl_m.end():rewrite_m.start()].strip()
    rewrite = raw[rewrite_m.end():].strip()
    if not rewrite:
        raise ParseError("rewrite block is empty")
    return explanation or None, rewrite


def gate_paraphrase(source: str, rewrite: str, classifier_endpoint: str, gateway,
                    threshold: float = DEFAULT_PARAPHRASE_THRESHOLD) -> tuple[ParaphraseVerdict, bool]:
    """Score the pair; anything but a confirmed paraphrase warns (fail-safe)."""
    if not source.strip() or not rewrite.strip():
        raise BadInputError("gate needs non-empty source and rewrite")
    try:
        verdict = gateway.classify(classifier_endpoint, source, text_pair=rewrite)
    except GatewayError:
        return ParaphraseVerdict.UNKNOWN, True
    if verdict.score >= threshold:
        return ParaphraseVerdict.PARAPHRASE, False
    return ParaphraseVerdict.NON_PARAPHRASE, True


class DetoxRuntime:
    """Request-scoped orchestration over a gateway; reentrant."""

    def __init__(self, gateway, factory: Optional[PromptFactory] = None,
                 lexicon: Optional[RefusalLexicon] = None,
                 paraphrase_threshold: float = DEFAULT_PARAPHRASE_THRESHOLD):
        self.gateway = gateway
        self.factory = factory or PromptFactory()
        self.lexicon = lexicon or RefusalLexicon()
        self.paraphrase_threshold = paraphrase_threshold

    def _prompt(self, req: DetoxRequest):
        if req.mode is DetoxMode.COT_EXPL:
            return self.factory.build_cot_detox_prompt(req.text)
        if req.mode is DetoxMode.PROMPTED:
            return self.factory.build_detox_instruction_prompt(req.text, shots=0)
        return req.text  # vanilla: the finetuned model takes the bare text

    def detoxify(self, req: DetoxRequest) -> DetoxResult:
        prompt = self._prompt(req)
        try:
            completion = self.gateway.complete(req.detox_endpoint, prompt)
        except GatewayError as e:
            raise StageError(Stage.GENERATE.value, e) from e

        raw = completion.text
        parse_degraded = False
        explanation: Optional[str] = None
        if not raw.strip():
            # Remote produced nothing; only a refusal-style finish keeps this
            # from being an error, and it is flagged as such.
            if completion.finish_reason in ("content_filter", "refusal"):
                return DetoxResult(
                    rewrite="", explanation=None,
                    paraphrase_verdict=ParaphraseVerdict.UNKNOWN, warning=True,
                    refusal_detected=True, parse_degraded=False,
                    provenance=self._provenance(req, prompt))
            raise StageError(Stage.PARSE.value, ParseError("empty rewrite from model"))
        try:
            explanation, rewrite = parse_model_output(raw, req.mode)
        except ParseError:
            rewrite = raw.strip()
            explanation = None
            parse_degraded = req.mode is DetoxMode.COT_EXPL

        refusal = detect_refusal(rewrite, self.lexicon)
        verdict, warning = gate_paraphrase(
            req.text, rewrite, req.paraphrase_endpoint, self.gateway,
            threshold=self.paraphrase_threshold)
        return DetoxResult(
            rewrite=rewrite, explanation=explanation,
            paraphrase_verdict=verdict, warning=warning,
            refusal_detected=refusal, parse_degraded=parse_degraded,
            provenance=self._provenance(req, prompt))

    def _provenance(self, req: DetoxRequest, prompt) -> dict:
        import hashlib

        rendered = prompt if isinstance(prompt, str) else prompt.rendered
        return {
            "detox_endpoint": req.detox_endpoint,
            "paraphrase_endpoint": req.paraphrase_endpoint,
            "mode": req.mode.value,
            "prompt_sha256": hashlib.sha256(rendered.encode("utf-8")).hexdigest(),
            "timestamp": datetime.now(timezone.utc).isoformat(),
        }
