"""HTTP service: detox runtime, evaluation jobs, adversarial generation,
round-trip jobs, and review persistence.

Single-process FastAPI app over a durable JobStore. POST /detoxify completes
synchronously; the other job kinds run on a bounded worker pool and are
polled via GET /jobs/{id}. Review records enforce the rating-branch rule:
A-D for detoxifiable items, N/T for non-detoxifiable ones, and explanation
ratings only when the reviewed job actually produced an explanation.

Bind address comes from DETOXFORGE_BIND (host:port), default 127.0.0.1:8787;
there is no authentication, so keep it on localhost.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Query, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .adversarial import AdversaryConfig, default_config, generate_testbed, serialize_testbed
from .corpus import ParallelRecord, read_jsonl
from .errors import ConfigError, DataError, DetoxforgeError, GatewayError, StageError
from .evaluation import BleuReferent, EvalEndpoints, EvalRow, evaluate_corpus
from .gateway import Gateway, load_endpoint_registry
from .jobs import JobKind, JobStore, QueueFullError, UnknownJobError, WorkerPool
from .metrics import BleuConfig, BleuLevel, PlatformReport, Smoothing
from .prompts import PromptFactory
from .report import write_report_files
from .roundtrip import roundtrip as run_roundtrip
from .runtime import DetoxMode, DetoxRequest, DetoxRuntime

DEFAULT_BIND = "127.0.0.1:8787"

DETOXIFIABLE_RATINGS = ("A", "B", "C", "D")
NON_DETOXIFIABLE_RATINGS = ("N", "T")

RATING_SCHEMA = {
    "detoxifiable": {
        "A": "Non-toxic, semantically equivalent to the input, fluent.",
        "B": "Non-toxic and semantically equivalent; minor grammatical issues.",
        "C": "Non-toxic but only partially preserves the input meaning.",
        "D": "Toxic, meaning lost, a generic refusal, a copy of the input, or not fluent.",
    },
    "non_detoxifiable": {
        "N": "Non-toxic output grounded in the input (not a generic refusal), fluent.",
        "T": "Toxic output, a generic refusal, a copy of the input, or not fluent.",
    },
    "explanation": {
        "relevance": {
            "A": "Completely relevant; nothing missing, nothing extra.",
            "B": "Relevant with some minor extra information.",
            "C": "Somewhat relevant; misses major information.",
            "D": "Irrelevant.",
        },
        "comprehensiveness": {
            "A": "Identifies all the toxic terms explicitly.",
            "B": "Indicates toxic terms without naming them all.",
            "C": "Shallow; no indication of specific terms.",
            "D": "Generic statement ignoring the input context.",
        },
        "convincing": {
            "A": "Fully convincing; the user would agree to alter the input.",
            "B": "Somewhat convincing; the user leans toward altering it.",
            "C": "Less convincing; the user would hesitate.",
            "D": "Not convincing.",
        },
    },
}


@dataclass
class ServiceSettings:
    data_dir: Path
    endpoints_path: Optional[Path] = None
    cache_dir: Optional[Path] = None
    replay: bool = False
    workers: int = 2
    queue_capacity: int = 16
    cors_origins: tuple = ("*",)
    template_dir: Optional[Path] = None
    paraphrase_threshold: float = 0.5
    gateway: Optional[Gateway] = None  # injectable for tests
    detox_endpoint: str = "detox_model"
    paraphrase_endpoint: str = "paraphrase_classifier"
    eval_endpoints: EvalEndpoints = dc_field(default_factory=EvalEndpoints)


# -- request bodies ---------------------------------------------------------------

class DetoxifyBody(BaseModel):
    text: str = Field(min_length=1)
    mode: DetoxMode = DetoxMode.COT_EXPL
    detox_endpoint: Optional[str] = None
    paraphrase_endpoint: Optional[str] = None


class BleuBody(BaseModel):
    max_order: int = 4
    smoothing: Smoothing = Smoothing.NONE
    level: BleuLevel = BleuLevel.CORPUS
    referent: BleuReferent = BleuReferent.REFERENCE


class EvaluateBody(BaseModel):
    records_path: str
    style_classifier: Optional[str] = None
    fluency_classifier: Optional[str] = None
    bertscore_embedder: Optional[str] = None
    sim_embedder: Optional[str] = None
    bleu: BleuBody = Field(default_factory=BleuBody)


class AdversarialBody(BaseModel):
    toxic_words: Optional[list[str]] = None
    templates: Optional[list[str]] = None
    perturb_chars: Optional[list[str]] = None
    n: int = Field(default=5000, ge=0)
    seed: int = Field(default=0, ge=0)
    i_understand_offensive_content: bool = False


class RoundtripBody(BaseModel):
    pairs_path: str
    language: str
    translator: str = "translator"
    classifier: str = "style_classifier"
    embedder: str = "sim_embedder"
    limit: Optional[int] = Field(default=None, ge=1)


class ExplanationRatings(BaseModel):
    relevance: str
    comprehensiveness: str
    convincing: str


class ReviewBody(BaseModel):
    job_id: str
    reviewer_id: str = Field(min_length=1)
    detoxifiability: str  # "detoxifiable" | "non_detoxifiable"
    rating: str
    explanation_ratings: Optional[ExplanationRatings] = None
    edited_rewrite: Optional[str] = None
    prior_review_id: Optional[str] = None


# -- response schemas (the wire contract consumed by clients and the console) ------

class JobOut(BaseModel):
    id: str
    kind: str
    state: str
    submitted_at: str
    finished_at: Optional[str] = None
    payload: dict = Field(default_factory=dict)
    result: Optional[dict] = None
    error: Optional[str] = None


class ReviewOut(ReviewBody):
    id: str
    created_at: str


class HealthOut(BaseModel):
    status: str
    replay: bool
    endpoints: dict = Field(default_factory=dict)


def create_app(settings: ServiceSettings) -> FastAPI:
    settings.data_dir = Path(settings.data_dir)
    settings.data_dir.mkdir(parents=True, exist_ok=True)
    cache_dir = Path(settings.cache_dir) if settings.cache_dir else settings.data_dir / "cache"

    if settings.gateway is not None:
        gateway = settings.gateway
    else:
        registry = (load_endpoint_registry(settings.endpoints_path)
                    if settings.endpoints_path else {})
        gateway = Gateway(registry, cache_dir, replay=settings.replay)

    store = JobStore(settings.data_dir / "store")
    pool = WorkerPool(store, workers=settings.workers,
                      queue_capacity=settings.queue_capacity)
    factory = PromptFactory(settings.template_dir)
    runtime = DetoxRuntime(gateway, factory,
                           paraphrase_threshold=settings.paraphrase_threshold)
    outputs_dir = settings.data_dir / "outputs"

    app = FastAPI(title="detoxforge", version="0.1.0")
    app.state.store = store
    app.state.pool = pool
    app.state.gateway = gateway

    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(settings.cors_origins),
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": exc.errors()})

    def error(status: int, message: str) -> JSONResponse:
        return JSONResponse(status_code=status, content={"detail": message})

    # -- runtime -----------------------------------------------------------------

    @app.post("/detoxify", response_model=JobOut)
    def detoxify(body: DetoxifyBody):
        req = DetoxRequest(
            text=body.text, mode=body.mode,
            detox_endpoint=body.detox_endpoint or settings.detox_endpoint,
            paraphrase_endpoint=body.paraphrase_endpoint or settings.paraphrase_endpoint)
        try:
            job = pool.run_sync(JobKind.DETOX, body.model_dump(mode="json"),
                                lambda _job: runtime.detoxify(req).to_json())
        except StageError as e:
            if isinstance(e.cause, GatewayError):
                return error(503, f"detox endpoint unreachable at stage {e.stage}: {e.cause}")
            return error(400, str(e))
        except ConfigError as e:
            return error(503, f"endpoint not configured: {e}")
        return job.to_json()

    # -- async jobs ----------------------------------------------------------------

    def submit(kind: JobKind, payload: dict, fn):
        try:
            return pool.submit(kind, payload, fn).to_json()
        except QueueFullError as e:
            return error(429, str(e))

    @app.post("/evaluate", response_model=JobOut)
    def evaluate(body: EvaluateBody):
        endpoints = EvalEndpoints(
            style_classifier=body.style_classifier or settings.eval_endpoints.style_classifier,
            fluency_classifier=body.fluency_classifier or settings.eval_endpoints.fluency_classifier,
            bertscore_embedder=body.bertscore_embedder or settings.eval_endpoints.bertscore_embedder,
            sim_embedder=body.sim_embedder or settings.eval_endpoints.sim_embedder)
        cfg = BleuConfig(max_order=body.bleu.max_order, smoothing=body.bleu.smoothing,
                         level=body.bleu.level)

        def run(job):
            rows = [EvalRow.from_json(d) for d in read_jsonl(body.records_path)]
            rep = evaluate_corpus(rows, gateway, endpoints, cfg,
                                  referent=body.bleu.referent)
            out = outputs_dir / job.id
            paths = write_report_files(rep.rows, rep.overall, out,
                                       extra={"refusals": rep.refusals,
                                              "bleu_referent": rep.bleu_referent})
            doc = rep.to_json()
            doc["files"] = {k: str(v) for k, v in paths.items()}
            return doc

        return submit(JobKind.EVALUATE, body.model_dump(mode="json"), run)

    @app.post("/adversarial/generate", response_model=JobOut)
    def adversarial_generate(body: AdversarialBody):
        if not body.i_understand_offensive_content:
            return error(400, "adversarial generation emits offensive content; "
                              "set i_understand_offensive_content to true")
        try:
            if body.toxic_words or body.templates or body.perturb_chars:
                base = default_config()
                cfg = AdversaryConfig(
                    toxic_words=tuple(body.toxic_words or base.toxic_words),
                    templates=tuple(body.templates or base.templates),
                    perturb_chars=tuple(body.perturb_chars or base.perturb_chars),
                    n=body.n, seed=body.seed)
            else:
                cfg = default_config(n=body.n, seed=body.seed)
        except ConfigError as e:
            return error(400, str(e))

        def run(job):
            sentences = generate_testbed(cfg)
            out = outputs_dir / job.id
            out.mkdir(parents=True, exist_ok=True)
            path = out / "adversarial.jsonl"
            path.write_bytes(serialize_testbed(sentences))
            return {"path": str(path), "count": len(sentences),
                    "config": cfg.to_json()}

        return submit(JobKind.ADVERSARIAL, body.model_dump(mode="json"), run)

    @app.post("/roundtrip", response_model=JobOut)
    def roundtrip_endpoint(body: RoundtripBody):
        def run(job):
            pairs = [ParallelRecord.from_json(d) for d in read_jsonl(body.pairs_path)]
            if body.limit:
                pairs = pairs[:body.limit]
            out = outputs_dir / job.id
            out.mkdir(parents=True, exist_ok=True)
            rep = run_roundtrip(pairs, body.language, body.translator,
                                body.classifier, body.embedder, gateway,
                                audit_path=out / "audit.jsonl")
            doc = rep.to_json()
            doc["audit_path"] = str(out / "audit.jsonl")
            return doc

        return submit(JobKind.ROUNDTRIP, body.model_dump(mode="json"), run)

    @app.get("/jobs/{job_id}", response_model=JobOut)
    def get_job(job_id: str):
        try:
            return store.get(job_id).to_json()
        except UnknownJobError:
            return error(404, f"unknown job {job_id}")

    # -- reviews --------------------------------------------------------------------

    @app.post("/reviews", response_model=ReviewOut)
    def post_review(body: ReviewBody):
        if body.detoxifiability == "detoxifiable":
            allowed = DETOXIFIABLE_RATINGS
        elif body.detoxifiability == "non_detoxifiable":
            allowed = NON_DETOXIFIABLE_RATINGS
        else:
            return error(400, "detoxifiability must be detoxifiable or non_detoxifiable")
        if body.rating not in allowed:
            return error(409, f"rating {body.rating!r} not allowed for "
                              f"{body.detoxifiability} (allowed: {', '.join(allowed)})")
        try:
            job = store.get(body.job_id)
        except UnknownJobError:
            return error(404, f"unknown job {body.job_id}")
        if body.explanation_ratings is not None:
            has_explanation = bool(job.result and job.result.get("explanation"))
            if not has_explanation:
                return error(409, "explanation ratings supplied but the job has no explanation")
            for name, value in body.explanation_ratings.model_dump().items():
                if value not in DETOXIFIABLE_RATINGS:
                    return error(409, f"explanation rating {name} must be one of A-D")
        return store.add_review(body.model_dump(mode="json"))

    @app.get("/reviews", response_model=list[ReviewOut])
    def get_reviews(job_id: Optional[str] = Query(default=None)):
        return store.reviews(job_id)

    # -- meta -------------------------------------------------------------------------

    @app.get("/schema/ratings")
    def rating_schema():
        return RATING_SCHEMA

    @app.get("/healthz", response_model=HealthOut)
    def healthz(probe: bool = Query(default=False)):
        endpoints = {}
        for eid, spec in gateway.registry.items():
            endpoints[eid] = {
                "kind": spec.kind.value,
                "reachable": gateway.probe(eid) if probe else None,
            }
        return {"status": "ok", "replay": gateway.replay, "endpoints": endpoints}

    @app.exception_handler(DetoxforgeError)
    async def on_detoxforge_error(request: Request, exc: DetoxforgeError):
        if isinstance(exc, (GatewayError,)):
            return JSONResponse(status_code=503, content={"detail": str(exc)})
        if isinstance(exc, DataError):
            return JSONResponse(status_code=400, content={"detail": str(exc)})
        return JSONResponse(status_code=500, content={"detail": str(exc)})

    return app


def bind_address() -> tuple[str, int]:
    raw = os.environ.get("DETOXFORGE_BIND", DEFAULT_BIND)
    host, _, port = raw.rpartition(":")
    return host or "127.0.0.1", int(port)
