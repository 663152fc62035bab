"""Durable job and review persistence plus a bounded worker pool.

Persistence is an append-only JSON-lines event log per entity (jobs.log.jsonl,
reviews.log.jsonl) with a periodic snapshot (jobs.snapshot.json). Every state
change appends the full job document and fsyncs, so a killed process loses at
most the event being written; recovery loads the snapshot and then replays the
whole log (events are upserts keyed by id, file order wins). Reviews are
append-only by construction: edits are new records pointing at the prior one.
"""

from __future__ import annotations

import json
import os
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Callable, Optional

from .errors import DataError


class JobKind(str, Enum):
    DETOX = "detox"
    EVALUATE = "evaluate"
    ADVERSARIAL = "adversarial"
    ROUNDTRIP = "roundtrip"


class JobState(str, Enum):
    QUEUED = "queued"
    RUNNING = "running"
    DONE = "done"
    FAILED = "failed"


_VALID_TRANSITIONS = {
    JobState.QUEUED: {JobState.RUNNING},
    JobState.RUNNING: {JobState.DONE, JobState.FAILED},
    JobState.DONE: set(),
    JobState.FAILED: set(),
}


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class Job:
    id: str
    kind: JobKind
    state: JobState
    submitted_at: str
    finished_at: Optional[str] = None
    payload: dict = field(default_factory=dict)
    result: Optional[dict] = None
    error: Optional[str] = None

    def to_json(self) -> dict:
        return {"id": self.id, "kind": self.kind.value, "state": self.state.value,
                "submitted_at": self.submitted_at, "finished_at": self.finished_at,
                "payload": self.payload, "result": self.result, "error": self.error}

    @classmethod
    def from_json(cls, d: dict) -> "Job":
        return cls(id=d["id"], kind=JobKind(d["kind"]), state=JobState(d["state"]),
                   submitted_at=d["submitted_at"], finished_at=d.get("finished_at"),
                   payload=d.get("payload", {}), result=d.get("result"),
                   error=d.get("error"))


class QueueFullError(DataError):
    """Worker pool backlog exceeded capacity."""


class UnknownJobError(DataError):
    """No job with that id."""


class InvalidTransitionError(DataError):
    """Job state machine violation."""


class _AppendLog:
    def __init__(self, path: Path):
        self.path = path
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._count = 0

    def append(self, obj: dict) -> int:
        line = json.dumps(obj, ensure_ascii=False, sort_keys=True)
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(line + "\n")
                f.flush()
                os.fsync(f.fileno())
            self._count += 1
            return self._count

    def replay(self):
        if not self.path.exists():
            return
        with open(self.path, encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if line:
                    yield json.loads(line)


class JobStore:
    """Jobs and reviews with crash-safe persistence."""

    SNAPSHOT_EVERY = 100

    def __init__(self, data_dir):
        self.dir = Path(data_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self._jobs_log = _AppendLog(self.dir / "jobs.log.jsonl")
        self._reviews_log = _AppendLog(self.dir / "reviews.log.jsonl")
        self._snapshot_path = self.dir / "jobs.snapshot.json"
        self._lock = threading.Lock()
        self._jobs: dict[str, Job] = {}
        self._reviews: list[dict] = []
        self._recover()

    def _recover(self) -> None:
        if self._snapshot_path.exists():
            with open(self._snapshot_path, encoding="utf-8") as f:
                for d in json.load(f).get("jobs", []):
                    self._jobs[d["id"]] = Job.from_json(d)
        for event in self._jobs_log.replay():
            job = Job.from_json(event["job"])
            self._jobs[job.id] = job
        for event in self._reviews_log.replay():
            self._reviews.append(event["review"])

    def _persist(self, job: Job) -> None:
        n = self._jobs_log.append({"event": "job", "at": _now(), "job": job.to_json()})
        if n % self.SNAPSHOT_EVERY == 0:
            self.write_snapshot()

    def write_snapshot(self) -> None:
        tmp = self._snapshot_path.with_suffix(".tmp")
        with open(tmp, "w", encoding="utf-8") as f:
            json.dump({"at": _now(), "jobs": [j.to_json() for j in self._jobs.values()]},
                      f, ensure_ascii=False)
        tmp.replace(self._snapshot_path)

    # -- jobs ------------------------------------------------------------------

    def create(self, kind: JobKind, payload: dict) -> Job:
        job = Job(id=str(uuid.uuid4()), kind=kind, state=JobState.QUEUED,
                  submitted_at=_now(), payload=payload)
        with self._lock:
            self._jobs[job.id] = job
            self._persist(job)
        return job

    def transition(self, job_id: str, state: JobState,
                   result: Optional[dict] = None, error: Optional[str] = None) -> Job:
        with self._lock:
            job = self._jobs.get(job_id)
            if job is None:
                raise UnknownJobError(job_id)
            if state not in _VALID_TRANSITIONS[job.state]:
                raise InvalidTransitionError(f"{job.state.value} -> {state.value}")
            job.state = state
            if state in (JobState.DONE, JobState.FAILED):
                job.finished_at = _now()
            if state is JobState.DONE:
                job.result = result
            if state is JobState.FAILED:
                job.error = error
            self._persist(job)
            return job

    def get(self, job_id: str) -> Job:
        with self._lock:
            job = self._jobs.get(job_id)
        if job is None:
            raise UnknownJobError(job_id)
        return job

    def list_jobs(self) -> list[Job]:
        with self._lock:
            return sorted(self._jobs.values(), key=lambda j: j.submitted_at)

    # -- reviews ---------------------------------------------------------------

    def add_review(self, review: dict) -> dict:
        record = dict(review)
        record.setdefault("id", str(uuid.uuid4()))
        record.setdefault("created_at", _now())
        with self._lock:
            self._reviews.append(record)
        self._reviews_log.append({"event": "review", "at": _now(), "review": record})
        return record

    def reviews(self, job_id: Optional[str] = None) -> list[dict]:
        with self._lock:
            rows = list(self._reviews)
        if job_id is not None:
            rows = [r for r in rows if r.get("job_id") == job_id]
        return rows


class WorkerPool:
    """Bounded async execution; submission past capacity raises QueueFullError."""

    def __init__(self, store: JobStore, workers: int = 2, queue_capacity: int = 16):
        self.store = store
        self.capacity = workers + queue_capacity
        self._executor = ThreadPoolExecutor(max_workers=workers,
                                            thread_name_prefix="detoxforge-job")
        self._pending = 0
        self._lock = threading.Lock()

    def submit(self, kind: JobKind, payload: dict, fn: Callable[[Job], dict]) -> Job:
        with self._lock:
            if self._pending >= self.capacity:
                raise QueueFullError(f"job queue at capacity ({self.capacity})")
            self._pending += 1
        job = self.store.create(kind, payload)

        def run():
            try:
                self.store.transition(job.id, JobState.RUNNING)
                result = fn(job)
                self.store.transition(job.id, JobState.DONE, result=result)
            except Exception as e:  # job errors land in the job record
                try:
                    self.store.transition(job.id, JobState.FAILED, error=str(e))
                except InvalidTransitionError:
                    pass
            finally:
                with self._lock:
                    self._pending -= 1

        self._executor.submit(run)
        return self.store.get(job.id)

    def run_sync(self, kind: JobKind, payload: dict, fn: Callable[[Job], dict]) -> Job:
        """Synchronous completion path (single-text detox)."""
        job = self.store.create(kind, payload)
        self.store.transition(job.id, JobState.RUNNING)
        try:
            result = fn(job)
        except Exception:
            self.store.transition(job.id, JobState.FAILED, error="see server log")
            raise
        return self.store.transition(job.id, JobState.DONE, result=result)

    def shutdown(self) -> None:
        self._executor.shutdown(wait=True)
        self.store.write_snapshot()
