"""Acceptance gate: one test per release criterion, each printing a
[PASS]/[FAIL] line (run with -s to see them live). Tolerances are pinned
here and nowhere else."""

import itertools
import json
import random
import subprocess
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import httpx
import pytest
import scipy.stats

from detoxforge.adversarial import PerturbMode, default_config, generate_testbed, serialize_testbed
from detoxforge.corpus import Label, ParallelRecord, TextSample
from detoxforge.filtration import EnsemblePrediction, filter_pair
from detoxforge.gateway import ClassVerdict, Gateway
from detoxforge.jobs import JobKind, JobState, JobStore
from detoxforge.metrics import (
    BleuConfig,
    RefusalLexicon,
    Smoothing,
    aggregate_overall,
    bleu,
    detect_refusal,
    joint_metric,
    round_percent,
)
from detoxforge.roundtrip import roundtrip
from detoxforge.runtime import (
    DetoxMode,
    DetoxRequest,
    DetoxRuntime,
    ParaphraseVerdict,
    gate_paraphrase,
)

from bleu_oracle import oracle_bleu, oracle_tokenize
from conftest import (
    RaisingTransport,
    fake_registry,
    fake_toxicity_score,
    make_handler,
    write_endpoints_config,
)
from test_metrics import PARADETOX_ROWS, paradetox_reports

DATA = Path(__file__).parent / "data"
REPO_ROOT = Path(__file__).resolve().parent.parent


@contextmanager
def criterion(name):
    try:
        yield
    except Exception:
        print(f"[FAIL] {name}")
        raise
    print(f"[PASS] {name}")


# 1 ---------------------------------------------------------------------------------

def test_joint_metric_reproduces_reported_cells():
    with criterion("joint metric reproduces reported table cells within 0.01, < 1 ms"):
        assert abs(joint_metric(44.00, 88.47, 76.00) - 29.58) <= 0.01
        assert abs(joint_metric(79.00, 79.04, 93.00) - 58.07) <= 0.01
        best = min(
            _timed(lambda: (joint_metric(44.00, 88.47, 76.00),
                            joint_metric(79.00, 79.04, 93.00)))
            for _ in range(5))
        assert best < 1e-3, f"took {best * 1e3:.3f} ms"


def _timed(fn):
    start = time.perf_counter()
    fn()
    return time.perf_counter() - start


# 2 ---------------------------------------------------------------------------------

def test_overall_aggregation_reproduces_reported_means():
    with criterion("overall row equals unweighted platform means within 0.01"):
        overall = aggregate_overall(paradetox_reports())
        assert abs(overall.acc - 67.86) <= 0.01
        assert abs(overall.joint - 50.29) <= 0.01
        # cross-check directly against the transcribed per-platform numbers
        accs = [row[1] for row in PARADETOX_ROWS]
        joints = [row[5] for row in PARADETOX_ROWS]
        assert round_percent(sum(accs) / 7) == 67.86
        assert round_percent(sum(joints) / 7) == 50.29


# 3 ---------------------------------------------------------------------------------

def test_bleu_suite():
    with criterion("BLEU: identity 100.00, zero-overlap 0.00, 25 corpora vs "
                   "brute-force oracle within 1e-9, < 5 s"):
        start = time.perf_counter()
        identity = ["the cat sat on the mat", "a b", "longer sentence with words"]
        assert bleu(identity, list(identity)) == 100.0
        assert bleu(["aa bb cc"], ["xx yy zz"]) == 0.0

        rnd = random.Random(42)
        vocab = ["the", "cat", "dog", "sat", "ran", "on", "mat", "a", "!", "?", "big"]
        for _ in range(25):
            k = rnd.randint(1, 5)
            hyps = [" ".join(rnd.choices(vocab, k=rnd.randint(1, 12))) for _ in range(k)]
            refs = [" ".join(rnd.choices(vocab, k=rnd.randint(1, 12))) for _ in range(k)]
            for smoothing, oracle_mode in ((Smoothing.NONE, "none"),
                                           (Smoothing.ADD_EPSILON, "add-epsilon")):
                mine = bleu(hyps, refs, BleuConfig(smoothing=smoothing))
                want = oracle_bleu([oracle_tokenize(h) for h in hyps],
                                   [oracle_tokenize(r) for r in refs],
                                   smoothing=oracle_mode)
                assert abs(mine - want) <= 1e-9, (hyps, refs, smoothing)
        assert time.perf_counter() - start < 5.0


# 4 ---------------------------------------------------------------------------------

def _preds(verdicts):
    return [EnsemblePrediction(classifier_id=f"c{i}", verdict=v)
            for i, v in enumerate(verdicts)]


def test_filtration_truth_table_and_monotonicity():
    with criterion("filtration matches brute-force rule on all 64 cases and is "
                   "monotone over 10,000 random vectors, < 5 s"):
        start = time.perf_counter()
        T, N = Label.TOXIC, Label.NONTOXIC
        for src in itertools.product([T, N], repeat=3):
            for tgt in itertools.product([T, N], repeat=3):
                keep = filter_pair(_preds(src), _preds(tgt)).keep
                brute = any(v is T for v in src) and all(v is N for v in tgt)
                assert keep == brute, (src, tgt)

        rnd = random.Random(7)
        for _ in range(10_000):
            k = rnd.randint(1, 6)
            src = [rnd.choice([T, N]) for _ in range(k)]
            tgt = [rnd.choice([T, N]) for _ in range(k)]
            base = filter_pair(_preds(src), _preds(tgt)).keep
            i = rnd.randrange(k)
            tgt_worse = list(tgt)
            tgt_worse[i] = T
            assert not (not base and filter_pair(_preds(src), _preds(tgt_worse)).keep)
            j = rnd.randrange(k)
            src_stronger = list(src)
            src_stronger[j] = T
            assert not (base and not filter_pair(_preds(src_stronger), _preds(tgt)).keep)
        assert time.perf_counter() - start < 5.0


# 5 ---------------------------------------------------------------------------------

def _levenshtein(a, b):
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def test_adversarial_testbed_generation():
    with criterion("5,000-sentence testbed: byte-identical reruns, edit-distance-1 "
                   "and slot invariants, chi-square uniform at alpha=0.001, < 10 s"):
        start = time.perf_counter()
        cfg = default_config(n=5000, seed=0)
        first = generate_testbed(cfg)
        second = generate_testbed(cfg)
        assert serialize_testbed(first) == serialize_testbed(second)
        assert len(first) == 5000

        for s in first:
            assert s.sentence.count(s.perturbed_word) == 1
            assert s.original_word not in s.sentence.split()
            assert _levenshtein(s.original_word, s.perturbed_word) == 1
            assert s.sentence == s.template.replace("<word>", s.perturbed_word)

        counts = {}
        for s in first:
            key = (s.original_word, s.template, s.char, s.mode)
            counts[key] = counts.get(key, 0) + 1
        cells = (len(cfg.toxic_words) * len(cfg.templates)
                 * len(cfg.perturb_chars) * len(PerturbMode))
        observed = list(counts.values()) + [0] * (cells - len(counts))
        expected = 5000 / cells
        stat = sum((o - expected) ** 2 / expected for o in observed)
        p_value = scipy.stats.chi2.sf(stat, df=cells - 1)
        assert p_value >= 0.001, f"chi-square p={p_value}"
        assert time.perf_counter() - start < 10.0


# 6 ---------------------------------------------------------------------------------

def test_refusal_heuristic_on_fixture_set():
    with criterion("refusal heuristic: 18/18 transcribed refusals flagged, "
                   "0/10 transcribed detox outputs flagged"):
        lexicon = RefusalLexicon().extended(
            json.loads((DATA / "refusal_lexicon_extra.json").read_text()))
        refusals = [json.loads(l)["text"] for l in
                    (DATA / "refusal_responses.jsonl").read_text().splitlines() if l]
        outputs = [json.loads(l)["text"] for l in
                   (DATA / "detox_outputs.jsonl").read_text().splitlines() if l]
        assert len(refusals) == 18 and len(outputs) == 10
        flagged = [detect_refusal(t, lexicon) for t in refusals]
        passed = [detect_refusal(t, lexicon) for t in outputs]
        assert all(flagged), f"missed {flagged.count(False)} refusals"
        assert not any(passed), f"false-flagged {passed.count(True)} outputs"


# 7 ---------------------------------------------------------------------------------

class _ScriptedGateway:
    def __init__(self, score=None, exc=None):
        self.score = score
        self.exc = exc

    def classify(self, endpoint_id, text, text_pair=None):
        if self.exc is not None:
            raise self.exc
        label = "paraphrase" if self.score > 0.5 else "non_paraphrase"
        return ClassVerdict(label=label, score=self.score)


def test_runtime_contract():
    with criterion("runtime: replay CoT round-trip, warning iff verdict is not "
                   "paraphrase over 1,000 gate scores, timeout degrades to unknown"):
        gw = Gateway(fake_registry(), DATA / "replay_cache", replay=True,
                     transport=RaisingTransport())
        result = DetoxRuntime(gw).detoxify(
            DetoxRequest(text="Dj Nick is retarded", mode=DetoxMode.COT_EXPL))
        assert result.rewrite == "Dj Nick is not intellectually inclined."
        assert result.explanation and not result.parse_degraded

        rnd = random.Random(99)
        for _ in range(1000):
            score = rnd.random()
            verdict, warning = gate_paraphrase(
                "src", "rewrite", "paraphrase_classifier",
                _ScriptedGateway(score=score), threshold=0.5)
            assert warning == (verdict is not ParaphraseVerdict.PARAPHRASE)

        from detoxforge.errors import TimeoutError_

        verdict, warning = gate_paraphrase(
            "src", "rewrite", "paraphrase_classifier",
            _ScriptedGateway(exc=TimeoutError_("scripted timeout")))
        assert verdict is ParaphraseVerdict.UNKNOWN and warning is True


# 8 ---------------------------------------------------------------------------------

def test_multilingual_identity_property(tmp_path):
    with criterion("identity translator: source/target similarity exactly 100.00 and "
                   "classification rates equal the no-translation baseline"):
        handler = make_handler(translate=lambda text, src, tgt: text)
        gw = Gateway(fake_registry(), tmp_path / "cache",
                     transport=httpx.MockTransport(handler), retry_base_delay=0.0)
        pairs = [
            _pair(0, "you are a moron and awful", "you are mistaken"),
            _pair(1, "what a stupid take", "what a weak argument"),
            _pair(2, "have a great day", "have a great day"),
        ]
        report = roundtrip(pairs, "ar", "translator", "style_classifier",
                           "sim_embedder", gw)
        assert report.source_sim == 100.0
        assert report.target_sim == 100.0
        baseline_toxic = [fake_toxicity_score(p.source.text) > 0.5 for p in pairs]
        baseline_nontoxic = [fake_toxicity_score(p.target_text) <= 0.5 for p in pairs]
        assert report.toxicity_pct == 100.0 * sum(baseline_toxic) / len(pairs)
        assert report.nontoxicity_pct == 100.0 * sum(baseline_nontoxic) / len(pairs)


def _pair(i, source_text, target_text):
    return ParallelRecord(
        source=TextSample(id=f"wiki-{i}", text=source_text, platform="wiki",
                          raw_label="hate", label=Label.TOXIC),
        target_text=target_text, source_label=Label.TOXIC)


# 9 ---------------------------------------------------------------------------------

def test_service_contract(tmp_path, fake_server):
    with criterion("service: schemas validate, invalid rating branch 409, jobs "
                   "survive kill-and-restart, no secondary component required"):
        import jsonschema
        from fastapi.testclient import TestClient

        from detoxforge.service import ServiceSettings, create_app

        committed = json.loads((REPO_ROOT / "docs" / "openapi.json").read_text())
        gw = Gateway(fake_registry(), tmp_path / "cache",
                     transport=httpx.MockTransport(make_handler()),
                     retry_base_delay=0.0)
        app = create_app(ServiceSettings(data_dir=tmp_path / "svc", gateway=gw))
        with TestClient(app) as client:
            assert sorted(client.app.openapi()["paths"]) == sorted(committed["paths"])
            job = client.post("/detoxify", json={"text": "you are a moron"}).json()
            assert job["state"] == "done"
            schemas = committed["components"]["schemas"]
            body_schema = dict(schemas["ReviewBody"])
            body_schema["components"] = {"schemas": schemas}
            review = {"job_id": job["id"], "reviewer_id": "r1",
                      "detoxifiability": "detoxifiable", "rating": "A"}
            jsonschema.validate(review, body_schema)
            assert client.post("/reviews", json=review).status_code == 200
            bad = dict(review, rating="N")
            assert client.post("/reviews", json=bad).status_code == 409

        _assert_restart_durability(tmp_path, fake_server)


def _assert_restart_durability(tmp_path, fake_server):
    import os
    import signal
    import socket

    endpoints = write_endpoints_config(tmp_path / "endpoints.json", fake_server)
    data_dir = tmp_path / "restart-svc"

    def free_port():
        with socket.socket() as s:
            s.bind(("127.0.0.1", 0))
            return s.getsockname()[1]

    def launch(port):
        return subprocess.Popen(
            [sys.executable, "-m", "detoxforge.cli",
             "--endpoints", str(endpoints), "--cache-dir", str(tmp_path / "cache2"),
             "serve", "--host", "127.0.0.1", "--port", str(port),
             "--data-dir", str(data_dir)],
            stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL, cwd=REPO_ROOT)

    def wait_up(base):
        deadline = time.time() + 15
        while time.time() < deadline:
            try:
                httpx.get(f"{base}/healthz", timeout=1.0)
                return
            except httpx.HTTPError:
                time.sleep(0.1)
        raise AssertionError("service never came up")

    port = free_port()
    proc = launch(port)
    try:
        base = f"http://127.0.0.1:{port}"
        wait_up(base)
        job = httpx.post(f"{base}/detoxify", json={"text": "you are a moron"},
                         timeout=10.0).json()
        assert job["state"] == "done"
    finally:
        os.kill(proc.pid, signal.SIGKILL)
        proc.wait(timeout=10)

    port2 = free_port()
    proc2 = launch(port2)
    try:
        base2 = f"http://127.0.0.1:{port2}"
        wait_up(base2)
        revived = httpx.get(f"{base2}/jobs/{job['id']}", timeout=5.0).json()
        assert revived["state"] == "done"
        assert revived["result"] == job["result"]
    finally:
        proc2.terminate()
        proc2.wait(timeout=10)


def test_jobstore_level_durability(tmp_path):
    # In-process companion to the subprocess check: Done/Failed jobs and
    # their results reload from the event log alone.
    store = JobStore(tmp_path / "store")
    job = store.create(JobKind.DETOX, {"text": "x"})
    store.transition(job.id, JobState.RUNNING)
    store.transition(job.id, JobState.DONE, result={"rewrite": "y"})
    again = JobStore(tmp_path / "store")
    assert again.get(job.id).state is JobState.DONE
    assert again.get(job.id).result == {"rewrite": "y"}
