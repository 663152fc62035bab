import itertools

import pytest
from hypothesis import given, settings, strategies as st

from detoxforge.corpus import Label, ParallelRecord, TextSample
from detoxforge.errors import EmptyEnsembleError, GatewayError, MismatchedEnsemblesError
from detoxforge.filtration import (
    DEFAULT_ENSEMBLE,
    EnsemblePrediction,
    ErrorPolicy,
    FilterReason,
    FilterStats,
    filter_pair,
    run_filter,
)

T, N = Label.TOXIC, Label.NONTOXIC


def preds(verdicts, ids=None):
    ids = ids or [f"c{i}" for i in range(len(verdicts))]
    return [EnsemblePrediction(classifier_id=i, verdict=v)
            for i, v in zip(ids, verdicts)]


def brute_force_keep(source_verdicts, target_verdicts) -> bool:
    # Direct transcription of the stated rule, no shared code.
    return any(v is T for v in source_verdicts) and all(v is N for v in target_verdicts)


def test_keep_when_source_flagged_and_target_clean():
    d = filter_pair(preds([T, N, N, N, N, N]), preds([N, N, N, N, N, N]))
    assert d.keep and d.reason is FilterReason.KEPT


def test_drop_source_never_toxic():
    d = filter_pair(preds([N] * 6), preds([N] * 6))
    assert not d.keep and d.reason is FilterReason.SOURCE_NEVER_TOXIC


def test_drop_target_sometimes_toxic():
    d = filter_pair(preds([T, N, N, N, N, N]), preds([N, T, N, N, N, N]))
    assert not d.keep and d.reason is FilterReason.TARGET_SOMETIMES_TOXIC


def test_source_clause_checked_first():
    d = filter_pair(preds([N, N]), preds([T, T]))
    assert d.reason is FilterReason.SOURCE_NEVER_TOXIC


def test_empty_and_mismatched_ensembles():
    with pytest.raises(EmptyEnsembleError):
        filter_pair([], preds([N]))
    with pytest.raises(MismatchedEnsemblesError):
        filter_pair(preds([T], ids=["a"]), preds([N], ids=["b"]))
    with pytest.raises(MismatchedEnsemblesError):
        filter_pair(preds([T, T], ids=["a", "a"]), preds([N, N], ids=["a", "b"]))


def test_exhaustive_three_classifier_truth_table():
    for src in itertools.product([T, N], repeat=3):
        for tgt in itertools.product([T, N], repeat=3):
            decision = filter_pair(preds(list(src)), preds(list(tgt)))
            assert decision.keep == brute_force_keep(src, tgt), (src, tgt)


paired_verdicts = st.integers(min_value=1, max_value=6).flatmap(
    lambda k: st.tuples(
        st.lists(st.sampled_from([T, N]), min_size=k, max_size=k),
        st.lists(st.sampled_from([T, N]), min_size=k, max_size=k)))


@settings(max_examples=300)
@given(paired_verdicts, st.data())
def test_monotonicity(pair, data):
    src, tgt = pair
    decision = filter_pair(preds(src), preds(tgt))
    # flipping a target verdict N -> T never turns a drop into a keep
    idx = data.draw(st.integers(min_value=0, max_value=len(tgt) - 1))
    worse_tgt = list(tgt)
    worse_tgt[idx] = T
    worse = filter_pair(preds(src), preds(worse_tgt))
    assert not (not decision.keep and worse.keep)
    # flipping a source verdict N -> T never turns a keep into a drop
    idx = data.draw(st.integers(min_value=0, max_value=len(src) - 1))
    stronger_src = list(src)
    stronger_src[idx] = T
    stronger = filter_pair(preds(stronger_src), preds(tgt))
    assert not (decision.keep and not stronger.keep)


@settings(max_examples=100)
@given(paired_verdicts, st.randoms())
def test_ensemble_order_does_not_affect_keep(pair, rnd):
    src, tgt = pair
    base = filter_pair(preds(src), preds(tgt))
    order = list(range(len(src)))
    rnd.shuffle(order)
    shuffled_src = [preds(src)[i] for i in order]
    order2 = list(range(len(tgt)))
    rnd.shuffle(order2)
    shuffled_tgt = [preds(tgt)[i] for i in order2]
    assert filter_pair(shuffled_src, shuffled_tgt).keep == base.keep


# -- run_filter over the gateway ------------------------------------------------------

def record(i, platform="wiki", source_text="you are a moron", target_text="you are mistaken"):
    return ParallelRecord(
        source=TextSample(id=f"{platform}-{i}", text=source_text, platform=platform,
                          raw_label="hate", label=Label.TOXIC),
        target_text=target_text, source_label=Label.TOXIC)


def test_run_filter_keeps_clean_pairs(fake_gateway):
    records = [record(i) for i in range(4)]
    kept, stats = run_filter(records, DEFAULT_ENSEMBLE, fake_gateway)
    assert len(kept) == 4
    assert stats.per_platform["wiki"]["original"] == 4
    assert stats.per_platform["wiki"]["kept"] == 4


def test_run_filter_drops_toxic_targets(fake_gateway):
    records = [record(i, target_text="you are a moron too") for i in range(3)]
    kept, stats = run_filter(records, DEFAULT_ENSEMBLE, fake_gateway)
    assert kept == []
    assert stats.per_platform["wiki"]["target_sometimes_toxic"] == 3


def test_run_filter_drops_never_toxic_sources(fake_gateway):
    records = [record(i, source_text="have a nice day") for i in range(2)]
    kept, stats = run_filter(records, DEFAULT_ENSEMBLE, fake_gateway)
    assert kept == []
    assert stats.per_platform["wiki"]["source_never_toxic"] == 2


def test_run_filter_preserves_input_order(fake_gateway):
    records = [record(i) for i in range(5)]
    kept, _ = run_filter(records, DEFAULT_ENSEMBLE, fake_gateway)
    assert [r.source.id for r in kept] == [r.source.id for r in records]


def test_run_filter_stats_conservation(fake_gateway):
    records = ([record(i) for i in range(3)]
               + [record(10 + i, target_text="still a moron") for i in range(2)]
               + [record(20 + i, source_text="totally fine text") for i in range(2)])
    kept, stats = run_filter(records, DEFAULT_ENSEMBLE, fake_gateway)
    b = stats.per_platform["wiki"]
    assert b["original"] == b["kept"] + b["dropped"] + b["errors"] == 7
    assert len(kept) == b["kept"] == 3


def test_run_filter_requires_ensemble(fake_gateway):
    with pytest.raises(EmptyEnsembleError):
        run_filter([record(0)], [], fake_gateway)


class _FailingGateway:
    def __init__(self, inner, fail_ids):
        self.inner = inner
        self.fail_ids = fail_ids

    def classify(self, endpoint_id, text, text_pair=None):
        if any(marker in text for marker in self.fail_ids):
            raise GatewayError("scripted failure", endpoint_id=endpoint_id)
        return self.inner.classify(endpoint_id, text, text_pair)

    def endpoint(self, endpoint_id):
        return self.inner.endpoint(endpoint_id)


def test_error_policy_skip_counts_errors(fake_gateway):
    records = [record(0), record(1, source_text="BOOM you moron"), record(2)]
    gw = _FailingGateway(fake_gateway, ["BOOM"])
    kept, stats = run_filter(records, DEFAULT_ENSEMBLE, gw, error_policy=ErrorPolicy.SKIP)
    assert len(kept) == 2
    assert stats.per_platform["wiki"]["errors"] == 1
    assert stats.per_platform["wiki"]["original"] == 3


def test_error_policy_abort_attaches_record_id(fake_gateway):
    records = [record(7, source_text="BOOM you moron")]
    gw = _FailingGateway(fake_gateway, ["BOOM"])
    with pytest.raises(GatewayError) as err:
        run_filter(records, DEFAULT_ENSEMBLE, gw, error_policy=ErrorPolicy.ABORT)
    assert "wiki-7" in str(err.value)


def test_stats_merge_and_report_shape():
    a, b = FilterStats(), FilterStats()
    d_keep = filter_pair(preds([T]), preds([N]))
    d_drop = filter_pair(preds([N]), preds([N]))
    a.record("wiki", d_keep)
    b.record("wiki", d_drop)
    b.record("gab", d_keep)
    merged = a.merge(b)
    doc = merged.to_json()
    assert doc["platforms"]["wiki"]["original"] == 2
    assert doc["platforms"]["wiki"]["filtered"] == 1
    assert doc["platforms"]["gab"]["filtered"] == 1
    assert doc["total"]["original"] == 3
