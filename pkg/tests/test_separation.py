"""Separation metrics and the threshold-estimation pipeline, each checked
against a from-first-principles oracle."""

import math

import numpy as np
import pytest

from conftest import ARCH_222, FIXTURE_QUERY
from vinfer.errors import VinferError
from vinfer.models import (
    ActivationKind,
    Model,
    ModelArchitecture,
    OutFn,
    Trace,
    eval_trace,
    gen_random_model,
)
from vinfer.separation import (
    LayerFilter,
    SeparationDataset,
    SeparationRecord,
    build_dataset,
    d_out,
    d_trc,
    estimate_eps_tst,
    gen_candidates,
    js_divergence,
    js_per_layer,
    quantile_lower,
    read_dataset_jsonl,
    residuals_by_layer,
    select_params,
    separation_by_layer,
    separation_value,
    write_dataset_jsonl,
    write_percentile_report,
)


def sigmoid(z):
    return 1.0 / (1.0 + math.exp(-z))


def scalar_separation(model, ref_trace, other_trace, layer):
    """Eq.-1 oracle: scalar loops, no vectorization."""
    arch = model.arch
    w = model.weights[layer - 1]
    out = []
    for j in range(arch.layer_widths[layer]):
        za = zb = 0.0
        for i in range(arch.layer_widths[layer - 1]):
            za += float(ref_trace.layer(layer - 1)[i]) * float(w[i, j])
            zb += float(other_trace.layer(layer - 1)[i]) * float(w[i, j])
        if arch.has_bias:
            za += float(model.biases[layer - 1][j])
            zb += float(model.biases[layer - 1][j])
        kind = arch.activations[layer - 1]
        if kind == ActivationKind.SIGMOID:
            za, zb = sigmoid(za), sigmoid(zb)
        elif kind == ActivationKind.RELU:
            za, zb = max(za, 0.0), max(zb, 0.0)
        out.append(abs(za - zb))
    return np.array(out)


def test_identical_model_zero_everywhere(f1):
    rng = np.random.default_rng(0)
    for _ in range(10):
        q = rng.uniform(-1, 1, 2).astype(np.float32)
        t = eval_trace(f1, q)
        for l in (1, 2):
            assert np.all(separation_value(f1, t, t, l) == 0.0)


def test_fixture_pair_matches_scalar_oracle(f1, f2):
    ta, tb = eval_trace(f1, FIXTURE_QUERY), eval_trace(f2, FIXTURE_QUERY)
    for l in (1, 2):
        got = separation_value(f1, ta, tb, l)
        want = scalar_separation(f1, ta, tb, l)
        assert np.allclose(got, want, rtol=1e-12, atol=1e-14)


def test_linear_case_propagates_delta_exactly():
    arch = ModelArchitecture((1, 1), (ActivationKind.IDENTITY,))
    model = Model(arch, (np.array([[1.0]], np.float32),))
    t1 = Trace(np.array([0.5, 0.5], np.float32), (0, 1, 2))
    t2 = Trace(np.array([0.5 + 0.125, 0.625], np.float32), (0, 1, 2))
    assert separation_value(model, t1, t2, 1)[0] == pytest.approx(0.125)


def test_residuals_by_layer_floor_on_fixture_pair(f1, f2):
    rng = np.random.default_rng(5)
    for _ in range(50):
        q = rng.uniform(0, 1, 2).astype(np.float32)
        res = residuals_by_layer(f1, eval_trace(f2, q))
        assert min(float(r.min()) for r in res) > 1e-3


# -- distances -----------------------------------------------------------------


def test_d_out_examples():
    assert d_out([1.0, 0.0], [0.0, 1.0]) == pytest.approx(math.sqrt(2))
    assert d_out([0.5, 0.5], [0.5, 0.5]) == 0.0
    with pytest.raises(VinferError):
        d_out([1.0], [1.0, 2.0])


def test_d_trc_oracle_and_properties(f1, f2):
    ta, tb = eval_trace(f1, FIXTURE_QUERY), eval_trace(f2, FIXTURE_QUERY)
    got = d_trc(ta, tb, (1, 2))
    want = 0.0
    for l in (1, 2):
        width = 2
        want += sum(abs(float(x) - float(y)) for x, y in zip(ta.layer(l), tb.layer(l))) / width
    want /= 2
    assert got == pytest.approx(want, rel=1e-12)
    assert d_trc(ta, ta, (1, 2)) == 0.0
    with pytest.raises(VinferError):
        d_trc(ta, tb, ())


def test_d_trc_permutation_invariance():
    offsets = (0, 2, 5)
    a = Trace(np.array([0.1, 0.2, 1.0, 2.0, 3.0], np.float32), offsets)
    b = Trace(np.array([0.4, 0.1, 2.0, 1.0, 5.0], np.float32), offsets)
    # permute layer 1 of both traces identically -> distance unchanged
    pa = Trace(np.array([0.1, 0.2, 2.0, 1.0, 3.0], np.float32), offsets)
    pb = Trace(np.array([0.4, 0.1, 1.0, 2.0, 5.0], np.float32), offsets)
    assert d_trc(a, b, (1,)) == pytest.approx(d_trc(pa, pb, (1,)))
    # permuting only one side changes it
    assert d_trc(a, pb, (1,)) != pytest.approx(d_trc(a, b, (1,)))


def test_d_trc_monotone_adding_deviating_layer():
    offsets2 = (0, 1, 2)
    offsets3 = (0, 1, 2, 3)
    a2 = Trace(np.array([0.0, 0.0], np.float32), offsets2)
    b2 = Trace(np.array([0.0, 0.1], np.float32), offsets2)
    a3 = Trace(np.array([0.0, 0.0, 0.0], np.float32), offsets3)
    b3 = Trace(np.array([0.0, 0.1, 0.9], np.float32), offsets3)
    assert d_trc(a3, b3, (1, 2)) > d_trc(a2, b2, (1,))


# -- JS ---------------------------------------------------------------------------


def js_oracle(sample_a, sample_b, bins, lo, hi, eps=1e-12):
    """Independent histogram + JS oracle in plain Python, base 2."""
    def hist(sample):
        counts = [0] * bins
        width = (hi - lo) / bins
        for v in sample:
            k = int((v - lo) / width)
            if k == bins:  # right edge
                k -= 1
            if 0 <= k < bins:
                counts[k] += 1
        return [c + eps for c in counts]

    pa, pb = hist(sample_a), hist(sample_b)
    sa, sb = sum(pa), sum(pb)
    pa = [x / sa for x in pa]
    pb = [x / sb for x in pb]
    m = [(x + y) / 2 for x, y in zip(pa, pb)]
    kl_am = sum(x * math.log2(x / y) for x, y in zip(pa, m) if x > 0)
    kl_bm = sum(x * math.log2(x / y) for x, y in zip(pb, m) if x > 0)
    return 0.5 * kl_am + 0.5 * kl_bm


def _traces_from_samples(samples):
    # single-layer "traces": layer 0 width 1, layer 1 holds the sample value
    return [
        Trace(np.array([0.0, v], dtype=np.float32), (0, 1, 2)) for v in samples
    ]


def test_js_identical_zero():
    rng = np.random.default_rng(0)
    s = rng.normal(0, 1, 500)
    ta = _traces_from_samples(s)
    filt = js_per_layer(ta, ta, bins=50)
    assert filt.js[1] == pytest.approx(0.0, abs=1e-9)
    assert 1 not in filt.valid_layers


def test_js_disjoint_support_is_one():
    ta = _traces_from_samples(np.zeros(300) + 0.1)
    tb = _traces_from_samples(np.ones(300) * 9.0)
    filt = js_per_layer(ta, tb, bins=50)
    assert filt.js[1] == pytest.approx(1.0, abs=1e-6)
    assert 1 in filt.valid_layers


def test_js_matches_independent_oracle():
    rng = np.random.default_rng(42)
    a = rng.normal(0.0, 1.0, 800)
    b = rng.normal(0.7, 1.3, 800)
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    got = js_per_layer(_traces_from_samples(a), _traces_from_samples(b), bins=50)
    want = js_oracle(list(a), list(b), 50, lo, hi)
    assert got.js[1] == pytest.approx(want, rel=1e-9)


def test_js_symmetric_and_bounded():
    rng = np.random.default_rng(9)
    for _ in range(5):
        p = rng.uniform(0.01, 1, 20)
        q = rng.uniform(0.01, 1, 20)
        assert js_divergence(p, q) == pytest.approx(js_divergence(q, p), abs=1e-12)
        assert 0.0 <= js_divergence(p, q) <= 1.0


def test_js_needs_samples():
    with pytest.raises(VinferError):
        js_per_layer(_traces_from_samples([0.1]), _traces_from_samples([0.2]))


# -- Algorithm 1 ------------------------------------------------------------------


def _records(douts, dtrcs):
    return [SeparationRecord(i, o, t) for i, (o, t) in enumerate(zip(douts, dtrcs))]


def test_gen_candidates_matches_sort_oracle():
    """dataset with dTrc == dOut: q must equal the eps-quantile of the tail."""
    rng = np.random.default_rng(3)
    douts = sorted(rng.uniform(0.5, 3.0, 120))
    records = _records(douts, douts)
    eps = 0.05
    cands = gen_candidates(SeparationDataset(records), eps, delta_noise=1e-4, min_support=30)
    assert cands
    for c in cands:
        tail = sorted(v for v in douts if v >= c.delta_out)
        assert len(tail) >= 30
        assert c.delta_trace == tail[int(eps * (len(tail) - 1))]
    # ascending x, candidates stop before support drops under the floor
    xs = [c.delta_out for c in cands]
    assert xs == sorted(xs)
    assert len(cands) == 120 - 30 + 1


def test_gen_candidates_all_zero_dtrc():
    records = _records(np.linspace(0, 1, 50), np.zeros(50))
    assert gen_candidates(SeparationDataset(records), 0.01, min_support=10) == []


def test_gen_candidates_below_support():
    records = _records([1.0], [1.0])
    assert gen_candidates(SeparationDataset(records), 0.01, min_support=30) == []
    with pytest.raises(VinferError):
        gen_candidates(SeparationDataset([]), 0.01)


def test_gen_candidates_monotone_on_monotone_data():
    douts = np.linspace(0.1, 2.0, 100)
    dtrcs = douts**2  # dTrc non-decreasing in dOut
    cands = gen_candidates(SeparationDataset(_records(douts, dtrcs)), 0.1, min_support=20)
    qs = [c.delta_trace for c in cands]
    assert qs == sorted(qs)


def test_quantile_lower():
    assert quantile_lower([3.0, 1.0, 2.0], 0.0) == 1.0
    assert quantile_lower([3.0, 1.0, 2.0], 0.5) == 2.0
    assert quantile_lower([3.0, 1.0, 2.0], 1.0) == 3.0


# -- Algorithm 2 + selection -------------------------------------------------------


def _planted_pipeline(f1, f2, n=80):
    """Queries where f1 vs f2 separate cleanly; all adversarial traces are
    far and always caught."""
    rng = np.random.default_rng(12)
    queries = [rng.uniform(0, 1, 2).astype(np.float32) for _ in range(n)]
    return build_dataset(f1, f2, queries)


def test_estimate_eps_tst_always_caught(f1, f2):
    ds = _planted_pipeline(f1, f2)
    est = estimate_eps_tst(ds, f1, delta=0.0, reps=10, seed=1)
    assert est.count_valid == len(ds.records)
    assert est.value == 0.0


def test_estimate_eps_tst_no_qualifying(f1, f2):
    ds = _planted_pipeline(f1, f2)
    with pytest.raises(VinferError):
        estimate_eps_tst(ds, f1, delta=1e9, reps=5)


def test_estimate_eps_tst_single_tamper_rate():
    """Trace tampered at exactly one of mu output nodes: single-path false-
    negative rate is (mu-1)/mu within 3 sigma."""
    mu = 4
    arch = ModelArchitecture((2, 3, mu), (ActivationKind.SIGMOID,) * 2, OutFn.IDENTITY, True)
    model = gen_random_model(5, arch)
    rng = np.random.default_rng(2)
    queries, traces, records = [], [], []
    n, reps = 40, 50
    for j in range(n):
        q = rng.uniform(0, 1, 2).astype(np.float32)
        t = eval_trace(model, q)
        vals = t.values.copy()
        vals[arch.node_index(2, j % mu)] += 0.5
        queries.append(q)
        traces.append(Trace(vals, arch.layer_offsets()))
        records.append(SeparationRecord(j, 1.0, 1.0))
    ds = SeparationDataset(records, None, queries, traces)
    est = estimate_eps_tst(ds, model, delta=0.5, reps=reps, seed=3)
    expected = (mu - 1) / mu
    sigma = math.sqrt(expected * (1 - expected) / (n * reps))
    assert abs(est.value - expected) <= 3 * sigma


def test_select_params_planted(f1, f2):
    ds = _planted_pipeline(f1, f2)
    cands = gen_candidates(ds, eps_sep=0.05, min_support=30)
    assert cands
    res = select_params(cands, ds, f1, eps_target=0.05, eps_sep=0.05, reps=10, seed=0)
    assert not res.no_selection
    assert res.selected.delta_out == cands[0].delta_out  # first candidate qualifies
    assert res.selected.eps_tst == 0.0
    assert res.selected.soundness_bound == pytest.approx(0.05)


def test_select_params_eps_target_one(f1, f2):
    ds = _planted_pipeline(f1, f2)
    cands = gen_candidates(ds, eps_sep=0.05, min_support=30)
    res = select_params(cands, ds, f1, eps_target=1.0, eps_sep=0.05, reps=2, seed=0)
    assert res.selected.delta_out == cands[0].delta_out and res.tried == 1


def test_select_params_empty():
    res = select_params([], SeparationDataset([]), None, 0.05, 0.01)
    assert res.no_selection and res.tried == 0


# -- reports ------------------------------------------------------------------------


def test_dataset_jsonl_roundtrip(tmp_path, f1, f2):
    ds = _planted_pipeline(f1, f2, n=40)
    p = tmp_path / "ds.jsonl"
    write_dataset_jsonl(ds, p)
    back = read_dataset_jsonl(p)
    assert [(r.query_id, r.d_out, r.d_trc) for r in back.records] == [
        (r.query_id, r.d_out, r.d_trc) for r in ds.records
    ]


def test_percentile_report(tmp_path):
    text = write_percentile_report(np.linspace(0, 1, 101), tmp_path / "r.csv")
    assert "p50" in text and (tmp_path / "r.csv").exists()
    import csv

    with open(tmp_path / "r.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["percentile", "separation"]
    assert len(rows) == 10
