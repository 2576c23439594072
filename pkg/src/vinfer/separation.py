"""Separation metrics and the threshold-estimation pipeline.

The per-layer separation value substitutes the other trace's previous-layer
activations into the reference model's weights and takes the elementwise
absolute difference of the recomputed layers. Distances: d_out is the
Euclidean distance of logit vectors, d_trc the width-normalized mean L1
difference over layers that pass a Jensen-Shannon filter (base 2, threshold
0.05, which drops the always-identical input layer and other noise).
"""

import csv
import json
import math
import secrets
from dataclasses import dataclass, field

import numpy as np

from .errors import VinferError
from .models import eval_trace, out_of
from .paths import DEFAULT_TOL, ModelOracle, TraceOracle, rand_path_test

JS_THRESHOLD = 0.05
DELTA_NOISE = 1e-4
MIN_SUPPORT = 30


def _phi(z, kind):
    from .models import ActivationKind

    if kind == ActivationKind.RELU:
        return np.maximum(z, 0.0)
    if kind == ActivationKind.SIGMOID:
        return 1.0 / (1.0 + np.exp(-z))
    return z


def separation_value(model, ref_trace, other_trace, layer):
    """Elementwise |phi(a_ref^{l-1} W^l) - phi(a_other^{l-1} W^l)| with the
    reference model's weights (substitution semantics, row-vector convention)."""
    arch = model.arch
    if not (1 <= layer <= arch.num_layers):
        raise VinferError(f"layer {layer} out of range")
    if not ref_trace.matches(arch) or not other_trace.matches(arch):
        raise VinferError("traces do not fit the model architecture")
    w = model.weights[layer - 1].astype(np.float64)
    b = (
        model.biases[layer - 1].astype(np.float64)
        if arch.has_bias
        else 0.0
    )
    kind = arch.activations[layer - 1]
    a_ref = ref_trace.layer(layer - 1).astype(np.float64)
    a_other = other_trace.layer(layer - 1).astype(np.float64)
    return np.abs(_phi(a_ref @ w + b, kind) - _phi(a_other @ w + b, kind))


def separation_by_layer(model, ref_trace, other_trace):
    """List of per-layer separation vectors, layers 1..L."""
    return [
        separation_value(model, ref_trace, other_trace, l)
        for l in range(1, model.arch.num_layers + 1)
    ]


def residuals_by_layer(model, trace):
    """Per-layer local-check residual vectors of a claimed trace against the
    model: |a^l - phi(a^{l-1} W^l)| for layers 1..L. Every path check the
    tester can make at layer l is one coordinate of these vectors, so a floor
    on them is a floor on the detection margin."""
    arch = model.arch
    if not trace.matches(arch):
        raise VinferError("trace does not fit the model architecture")
    out = []
    for l in range(1, arch.num_layers + 1):
        w = model.weights[l - 1].astype(np.float64)
        b = model.biases[l - 1].astype(np.float64) if arch.has_bias else 0.0
        prev = trace.layer(l - 1).astype(np.float64)
        recomputed = _phi(prev @ w + b, arch.activations[l - 1])
        out.append(np.abs(trace.layer(l).astype(np.float64) - recomputed))
    return out


def d_out(y1, y2):
    """Euclidean distance between logit vectors."""
    a = np.asarray(y1, dtype=np.float64)
    b = np.asarray(y2, dtype=np.float64)
    if a.shape != b.shape:
        raise VinferError("output vectors must have equal shape")
    return float(np.linalg.norm(a - b))


def d_trc(trace1, trace2, valid_layers):
    """Width-normalized mean L1 trace distance over the valid layer set."""
    if not valid_layers:
        raise VinferError("empty valid layer set (degenerate filter)")
    if trace1.layer_offsets != trace2.layer_offsets:
        raise VinferError("traces must share a layout")
    total = 0.0
    for l in valid_layers:
        a = trace1.layer(l).astype(np.float64)
        b = trace2.layer(l).astype(np.float64)
        total += float(np.abs(a - b).sum()) / a.shape[0]
    return total / len(valid_layers)


def js_divergence(p, q):
    """Jensen-Shannon divergence, base 2, for histograms p, q (will be
    normalized)."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    p = p / p.sum()
    q = q / q.sum()
    m = 0.5 * (p + q)

    def kl(a, b):
        mask = a > 0
        return float(np.sum(a[mask] * np.log2(a[mask] / b[mask])))

    return 0.5 * kl(p, m) + 0.5 * kl(q, m)


@dataclass(frozen=True)
class LayerFilter:
    js: tuple  # per layer 0..L
    threshold: float = JS_THRESHOLD

    @property
    def valid_layers(self):
        return tuple(l for l, v in enumerate(self.js) if v > self.threshold)


def js_per_layer(traces_a, traces_b, bins=50, threshold=JS_THRESHOLD, smoothing=1e-12):
    """Per-layer JS divergence between two trace sample sets.

    Histograms use `bins` equal-width bins over the joint min-max range with
    add-epsilon smoothing; layers with JS above the threshold form L_valid.
    """
    if len(traces_a) < 2 or len(traces_b) < 2:
        raise VinferError("need at least 2 trace samples per side")
    num_layers = traces_a[0].num_layers
    js = []
    for l in range(num_layers + 1):
        va = np.concatenate([t.layer(l) for t in traces_a]).astype(np.float64)
        vb = np.concatenate([t.layer(l) for t in traces_b]).astype(np.float64)
        lo = min(va.min(), vb.min())
        hi = max(va.max(), vb.max())
        if hi <= lo:
            hi = lo + 1.0
        ha, _ = np.histogram(va, bins=bins, range=(lo, hi))
        hb, _ = np.histogram(vb, bins=bins, range=(lo, hi))
        js.append(js_divergence(ha + smoothing, hb + smoothing))
    return LayerFilter(tuple(js), threshold)


# -- dataset ----------------------------------------------------------------


@dataclass(frozen=True)
class SeparationRecord:
    query_id: int
    d_out: float
    d_trc: float
    per_layer: tuple = None


@dataclass
class SeparationDataset:
    """Records plus (when built in-process) the stored queries and adversarial
    traces that Algorithm 2 replays the path test on."""

    records: list
    layer_filter: LayerFilter = None
    queries: list = field(default_factory=list)
    adv_traces: list = field(default_factory=list)


def build_dataset(model, adv_model, queries, bins=50, js_threshold=JS_THRESHOLD,
                  layer_filter=None):
    """Evaluate both models on the query set and compute (dOut, dTrc) tuples.

    The layer filter is computed from this pair's activation samples unless a
    shared one is passed in (as when several family members must be measured
    over the same valid layer set)."""
    if model.arch.layer_widths != adv_model.arch.layer_widths:
        raise VinferError("models must share an architecture")
    traces = [eval_trace(model, q) for q in queries]
    adv_traces = [eval_trace(adv_model, q) for q in queries]
    filt = layer_filter
    if filt is None:
        filt = js_per_layer(traces, adv_traces, bins=bins, threshold=js_threshold)
    valid = filt.valid_layers
    if not valid:
        raise VinferError("layer filter rejected every layer")
    records = []
    for j, (t, at) in enumerate(zip(traces, adv_traces)):
        logits = t.layer(model.arch.num_layers)
        adv_logits = at.layer(model.arch.num_layers)
        records.append(
            SeparationRecord(j, d_out(logits, adv_logits), d_trc(t, at, valid))
        )
    return SeparationDataset(records, filt, list(queries), adv_traces)


# -- Algorithm 1: candidate thresholds ---------------------------------------


@dataclass(frozen=True)
class ThresholdCandidate:
    delta_out: float
    delta_trace: float
    support: int


def quantile_lower(values, eps):
    """Lower empirical quantile: sorted[floor(eps * (n-1))]."""
    s = sorted(values)
    return s[int(eps * (len(s) - 1))]


def gen_candidates(dataset, eps_sep, delta_noise=DELTA_NOISE, min_support=MIN_SUPPORT):
    """Sweep unique dOut values ascending; for each x, the eps_sep-quantile of
    dTrc over {dOut >= x} becomes a candidate when it clears the noise floor."""
    records = dataset.records if isinstance(dataset, SeparationDataset) else list(dataset)
    if not records:
        raise VinferError("empty dataset")
    by_dout = sorted(records, key=lambda r: r.d_out)
    douts = [r.d_out for r in by_dout]
    dtrcs = [r.d_trc for r in by_dout]
    candidates = []
    seen = set()
    for i, x in enumerate(douts):
        if x in seen:
            continue
        seen.add(x)
        tail = dtrcs[i:]  # exactly the records with d_out >= x
        if len(tail) < min_support:
            break
        q = quantile_lower(tail, eps_sep)
        if q > delta_noise:
            candidates.append(ThresholdCandidate(x, q, len(tail)))
    return candidates


# -- Algorithm 2: path-test soundness ----------------------------------------


@dataclass(frozen=True)
class EpsTstEstimate:
    value: float
    count_valid: int


def estimate_eps_tst(dataset, model, delta, reps=50, seed=0, num_paths=1, tol=DEFAULT_TOL):
    """Mean per-record false-negative frequency of the path test over records
    with dTrc >= delta, each tried `reps` times with fresh challenges."""
    if not dataset.adv_traces:
        raise VinferError("dataset has no stored traces")
    rng = np.random.Generator(np.random.PCG64(seed))
    oracle = ModelOracle(model)
    sum_fail = 0.0
    count_valid = 0
    for rec in dataset.records:
        if rec.d_trc < delta:
            continue
        count_valid += 1
        trace_oracle = TraceOracle(dataset.adv_traces[rec.query_id], model.arch)
        qry = dataset.queries[rec.query_id]
        fails = 0
        for _ in range(reps):
            rho = rng.bytes(32)
            if rand_path_test(oracle, trace_oracle, qry, rho, num_paths, tol).accepted:
                fails += 1  # false negative: the tester missed a far trace
        sum_fail += fails / reps
    if count_valid == 0:
        raise VinferError("no records with dTrc >= delta (CountValid = 0)")
    return EpsTstEstimate(sum_fail / count_valid, count_valid)


# -- final selection ----------------------------------------------------------


@dataclass(frozen=True)
class SelectedParams:
    delta_out: float
    delta_trace: float
    eps_sep: float
    eps_tst: float

    @property
    def soundness_bound(self):
        return self.eps_sep + self.eps_tst


@dataclass(frozen=True)
class SelectionResult:
    selected: SelectedParams = None
    tried: int = 0

    @property
    def no_selection(self):
        return self.selected is None


def select_params(
    candidates, dataset, model, eps_target, eps_sep, reps=50, seed=0, num_paths=1,
    tol=DEFAULT_TOL,
):
    """First candidate (tightest delta_out) whose estimated eps_tst clears the
    target; overall soundness is reported as eps_sep + eps_tst."""
    tried = 0
    for cand in candidates:
        tried += 1
        est = estimate_eps_tst(
            dataset, model, cand.delta_trace, reps=reps, seed=seed,
            num_paths=num_paths, tol=tol,
        )
        if est.value <= eps_target:
            return SelectionResult(
                SelectedParams(cand.delta_out, cand.delta_trace, eps_sep, est.value),
                tried,
            )
    return SelectionResult(None, tried)


def robust_select(model, adv_models, queries, eps_sep, eps_target, **kw):
    """Re-run the pipeline over K adversarial models and take coordinatewise
    minima of the selected thresholds; eps_tst is reported at its worst."""
    picks = []
    for adv in adv_models:
        ds = build_dataset(model, adv, queries)
        cands = gen_candidates(ds, eps_sep)
        res = select_params(cands, ds, model, eps_target, eps_sep, **kw)
        picks.append(res.selected)
    if any(p is None for p in picks):
        return SelectionResult(None, len(picks))
    return SelectionResult(
        SelectedParams(
            min(p.delta_out for p in picks),
            min(p.delta_trace for p in picks),
            eps_sep,
            max(p.eps_tst for p in picks),
        ),
        len(picks),
    )


# -- reports ------------------------------------------------------------------


def write_dataset_jsonl(dataset, path):
    with open(path, "w") as fh:
        for r in dataset.records:
            doc = {"query_id": r.query_id, "d_out": r.d_out, "d_trc": r.d_trc}
            if r.per_layer is not None:
                doc["per_layer"] = list(r.per_layer)
            fh.write(json.dumps(doc) + "\n")


def read_dataset_jsonl(path):
    records = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            doc = json.loads(line)
            records.append(
                SeparationRecord(
                    doc["query_id"],
                    doc["d_out"],
                    doc["d_trc"],
                    tuple(doc["per_layer"]) if "per_layer" in doc else None,
                )
            )
    return SeparationDataset(records)


PERCENTILES = (1, 5, 10, 25, 50, 75, 90, 95, 99)


def write_percentile_report(values, csv_path, label="separation"):
    """CDF/percentile table as CSV plus a short text summary; returns the text."""
    arr = np.asarray(sorted(values), dtype=np.float64)
    rows = [(p, float(np.percentile(arr, p))) for p in PERCENTILES]
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["percentile", label])
        w.writerows(rows)
    lines = [
        f"{label}: n={arr.size} min={arr.min():.6g} mean={arr.mean():.6g} "
        f"median={np.median(arr):.6g} max={arr.max():.6g}"
    ]
    lines += [f"  p{p:<2} = {v:.6g}" for p, v in rows]
    return "\n".join(lines)


def fresh_challenge():
    return secrets.token_bytes(32)
