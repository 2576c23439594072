"""Logit-swap attack: exchange the strongest and weakest output coordinates,
then optimize an injected activation tensor to realize the swapped output
while staying close (in norm) to a plausible activation pattern."""

import numpy as np

from ..errors import VinferError
from ..models import eval_trace
from ..paths import derive_paths
from ..separation import separation_by_layer
from .gradient import _descend, forged_trace_from
from .types import AttackResult, layer_stats


def swapped_logits(logits):
    out = np.asarray(logits, dtype=np.float64).copy()
    hi = int(np.argmax(out))
    lo = int(np.argmin(out))
    out[hi], out[lo] = out[lo], out[hi]
    return out


def _path_means(arch, honest, forged, n_paths, rng):
    """Mean |forged - honest| over the non-input nodes of sampled paths."""
    diffs = [
        np.abs(
            forged.layer(l).astype(np.float64) - honest.layer(l).astype(np.float64)
        )
        for l in range(arch.num_layers + 1)
    ]
    L = arch.num_layers
    means = []
    for _ in range(n_paths):
        path = derive_paths(arch, rng.bytes(32), 1)[0]
        vals = [diffs[l][path.node_in_layer(l, L)] for l in range(1, L + 1)]
        means.append(float(np.mean(vals)))
    return means


def swap_attack(model, qry, cfg, seed=0):
    """One swap-attack round on one query."""
    if cfg.inject_layer < 1:
        raise VinferError("swap attack optimizes an injected activation (layer >= 1)")
    arch = model.arch
    rng = np.random.Generator(np.random.PCG64(seed))
    honest = eval_trace(model, qry)
    target = swapped_logits(honest.layer(arch.num_layers))

    v0 = honest.layer(cfg.inject_layer).astype(np.float64)
    values, iters, loss, diverged = _descend(model, v0, target, cfg)
    if diverged[0]:
        return AttackResult(cfg.method, 0, 0, False, int(iters[0]), float(loss[0]), [])
    forged = forged_trace_from(model, qry, values[0], cfg.inject_layer)
    seps = separation_by_layer(model, honest, forged)
    return AttackResult(
        method=cfg.method,
        input_id=0,
        round_id=0,
        converged=bool(loss[0] <= cfg.convergence_loss) if cfg.convergence_loss > 0 else True,
        iterations=int(iters[0]),
        final_loss=float(loss[0]),
        per_layer=[layer_stats(s) for s in seps],
        forged_trace=forged,
        path_separations=_path_means(arch, honest, forged, cfg.paths_per_round, rng),
    )


def run_swap_attack(model, queries, cfg, seed=0):
    """Rounds differ by their optimizer start: the honest injected activations
    plus small seeded noise (the first round starts exactly at them)."""
    results = []
    rng = np.random.Generator(np.random.PCG64(seed))
    arch = model.arch
    for i, qry in enumerate(queries):
        honest = eval_trace(model, qry)
        target = swapped_logits(honest.layer(arch.num_layers))
        base = honest.layer(cfg.inject_layer).astype(np.float64)
        for r in range(cfg.rounds):
            v0 = base if r == 0 else base + rng.normal(0.0, 0.01, base.shape)
            values, iters, loss, diverged = _descend(model, v0, target, cfg)
            if diverged[0]:
                results.append(
                    AttackResult(cfg.method, i, r, False, int(iters[0]), float(loss[0]), [])
                )
                continue
            forged = forged_trace_from(model, qry, values[0], cfg.inject_layer)
            seps = separation_by_layer(model, honest, forged)
            results.append(
                AttackResult(
                    method=cfg.method,
                    input_id=i,
                    round_id=r,
                    converged=bool(loss[0] <= cfg.convergence_loss)
                    if cfg.convergence_loss > 0
                    else True,
                    iterations=int(iters[0]),
                    final_loss=float(loss[0]),
                    per_layer=[layer_stats(s) for s in seps],
                    forged_trace=forged,
                    path_separations=_path_means(
                        arch, honest, forged, cfg.paths_per_round, rng
                    ),
                )
            )
    return results
