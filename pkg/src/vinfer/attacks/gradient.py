"""Gradient-descent trace reconstruction: descend on the query (or an
injected activation tensor) until the model's output matches a target, then
measure how far the forged trace sits from the reference."""

import numpy as np

from ..models import Trace, eval_trace
from ..separation import separation_by_layer
from .autodiff import forward_from, loss_and_grad, make_optimizer
from .types import AttackResult, layer_stats


def _descend(model, v0, targets, cfg):
    """Batched descent; returns (values, iterations-per-sample, loss, diverged)."""
    values = np.atleast_2d(np.asarray(v0, dtype=np.float64)).copy()
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    n = values.shape[0]
    opt = make_optimizer(cfg.optimizer, cfg.learning_rate)
    iterations = np.full(n, cfg.max_iters, dtype=np.int64)
    loss = np.full(n, np.inf)
    with np.errstate(over="ignore", invalid="ignore"):
        for it in range(1, cfg.max_iters + 1):
            loss, grad = loss_and_grad(
                model, values, targets, cfg.inject_layer, cfg.l2_lambda, cfg.mask
            )
            newly = (loss <= cfg.convergence_loss) & (iterations == cfg.max_iters)
            iterations[newly] = it
            if cfg.convergence_loss > 0 and np.all(loss <= cfg.convergence_loss):
                break
            values = opt.step(values, grad)
    diverged = ~np.isfinite(loss) | ~np.all(np.isfinite(values), axis=1)
    return values, iterations, loss, diverged


def forged_trace_from(model, qry, values, inject_layer):
    """Assemble a float32 trace from optimized values: layers below the
    injection point keep the honest prefix, layers above are recomputed."""
    if inject_layer == 0:
        return eval_trace(model, np.asarray(values, dtype=np.float32))
    honest = eval_trace(model, qry)
    parts = [honest.layer(l) for l in range(inject_layer)]
    acts, _ = forward_from(model, np.asarray(values, dtype=np.float64), inject_layer)
    parts.extend(a.reshape(-1).astype(np.float32) for a in acts)
    return Trace(np.concatenate(parts), model.arch.layer_offsets())


def grad_reconstruct(model, target_output, cfg, ref_trace, init=None, seed=0):
    """Single reconstruction attempt against one target output."""
    arch = model.arch
    rng = np.random.Generator(np.random.PCG64(seed))
    width = arch.layer_widths[cfg.inject_layer]
    if init is None:
        init = rng.uniform(0.0, 1.0, width)
    qry = ref_trace.layer(0)
    values, iters, loss, diverged = _descend(model, init, target_output, cfg)
    if diverged[0]:
        return AttackResult(
            cfg.method, 0, 0, False, int(iters[0]), float(loss[0]), []
        )
    forged = forged_trace_from(model, qry, values[0], cfg.inject_layer)
    seps = separation_by_layer(model, ref_trace, forged)
    return AttackResult(
        method=cfg.method,
        input_id=0,
        round_id=0,
        converged=bool(loss[0] <= cfg.convergence_loss) if cfg.convergence_loss > 0 else True,
        iterations=int(iters[0]),
        final_loss=float(loss[0]),
        per_layer=[layer_stats(s) for s in seps],
        forged_trace=forged,
    )


def run_gradient_attack(model, queries, cfg, seed=0):
    """Batched driver: every (input, round) attempt descends jointly.

    Targets are the model's own logits on each query; separations are taken
    against the honest trace of that query. Divergent attempts are flagged
    and reported with their (failed) separations.
    """
    arch = model.arch
    rng = np.random.Generator(np.random.PCG64(seed))
    refs = [eval_trace(model, q) for q in queries]
    targets = np.stack([r.layer(arch.num_layers).astype(np.float64) for r in refs])

    n_inputs = len(queries)
    n = n_inputs * cfg.rounds
    width = arch.layer_widths[cfg.inject_layer]
    v0 = rng.uniform(0.0, 1.0, (n, width))
    t = np.repeat(targets, cfg.rounds, axis=0)

    values, iters, loss, diverged = _descend(model, v0, t, cfg)

    results = []
    for i in range(n_inputs):
        for r in range(cfg.rounds):
            row = i * cfg.rounds + r
            if diverged[row]:
                results.append(
                    AttackResult(cfg.method, i, r, False, int(iters[row]),
                                 float(loss[row]), [], None)
                )
                continue
            forged = forged_trace_from(
                model, queries[i], values[row], cfg.inject_layer
            )
            seps = separation_by_layer(model, refs[i], forged)
            results.append(
                AttackResult(
                    method=cfg.method,
                    input_id=i,
                    round_id=r,
                    converged=bool(loss[row] <= cfg.convergence_loss)
                    if cfg.convergence_loss > 0
                    else True,
                    iterations=int(iters[row]),
                    final_loss=float(loss[row]),
                    per_layer=[layer_stats(s) for s in seps],
                    forged_trace=forged,
                )
            )
    return results
