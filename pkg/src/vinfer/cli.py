"""Operator CLI. Exit codes: 0 success, 1 verification reject, 2 usage
error, 3 I/O or parse error. Machine-readable errors go to stderr as JSON."""

import argparse
import json
import os
import secrets
import sys

import numpy as np

from . import bench as bench_mod
from . import fileio
from .attacks import (
    AttackConfig,
    DEFAULT_THRESHOLDS,
    INVERSE_THRESHOLDS,
    pass_rate_table,
    run_gradient_attack,
    run_inverse_attack,
    run_swap_attack,
    write_results_csv,
)
from .errors import ParseError, ProtocolError, VinferError
from .merkle import commit_to_model
from .models import (
    ActivationKind,
    ModelArchitecture,
    OutFn,
    eval_trace,
    gen_random_model,
)
from .protocol import (
    Transcript,
    deserialize_transcript,
    gen_params,
    prove1,
    prove2,
    serialize_transcript,
    verify_transcript,
)
from .refereed import Party, run_bisection
from .separation import (
    build_dataset,
    gen_candidates,
    robust_select,
    select_params,
    write_dataset_jsonl,
)

EXIT_OK = 0
EXIT_REJECT = 1
EXIT_USAGE = 2
EXIT_IO = 3


def _fail(code, **fields):
    print(json.dumps(fields), file=sys.stderr)
    return code


def _parse_arch(args):
    widths = tuple(int(w) for w in args.widths.split(","))
    acts = args.activation.split(",")
    if len(acts) == 1:
        acts = acts * (len(widths) - 1)
    activations = tuple(ActivationKind[a.strip().upper()] for a in acts)
    out_fn = OutFn[args.out_fn.upper()]
    return ModelArchitecture(widths, activations, out_fn, args.bias)


def _params_from(args):
    return gen_params(num_paths=args.num_paths, tol=args.tol, strict=args.strict)


def _add_pp_flags(p):
    p.add_argument("--num-paths", type=int, default=1)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--strict", action="store_true", help="bit-exact checks (tol = 0)")


def _load_query(path, arch):
    queries = fileio.load_queries(path)
    if len(queries) != 1:
        raise VinferError("expected exactly one query in the file")
    return np.asarray(queries[0], dtype=np.float32)


def cmd_gen_model(args):
    arch = _parse_arch(args)
    model = gen_random_model(args.seed, arch)
    fileio.save_model(model, args.out, binary=args.binary)
    print(args.out)
    return EXIT_OK


def cmd_gen_queries(args):
    model = fileio.load_model(args.model)
    rng = np.random.Generator(np.random.PCG64(args.seed))
    lo, hi = args.range
    rows = rng.uniform(lo, hi, (args.count, model.arch.input_width))
    with open(args.out, "w") as fh:
        json.dump({"version": 1, "queries": [[float(v) for v in r] for r in rows]}, fh)
    print(args.out)
    return EXIT_OK


def cmd_commit_model(args):
    model = fileio.load_model(args.model)
    pp = _params_from(args)
    cm = commit_to_model(pp.vc, model, threads=args.threads)
    line = cm.root.hex()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(line + "\n")
    print(line)
    return EXIT_OK


def cmd_prove(args):
    model = fileio.load_model(args.model)
    pp = _params_from(args)
    qry = _load_query(args.query, model.arch)
    cm = commit_to_model(pp.vc, model, threads=args.threads)
    proof1, state = prove1(pp, model, qry, threads=args.threads)

    if args.self_play:
        rho = secrets.token_bytes(32) if args.seed is None else _seeded_rho(args.seed)
        proof2 = prove2(state, rho)
        t = Transcript(pp.pp_hash(), cm, qry, proof1, rho, proof2)
        with open(args.out, "wb") as fh:
            fh.write(serialize_transcript(t))
        res = verify_transcript(pp, model.arch, t)
        print(json.dumps({"accepted": res.accepted, "reason": res.reason}))
        return EXIT_OK if res.accepted else EXIT_REJECT

    t = Transcript(pp.pp_hash(), cm, qry, proof1, None, None)
    with open(args.out, "wb") as fh:
        fh.write(serialize_transcript(t, partial=True))
    print(args.out)
    return EXIT_OK


def _seeded_rho(seed):
    return np.random.Generator(np.random.PCG64(seed)).bytes(32)


def cmd_challenge(args):
    rho = secrets.token_bytes(32) if args.seed is None else _seeded_rho(args.seed)
    with open(args.out, "wb") as fh:
        fh.write(rho)
    print(rho.hex())
    return EXIT_OK


def cmd_respond(args):
    model = fileio.load_model(args.model)
    pp = _params_from(args)
    partial = _read_transcript(args.partial)
    with open(args.challenge, "rb") as fh:
        rho = fh.read()
    if partial.pp_hash != pp.pp_hash():
        raise VinferError("partial transcript was produced under different parameters")
    # The prover state is recomputed: eval_trace is deterministic, so the
    # fresh commitment must match the one sent in round 1.
    proof1, state = prove1(pp, model, partial.qry, threads=args.threads)
    if proof1.trace_commitment != partial.proof1.trace_commitment:
        raise VinferError("recomputed trace does not match the committed proof1")
    proof2 = prove2(state, rho)
    t = Transcript(
        partial.pp_hash, partial.cm_model, partial.qry, partial.proof1, rho, proof2
    )
    with open(args.out, "wb") as fh:
        fh.write(serialize_transcript(t))
    print(args.out)
    return EXIT_OK


def _read_transcript(path):
    with open(path, "rb") as fh:
        return deserialize_transcript(fh.read())


def cmd_verify(args):
    model = fileio.load_model(args.model)
    pp = _params_from(args)
    t = _read_transcript(args.transcript)
    if args.expect_commitment:
        expected = bytes.fromhex(args.expect_commitment)
    else:
        expected = commit_to_model(pp.vc, model, threads=args.threads).root
    if t.cm_model.root != expected:
        print(json.dumps({"accepted": False, "reason": "bad-opening",
                          "detail": "model commitment mismatch"}))
        return EXIT_REJECT
    res = verify_transcript(pp, model.arch, t)
    print(json.dumps({"accepted": res.accepted, "reason": res.reason,
                      "detail": res.detail}))
    return EXIT_OK if res.accepted else EXIT_REJECT


def cmd_referee(args):
    model = fileio.load_model(args.model)
    qry = _load_query(args.query, model.arch)
    t1 = fileio.load_trace(args.p1_trace)
    t2 = fileio.load_trace(args.p2_trace)
    pp = _params_from(args)
    cm = commit_to_model(pp.vc, model, threads=args.threads)
    p1 = Party(model, qry, trace=t1, params=pp.vc)
    p2 = Party(model, qry, trace=t2, params=pp.vc)
    verdict = run_bisection(p1, p2, model.arch, cm, qry, params=pp.vc, tol=pp.tol)
    log_fh = open(args.log, "w") if args.log else sys.stdout
    try:
        for rec in verdict.log:
            print(json.dumps(rec), file=log_fh)
    finally:
        if args.log:
            log_fh.close()
    print(json.dumps({"winner": verdict.winner, "failing_index": verdict.failing_index,
                      "rounds": verdict.rounds}))
    return EXIT_OK


def cmd_estimate(args):
    model = fileio.load_model(args.model)
    adv_models = [fileio.load_model(p) for p in args.adv_model]
    queries = fileio.load_queries(args.queries)
    if len(adv_models) == 1:
        ds = build_dataset(model, adv_models[0], queries)
        if args.dataset_out:
            write_dataset_jsonl(ds, args.dataset_out)
        cands = gen_candidates(ds, args.eps_sep, min_support=args.min_support)
        res = select_params(
            cands, ds, model, args.eps_target, args.eps_sep,
            reps=args.reps, seed=args.seed, tol=args.tol,
        )
    else:
        res = robust_select(
            model, adv_models, queries, args.eps_sep, args.eps_target,
            reps=args.reps, seed=args.seed, tol=args.tol,
        )
    if res.no_selection:
        print(json.dumps({"selected": None, "candidates_tried": res.tried}))
        return EXIT_REJECT
    s = res.selected
    print(json.dumps({
        "delta_out": s.delta_out, "delta_trace": s.delta_trace,
        "eps_sep": s.eps_sep, "eps_tst": s.eps_tst,
        "soundness_bound": s.soundness_bound,
    }))
    return EXIT_OK


def _attack_config(args):
    cfg = {}
    if args.config:
        with open(args.config) as fh:
            cfg = json.load(fh)
    method = args.method or cfg.get("method")
    if method is None:
        raise VinferError("an attack method is required (--method or config)")
    overrides = {
        "learning_rate": args.lr,
        "max_iters": args.max_iters,
        "convergence_loss": args.convergence_loss,
        "l2_lambda": args.l2_lambda,
        "rounds": args.rounds,
        "optimizer": args.optimizer,
    }
    for key, val in overrides.items():
        if val is not None:
            cfg[key] = val
    cfg["method"] = method
    if method == "swap":
        return AttackConfig.swap_defaults(**{k: v for k, v in cfg.items() if k != "method"})
    return AttackConfig(**cfg)


def cmd_attack(args):
    model = fileio.load_model(args.model)
    queries = fileio.load_queries(args.queries)
    cfg = _attack_config(args)
    if cfg.method == "grad-descent":
        results = run_gradient_attack(model, queries, cfg, seed=args.seed)
        thresholds = DEFAULT_THRESHOLDS
    elif cfg.method.startswith("inverse-"):
        results = run_inverse_attack(model, queries, cfg.method.removeprefix("inverse-"))
        thresholds = INVERSE_THRESHOLDS
    elif cfg.method == "swap":
        results = run_swap_attack(model, queries, cfg, seed=args.seed)
        thresholds = DEFAULT_THRESHOLDS
    else:
        raise VinferError(f"unknown method {cfg.method!r}")
    table = pass_rate_table(results, thresholds)
    if args.out_csv:
        write_results_csv(results, args.out_csv)
    print(table.render())
    return EXIT_OK


def cmd_bench(args):
    if args.kernels:
        out = bench_mod.kernel_bench()
    elif args.shape == "llama-synthetic":
        out = bench_mod.llama_synthetic_bench(threads=args.threads, seed=args.seed)
        out.update(bench_mod.transcript_bench())
    else:
        raise VinferError(f"unknown bench shape {args.shape!r}")
    print(json.dumps(out, indent=1))
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="vinfer", description=__doc__)
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                   help="leaf hashing / attack parallelism")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-model", help="write a seeded random model file")
    g.add_argument("--widths", required=True, help="comma-separated d_0..d_L")
    g.add_argument("--activation", default="sigmoid",
                   help="one name or per-layer comma list")
    g.add_argument("--out-fn", default="identity", choices=["identity", "softmax"])
    g.add_argument("--bias", action=argparse.BooleanOptionalAction, default=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--binary", action="store_true")
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_gen_model)

    g = sub.add_parser("gen-queries", help="write a seeded random query file")
    g.add_argument("--model", required=True)
    g.add_argument("--count", type=int, default=16)
    g.add_argument("--range", type=float, nargs=2, default=(0.0, 1.0))
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_gen_queries)

    g = sub.add_parser("commit-model", help="print the model commitment (hex)")
    g.add_argument("--model", required=True)
    g.add_argument("--out")
    _add_pp_flags(g)
    g.set_defaults(fn=cmd_commit_model)

    g = sub.add_parser("prove", help="round 1: write a partial transcript")
    g.add_argument("--model", required=True)
    g.add_argument("--query", required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--self-play", action="store_true",
                   help="sample the challenge locally and finish all rounds")
    g.add_argument("--seed", type=int, default=None, help="challenge seed (self-play)")
    _add_pp_flags(g)
    g.set_defaults(fn=cmd_prove)

    g = sub.add_parser("challenge", help="round 2: write 32 random bytes")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=None)
    g.set_defaults(fn=cmd_challenge)

    g = sub.add_parser("respond", help="round 3: complete the transcript")
    g.add_argument("--model", required=True)
    g.add_argument("--partial", required=True)
    g.add_argument("--challenge", required=True)
    g.add_argument("--out", required=True)
    _add_pp_flags(g)
    g.set_defaults(fn=cmd_respond)

    g = sub.add_parser("verify", help="replay and verify a transcript")
    g.add_argument("--transcript", required=True)
    g.add_argument("--model", required=True,
                   help="model file (architecture + commitment cross-check)")
    g.add_argument("--expect-commitment", help="hex root published out of band")
    _add_pp_flags(g)
    g.set_defaults(fn=cmd_verify)

    g = sub.add_parser("referee", help="bisect two competing trace claims")
    g.add_argument("--model", required=True)
    g.add_argument("--p1-trace", required=True)
    g.add_argument("--p2-trace", required=True)
    g.add_argument("--query", required=True)
    g.add_argument("--log", help="session log path (default: stdout)")
    _add_pp_flags(g)
    g.set_defaults(fn=cmd_referee)

    g = sub.add_parser("estimate", help="threshold-estimation pipeline")
    g.add_argument("--model", required=True)
    g.add_argument("--adv-model", action="append", required=True)
    g.add_argument("--queries", required=True)
    g.add_argument("--eps-sep", type=float, default=0.01)
    g.add_argument("--eps-target", type=float, default=0.05)
    g.add_argument("--reps", type=int, default=50)
    g.add_argument("--min-support", type=int, default=30)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--tol", type=float, default=1e-4)
    g.add_argument("--dataset-out", help="write (dOut, dTrc) records as JSONL")
    g.set_defaults(fn=cmd_estimate)

    g = sub.add_parser("attack", help="run a forgery attack and print pass rates")
    g.add_argument("--model", required=True)
    g.add_argument("--queries", required=True)
    g.add_argument("--method", choices=[
        "grad-descent", "inverse-pinv", "inverse-svd", "inverse-regularized", "swap",
    ])
    g.add_argument("--config", help="JSON attack config file")
    g.add_argument("--lr", type=float, default=None)
    g.add_argument("--max-iters", type=int, default=None)
    g.add_argument("--convergence-loss", type=float, default=None)
    g.add_argument("--l2-lambda", type=float, default=None)
    g.add_argument("--rounds", type=int, default=None)
    g.add_argument("--optimizer", choices=["plain-gd", "adam"], default=None)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out-csv")
    g.set_defaults(fn=cmd_attack)

    g = sub.add_parser("bench", help="commit/open/verify benchmark")
    g.add_argument("--shape", default="llama-synthetic")
    g.add_argument("--kernels", action="store_true",
                   help="compare compiled and pure Python kernels instead")
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(fn=cmd_bench)

    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (FileNotFoundError, IsADirectoryError, PermissionError) as e:
        return _fail(EXIT_IO, error="io", detail=str(e))
    except ParseError as e:
        return _fail(EXIT_IO, error="parse", detail=str(e), offset=e.offset)
    except (VinferError, ProtocolError) as e:
        return _fail(EXIT_USAGE, error="usage", detail=str(e))


if __name__ == "__main__":
    sys.exit(main())
