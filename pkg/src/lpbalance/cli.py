"""Command line entry point.

Exit codes: 0 when every checked bound holds, 2 when one is violated,
1 on usage or I/O errors.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import balancing, harness, instances, offline
from .errors import ParseError, RangeError
from .smoothing import INF, PNormParams, SmoothingParams, effective_p
from .olo import benchmark_sequence, run_olo_game

EXIT_OK, EXIT_ERROR, EXIT_VIOLATION = 0, 1, 2


def _p_value(text: str) -> float:
    if text.lower() in ("inf", "infinity"):
        return INF
    value = float(text)
    if value < 2:
        raise argparse.ArgumentTypeError("p must be >= 2 or inf")
    return value


def _alg_list(text: str) -> tuple:
    if text.strip() in ("", "none"):
        return ()
    if text.strip() == "all":
        return balancing.ALGORITHMS
    return tuple(a.strip() for a in text.split(","))


def _write_text(text: str, out) -> None:
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def cmd_gen(args) -> int:
    if args.family == "example1":
        inst = instances.gen_example1(args.m, args.eps)
    elif args.family == "walsh":
        inst = instances.gen_walsh_instance(int(args.p), coin_seed=args.seed)
    elif args.family == "random":
        inst = instances.gen_random(args.m, args.k, args.n, seed=args.seed, distribution=args.dist,
                                    vary_k=args.vary_k, cap=args.cap)
    else:  # adversary
        m = 2 ** (int(args.p) + 1)
        policy = balancing.make_policy(args.alg, PNormParams(args.p, m), args.eps)
        transcript = instances.gen_adversarial_wc(policy, args.M, int(args.p))
        inst = transcript.instance
        print(f"# algorithm load {float(np.linalg.norm(transcript.algorithm_load, args.p)):.6g}"
              f" >= forced {transcript.lower_bound():.6g}; OPT <= {transcript.opt_upper:.6g}",
              file=sys.stderr)
    _write_text(instances.dumps_instance(inst), args.out)
    return EXIT_OK


def _config_from(args, p=None, eps=None) -> harness.ExperimentConfig:
    if args.instance:
        source = harness.InstanceSource("file", (("path", args.instance),))
    else:
        source = harness.InstanceSource.parse(args.source)
    return harness.ExperimentConfig(
        source=source,
        algorithms=args.alg,
        p=args.p if p is None else p,
        eps=args.eps if eps is None else eps,
        order=args.order,
        trials=args.trials,
        master_seed=args.seed,
        opt_mode=args.opt_mode,
        cap=args.cap,
        fmt=args.format,
        out=args.out,
    )


def cmd_run(args) -> int:
    cfg = _config_from(args)
    if args.sweep_eps:
        values = [float(v) for v in args.sweep_eps.split(",")]
        series = harness.run_sweep(cfg, values, "eps")
        prefix = args.plot or (args.out or "sweep")
        for path in harness.emit_series(series, prefix):
            print(path, file=sys.stderr)
        return EXIT_OK
    report = harness.run_experiment(cfg)
    text = harness.emit_report(report, cfg.fmt)
    _write_text(text, cfg.out)
    if args.plot:
        harness.emit_series(harness.trial_series(report), args.plot)
    for b in report.bounds:
        if b.satisfied is False:
            print(f"bound violated: {b.algorithm} {b.name}: observed {b.observed!r} vs {b.bound!r}",
                  file=sys.stderr)
    return EXIT_OK if report.all_satisfied else EXIT_VIOLATION


def cmd_olo(args) -> int:
    rng = np.random.default_rng(args.seed)
    if args.instance:
        seqs = [instances.adversary_vectors(instances.read_instance(args.instance))]
    else:
        # only the random kind differs between draws
        count = args.sequences if args.kind == "random" else 1
        seqs = [benchmark_sequence(args.kind, args.n, args.m, rng) for _ in range(count)]
    failures = 0
    for i, ws in enumerate(seqs):
        m = ws.shape[1]
        p = effective_p(m, args.eps) if args.p == INF else args.p
        rec = run_olo_game(ws, SmoothingParams.of(p, m, args.eps))
        ok = rec.bound_satisfied and rec.telescoping_satisfied
        failures += not ok
        print(f"{i}\tn={rec.rounds}\treward={rec.reward:.6f}\topt={rec.hindsight_opt:.6f}"
              f"\tguaranteed={rec.guaranteed:.6f}\t{'PASS' if ok else 'FAIL'}")
    return EXIT_VIOLATION if failures else EXIT_OK


def cmd_validate(args) -> int:
    suite = None
    if args.instance:
        y = instances.adversary_vectors(instances.read_instance(args.instance))
        suite = [(y, args.p if args.p != INF else effective_p(y.shape[1], args.eps))]
    records = harness.run_validation_suite(args.trials, args.seed, args.eps, suite)
    for r in records:
        print(f"{r.name}\t{r.detail}\tmean={r.empirical_mean:.6f}\tse={r.stderr:.2e}"
              f"\trhs={r.rhs:.6f}\t{'PASS' if r.passed else 'FAIL'}")
    return EXIT_OK if all(r.passed for r in records) else EXIT_VIOLATION


def cmd_opt(args) -> int:
    inst = instances.read_instance(args.instance)
    p = effective_p(inst.m, args.eps) if (args.p == INF and args.opt_mode == "fractional") else args.p
    res = offline.opt_bound(inst, PNormParams(p, inst.m), cap=args.cap, mode=args.opt_mode)
    cert = res.certificate
    if hasattr(cert, "choices"):
        cert = list(cert.choices)
    value = res.value if math.isfinite(res.value) else None
    print(json.dumps({"value": value, "kind": res.kind, "certificate": cert, "p": str(p)}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lpbalance", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp, alg=True):
        sp.add_argument("--p", type=_p_value, default=2.0, help="norm exponent (>= 2 or 'inf')")
        sp.add_argument("--eps", type=float, default=0.5)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", default=None, help="output path (stdout if omitted)")
        sp.add_argument("--cap", type=int, default=offline.DEFAULT_CAP,
                        help="enumeration cap of the exact oracle")
        if alg:
            sp.add_argument("--alg", default="greedy")

    g = sub.add_parser("gen", help="generate an instance file")
    g.add_argument("family", choices=["example1", "walsh", "random", "adversary"])
    common(g)
    g.add_argument("--m", type=int, default=4)
    g.add_argument("--k", type=int, default=2)
    g.add_argument("--n", type=int, default=8)
    g.add_argument("--M", type=int, default=1)
    g.add_argument("--dist", default="uniform")
    g.add_argument("--vary-k", action="store_true")
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("run", help="run algorithms and check the bounds")
    common(r, alg=False)
    r.add_argument("--alg", type=_alg_list, default=balancing.ALGORITHMS,
                   help="comma-separated subset of " + ",".join(balancing.ALGORITHMS))
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("--instance", help="instance file")
    src.add_argument("--source", help="generator, e.g. walsh:p=4 or random:m=4,k=2,n=10")
    r.add_argument("--order", choices=["given", "random"], default="given")
    r.add_argument("--trials", type=int, default=1)
    r.add_argument("--opt-mode", choices=["auto", "analytic", "brute", "fractional"], default="auto")
    r.add_argument("--format", choices=["csv", "json"], default="csv")
    r.add_argument("--plot", default=None, help="also write <PLOT>.<alg>.dat series files")
    r.add_argument("--sweep-eps", default=None, help="comma-separated eps values; writes series files")
    r.set_defaults(func=cmd_run)

    o = sub.add_parser("olo-bench", help="play the smoothed-gradient OLO player")
    common(o, alg=False)
    o.add_argument("--instance", help="instance whose single-option jobs are the adversary vectors")
    o.add_argument("--kind", choices=["random", "constant", "ones", "alternating"], default="random")
    o.add_argument("--n", type=int, default=1000)
    o.add_argument("--m", type=int, default=8)
    o.add_argument("--sequences", type=int, default=10, help="number of random sequences")
    o.set_defaults(func=cmd_olo)

    v = sub.add_parser("validate", help="Monte-Carlo checks of the correlation inequalities")
    common(v, alg=False)
    v.add_argument("--instance", help="instance whose single-option jobs form the vector set")
    v.add_argument("--trials", type=int, default=10_000)
    v.set_defaults(func=cmd_validate)

    q = sub.add_parser("opt", help="offline optimum of an instance")
    common(q, alg=False)
    q.add_argument("--instance", required=True)
    q.add_argument("--opt-mode", choices=["auto", "analytic", "brute", "fractional"], default="auto")
    q.set_defaults(func=cmd_opt)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_ERROR
    try:
        return args.func(args)
    except (OSError, ParseError, RangeError, ValueError, offline.EnumerationTooLarge) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
