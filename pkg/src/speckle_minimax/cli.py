"""Command-line entry point: ``speckle-minimax <subcommand> ...``.

Exit codes: 0 success, 1 invalid input or configuration, 2 every sweep cell
(or every verification check) failed at run time.
"""
from __future__ import annotations

import argparse
import sys
import warnings
from dataclasses import replace

import numpy as np

from .concentration import run_suite
from .errors import SpeckleError, ValidationError
from .estimators import NetSpec, OptimizerConfig, mle_net_search, mle_projected_ascent, sufficient_statistic_estimate
from .harness import ESTIMATORS, compare_varying_unvarying, gnuplot_script, parse_config, records_to_csv, run_sweep
from .lowerbound import SeparatedSetSpec, default_delta_r, evaluate_instance_lower_bound, separated_patterns
from .model import ObservationSet, RandomStream, generate_instance, make_instance, make_signal, mse, sample_signal_class
from .projection import project_piecewise_constant

EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 1, 2

_NET_HELP = (
    "levels in the uniform amplitude grid for net_search. The grid is chosen by "
    "the user; the much finer net spacing x_max/n^5 used in the consistency "
    "argument is never instantiated"
)


def _add_box(p):
    p.add_argument("--x-min", type=float, default=0.25, help="lower amplitude bound (default 0.25)")
    p.add_argument("--x-max", type=float, default=2.0, help="upper amplitude bound (default 2.0)")


def _add_dims(p):
    p.add_argument("--m", type=int, required=True, help="measurements per look")
    p.add_argument("--n", type=int, required=True, help="signal length")
    p.add_argument("--L", type=int, required=True, help="number of looks")
    p.add_argument("--sigma-z", type=float, default=0.1, help="additive noise level (default 0.1)")


def _signal_from_args(args, n, k):
    if args.signal:
        return make_signal(np.loadtxt(args.signal, ndmin=1), args.x_min, args.x_max, k_budget=k)
    return sample_signal_class(RandomStream(args.seed, 0, 0, "signal"), n, k, args.x_min, args.x_max)


def cmd_simulate(args):
    x_o = _signal_from_args(args, args.n, args.k)
    inst, obs = generate_instance(args.seed, args.m, args.n, args.L, args.sigma_z, x_o, args.shared_operators)
    np.savez(
        args.out, operators=inst.operators, looks=obs.looks, x_o=x_o.values,
        sigma_z=inst.sigma_z, shared_operators=inst.shared_operators, seed=args.seed,
    )
    print(f"wrote {args.out}: L={inst.L} looks of length m={inst.m}, n={inst.n}")
    return EXIT_OK


def cmd_estimate(args):
    with np.load(args.input) as data:
        inst = make_instance(data["operators"], float(data["sigma_z"]), bool(data["shared_operators"]))
        obs = ObservationSet(np.array(data["looks"]))
        truth = np.array(data["x_o"]) if "x_o" in data else None
    if args.estimator == "mle_ascent":
        cfg = OptimizerConfig(restarts=args.restarts, max_iters=args.max_iters)
        xh = mle_projected_ascent(inst, obs, args.k, args.x_min, args.x_max, cfg, seed=args.seed)
    elif args.estimator == "net_search":
        xh = mle_net_search(inst, obs, NetSpec.uniform(args.x_min, args.x_max, args.net_levels, args.k))
    else:
        xh = sufficient_statistic_estimate(inst, obs, args.k, args.x_min, args.x_max)
    print("x_hat:", " ".join(f"{v:.6g}" for v in xh.values))
    if truth is not None:
        print(f"mse: {mse(xh, truth):.6g}")
    if args.out:
        np.savetxt(args.out, xh.values)
    return EXIT_OK


def cmd_sweep(args):
    cfg = parse_config(args.config)
    overrides = {}
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.output is not None:
        overrides["output"] = args.output
    if args.trial_log is not None:
        overrides["trial_log"] = args.trial_log
    if overrides:
        cfg = replace(cfg, **overrides)
    records = run_sweep(cfg)
    if not cfg.output:
        sys.stdout.write(records_to_csv(records))
    if args.gnuplot:
        with open(args.gnuplot, "w") as fh:
            fh.write(gnuplot_script(cfg.output or "sweep.csv"))
    if records and all(r.error for r in records):
        print("every cell failed", file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


def cmd_fano(args):
    half = (args.x_max - args.x_min) / 2
    probe = SeparatedSetSpec(args.n, args.k, args.n_div, half / 2, args.x_min, args.x_max, args.k_prime)
    r = len(separated_patterns(probe))
    delta = args.delta
    if delta is None:
        delta = default_delta_r(args.m, args.n, args.L, args.sigma_z, args.k, args.n_div, r, args.x_min, args.x_max, args.c_delta)
    spec = probe.with_delta(delta)
    rep = evaluate_instance_lower_bound(args.seed, args.m, args.n, args.L, args.sigma_z, spec)
    print(f"r         {rep.r}")
    print(f"delta_r   {rep.delta_r:.6g}")
    print(f"alpha_r   {rep.alpha_r:.6g}")
    print(f"beta_r    {rep.beta_r:.6g}")
    print(f"kl ok     {rep.kl_condition}  (beta_r <= log(r)/10)")
    print(f"mse bound {rep.bound:.6g}")
    return EXIT_OK


def cmd_verify(args):
    rows = run_suite(seed=args.seed, scale=args.scale)
    width = max(len(name) for name, _, _ in rows)
    for name, ok, detail in rows:
        print(f"{name:<{width}}  {'PASS' if ok else 'FAIL'}  {detail}")
    return EXIT_OK if all(ok for _, ok, _ in rows) else EXIT_FAILED


def cmd_project(args):
    v = np.loadtxt(args.vector, ndmin=1)
    s = project_piecewise_constant(v, args.k, args.x_min, args.x_max)
    if args.out:
        np.savetxt(args.out, s.values)
    else:
        print(" ".join(f"{x:.6g}" for x in s.values))
    return EXIT_OK


def cmd_compare(args):
    cfg = parse_config(args.config)
    if args.workers is not None:
        cfg = replace(cfg, workers=args.workers)
    rep = compare_varying_unvarying(cfg)
    print("L,varying_mse,varying_ci,shared_mse,shared_ci")
    for L, a, b in zip(rep.L, rep.varying, rep.unvarying):
        print(f"{L},{a.mean_mse!r},{a.ci_half_width!r},{b.mean_mse!r},{b.ci_half_width!r}")
    print(f"plateau_L: {rep.plateau_L if rep.plateau_L is not None else 'none'}")
    if all(r.error for r in rep.varying + rep.unvarying):
        return EXIT_FAILED
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="speckle-minimax", description="Multilook speckle model, estimators and risk experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw one instance and save it to an .npz file")
    _add_dims(p)
    p.add_argument("--k", type=int, default=2, help="piece budget of the sampled signal")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--signal", help="text file with a fixed signal (otherwise sampled)")
    p.add_argument("--shared-operators", action="store_true", help="reuse one operator for every look")
    p.add_argument("--out", required=True, help="output .npz path")
    _add_box(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="estimate the signal of a saved instance")
    p.add_argument("input", help=".npz file written by simulate")
    p.add_argument("--k", type=int, required=True, help="piece budget")
    p.add_argument("--estimator", choices=ESTIMATORS, default="mle_ascent")
    p.add_argument("--restarts", type=int, default=3)
    p.add_argument("--max-iters", type=int, default=200)
    p.add_argument("--net-levels", type=int, default=33, help=_NET_HELP)
    p.add_argument("--seed", type=int, default=None, help="seed for random restarts")
    p.add_argument("--out", help="write the estimate to this text file")
    _add_box(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("sweep", help="run a YAML-configured Monte Carlo sweep to CSV")
    p.add_argument("config")
    p.add_argument("--workers", type=int)
    p.add_argument("--output", help="CSV path (overrides the config; stdout when unset)")
    p.add_argument("--trial-log", help="per-trial MSE log path")
    p.add_argument("--gnuplot", help="also write a gnuplot script plotting the CSV")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("fano", help="Fano lower bound on one operator draw")
    _add_dims(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--n-div", type=int, required=True, help="number of intervals")
    p.add_argument("--k-prime", type=int, default=None, help="high intervals per member (default max(1, k//4))")
    p.add_argument("--delta", type=float, default=None, help="amplitude offset delta_r (default from the KL scaling)")
    p.add_argument("--c-delta", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    _add_box(p)
    p.set_defaults(func=cmd_fano)

    p = sub.add_parser("verify", help="run the probabilistic lemma checks")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scale", type=float, default=1.0, help="multiplier on trial counts")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("project", help="project a vector onto k-piece signals in the box")
    p.add_argument("vector", help="text file with one value per entry")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--out")
    _add_box(p)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("compare-shared", help="fresh versus shared operators across L")
    p.add_argument("config")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except ValidationError as exc:
        print("invalid configuration:", file=sys.stderr)
        for v in exc.violations:
            print(f"  {v}", file=sys.stderr)
        return EXIT_INVALID
    except (SpeckleError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
