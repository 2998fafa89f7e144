"""Command line: ``mchtp {run,theory,validate,chain-sim}``.

Exit codes: 0 success, 1 validation failure, 2 invalid arguments or
configuration, 3 output directory not writable.
"""
import argparse
import json
import math
import os
import sys
from dataclasses import replace

from . import theory
from .experiment import (
    ExperimentConfig,
    chain_experiment,
    run_experiment,
    validate_experiment,
    write_artifacts,
)
from .trace import write_csv

EXIT_FAIL, EXIT_CONFIG, EXIT_IO = 1, 2, 3

# flag -> ExperimentConfig field
_FLAG_FIELDS = {
    "m": "M", "n": "N", "k": "K", "kbar": "kbar", "mu": "mu", "eps": "eps", "T": "T",
    "trials": "trials", "seed": "seed", "structure": "structure", "alpha": "alpha",
    "noise_std": "noise_std", "algos": "algos", "out": "out", "jobs": "jobs",
    "mode": "mode", "tol": "tol", "norm": "norm",
}


def _int_list(text):
    return tuple(int(v) for v in text.split(",") if v)


def _str_list(text):
    return tuple(v.strip() for v in text.split(",") if v.strip())


def _eps(text):
    return text if text == "auto" else float(text)


def _add_experiment_flags(p):
    p.add_argument("--config", help="JSON file with ExperimentConfig fields; flags override it")
    p.add_argument("--m", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--k", type=_int_list, help="true sparsity, comma separated list allowed")
    p.add_argument("--kbar", type=int, help="sparsity upper bound (default M/2)")
    p.add_argument("--mu", type=float)
    p.add_argument("--eps", type=_eps, help="absolute threshold or 'auto'")
    p.add_argument("--T", type=int, help="iteration budget")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--structure", choices=["flat", "linear", "decaying", "gaussian"])
    p.add_argument("--alpha", type=float)
    p.add_argument("--norm", type=float)
    p.add_argument("--noise-std", dest="noise_std", type=float)
    p.add_argument("--algos", type=_str_list)
    p.add_argument("--tol", type=float)
    p.add_argument("--out")
    p.add_argument("--jobs", type=int)
    p.add_argument("--mode", choices=["benchmark", "validate"])
    p.add_argument("--early-stop", dest="early_stop", action="store_true", default=None)
    p.add_argument("--timing", action="store_true", default=None,
                   help="record wall-clock times (makes outputs non-reproducible)")
    p.add_argument("--full-traces", dest="full_traces", action="store_true", default=None,
                   help="store per-iteration supports and values in trace JSON")
    p.add_argument("--no-traces", dest="write_traces", action="store_false", default=None)


def _config_from_args(args, **defaults):
    base = {}
    if args.config:
        with open(args.config) as fh:
            base = json.load(fh)
    cfg = ExperimentConfig.from_dict({**defaults, **base})
    updates = {}
    for flag, fld in _FLAG_FIELDS.items():
        v = getattr(args, flag, None)
        if v is not None:
            updates[fld] = v
    for fld in ("early_stop", "timing", "full_traces", "write_traces"):
        v = getattr(args, fld, None)
        if v is not None:
            updates[fld] = v
    return replace(cfg, **updates)


def _ensure_writable(path):
    try:
        os.makedirs(path, exist_ok=True)
        probe = os.path.join(path, ".write-probe")
        with open(probe, "w"):
            pass
        os.remove(probe)
    except OSError as exc:
        print(f"error: output directory {path!r} is not writable: {exc}", file=sys.stderr)
        return False
    return True


def cmd_run(args):
    try:
        cfg = _config_from_args(args).resolved()
    except (ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if not _ensure_writable(cfg.out):
        return EXIT_IO
    cfg, results, summary = run_experiment(cfg)
    write_artifacts(cfg, results, summary)
    print(json.dumps(summary, sort_keys=True, indent=2))
    return 0


def cmd_validate(args):
    try:
        cfg = _config_from_args(
            args, M=24, N=40, K=(3,), kbar=6, trials=20, T=100, mode="validate",
            out="validate_results",
        ).resolved()
    except (ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    report = validate_experiment(cfg)
    text = json.dumps(report, sort_keys=True, indent=2)
    if args.report:
        if not _ensure_writable(os.path.dirname(os.path.abspath(args.report))):
            return EXIT_IO
        with open(args.report, "w") as fh:
            fh.write(text + "\n")
    summary = {"passed": report["passed"], "counts": report["counts"],
               "pmf_checks": report["pmf_checks"]}
    print(json.dumps(summary, sort_keys=True, indent=2))
    return 0 if report["passed"] else EXIT_FAIL


def cmd_chain_sim(args):
    try:
        res = chain_experiment(args.k, args.kbar, args.trials, args.seed)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.out:
        if not _ensure_writable(args.out):
            return EXIT_IO
        header = json.dumps({"config": {"K": args.k, "kbar": args.kbar,
                                        "trials": args.trials, "seed": args.seed}},
                            sort_keys=True)
        write_csv(os.path.join(args.out, "pmf.csv"),
                  ["K", "quantity", "value", "empirical", "theoretical"],
                  res["pmf_rows"], header)
    res.pop("pmf_rows")
    print(json.dumps(res, sort_keys=True, indent=2))
    return 0


def _theory_value(args):
    name = args.bound
    if name == "t1-pmf":
        return theory.t1_pmf(args.t, args.k, args.kbar)
    if name == "t3-pmf":
        return theory.t3_pmf(args.t, args.kbar)
    if name == "rho":
        rho, _ = theory.rho_gamma(args.delta)
        return rho
    if name == "gamma":
        _, gamma = theory.rho_gamma(args.delta)
        return gamma
    if name == "delta-bound":
        return theory.delta_bound(args.k, args.r)
    if name == "epsilon-bound":
        return theory.epsilon_bound(args.delta, args.k, args.xmin, args.xmax)
    if name == "epsilon-structured":
        return theory.epsilon_bound_structured(args.structure, args.delta, args.k,
                                               args.xnorm, args.alpha)
    if name == "t2-bound":
        return theory.t2_upper_bound(args.eps, args.delta, args.xnorm)
    if name == "waiting-time":
        return theory.expected_waiting_time(args.k, args.kbar, args.eps, args.delta, args.xnorm)
    if name == "t1-mean":
        return {"bound_term": theory.t1_mean_bound(args.k, args.kbar),
                "pmf_mean": theory.t1_mean_exact(args.k, args.kbar)}
    raise ValueError(f"unknown bound {name!r}")


THEORY_BOUNDS = ("t1-pmf", "t3-pmf", "rho", "gamma", "delta-bound", "epsilon-bound",
                 "epsilon-structured", "t2-bound", "waiting-time", "t1-mean")


def cmd_theory(args):
    try:
        value = _theory_value(args)
    except (ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    params = {k: v for k, v in vars(args).items()
              if k not in ("func", "bound", "command") and v is not None}
    if isinstance(value, float) and not math.isfinite(value):
        value = None
    print(json.dumps({"bound": args.bound, "params": params, "value": value}, sort_keys=True))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="mchtp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="Monte Carlo benchmark over trials")
    _add_experiment_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("validate", help="invariant suite on small instances")
    _add_experiment_flags(p)
    p.add_argument("--report", help="write the full JSON report here")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("chain-sim", help="simulate the sparsity-sampling chain")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--kbar", type=int, required=True)
    p.add_argument("--trials", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_chain_sim)

    p = sub.add_parser("theory", help="evaluate a bound or distribution")
    p.add_argument("bound", choices=THEORY_BOUNDS)
    p.add_argument("--k", type=int)
    p.add_argument("--kbar", type=int)
    p.add_argument("--t", type=int)
    p.add_argument("--delta", type=float)
    p.add_argument("--r", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--xmin", type=float)
    p.add_argument("--xmax", type=float)
    p.add_argument("--xnorm", type=float, default=None)
    p.add_argument("--structure", choices=["flat", "linear", "decaying"])
    p.add_argument("--alpha", type=float)
    p.set_defaults(func=cmd_theory)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
