"""Command-line entry point: ``recmatch <subcommand> [options]``.

Exit codes: 0 success, 1 configuration or input error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from pathlib import Path

from . import bench
from .bounds import BoundError, BoundInputs, correlated_bound, theorem1_bound, theorem2_bound
from .evaluation import exact_expected_utility, monte_carlo_value
from .instance import (GenConfig, InstanceError, Recommendation, generate_instance,
                       load_instance, save_instance)
from .solvers import METHODS, STRATEGIES, SolveReport, SolverConfig, SolverError, solve

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _csv_list(s: str) -> list[str]:
    return [x.strip() for x in s.split(",") if x.strip()]


def _floats(s: str) -> list[float]:
    return [float(x) for x in _csv_list(s)]


def _read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise bench.ConfigError(f"cannot read {path}: {exc}") from None


def _emit(doc, out):
    text = json.dumps(doc, indent=2, ensure_ascii=False)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def _experiment(args) -> bench.ExperimentConfig:
    if not args.config:
        raise bench.ConfigError("--config is required")
    doc = _read_json(args.config)
    overrides = {
        "seed": args.seed, "methods": _csv_list(args.methods) if args.methods else None,
        "time_limit_seconds": args.time_limit, "tau": args.tau, "saa_samples": args.samples,
        "output_dir": args.out,
    }
    doc.update({k: v for k, v in overrides.items() if v is not None})
    return bench.ExperimentConfig.from_dict(doc)


def cmd_generate(args):
    if args.config:
        cfg = GenConfig.from_dict(_read_json(args.config))
    else:
        cfg = GenConfig(args.demands, args.supplies, args.theta, utility_model=args.utility_model,
                        prob_model=args.prob_model, p=args.p, p_low=args.p_low,
                        p_high=args.p_high, utility_low=args.u_low, utility_high=args.u_high,
                        seed=args.seed or 0, label=args.label)
    inst = generate_instance(cfg)
    if args.out:
        save_instance(inst, args.out)
    else:
        from .instance import instance_to_dict
        print(json.dumps(instance_to_dict(inst)))


def cmd_solve(args):
    inst = load_instance(args.instance)
    cfg = SolverConfig(tau=args.tau or 0.01, strategy=args.strategy,
                       saa_samples=args.samples or 1000, seed=args.seed or 0,
                       time_limit=args.time_limit or 120.0, fw_iters=args.fw_iters)
    methods = _csv_list(args.methods) if args.methods else ["surrogate"]
    reports = [solve(inst, m, cfg).to_dict() for m in methods]
    _emit(reports[0] if len(reports) == 1 else reports, args.out)


def cmd_evaluate(args):
    inst = load_instance(args.instance)
    doc = _read_json(args.rec)
    if isinstance(doc, list):
        doc = doc[0]
    rec = Recommendation.from_dict(doc["rec"] if "rec" in doc else doc)
    if args.samples:
        ev = monte_carlo_value(inst, rec, args.samples, args.seed or 0)
    else:
        ev = exact_expected_utility(inst, rec)
    _emit(ev.to_dict(), args.out)


def cmd_bench(args):
    cfg = _experiment(args)
    res = bench.run_benchmark(cfg)
    _print_summary(res.summary)


def cmd_oos(args):
    cfg = _experiment(args)
    perts = _csv_list(args.perturbations) if args.perturbations else None
    res = bench.run_out_of_sample(cfg, perts)
    _print_summary(res.summary)


def cmd_sweep(args):
    cfg = _experiment(args)
    table = bench.run_sensitivity(cfg, args.axis, _floats(args.values))
    for row in table:
        print(f"{row['axis']}={row['value']:<6g} {row['method']:<12} "
              f"obj={row['mean_objective']:.6g} [{row['ci95_low']:.6g}, {row['ci95_high']:.6g}] "
              f"cpu={row['cpu_mean_s']:.4g}s ratio={row['cpu_ratio_pct']:.4g}%")


def _print_summary(summary):
    print(f"{'instance':<28} {'scenario':<10} {'method':<12} {'Gap-A%':>8} {'Gap-W%':>8} {'CPU s':>9}")
    for c in summary:
        ga = "skip" if c["gap_a_pct"] is None else f"{c['gap_a_pct']:.2f}"
        gw = "" if c["gap_w_pct"] is None else f"{c['gap_w_pct']:.2f}"
        cpu = "" if c["cpu_mean_s"] is None else f"{c['cpu_mean_s']:.3f}"
        print(f"{c['instance_id']:<28} {c['scenario_tag']:<10} {c['method']:<12} {ga:>8} {gw:>8} {cpu:>9}")


def cmd_bounds(args):
    if args.instance:
        inst = load_instance(args.instance)
        inputs = BoundInputs.from_instance(inst, args.tau or 0.01,
                                           a=_floats(args.a) if args.a else None,
                                           b=_floats(args.b) if args.b else None)
    else:
        a = _floats(args.a) if args.a else None
        if a is None or args.theta is None or args.demands is None:
            raise bench.ConfigError("--theta, --demands and --a are required without --instance")
        p_lo = args.p_lo if args.p_lo is not None else args.p
        p_hi = args.p_hi if args.p_hi is not None else args.p
        if p_lo is None or p_hi is None:
            raise bench.ConfigError("give --p or --p-lo/--p-hi")
        gamma = Fraction(args.gamma) if args.gamma else Fraction(args.theta)
        inputs = BoundInputs(theta=args.theta, tau=args.tau or 0.01, num_demands=args.demands,
                             a=a if len(a) > 1 else a[0],
                             b=(_floats(args.b) if len(_floats(args.b)) > 1 else _floats(args.b)[0])
                             if args.b else None,
                             p_lo=p_lo, p_hi=p_hi, gamma=gamma)
    out = {}
    for which in args.which:
        if which == "theorem1":
            rep = theorem1_bound(inputs, allow_off_hypothesis=args.off_hypothesis)
        elif which == "theorem2":
            rep = theorem2_bound(inputs)
        else:
            rep = correlated_bound(inputs)
        out[which] = rep.to_dict()
    _emit(out, args.out)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="recmatch", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output file or directory")
        p.add_argument("--methods", help=f"comma-separated subset of {','.join(METHODS)}")
        p.add_argument("--time-limit", type=float, dest="time_limit")
        p.add_argument("--tau", type=float)
        p.add_argument("--samples", type=int, help="SAA or Monte Carlo sample count")

    p = sub.add_parser("generate", help="generate an instance file")
    common(p)
    p.add_argument("--demands", type=int, default=10)
    p.add_argument("--supplies", type=int, default=40)
    p.add_argument("--theta", type=int, default=4)
    p.add_argument("--utility-model", default="synthetic_3part", dest="utility_model")
    p.add_argument("--prob-model", default="homogeneous", dest="prob_model")
    p.add_argument("--p", type=float, default=0.8)
    p.add_argument("--p-low", type=float, default=0.7, dest="p_low")
    p.add_argument("--p-high", type=float, default=0.9, dest="p_high")
    p.add_argument("--u-low", type=float, default=0.4, dest="u_low")
    p.add_argument("--u-high", type=float, default=1.0, dest="u_high")
    p.add_argument("--label", default="")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("solve", help="solve an instance with one or more methods")
    common(p, config=False)
    p.add_argument("--instance", required=True)
    p.add_argument("--strategy", default="local_search", choices=STRATEGIES)
    p.add_argument("--fw-iters", type=int, default=0, dest="fw_iters")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("evaluate", help="evaluate a recommendation (exact, or MC with --samples)")
    common(p, config=False)
    p.add_argument("--instance", required=True)
    p.add_argument("--rec", required=True, help="recommendation or solve-report JSON")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bench", help="run the benchmark grid")
    common(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("sweep", help="sensitivity sweep over one parameter")
    common(p)
    p.add_argument("--axis", required=True, choices=bench.SWEEP_AXES)
    p.add_argument("--values", required=True, help="comma-separated axis values")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("oos", help="out-of-sample evaluation under perturbed probabilities")
    common(p)
    p.add_argument("--perturbations", help="comma-separated kinds (OutL,OutH,OutNS,OutNL)")
    p.set_defaults(func=cmd_oos)

    p = sub.add_parser("bounds", help="evaluate the approximation-gap bounds")
    common(p, config=False)
    p.add_argument("--instance")
    p.add_argument("--which", nargs="+", default=["theorem1", "theorem2", "correlated"],
                   choices=["theorem1", "theorem2", "correlated"])
    p.add_argument("--theta", type=int)
    p.add_argument("--demands", type=int)
    p.add_argument("--gamma", help="supply/demand ratio (default theta)")
    p.add_argument("--a", help="utility lower bound(s)")
    p.add_argument("--b", help="utility upper bound(s)")
    p.add_argument("--p", type=float)
    p.add_argument("--p-lo", type=float, dest="p_lo")
    p.add_argument("--p-hi", type=float, dest="p_hi")
    p.add_argument("--off-hypothesis", action="store_true", dest="off_hypothesis")
    p.set_defaults(func=cmd_bounds)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        args.func(args)
    except (bench.ConfigError, InstanceError, BoundError, ValueError, OSError) as exc:
        print(f"recmatch: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, RuntimeError) as exc:
        print(f"recmatch: runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
