"""Command-line interface: ``hdaloha <subcommand> [flags]``.

Exit codes
----------
0  success (``analyze``: the parameters are stable)
1  usage or validation error
2  ``analyze``: the parameters are unstable
3  ``verify``: an identity or oracle check failed

The default seed may be set with the ``HDALOHA_SEED`` environment variable;
``--seed`` takes precedence.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from fractions import Fraction

from . import analytic, experiments
from .core import ParameterError, validate_params
from .sim import FULL_DUPLEX, HALF_DUPLEX, SimConfig, simulate

EXIT_OK, EXIT_USAGE, EXIT_UNSTABLE, EXIT_VERIFY_FAILED = 0, 1, 2, 3
SEED_ENV = "HDALOHA_SEED"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def number(text: str) -> float:
    """Parse ``0.25``, ``2/3`` and the like."""
    try:
        return float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number or fraction: {text!r}")


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}")


def _add_params(p, required=True):
    g = p.add_argument_group("network parameters")
    g.add_argument("--l1", type=number, required=required, default=None, help="arrival probability of node 1")
    g.add_argument("--l2", type=number, required=required, default=None, help="arrival probability of node 2")
    g.add_argument("--p1", type=number, required=required, default=None, help="transmission probability of node 1")
    g.add_argument("--p2", type=number, required=required, default=None, help="transmission probability of node 2")


def _add_output(p, formats=("csv",), default="csv"):
    p.add_argument("--output", "-o", default=None, help="output file (default: standard output)")
    p.add_argument("--format", choices=formats, default=default, help="output format (default: %(default)s)")


def _params(a):
    return validate_params(a.l1, a.l2, a.p1, a.p2)


def _emit(text: str, path):
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# --- subcommands ----------------------------------------------------------

def cmd_analyze(a) -> int:
    params = _params(a)
    verdict = analytic.is_stable(params)
    report = {"params": params.as_dict(), "stable": verdict.stable, "diagnostic": verdict.diagnostic}
    u = verdict.utilization
    if u is not None:
        report["rho1"], report["rho2"] = u
    if verdict:
        d = analytic.average_delay(params)
        report.update(c=analytic.normalization_constant(params), mean_q1=d.mean_q1, mean_q2=d.mean_q2,
                      d1=d.d1, d2=d.d2)
    if a.format == "json":
        text = json.dumps(report, indent=2) + "\n"
    else:
        lines = [verdict.diagnostic]
        if u is not None:
            lines.append(f"rho1={u.rho1:.6g} rho2={u.rho2:.6g}")
        if verdict:
            fmt = lambda v: "undefined" if v is None else f"{v:.6g}"  # noqa: E731
            lines.append(f"c={report['c']:.6g}")
            lines.append(f"mean_q1={report['mean_q1']:.6g} mean_q2={report['mean_q2']:.6g}")
            lines.append(f"D1={fmt(report['d1'])} D2={fmt(report['d2'])}")
        text = "\n".join(lines) + "\n"
    _emit(text, a.output)
    return EXIT_OK if verdict else EXIT_UNSTABLE


def cmd_simulate(a) -> int:
    params = _params(a)
    seed = a.seed if a.seed is not None else _default_seed()
    cfg = SimConfig(params, a.slots, seed, a.warmup, a.mode)
    stats = simulate(cfg)
    if a.format == "json":
        text = stats.to_json(mode=cfg.mode, seed=cfg.seed, slots=cfg.slots, warmup=cfg.warmup,
                             params=params.as_dict()) + "\n"
    else:
        t = experiments.Table(experiments.SIMSTATS_HEADER, [experiments.simstats_row(stats, cfg)])
        text = t.to_csv()
    _emit(text, a.output)
    return EXIT_OK


def cmd_verify(a) -> int:
    if a.random:
        seed = a.seed if a.seed is not None else _default_seed()
        plist = experiments.random_stable_params(a.random, seed)
    else:
        if None in (a.l1, a.l2, a.p1, a.p2):
            raise UsageError("verify needs --l1 --l2 --p1 --p2 or --random N")
        plist = [_params(a)]
    for p in plist:
        if not analytic.is_stable(p):
            raise UsageError(f"verify requires stable parameters ({analytic.is_stable(p).diagnostic})")
    perturb = {((1, 1), (0, 1)): a.perturb_nu} if a.perturb_nu else None
    report = experiments.run_verification_suite(plist, a.window, a.trunc_tol, nu_perturbation=perturb)
    if a.format == "json":
        text = report.to_json() + "\n"
    else:
        lines = []
        for e in report.entries:
            p = e.params
            ok = e.passed(report.identity_tol) and e.tv_distance <= report.trunc_tol
            lines.append(
                f"{'PASS' if ok else 'FAIL'} l1={p.lambda1:.6g} l2={p.lambda2:.6g} p1={p.p1:.6g} p2={p.p2:.6g} "
                f"max_abs_error={e.max_abs_error:.3e} nu_consistent={e.nu_consistency_ok} tv={e.tv_distance:.3e}"
                + ("" if ok else f" worst_pair=state{tuple(e.worst_pair[0])},a{e.worst_pair[1].tag}")
            )
        lines.append("overall: " + ("pass" if report.passed else "fail"))
        text = "\n".join(lines) + "\n"
    _emit(text, a.output)
    return EXIT_OK if report.passed else EXIT_VERIFY_FAILED


def _seeds(a):
    if a.seeds:
        return a.seeds
    return [a.seed if getattr(a, "seed", None) is not None else _default_seed()]


def cmd_region(a) -> int:
    spec = experiments.SweepSpec(
        p_pairs=[(a.p1, a.p2)], lambda_grid=a.lambda1, sim_slots=a.slots, seeds=_seeds(a),
        threshold=a.threshold, output_path=a.output, n_jobs=a.jobs,
    )
    table = experiments.run_region_figure(spec)
    if not a.output:
        sys.stdout.write(table.to_csv())
    return EXIT_OK


def _pairs(a):
    p2 = a.p2 if a.p2 else a.p1
    if len(p2) != len(a.p1):
        raise UsageError("--p1 and --p2 need the same number of values")
    return list(zip(a.p1, p2))


def cmd_area(a) -> int:
    spec = experiments.SweepSpec(p_pairs=_pairs(a), output_path=a.output)
    table = experiments.run_area_figure(spec)
    if not a.output:
        sys.stdout.write(table.to_csv())
    return EXIT_OK


def cmd_delay(a) -> int:
    if a.lambdas:
        grid, scale = sorted(a.lambdas), "absolute"
    else:
        grid, scale = {"start": 0.03, "stop": 0.9, "num": a.points}, "corner_fraction"
    spec = experiments.SweepSpec(
        p_pairs=[(p, p) for p in a.p], lambda_grid=grid, lambda_scale=scale, sim_slots=a.slots,
        seeds=_seeds(a), warmup=a.warmup, include_fd=not a.no_fd, output_path=a.output, n_jobs=a.jobs,
    )
    table = experiments.run_delay_figure(spec)
    if not a.output:
        sys.stdout.write(table.to_csv())
    return EXIT_OK


_FIGURES = {
    "region": experiments.run_region_figure,
    "area": experiments.run_area_figure,
    "delay": experiments.run_delay_figure,
}


def cmd_sweep(a) -> int:
    try:
        with open(a.spec) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read sweep spec: {exc}")
    figure = raw.get("figure")
    if figure not in _FIGURES:
        raise UsageError(f"sweep spec needs \"figure\" in {sorted(_FIGURES)}")
    try:
        spec = experiments.SweepSpec.from_dict(raw)
    except TypeError as exc:
        raise UsageError(f"bad sweep spec: {exc}")
    if a.output:
        spec.output_path = a.output
    table = _FIGURES[figure](spec)
    if not spec.output_path:
        sys.stdout.write(table.to_csv())
    return EXIT_OK


# --- parser ---------------------------------------------------------------

class _HelpFormatter(argparse.ArgumentDefaultsHelpFormatter):
    # skip "(default: None)" and defaults already spelled out in the help text
    def _get_help_string(self, action):
        text = action.help or ""
        if action.default is None or "default:" in text:
            return text
        return super()._get_help_string(action)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hdaloha", description=__doc__.split("\n")[0],
                     formatter_class=_HelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    fmt = _HelpFormatter

    p = sub.add_parser("analyze", help="closed-form utilization, stability and delay", formatter_class=fmt)
    _add_params(p)
    _add_output(p, ("plain", "json"), "plain")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("simulate", help="run the slot simulator", formatter_class=fmt)
    _add_params(p)
    p.add_argument("--slots", type=int, default=200_000, help="simulation horizon in slots")
    p.add_argument("--seed", type=int, default=None, help=f"RNG seed (default: ${SEED_ENV} or 0)")
    p.add_argument("--warmup", type=int, default=None, help="discarded slots (default: 10%% of --slots)")
    p.add_argument("--mode", choices=(HALF_DUPLEX, FULL_DUPLEX), default=HALF_DUPLEX, help="protocol")
    _add_output(p, ("json", "csv"), "json")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="check the product form against the slot kernel", formatter_class=fmt)
    _add_params(p, required=False)
    p.add_argument("--random", type=int, default=0, metavar="N", help="verify N random stable parameter sets")
    p.add_argument("--seed", type=int, default=None, help=f"seed for --random (default: ${SEED_ENV} or 0)")
    p.add_argument("--window", type=int, default=20, help="identity window n_i <= WINDOW")
    p.add_argument("--trunc-tol", type=float, default=1e-6, help="allowed TV distance to the truncated chain")
    p.add_argument("--perturb-nu", type=float, default=0.0,
                   help="fault injection: add this to nu at state (1,1), movement a(0,1)")
    _add_output(p, ("plain", "json"), "plain")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("region", help="analytic vs simulated stability boundary", formatter_class=fmt)
    p.add_argument("--p1", type=number, required=True, help="transmission probability of node 1")
    p.add_argument("--p2", type=number, required=True, help="transmission probability of node 2")
    p.add_argument("--lambda1", type=number, nargs="+", default=[0.0, 0.1, 0.2], help="lambda1 grid (sorted)")
    p.add_argument("--slots", type=int, default=200_000, help="detector horizon")
    p.add_argument("--threshold", type=float, default=1.02, help="arrival/departure ratio marking instability")
    p.add_argument("--seed", type=int, default=None, help=f"detector seed (default: ${SEED_ENV} or 0)")
    p.add_argument("--seeds", type=int, nargs="+", default=None, help=argparse.SUPPRESS)
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--output", "-o", default=None, help="CSV path (default: standard output)")
    p.set_defaults(func=cmd_region)

    p = sub.add_parser("area", help="half- and full-duplex region areas", formatter_class=fmt)
    p.add_argument("--p1", type=number, nargs="+", default=[0.2, 0.4, 2 / 3, 0.9], help="P1 values")
    p.add_argument("--p2", type=number, nargs="+", default=None, help="P2 values paired with --p1 (default: same)")
    p.add_argument("--output", "-o", default=None, help="CSV path (default: standard output)")
    p.set_defaults(func=cmd_area)

    p = sub.add_parser("delay", help="symmetric average-delay sweep", formatter_class=fmt)
    p.add_argument("--p", type=number, nargs="+", default=[0.4, 0.5, 2 / 3], help="symmetric P values")
    p.add_argument("--lambdas", type=number, nargs="+", default=None,
                   help="per-node arrival rates (default: --points fractions of the symmetric corner)")
    p.add_argument("--points", type=int, default=30, help="grid size when --lambdas is not given")
    p.add_argument("--slots", type=int, default=200_000, help="slots per simulation")
    p.add_argument("--seed", type=int, default=None, help=argparse.SUPPRESS)
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4], help="seeds averaged per point")
    p.add_argument("--warmup", type=int, default=None, help="discarded slots (default: 10%% of --slots)")
    p.add_argument("--no-fd", action="store_true", help="skip the full-duplex baseline column")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--output", "-o", default=None, help="CSV path (default: standard output)")
    p.set_defaults(func=cmd_delay)

    p = sub.add_parser("sweep", help="run a figure sweep from a JSON spec file", formatter_class=fmt)
    p.add_argument("spec", help="JSON file with SweepSpec fields plus \"figure\": region|area|delay")
    p.add_argument("--output", "-o", default=None, help="override the spec's output_path")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ParameterError, analytic.InstabilityError) as exc:
        print(f"hdaloha {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
