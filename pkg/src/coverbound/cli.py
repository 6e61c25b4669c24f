"""Command-line front end.

Subcommands ``exact-coverage``, ``asym-coverage``, ``mc-coverage`` and
``diagnostics`` print a CSV (to ``--out`` or standard output); ``figure``
writes the CSVs of a built-in figure into a directory.

Exit codes: 0 success, 2 invalid arguments, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import math
import sys

from . import report
from .asymptotics import (
    DEFAULT_POINTS,
    DEFAULT_SCRAMBLES,
    LocalFrameOne,
    LocalFrameTwo,
    asym_coverage_delta,
    asym_coverage_one_sample,
    asym_coverage_theta1,
    asym_coverage_theta2,
    exact_normal_coverage,
)
from .bootstrap_mc import CIConfig, bootstrap_cdf_diagnostic, mc_coverage
from .estimators import OneSampleConstraint, TwoSampleDesign
from .exact_enum import ExactConfig, exact_coverage_one_sample, exact_coverage_two_sample
from .figures import FIGURE_IDS, KNIFE_EDGE_NOTE, FigureJob, parse_grid, run_figure, worker_count
from .nef import NormalKnownVar, make_family, variance_at_mean
from .numerics import DomainError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3

DIAGNOSTIC_COLUMNS = ("family", "n", "theta_hat", "sigma0", "B", "seed", "probe", "abs_deviation")
ADHOC_FIGURE = "adhoc"
ADHOC_PANEL = "a"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text}")
    return value


def _add_family(p, required=True):
    p.add_argument("--family", choices=("normal", "poisson", "binomial"), required=required)
    p.add_argument("--m", type=int, help="binomial trial count (default 1)")


def _add_design(p):
    p.add_argument("--d", type=float, help="one-sample boundary: theta >= d")
    p.add_argument("--n", type=int, help="one-sample size")
    p.add_argument("--n1", type=int, help="size of the first sample (two-sample mode)")
    p.add_argument("--n2", type=int, help="size of the second sample (two-sample mode)")
    p.add_argument("--eta0", type=float, help="pooled mean held fixed along a two-sample grid")
    p.add_argument("--target", choices=("theta", "theta1", "theta2", "delta"))


def _add_levels(p):
    p.add_argument("--alpha1", type=float, default=0.05)
    p.add_argument("--alpha2", type=float, default=0.05)


def _add_grid(p, single: str):
    p.add_argument("--grid", help="START:END:STEP, END included")
    p.add_argument(f"--{single}", type=float, dest="single", help="a single grid point")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="coverbound", description="Coverage of constrained bootstrap percentile intervals.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("exact-coverage", help="exact finite-sample coverage along a grid")
    _add_family(p)
    _add_design(p)
    _add_levels(p)
    _add_grid(p, "theta0")
    p.add_argument("--unconstrained", action="store_true", help="use the unconstrained estimator")
    p.add_argument("--out")

    p = sub.add_parser("asym-coverage", help="local-asymptotic coverage along tau or delta")
    p.add_argument("--one-sample", action="store_true", help="one-sample limit (grid over tau)")
    _add_family(p, required=False)
    _add_design(p)
    p.add_argument("--omega", type=float, help="n1 / (n1 + n2), instead of --n1/--n2")
    p.add_argument("--sigma0", type=float, help="limiting standard deviation (else from --family)")
    _add_levels(p)
    _add_grid(p, "local")
    p.add_argument("--qmc-points", type=int, default=DEFAULT_POINTS)
    p.add_argument("--scrambles", type=int, default=DEFAULT_SCRAMBLES)
    p.add_argument("--seed", type=_u64, default=0)
    p.add_argument("--out")

    p = sub.add_parser("mc-coverage", help="simulated coverage with Monte Carlo bootstrap")
    _add_family(p)
    _add_design(p)
    _add_levels(p)
    _add_grid(p, "theta0")
    p.add_argument("--B", type=int, default=1999)
    p.add_argument("--reps", type=int, default=10_000)
    p.add_argument("--seed", type=_u64, default=0)
    p.add_argument("--unconstrained", action="store_true")
    p.add_argument("--out")

    p = sub.add_parser("diagnostics", help="distance of the standardised bootstrap CDF from normal")
    _add_family(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--theta0", type=float, required=True, help="estimate the bootstrap runs from")
    p.add_argument("--sigma0", type=float)
    p.add_argument("--grid", default="-3:3:0.5", help="probe points START:END:STEP")
    p.add_argument("--B", type=int, default=100_000)
    p.add_argument("--seed", type=_u64, default=0)
    p.add_argument("--out")

    for name in ("figure", "run-figure"):
        p = sub.add_parser(name, help="compute a built-in figure into CSV files")
        p.add_argument("figure_id", choices=FIGURE_IDS)
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=_u64, default=0)
        _add_levels(p)
        p.add_argument("--grid", help="override the figure's grid")
        p.add_argument("--qmc-points", type=int, default=2**16)
        p.add_argument("--scrambles", type=int, default=DEFAULT_SCRAMBLES)
        p.add_argument("--plot", choices=("gnuplot", "png"))
    return parser


# ---------------------------------------------------------------------------
# argument checks


def _conflict(a: str, b: str, why: str = ""):
    raise UsageError(f"{a} conflicts with {b}" + (f" ({why})" if why else ""))


def _family(args):
    if args.family is None:
        return None
    if args.m is not None and args.family != "binomial":
        _conflict("--m", f"--family {args.family}", "--m applies to the binomial family only")
    return make_family(args.family, m=args.m if args.m is not None else 1)


def _mode(args) -> str:
    """'one' or 'two'; rejects mixed one-/two-sample flags."""
    two = [f for f in ("n1", "n2") if getattr(args, f) is not None]
    if getattr(args, "omega", None) is not None:
        two.append("omega")
    if two:
        if args.d is not None:
            _conflict("--d", f"--{two[0]}", "--d is a one-sample boundary")
        if args.n is not None:
            _conflict("--n", f"--{two[0]}", "use --n1 and --n2 for two samples")
        if getattr(args, "one_sample", False):
            _conflict("--one-sample", f"--{two[0]}")
        if args.target == "theta":
            _conflict("--target theta", f"--{two[0]}", "two-sample targets are theta1, theta2, delta")
        return "two"
    if args.eta0 is not None:
        _conflict("--eta0", "--n" if args.n is not None else "--d",
                  "--eta0 belongs to two-sample mode (--n1/--n2)")
    if args.target not in (None, "theta"):
        _conflict(f"--target {args.target}", "one-sample mode", "give --n1 and --n2 for two samples")
    return "one"


def _need(args, *names):
    for name in names:
        if getattr(args, name.replace("-", "_")) is None:
            raise UsageError(f"--{name} is required here")


def _grid(args):
    if args.grid is not None and args.single is not None:
        raise UsageError("--grid conflicts with the single-point option; give one of them")
    if args.grid is None and args.single is None:
        raise UsageError("give --grid START:END:STEP or a single point")
    return parse_grid(args.grid) if args.grid is not None else [args.single]


def _design(args) -> TwoSampleDesign:
    _need(args, "n1", "n2")
    return TwoSampleDesign(args.n1, args.n2)


def _row(family, method, target, n1, n2, pname, x, cov, err, args, seed=0):
    return report.CoverageRow(ADHOC_FIGURE, ADHOC_PANEL, method, target, family, n1, n2, pname, float(x),
                              cov, err, args.alpha1, args.alpha2, seed)


# ---------------------------------------------------------------------------
# subcommands


def _exact(args):
    family = _family(args)
    cfg = ExactConfig(args.alpha1, args.alpha2, use_constraint=not args.unconstrained)
    method = "exact_unconstrained" if args.unconstrained else "exact"
    grid = _grid(args)
    rows, notes = [], []
    if _mode(args) == "one":
        _need(args, "n", "d")
        if isinstance(family, NormalKnownVar):
            if args.unconstrained:
                raise UsageError("--unconstrained is not available for the normal closed form; use mc-coverage")
            for x in grid:
                cov = exact_normal_coverage(args.n, x - args.d, args.alpha1, args.alpha2)
                rows.append(_row(family.name, method, "theta", args.n, 0, "theta0", x, cov, 0.0, args))
            return rows, notes
        for x in grid:
            cov = exact_coverage_one_sample(family, OneSampleConstraint(args.d), args.n, x, cfg)
            rows.append(_row(family.name, method, "theta", args.n, 0, "theta0", x, cov, 0.0, args))
        return rows, notes
    design = _design(args)
    _need(args, "eta0")
    if isinstance(family, NormalKnownVar):
        raise UsageError("--family normal has no two-sample exact enumeration; use mc-coverage")
    target = args.target or "delta"
    w = design.omega
    workers = worker_count()
    for x in grid:
        cov = exact_coverage_two_sample(family, design, args.eta0 - (1 - w) * x, args.eta0 + w * x, cfg,
                                        target, workers=workers)
        rows.append(_row(family.name, method, target, design.n1, design.n2, "delta0", x, cov, 0.0, args))
    return rows, notes


def _sigma0(args, at: float | None, at_flag: str) -> float:
    family = _family(args)
    if args.sigma0 is not None:
        if family is not None:
            _conflict("--sigma0", "--family", "sigma0 is either given or derived, not both")
        return args.sigma0
    if family is None or at is None:
        raise UsageError(f"give --sigma0, or --family with {at_flag} to derive it")
    return math.sqrt(variance_at_mean(family, at))


def _asym(args):
    grid = _grid(args)
    fam = args.family or "normal"
    rows, notes = [], []
    if _mode(args) == "one":
        sigma0 = _sigma0(args, args.d, "--d")
        for x in grid:
            res = asym_coverage_one_sample(LocalFrameOne(x, sigma0), args.alpha1, args.alpha2)
            rows.append(_row(fam, "asymptotic", "theta", 0, 0, "tau", x, res.value, 0.0, args))
            if res.at_boundary:
                notes.append(f"tau={report.fmt(x)}: {KNIFE_EDGE_NOTE}")
        return rows, notes
    if args.omega is not None:
        if args.n1 is not None or args.n2 is not None:
            _conflict("--omega", "--n1/--n2")
        omega, n1, n2 = args.omega, 0, 0
    else:
        design = _design(args)
        omega, n1, n2 = design.omega, design.n1, design.n2
    sigma0 = _sigma0(args, args.eta0, "--eta0")
    target = args.target or "delta"
    for x in grid:
        frame = LocalFrameTwo(x, omega, sigma0, args.eta0)
        if target == "delta":
            res = asym_coverage_delta(frame, args.alpha1, args.alpha2)
            cov, err = res.value, 0.0
            if res.at_boundary:
                notes.append(f"delta={report.fmt(x)}: {KNIFE_EDGE_NOTE}")
        else:
            fn = asym_coverage_theta1 if target == "theta1" else asym_coverage_theta2
            res = fn(frame, args.alpha1, args.alpha2, point_count=args.qmc_points,
                     scrambles=args.scrambles, seed=args.seed)
            cov, err = res.value, res.error
        rows.append(_row(fam, "asymptotic", target, n1, n2, "delta", x, cov, err, args, args.seed))
    return rows, notes


def _mc(args):
    family = _family(args)
    cfg = CIConfig(args.alpha1, args.alpha2, args.B)
    method = "mc"
    grid = _grid(args)
    workers = worker_count()
    rows = []
    if _mode(args) == "one":
        _need(args, "n", "d")
        for x in grid:
            est = mc_coverage(family, x, cfg, args.reps, args.seed, constraint=OneSampleConstraint(args.d),
                              n=args.n, constrained=not args.unconstrained, workers=workers)
            rows.append(_row(family.name, method, "theta", args.n, 0, "theta0", x, est.estimate,
                             est.mc_std_error, args, args.seed))
        return rows, []
    design = _design(args)
    _need(args, "eta0")
    target = args.target or "delta"
    w = design.omega
    for x in grid:
        truth = (args.eta0 - (1 - w) * x, args.eta0 + w * x)
        est = mc_coverage(family, truth, cfg, args.reps, args.seed, design=design, target=target,
                          constrained=not args.unconstrained, workers=workers)
        rows.append(_row(family.name, method, target, design.n1, design.n2, "delta0", x, est.estimate,
                         est.mc_std_error, args, args.seed))
    return rows, []


def _diagnostics(args):
    family = _family(args)
    probes = parse_grid(args.grid)
    sigma0 = args.sigma0 if args.sigma0 is not None else math.sqrt(variance_at_mean(family, args.theta0))
    pairs = bootstrap_cdf_diagnostic(family, args.theta0, args.n, probes, B=args.B, seed=args.seed, sigma0=sigma0)
    lines = [",".join(DIAGNOSTIC_COLUMNS)]
    for x, dev in pairs:
        lines.append(",".join([family.name, str(args.n), report.fmt(args.theta0), report.fmt(sigma0),
                               str(args.B), str(args.seed), report.fmt(x), report.fmt(dev)]))
    return "\n".join(lines) + "\n"


def _emit(text: str, out: str | None):
    if out is None or out == "-":
        sys.stdout.write(text)
        return
    with open(out, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _run(args) -> int:
    if args.command in ("figure", "run-figure"):
        job = FigureJob(args.figure_id, output_dir=args.out, seed=args.seed, alpha1=args.alpha1,
                        alpha2=args.alpha2, grid=args.grid, qmc_points=args.qmc_points,
                        scrambles=args.scrambles, workers=worker_count(), plot=args.plot)
        for path in run_figure(job):
            print(path)
        return EXIT_OK
    if args.command == "diagnostics":
        _emit(_diagnostics(args), args.out)
        return EXIT_OK
    handler = {"exact-coverage": _exact, "asym-coverage": _asym, "mc-coverage": _mc}[args.command]
    rows, notes = handler(args)
    _emit(report.rows_to_text(rows), args.out)
    for note in notes:
        print(f"note: {note}", file=sys.stderr)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _run(args)
    except (UsageError, DomainError) as exc:
        print(f"coverbound: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        where = f" {exc.filename}" if getattr(exc, "filename", None) else ""
        print(f"coverbound: I/O error:{where}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
