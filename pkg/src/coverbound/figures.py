"""Built-in figure jobs: coverage curves for each published panel.

Every figure is a pure function of its :class:`FigureJob`; rows come out in
grid order.  Each panel becomes one CSV (``<figure_id><panel>.csv``, or ``<figure_id>.csv``
when the id already names the panel), and
failed grid points plus knife-edge notes go to ``<figure_id>.errors.csv``.

The limit curves of the two-sample figure with fixed omega and sigma0 = 1
carry ``family = normal`` and encode omega through the smallest integer
pair ``(n1, n2)`` with ``n1 / (n1 + n2) = omega``.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import report
from .asymptotics import (
    LocalFrameOne,
    LocalFrameTwo,
    asym_coverage_delta,
    asym_coverage_one_sample,
    asym_coverage_theta1,
    asym_coverage_theta2,
    exact_normal_coverage,
)
from .estimators import OneSampleConstraint, TwoSampleDesign
from .exact_enum import ExactConfig, exact_coverage_one_sample, exact_coverage_two_sample
from .nef import Binomial, Family, Poisson, variance_at_mean
from .numerics import DomainError

FIGURE_IDS = ("fig1a", "fig1b", "fig2a", "fig2b", "fig3", "fig4", "fig5", "fig6")
KNIFE_EDGE_NOTE = "knife-edge: limit undefined at the threshold; lower-branch value reported"


def parse_grid(text: str) -> np.ndarray:
    """``START:END:STEP`` with END included when it lies on the lattice."""
    try:
        start, end, step = (float(v) for v in text.split(":"))
    except ValueError:
        raise DomainError(f"grid must be START:END:STEP, got {text!r}") from None
    if not all(math.isfinite(v) for v in (start, end, step)):
        raise DomainError(f"grid values must be finite, got {text!r}")
    if step <= 0 or end < start:
        raise DomainError(f"grid needs STEP > 0 and END >= START, got {text!r}")
    count = int(math.floor((end - start) / step + 1e-9)) + 1
    if count > 10**6:
        raise DomainError(f"grid {text!r} has {count} points; at most 10^6 allowed")
    # rounding keeps printed grid values clean (0.3 rather than 0.30000000000000004)
    return np.round(start + step * np.arange(count), 12)


def worker_count() -> int:
    """Worker cap from COVERBOUND_THREADS, else the machine's CPU count."""
    raw = os.environ.get("COVERBOUND_THREADS")
    if raw:
        try:
            value = int(raw)
        except ValueError:
            raise DomainError(f"COVERBOUND_THREADS must be a positive integer, got {raw!r}") from None
        if value < 1:
            raise DomainError(f"COVERBOUND_THREADS must be a positive integer, got {raw!r}")
        return value
    return os.cpu_count() or 1


@dataclass(frozen=True)
class FigureJob:
    figure_id: str
    output_dir: Path = Path(".")
    seed: int = 0
    alpha1: float = 0.05
    alpha2: float = 0.05
    grid: str | None = None
    qmc_points: int = 2**16
    scrambles: int = 8
    workers: int = 1
    plot: str | None = None  # "gnuplot" or "png"

    def __post_init__(self):
        if self.figure_id not in FIGURE_IDS:
            raise DomainError(f"unknown figure {self.figure_id!r}; choose from {', '.join(FIGURE_IDS)}")
        if self.plot not in (None, "gnuplot", "png"):
            raise DomainError(f"plot must be 'gnuplot' or 'png', got {self.plot!r}")
        ExactConfig(self.alpha1, self.alpha2)  # validates the levels


@dataclass
class FigureData:
    panels: dict  # panel label -> list[CoverageRow]
    errors: list  # list[PointError]
    titles: dict


class _Collector:
    def __init__(self, job: FigureJob):
        self.job = job
        self.panels: dict[str, list] = {}
        self.errors: list = []
        self.titles: dict[str, str] = {}

    def curve(self, panel, method, target, family, n1, n2, param_name, grid, evaluate, parallel=False):
        """Evaluate ``evaluate(x) -> (coverage, error, note)`` along ``grid``."""
        job = self.job

        def safe(x):
            try:
                return evaluate(float(x))
            except Exception as exc:  # noqa: BLE001 - recorded, run continues
                return math.nan, math.nan, f"{type(exc).__name__}: {exc}"

        if parallel and job.workers > 1:
            with ThreadPoolExecutor(max_workers=job.workers) as pool:
                results = list(pool.map(safe, grid))
        else:
            results = [safe(x) for x in grid]
        rows = self.panels.setdefault(panel, [])
        for x, (cov, err, note) in zip(grid, results):
            rows.append(report.CoverageRow(job.figure_id, panel, method, target, family, n1, n2,
                                           param_name, float(x), cov, err, job.alpha1, job.alpha2,
                                           job.seed))
            if note:
                self.errors.append(report.PointError(job.figure_id, panel, method, target, float(x), note))

    def data(self) -> FigureData:
        return FigureData(self.panels, self.errors, self.titles)


def _grid(job: FigureJob, default: str) -> np.ndarray:
    return parse_grid(job.grid or default)


def _step_value(step):
    return step.value, 0.0, KNIFE_EDGE_NOTE if step.at_boundary else None


def _one_sample_panel(col: _Collector, panel: str, family: Family, d: float, n: int, grid,
                      param_name: str, with_limit: bool, with_unconstrained: bool):
    job = col.job
    cfg = ExactConfig(job.alpha1, job.alpha2)
    constraint = OneSampleConstraint(d)

    def exact(x):
        return exact_coverage_one_sample(family, constraint, n, x, cfg), 0.0, None

    col.curve(panel, "exact", "theta", family.name, n, 0, param_name, grid, exact)
    if with_unconstrained:
        ucfg = replace(cfg, use_constraint=False)

        def unconstrained(x):
            return exact_coverage_one_sample(family, constraint, n, x, ucfg), 0.0, None

        col.curve(panel, "exact_unconstrained", "theta", family.name, n, 0, param_name, grid, unconstrained)
    if with_limit:
        sigma0 = math.sqrt(variance_at_mean(family, d))

        def limit(x):
            tau = math.sqrt(n) * (x - d)
            return _step_value(asym_coverage_one_sample(LocalFrameOne(tau, sigma0), job.alpha1, job.alpha2))

        col.curve(panel, "asymptotic", "theta", family.name, n, 0, param_name, grid, limit)


def _two_sample_limit(job: FigureJob, target: str, frame: LocalFrameTwo):
    if target == "delta":
        return _step_value(asym_coverage_delta(frame, job.alpha1, job.alpha2))
    fn = asym_coverage_theta1 if target == "theta1" else asym_coverage_theta2
    res = fn(frame, job.alpha1, job.alpha2, point_count=job.qmc_points, scrambles=job.scrambles, seed=job.seed)
    return res.value, res.error, None


def _two_sample_panel(col: _Collector, panel: str, design: TwoSampleDesign, eta0: float, grid,
                      target: str, methods):
    job = col.job
    family = Binomial(1)
    w = design.omega
    cfg = ExactConfig(job.alpha1, job.alpha2)
    for method in methods:
        if method == "asymptotic":
            sigma0 = math.sqrt(variance_at_mean(family, eta0))

            def limit(x):
                frame = LocalFrameTwo(math.sqrt(design.n) * x, w, sigma0, eta0)
                return _two_sample_limit(job, target, frame)

            col.curve(panel, method, target, family.name, design.n1, design.n2, "delta0", grid, limit,
                      parallel=True)
            continue
        mcfg = cfg if method == "exact" else replace(cfg, use_constraint=False)

        def exact(x, mcfg=mcfg):
            cov = exact_coverage_two_sample(family, design, eta0 - (1.0 - w) * x, eta0 + w * x, mcfg,
                                            target, workers=job.workers)
            return cov, 0.0, None

        col.curve(panel, method, target, family.name, design.n1, design.n2, "delta0", grid, exact)


def _fig1a(col):
    grid = _grid(col.job, "2:2.5:0.0025")
    col.titles["a"] = "Poisson rate, lambda >= 2, n = 400"
    _one_sample_panel(col, "a", Poisson(), 2.0, 400, grid, "lambda0", False, False)


def _fig1b(col):
    grid = _grid(col.job, "0:0.3:0.0025")
    col.titles["b"] = "Bernoulli p1 with p1 <= p2, (n1, n2) = (100, 300)"
    _two_sample_panel(col, "b", TwoSampleDesign(100, 300), 0.5, grid, "theta1", ["exact"])


def _fig2a(col):
    job = col.job
    grid = _grid(job, "0:0.6:0.001")
    col.titles["a"] = "Normal mean, theta >= 0, exact"
    for n in (20, 50, 100, 200):
        col.curve("a", "exact", "theta", "normal", n, 0, "theta0", grid,
                  lambda x, n=n: (exact_normal_coverage(n, x, job.alpha1, job.alpha2), 0.0, None))


def _fig2b(col):
    job = col.job
    grid = _grid(job, "0:4:0.01")
    col.titles["b"] = "Local limit, sigma0 = 1"
    col.curve("b", "asymptotic", "theta", "normal", 0, 0, "tau", grid,
              lambda x: _step_value(asym_coverage_one_sample(LocalFrameOne(x, 1.0), job.alpha1, job.alpha2)))


def _fig3(col):
    grid = _grid(col.job, "2:2.5:0.0025")
    for panel, n in (("a", 100), ("b", 400)):
        col.titles[panel] = f"Poisson rate, lambda >= 2, n = {n}"
        _one_sample_panel(col, panel, Poisson(), 2.0, n, grid, "lambda0", True, True)


def _fig4(col):
    grid = _grid(col.job, "0.5:0.65:0.001")
    for panel, n in (("a", 100), ("b", 400)):
        col.titles[panel] = f"Bernoulli p, p >= 0.5, n = {n}"
        _one_sample_panel(col, panel, Binomial(1), 0.5, n, grid, "p0", True, True)


FIG5_OMEGAS = (0.1, 0.2, 0.3, 0.5)


def _fig5(col):
    job = col.job
    grid = _grid(job, "0:8:0.1")
    for panel, target in (("a", "theta1"), ("b", "theta2"), ("c", "delta")):
        col.titles[panel] = f"Local limit for {target}, sigma0 = 1"
        for omega in FIG5_OMEGAS:
            ratio = Fraction(omega).limit_denominator(1000)
            n1, n2 = ratio.numerator, ratio.denominator - ratio.numerator

            def limit(x, omega=omega, target=target):
                return _two_sample_limit(job, target, LocalFrameTwo(x, omega, 1.0))

            col.curve(panel, "asymptotic", target, "normal", n1, n2, "delta", grid, limit, parallel=True)


FIG6_DESIGNS = (("abc", TwoSampleDesign(25, 75)), ("def", TwoSampleDesign(100, 300)))


def _fig6(col):
    grid = _grid(col.job, "0:0.2975:0.0025")
    for labels, design in FIG6_DESIGNS:
        for panel, target in zip(labels, ("theta1", "theta2", "delta")):
            col.titles[panel] = f"Bernoulli {target}, (n1, n2) = ({design.n1}, {design.n2})"
            _two_sample_panel(col, panel, design, 0.5, grid, target,
                              ["exact", "exact_unconstrained", "asymptotic"])


_BUILDERS = {
    "fig1a": _fig1a, "fig1b": _fig1b, "fig2a": _fig2a, "fig2b": _fig2b,
    "fig3": _fig3, "fig4": _fig4, "fig5": _fig5, "fig6": _fig6,
}


def build_figure(job: FigureJob) -> FigureData:
    """Compute every curve of a figure without touching the file system."""
    col = _Collector(job)
    _BUILDERS[job.figure_id](col)
    return col.data()


def write_figure(job: FigureJob, data: FigureData) -> list[Path]:
    out = Path(job.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for panel, rows in data.panels.items():
        # single-panel figures (fig1a, fig2b, ...) already carry the panel letter
        stem = job.figure_id if job.figure_id.endswith(panel) else f"{job.figure_id}{panel}"
        path = out / f"{stem}.csv"
        report.write_rows(path, rows)
        written.append(path)
        title = data.titles.get(panel, stem)
        if job.plot == "gnuplot":
            script = out / f"{stem}.gp"
            script.write_text(report.gnuplot_script(path.name, rows, title, output=f"{stem}.png"),
                              encoding="utf-8")
            written.append(script)
        elif job.plot == "png":
            png = out / f"{stem}.png"
            report.render_png(png, rows, title)
            written.append(png)
    errors = out / f"{job.figure_id}.errors.csv"
    report.write_errors(errors, data.errors)
    written.append(errors)
    return written


def run_figure(job: FigureJob) -> list[Path]:
    """Compute a figure and write its CSVs (and optional plots); returns the paths written."""
    return write_figure(job, build_figure(job))
