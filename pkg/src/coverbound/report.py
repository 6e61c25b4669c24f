"""CSV output, error sidecars and optional plots for coverage curves.

Every coverage CSV has the fixed header :data:`COLUMNS`.  Conventions for
fields that do not apply to a row: ``n1 = n2 = 0`` for pure limit curves,
``n2 = 0`` for one-sample rows, ``error_estimate = 0`` for exact and
closed-form values.  Numbers are written with 12 significant digits.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import astuple, dataclass, fields
from pathlib import Path

COLUMNS = (
    "figure_id", "panel", "method", "target", "family", "n1", "n2", "param_name",
    "param_value", "coverage", "error_estimate", "alpha1", "alpha2", "seed",
)
METHODS = ("exact", "exact_unconstrained", "asymptotic", "mc")
TARGETS = ("theta", "theta1", "theta2", "delta")
FAMILIES = ("normal", "poisson", "binomial")
ERROR_COLUMNS = ("figure_id", "panel", "method", "target", "param_value", "message")

_INT_COLUMNS = {"n1", "n2", "seed"}
_FLOAT_COLUMNS = {"param_value", "coverage", "error_estimate", "alpha1", "alpha2"}


class SchemaError(ValueError):
    pass


def fmt(x: float) -> str:
    """12 significant digits, no trailing zeros; ``nan`` for missing values."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if x == 0.0:
        return "0"
    return format(x, ".12g")


@dataclass(frozen=True)
class CoverageRow:
    figure_id: str
    panel: str
    method: str
    target: str
    family: str
    n1: int
    n2: int
    param_name: str
    param_value: float
    coverage: float
    error_estimate: float
    alpha1: float
    alpha2: float
    seed: int

    def cells(self) -> list[str]:
        out = []
        for f, v in zip(fields(self), astuple(self)):
            if f.name in _FLOAT_COLUMNS:
                out.append(fmt(v))
            else:
                out.append(str(v))
        return out


@dataclass(frozen=True)
class PointError:
    figure_id: str
    panel: str
    method: str
    target: str
    param_value: float
    message: str

    def cells(self) -> list[str]:
        # keep the sidecar a plain comma-separated file
        msg = " ".join(self.message.replace(",", ";").split())
        return [self.figure_id, self.panel, self.method, self.target, fmt(self.param_value), msg]


def _write(stream, header, rows):
    w = csv.writer(stream, lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
    w.writerow(header)
    for r in rows:
        w.writerow(r.cells())


def rows_to_text(rows) -> str:
    buf = io.StringIO()
    _write(buf, COLUMNS, rows)
    return buf.getvalue()


def write_rows(path: Path | str, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        _write(fh, COLUMNS, rows)


def write_errors(path: Path | str, errors) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        _write(fh, ERROR_COLUMNS, errors)


def validate_csv_text(text: str) -> list[dict]:
    """Parse coverage CSV text, checking the header, column count and field types.

    Returns the rows as dicts of typed values; raises :class:`SchemaError`.
    """
    if "\r" in text:
        raise SchemaError("line endings must be LF")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise SchemaError("missing header")
    if tuple(lines[0].split(",")) != COLUMNS:
        raise SchemaError(f"bad header: {lines[0]!r}")
    out = []
    for i, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != len(COLUMNS):
            raise SchemaError(f"line {i}: expected {len(COLUMNS)} fields, got {len(cells)}")
        row = dict(zip(COLUMNS, cells))
        try:
            for k in _INT_COLUMNS:
                row[k] = int(row[k])
            for k in _FLOAT_COLUMNS:
                row[k] = float(row[k])
        except ValueError as exc:
            raise SchemaError(f"line {i}: {exc}") from None
        if row["method"] not in METHODS:
            raise SchemaError(f"line {i}: unknown method {row['method']!r}")
        if row["target"] not in TARGETS:
            raise SchemaError(f"line {i}: unknown target {row['target']!r}")
        if row["family"] not in FAMILIES:
            raise SchemaError(f"line {i}: unknown family {row['family']!r}")
        cov = row["coverage"]
        if not (math.isnan(cov) or 0.0 <= cov <= 1.0):
            raise SchemaError(f"line {i}: coverage {cov} outside [0, 1]")
        out.append(row)
    return out


def validate_csv(path: Path | str) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        return validate_csv_text(fh.read())


def _curve_key(row) -> tuple:
    return (row.method, row.target, row.n1, row.n2)


def _curve_label(key) -> str:
    method, target, n1, n2 = key
    sizes = "" if n1 == 0 else (f" n={n1}" if n2 == 0 else f" n=({n1},{n2})")
    return f"{method} {target}{sizes}"


def group_curves(rows) -> dict:
    curves: dict = {}
    for r in rows:
        curves.setdefault(_curve_key(r), []).append(r)
    return curves


def gnuplot_script(csv_name: str, rows, title: str, output: str | None = None) -> str:
    """Plain gnuplot script that plots every curve of one panel CSV.

    With ``output`` the script draws to that PNG file, else to the default terminal.
    """
    curves = group_curves(rows)
    xname = rows[0].param_name if rows else "x"
    lines = [] if output is None else ["set terminal pngcairo size 800,560", f"set output '{output}'"]
    lines += [
        "set datafile separator ','",
        "set key bottom left",
        f"set title '{title}'",
        f"set xlabel '{xname}'",
        "set ylabel 'coverage'",
        "set yrange [0.75:1.0]",
    ]
    plots = []
    for key in curves:
        method, target, n1, n2 = key
        cond = (f'(strcol(3) eq "{method}" && strcol(4) eq "{target}" '
                f"&& column(6) == {n1} && column(7) == {n2})")
        plots.append(f"'{csv_name}' using 9:({cond} ? column(10) : 1/0) skip 1 "
                     f"with lines title '{_curve_label(key)}'")
    lines.append("plot " + ", \\\n     ".join(plots))
    return "\n".join(lines) + "\n"


_STYLE = {"asymptotic": "-", "exact": "--", "exact_unconstrained": ":", "mc": "-."}


def render_png(path: Path | str, rows, title: str) -> None:
    """Draw one panel with matplotlib (solid: limit, dashed: exact, dotted: unconstrained)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    for key, curve in group_curves(rows).items():
        x = [r.param_value for r in curve]
        y = [r.coverage for r in curve]
        ax.plot(x, y, _STYLE.get(key[0], "-"), lw=1.1, label=_curve_label(key))
    ax.axhline(0.9, color="0.6", lw=0.6)
    if rows:
        ax.set_xlabel(rows[0].param_name)
    ax.set_ylabel("coverage")
    ax.set_title(title, fontsize=10)
    ax.legend(fontsize=7, frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
