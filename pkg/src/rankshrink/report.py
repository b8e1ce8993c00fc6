"""File input, delimited output, and figure rendering for the CLI.

Readers accept plain-text z lists (one value per line, blank lines and
``#`` comments skipped) and numeric CSV expression matrices whose first row
holds the two-sample group labels.  Writers emit CSV with ``#`` header lines
recording the resolved configuration, or JSON with floats printed to 17
significant digits so byte comparison is a valid reproducibility check.
Figures are drawn with the Agg backend and saved next to the delimited
output.
"""

from __future__ import annotations

import csv
import io
from typing import Any

import numpy as np

from .core import InputFormatError, InvalidInputError

__all__ = [
    "read_z_file",
    "read_matrix_file",
    "format_json",
    "write_csv",
    "render_shrink_figure",
    "render_table_figure",
    "render_theorem1_figure",
    "render_curves_figure",
]


def read_z_file(path: str) -> np.ndarray:
    """One statistic per line; '#' comments and blank lines are skipped."""
    values = []
    try:
        handle = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise InputFormatError(f"cannot read {path}: {exc}") from exc
    with handle:
        for lineno, raw in enumerate(handle, start=1):
            text = raw.split("#", 1)[0].strip()
            if not text:
                continue
            try:
                values.append(float(text))
            except ValueError:
                raise InputFormatError(f"{path}: not a number: {text!r}",
                                       line=lineno) from None
    if not values:
        raise InputFormatError(f"{path}: no values found")
    return np.array(values, dtype=np.float64)


def read_matrix_file(path: str):
    """Numeric CSV with a group-label first row; returns (matrix, labels).

    Rows after the header are features, columns are samples; labels must be
    0/1 group markers.
    """
    try:
        handle = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise InputFormatError(f"cannot read {path}: {exc}") from exc
    with handle:
        reader = csv.reader(handle)
        rows = []
        labels = None
        for lineno, row in enumerate(reader, start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if row and row[0].lstrip().startswith("#"):
                continue
            try:
                parsed = [float(cell) for cell in row]
            except ValueError as exc:
                raise InputFormatError(
                    f"{path}: line {lineno}: {exc}", line=lineno) from None
            if labels is None:
                labels = parsed
                continue
            if len(parsed) != len(labels):
                raise InputFormatError(
                    f"{path}: row has {len(parsed)} fields, "
                    f"expected {len(labels)}", line=lineno)
            rows.append(parsed)
    if labels is None or not rows:
        raise InputFormatError(f"{path}: need a label row and at least one feature row")
    label_arr = np.array(labels)
    if not np.isin(label_arr, (0.0, 1.0)).all():
        raise InputFormatError(f"{path}: group labels must be 0 or 1")
    return np.array(rows, dtype=np.float64), label_arr.astype(np.int64)


# --- writers ---------------------------------------------------------------


def _format_float(value: float) -> str:
    if value != value:
        return "NaN"
    if value in (float("inf"), float("-inf")):
        return '"Infinity"' if value > 0 else '"-Infinity"'
    return format(value, ".17g")


def format_json(payload: Any, indent: int = 0) -> str:
    """JSON text with floats at 17 significant digits.

    The standard serializer prints shortest round-trip floats; a fixed digit
    count keeps diffs stable across writer implementations.
    """
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if isinstance(payload, dict):
        if not payload:
            return "{}"
        parts = [f'{inner}"{key}": {format_json(val, indent + 1)}'
                 for key, val in payload.items()]
        return "{\n" + ",\n".join(parts) + f"\n{pad}}}"
    if isinstance(payload, (list, tuple)):
        seq = list(payload)
        if not seq:
            return "[]"
        if all(isinstance(v, (int, float, bool)) and not isinstance(v, bool)
               for v in seq):
            return "[" + ", ".join(
                _format_float(float(v)) if isinstance(v, float) else str(v)
                for v in seq) + "]"
        parts = [f"{inner}{format_json(val, indent + 1)}" for val in seq]
        return "[\n" + ",\n".join(parts) + f"\n{pad}]"
    if isinstance(payload, bool):
        return "true" if payload else "false"
    if payload is None:
        return "null"
    if isinstance(payload, float):
        return _format_float(payload)
    if isinstance(payload, (int, np.integer)):
        return str(int(payload))
    text = str(payload)
    escaped = text.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n")
    return f'"{escaped}"'


def write_csv(path: str, header_lines: list[str], columns: list[str],
              rows) -> None:
    """CSV with '#'-prefixed header lines; floats use '.' decimal via repr."""
    buffer = io.StringIO()
    for line in header_lines:
        buffer.write(f"# {line}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_csv_cell(cell) for cell in row])
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(buffer.getvalue())


def _csv_cell(cell) -> str:
    if isinstance(cell, (float, np.floating)):
        return format(float(cell), ".17g")
    if isinstance(cell, (int, np.integer)):
        return str(int(cell))
    return str(cell)


# --- figures ---------------------------------------------------------------


def _axes(title: str, xlabel: str, ylabel: str):
    import matplotlib
    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7.5, 5.0), constrained_layout=True)
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    return fig, ax


def _save(fig, path: str) -> None:
    fig.savefig(path, dpi=120)
    import matplotlib.pyplot as plt

    plt.close(fig)


def render_shrink_figure(path: str, z: np.ndarray,
                         estimates: dict[str, np.ndarray]) -> None:
    """Corrected estimates against the observed z, sorted by z."""
    order = np.argsort(z, kind="stable")
    fig, ax = _axes("Selection-adjusted estimates", "observed z", "estimate")
    span = np.array([z.min(), z.max()])
    ax.plot(span, span, color="0.6", linestyle="--", linewidth=1, label="naive (identity)")
    for name, values in estimates.items():
        ax.plot(z[order], values[order], linewidth=1.2, label=name)
    ax.legend()
    _save(fig, path)


def render_table_figure(path: str, schemes: list[str], estimators: list[str],
                        means: dict[str, dict[str, float]],
                        ses: dict[str, dict[str, float]]) -> None:
    """Grouped bars of MSE ratios (fraction of naive) per scheme."""
    fig, ax = _axes("MSE relative to the naive estimate", "scheme", "MSE ratio")
    x = np.arange(len(schemes), dtype=np.float64)
    width = 0.8 / max(len(estimators), 1)
    for j, name in enumerate(estimators):
        vals = [means[s][name] for s in schemes]
        errs = [ses[s][name] for s in schemes]
        ax.bar(x + (j - (len(estimators) - 1) / 2) * width, vals, width,
               yerr=errs, capsize=2, label=name)
    ax.axhline(1.0, color="0.6", linestyle="--", linewidth=1)
    ax.set_xticks(x, schemes)
    ax.legend()
    _save(fig, path)


def render_theorem1_figure(path: str, rows) -> None:
    """Empirical rank-wise bias vs its analytic limit across sample sizes."""
    fig, ax = _axes("Convergence of the rank-wise bias", "p (log scale)",
                    "bias at fixed quantile rank")
    ps = [r.p for r in rows]
    ax.errorbar(ps, [r.empirical for r in rows], yerr=[3 * r.se for r in rows],
                marker="o", linestyle="-", capsize=3, label="empirical (3 SE bars)")
    ax.axhline(rows[0].analytic, color="0.3", linestyle="--",
               label="analytic limit")
    ax.set_xscale("log")
    ax.legend()
    _save(fig, path)


def render_curves_figure(path: str, ranks: np.ndarray, ordered_z: np.ndarray,
                         curves: dict[str, np.ndarray]) -> None:
    """Ordered statistics and each estimator's corrected curve by rank."""
    fig, ax = _axes("Estimates by rank", "rank", "value")
    ax.plot(ranks, ordered_z, color="0.6", linewidth=1, label="z (ordered)")
    for name, values in curves.items():
        ax.plot(ranks, values, linewidth=1.2, label=name)
    ax.legend()
    _save(fig, path)
