"""Learnt input-output curves and how consistent they are across networks."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .metrics import ConditionalMedianTable, SweepSpec, fit_to_median, sweep_inputs

MODE_BINS = 50


def input_mode(dataset_inputs, variable_id: int, n_bins: int = MODE_BINS) -> float:
    """Centre of the fullest equal-width histogram bin (lowest bin wins ties)."""
    X = np.asarray(dataset_inputs, dtype=float)
    x = X[:, variable_id] if X.ndim == 2 else X
    if x.size == 0:
        raise DataError("cannot take the mode of an empty column")
    lo, hi = float(x.min()), float(x.max())
    if lo == hi:
        return lo
    counts, edges = np.histogram(x, bins=n_bins, range=(lo, hi))
    b = int(np.argmax(counts))
    return float(0.5 * (edges[b] + edges[b + 1]))


def mode_sweep(dataset_inputs, points_per_sweep: int = 150, n_bins: int = MODE_BINS) -> SweepSpec:
    X = np.asarray(dataset_inputs, dtype=float)
    modes = [input_mode(X, j, n_bins) for j in range(X.shape[1])]
    return SweepSpec(np.array(modes), points_per_sweep)


@dataclass
class LearntCurve:
    variable_id: int
    xs: np.ndarray
    ys: np.ndarray
    network_id: str = ""


@dataclass
class SpreadReport:
    variable_id: int
    per_point: np.ndarray
    average_spread: float
    n_networks: int


def extract_curve(model, dataset_inputs, variable_id: int, sweep: SweepSpec | None = None,
                  network_id: str = "") -> LearntCurve:
    """Sweep one input from its observed min to max, others at their modes.

    ``model`` is anything callable on an input matrix (a ``NetworkModel``
    predicts in inference mode, so dropout is off).
    """
    X = np.asarray(dataset_inputs, dtype=float)
    if sweep is None:
        sweep = mode_sweep(X)
    x = X[:, variable_id]
    grid = sweep_inputs(variable_id, float(x.min()), float(x.max()), sweep)
    ys = np.asarray(model(grid), dtype=float).ravel()
    return LearntCurve(variable_id, grid[:, variable_id].copy(), ys, network_id)


def curve_spread(curves) -> SpreadReport:
    """Per-point range over mean (percent) across networks, and its average.

    The denominator is ``|mean|`` so a badly fitted network that dips below
    zero inflates the spread rather than flipping its sign.
    """
    curves = list(curves)
    if len(curves) < 2:
        raise ValueError("spread needs at least two curves")
    xs = curves[0].xs
    for c in curves[1:]:
        if c.variable_id != curves[0].variable_id or not np.array_equal(c.xs, xs):
            raise ValueError("curves must share the same variable and sweep points")
    Y = np.vstack([c.ys for c in curves])
    per_point = 100.0 * (Y.max(axis=0) - Y.min(axis=0)) / np.abs(Y.mean(axis=0))
    return SpreadReport(curves[0].variable_id, per_point, float(per_point.mean()), len(curves))


def curve_vs_median(curve: LearntCurve, table: ConditionalMedianTable) -> float:
    if table.variable_id != curve.variable_id:
        raise ValueError("table and curve describe different variables")
    value = fit_to_median(curve.xs, curve.ys, table)
    if value is None:
        raise DataError("no sweep point falls in a valid median bin")
    return value


def write_curves_csv(curves, path, names=None) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["variable_id", "network_id", "x", "y"])
        for c in curves:
            label = names[c.variable_id] if names else c.variable_id
            for x, y in zip(c.xs, c.ys):
                w.writerow([label, c.network_id, repr(float(x)), repr(float(y))])
    return path


def write_spread_csv(report: SpreadReport, path, names=None) -> Path:
    path = Path(path)
    label = names[report.variable_id] if names else report.variable_id
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["variable_id", "point", "spread"])
        for i, s in enumerate(report.per_point):
            w.writerow([label, i, repr(float(s))])
        w.writerow([label, "average", repr(report.average_spread)])
    return path
