"""Error measures and the fit-to-median machinery.

Relative measures are returned as percentages. The fit-to-median error
compares one-variable response sweeps of a model with the binned
conditional median of the target, one input variable at a time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

MEASURES = ("MARE", "MaxARE", "MFME", "MAE")
DEFAULT_BINS = 50
DEFAULT_MIN_COUNT = 20
DEFAULT_SWEEP_POINTS = 150


@dataclass(frozen=True)
class ObjectiveVector:
    names: tuple[str, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if len(self.names) != len(self.values) or not self.names:
            raise ValueError("names and values must be nonempty and aligned")
        for n in self.names:
            if n not in MEASURES:
                raise ValueError(f"unknown measure {n!r}")
        for v in self.values:
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"objective values must be finite and >= 0, got {v}")

    def __getitem__(self, name):
        return self.values[self.names.index(name)]

    def as_array(self) -> np.ndarray:
        return np.array(self.values)


def _pair(predictions, targets):
    pred = np.asarray(predictions, dtype=float).ravel()
    y = np.asarray(targets, dtype=float).ravel()
    if pred.size == 0 or pred.shape != y.shape:
        raise DataError("predictions and targets must have equal nonzero length")
    return pred, y


def minkowski_error(predictions, targets, r: float = 1.0) -> float:
    """``(mean |e|^r)^(1/r)``; ``r = inf`` gives the maximum absolute error."""
    if not r >= 1:
        raise ValueError("Minkowski exponent must be >= 1")
    pred, y = _pair(predictions, targets)
    e = np.abs(y - pred)
    if math.isinf(r):
        return float(e.max())
    if r == 1:
        return float(e.mean())
    return float(np.mean(e ** r) ** (1.0 / r))


def mean_absolute_error(predictions, targets) -> float:
    pred, y = _pair(predictions, targets)
    return float(np.abs(y - pred).mean())


def _relative_errors(predictions, targets):
    pred, y = _pair(predictions, targets)
    if (y <= 0).any():
        raise DataError("relative errors need strictly positive targets (was the data cleaned?)")
    return np.abs(y - pred) / y


def mean_absolute_relative_error(predictions, targets) -> float:
    return 100.0 * float(_relative_errors(predictions, targets).mean())


def max_absolute_relative_error(predictions, targets) -> float:
    return 100.0 * float(_relative_errors(predictions, targets).max())


@dataclass
class ConditionalMedianTable:
    variable_id: int
    bin_edges: np.ndarray
    bin_median: np.ndarray
    bin_count: np.ndarray
    min_count_threshold: int
    name: str = ""

    @property
    def n_bins(self) -> int:
        return len(self.bin_count)

    @property
    def valid(self) -> np.ndarray:
        return self.bin_count >= self.min_count_threshold

    def bin_index(self, x) -> np.ndarray:
        """Bin of each value; the top edge belongs to the last bin, outside values get -1."""
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.bin_edges, x, side="right") - 1
        idx[x == self.bin_edges[-1]] = self.n_bins - 1
        idx[(x < self.bin_edges[0]) | (x > self.bin_edges[-1])] = -1
        return idx

    def median_at(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Median for each value and a mask of values that fall in valid bins."""
        idx = self.bin_index(x)
        ok = idx >= 0
        ok[ok] = self.valid[idx[ok]]
        med = np.full(idx.shape, np.nan)
        med[ok] = self.bin_median[idx[ok]]
        return med, ok

    def csv_rows(self):
        label = self.name or str(self.variable_id)
        for b in range(self.n_bins):
            yield {
                "variable_id": label,
                "bin_lo": repr(float(self.bin_edges[b])),
                "bin_hi": repr(float(self.bin_edges[b + 1])),
                "count": int(self.bin_count[b]),
                "median": repr(float(self.bin_median[b])) if self.valid[b] else "",
                "valid": int(self.valid[b]),
            }


MEDIAN_CSV_FIELDS = ("variable_id", "bin_lo", "bin_hi", "count", "median", "valid")


def conditional_median_table(inputs, targets, variable_id: int, n_bins: int = DEFAULT_BINS,
                             min_count_threshold: int = DEFAULT_MIN_COUNT,
                             name: str = "") -> ConditionalMedianTable:
    """Equal-width binning of one input column with the target median per bin."""
    X = np.asarray(inputs, dtype=float)
    x = X[:, variable_id] if X.ndim == 2 else X
    y = np.asarray(targets, dtype=float).ravel()
    if x.size == 0:
        raise DataError("cannot bin an empty dataset")
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    lo, hi = float(x.min()), float(x.max())
    if lo == hi:
        edges = np.array([lo - 0.5, hi + 0.5])
    else:
        edges = np.linspace(lo, hi, n_bins + 1)
    nb = len(edges) - 1
    idx = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, nb - 1)
    counts = np.bincount(idx, minlength=nb)
    medians = np.full(nb, np.nan)
    order = np.lexsort((y, idx))
    ys = y[order]
    starts = np.concatenate(([0], np.cumsum(counts)))
    for b in range(nb):
        c = counts[b]
        if c == 0:
            continue
        seg = ys[starts[b]:starts[b + 1]]
        h = c // 2
        medians[b] = seg[h] if c % 2 else (seg[h - 1] + seg[h]) / 2
    table = ConditionalMedianTable(variable_id, edges, medians, counts, int(min_count_threshold), name)
    table.bin_median[~table.valid] = np.nan
    return table


@dataclass
class SweepSpec:
    fixed_values: np.ndarray
    points_per_sweep: int = DEFAULT_SWEEP_POINTS

    def __post_init__(self):
        self.fixed_values = np.asarray(self.fixed_values, dtype=float)
        if self.points_per_sweep < 2:
            raise ValueError("points_per_sweep must be >= 2")


def sweep_inputs(variable_id: int, lo: float, hi: float, sweep: SweepSpec) -> np.ndarray:
    """Input matrix cycling one variable over [lo, hi] with the rest held fixed."""
    X = np.tile(sweep.fixed_values, (sweep.points_per_sweep, 1))
    X[:, variable_id] = np.linspace(lo, hi, sweep.points_per_sweep)
    return X


def fit_to_median(xs, ys, table: ConditionalMedianTable) -> float | None:
    """Mean relative gap (percent) between a curve and the bin medians, or None."""
    med, ok = table.median_at(xs)
    if not ok.any():
        return None
    ys = np.asarray(ys, dtype=float)
    return 100.0 * float(np.mean(np.abs(ys[ok] - med[ok]) / med[ok]))


@dataclass
class FitToMedianProbe:
    """All sweeps stacked into one input matrix so a model is queried once.

    Built once from the median tables and the sweep modes;
    ``__call__`` returns the mean fit-to-median error of ``predict_fn``.
    """
    inputs: np.ndarray
    medians: np.ndarray
    valid: np.ndarray
    groups: list = field(default_factory=list)

    @classmethod
    def build(cls, dataset_inputs, tables, sweep: SweepSpec) -> FitToMedianProbe:
        X = np.asarray(dataset_inputs, dtype=float)
        if X.size == 0:
            raise DataError("empty dataset")
        blocks, meds, valid, groups = [], [], [], []
        start = 0
        for table in tables:
            j = table.variable_id
            block = sweep_inputs(j, X[:, j].min(), X[:, j].max(), sweep)
            med, ok = table.median_at(block[:, j])
            if ok.any():
                blocks.append(block)
                meds.append(med)
                valid.append(ok)
                groups.append((j, slice(start, start + len(block))))
                start += len(block)
        if not groups:
            raise DataError("no input variable has a valid median bin")
        return cls(np.vstack(blocks), np.concatenate(meds), np.concatenate(valid), groups)

    def per_variable(self, predict_fn) -> dict[int, float]:
        pred = np.asarray(predict_fn(self.inputs), dtype=float).ravel()
        out = {}
        for j, sl in self.groups:
            ok = self.valid[sl]
            rel = np.abs(pred[sl][ok] - self.medians[sl][ok]) / self.medians[sl][ok]
            out[j] = 100.0 * float(np.mean(rel))
        return out

    def __call__(self, predict_fn) -> float:
        return float(np.mean(list(self.per_variable(predict_fn).values())))


def mean_fit_to_median_error(predict_fn, dataset_inputs, tables, sweep: SweepSpec) -> float:
    """Mean over input variables of the per-variable fit-to-median error (percent)."""
    return FitToMedianProbe.build(dataset_inputs, tables, sweep)(predict_fn)
