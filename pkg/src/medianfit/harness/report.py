"""Summaries and curve extraction over a finished run directory."""

from __future__ import annotations

import csv
import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..data import INPUT_FIELDS
from ..errors import ConfigError, DataError, IncompleteRunError
from ..interpret import curve_spread, extract_curve, mode_sweep, write_curves_csv, write_spread_csv
from ..metrics import (
    FitToMedianProbe,
    conditional_median_table,
    max_absolute_relative_error,
    mean_absolute_relative_error,
)
from ..nn_core import REGULARISATION_RATES, load_model
from . import runner
from .svg import curves_svg

log = logging.getLogger(__name__)

SUMMARY_MEASURES = ("MARE", "MaxARE", "MFME")
LAST_GENERATIONS = 15
DROPOUT_BINS = np.linspace(0.0, 0.9, 10)


@dataclass
class RunData:
    path: Path
    manifest: runner.RunManifest
    archive: list
    split: dict

    @property
    def names(self):
        return list(INPUT_FIELDS[: self.split["train_X"].shape[1]])


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def open_run(run_dir) -> RunData:
    """Load a run directory, failing with the name of the first missing artifact."""
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise IncompleteRunError(f"{run_dir} is not a run directory")
    for name in runner.REQUIRED_ARTIFACTS:
        if not (run_dir / name).is_file():
            raise IncompleteRunError(f"{run_dir}: missing {name}")
    manifest = runner.RunManifest.load(run_dir / runner.MANIFEST)
    archive = _read_csv(run_dir / runner.ARCHIVE)
    if not archive:
        raise IncompleteRunError(f"{run_dir}: {runner.ARCHIVE} lists no models")
    for row in archive:
        if not (run_dir / row["model"]).is_file():
            raise IncompleteRunError(f"{run_dir}: missing model file {row['model']}")
    with np.load(run_dir / runner.SPLIT) as z:
        split = {k: z[k] for k in z.files}
    return RunData(run_dir, manifest, archive, split)


def _probe(run: RunData) -> FitToMedianProbe:
    opts = run.manifest.data_options
    X, y = run.split["train_X"], run.split["train_y"]
    tables = [conditional_median_table(X, y, j, opts["n_bins"], opts["min_count"], run.names[j])
              for j in range(X.shape[1])]
    return FitToMedianProbe.build(X, tables, mode_sweep(X, opts["sweep_points"]))


def score_archive(run: RunData) -> list[dict]:
    """Every archived model scored on the full test split."""
    probe = _probe(run)
    Xt, yt = run.split["test_X"], run.split["test_y"]
    out = []
    for row in run.archive:
        model = load_model(run.path / row["model"])
        pred = model(Xt)
        out.append({"model": row["model"], "summary": model.config.summary(),
                    "MARE": mean_absolute_relative_error(pred, yt),
                    "MaxARE": max_absolute_relative_error(pred, yt),
                    "MFME": probe(model), "_model": model})
    return out


def _late_evaluations(run: RunData):
    path = run.path / runner.EVALUATIONS
    if not path.is_file():
        raise IncompleteRunError(f"{run.path}: missing {runner.EVALUATIONS}")
    rows = _read_csv(path)
    total = int(run.manifest.ga["generations"])
    first = max(1, total - LAST_GENERATIONS + 1)
    return [r for r in rows if int(r["generation"]) >= first], first, total


def distributions(run: RunData) -> dict[str, Counter]:
    """Histograms over every network evaluated in the final generations."""
    rows, _, _ = _late_evaluations(run)
    hist = {"l1_rate": Counter(), "l2_rate": Counter(), "dropout_rate": Counter(),
            "hidden_layers": Counter(), "neurons_per_layer": Counter()}
    max_n = int(run.manifest.ga["max_neurons"])
    edges = np.unique(np.linspace(1, max_n + 1, 9).round().astype(int))
    for r in rows:
        hist["l1_rate"][f"{float(r['l1_rate']):g}"] += 1
        hist["l2_rate"][f"{float(r['l2_rate']):g}"] += 1
        d = float(r["dropout_rate"])
        b = min(int(np.searchsorted(DROPOUT_BINS, d, side="right")) - 1, len(DROPOUT_BINS) - 2)
        hist["dropout_rate"][f"[{DROPOUT_BINS[b]:.1f},{DROPOUT_BINS[b + 1]:.1f})"] += 1
        hist["hidden_layers"][r["hidden_layers"]] += 1
        mean_n = np.mean([int(n) for n in r["neurons"].split("x")])
        k = min(int(np.searchsorted(edges, mean_n, side="right")) - 1, len(edges) - 2)
        hist["neurons_per_layer"][f"[{edges[k]},{edges[k + 1]})"] += 1
    return hist


def _order(key, counter):
    if key in ("l1_rate", "l2_rate"):
        return [f"{r:g}" for r in REGULARISATION_RATES]
    if key == "hidden_layers":
        return [str(i) for i in range(1, 5)]
    return sorted(counter, key=lambda s: float(s[1:].split(",")[0]))


def report(run_dir, top_k: int = 5) -> dict:
    """Write ``summary.csv`` and ``summary.txt`` into the run directory.

    Returns a dict with per-measure mean/std over the archived networks,
    the hyperparameter histograms and the ``top_k`` networks by MARE.
    """
    if top_k < 1:
        raise ConfigError("top_k must be >= 1")
    run = open_run(run_dir)
    scores = score_archive(run)
    stats = {}
    for m in SUMMARY_MEASURES:
        vals = np.array([s[m] for s in scores])
        stats[m] = (float(vals.mean()), float(vals.std()))
    hist = distributions(run)
    _, first, total = _late_evaluations(run)
    best = sorted(scores, key=lambda s: s["MARE"])[:top_k]

    rows = [("measure", m, stat, repr(v)) for m, (mu, sd) in stats.items()
            for stat, v in (("mean", mu), ("std", sd))]
    for key, counter in hist.items():
        rows += [("distribution", key, label, counter.get(label, 0)) for label in _order(key, counter)]
    rows += [("top", str(i), s["model"], repr(s["MARE"])) for i, s in enumerate(best)]
    with open(run.path / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["section", "item", "key", "value"])
        w.writerows(rows)

    lines = [f"approach {run.manifest.approach}  seed {run.manifest.seed}  "
             f"archive {len(scores)} network(s), scored on the full test split "
             f"({len(run.split['test_y'])} rows)", ""]
    for m, (mu, sd) in stats.items():
        lines.append(f"  {m:<7} {mu:8.3f} +/- {sd:.3f} %")
    lines += ["", f"distributions over generations {first}-{total}:"]
    for key, counter in hist.items():
        n = sum(counter.values()) or 1
        cells = "  ".join(f"{lab}: {100 * counter.get(lab, 0) / n:.1f}%" for lab in _order(key, counter))
        lines.append(f"  {key:<18} {cells}")
    lines += ["", f"top {len(best)} by MARE:"]
    lines += [f"  {s['MARE']:7.3f}%  {s['summary']}  ({s['model']})" for s in best]
    (run.path / "summary.txt").write_text("\n".join(lines) + "\n")
    for s in scores:
        s.pop("_model")
    return {"measures": stats, "distributions": hist, "top": best, "n_networks": len(scores)}


def _variable_id(run: RunData, variable) -> int:
    names = run.names
    if isinstance(variable, str) and not variable.isdigit():
        if variable not in names:
            raise ConfigError(f"unknown variable {variable!r}; choose from {', '.join(names)}")
        return names.index(variable)
    j = int(variable)
    if not 0 <= j < len(names):
        raise ConfigError(f"variable index must lie in [0, {len(names) - 1}]")
    return j


@dataclass
class CurveOutputs:
    curves_csv: Path
    spread_csv: Path | None
    svg: Path
    average_spread: float | None
    models: list


def extract_and_plot(run_dir, variable, top_k: int = 5, out_dir=None) -> CurveOutputs:
    """Learnt curves of the ``top_k`` lowest-MARE archived networks for one variable."""
    if top_k < 1:
        raise ConfigError("top_k must be >= 1")
    run = open_run(run_dir)
    j = _variable_id(run, variable)
    out_dir = Path(out_dir) if out_dir else run.path / "curves"
    out_dir.mkdir(parents=True, exist_ok=True)
    scores = sorted(score_archive(run), key=lambda s: (s["MARE"], s["model"]))
    if len(scores) < top_k:
        log.warning("archive holds %d network(s); using all instead of %d", len(scores), top_k)
    chosen = scores[:top_k]
    X = run.split["train_X"]
    opts = run.manifest.data_options
    sweep = mode_sweep(X, opts["sweep_points"])
    curves = [extract_curve(s["_model"], X, j, sweep, network_id=Path(s["model"]).stem)
              for s in chosen]
    name = run.names[j]
    curves_csv = write_curves_csv(curves, out_dir / f"curves_{name}.csv", run.names)
    spread_csv, avg = None, None
    if len(curves) >= 2:
        rep = curve_spread(curves)
        spread_csv = write_spread_csv(rep, out_dir / f"spread_{name}.csv", run.names)
        avg = rep.average_spread
    table = conditional_median_table(X, run.split["train_y"], j, opts["n_bins"], opts["min_count"], name)
    if not table.valid.any():
        raise DataError(f"no valid median bin for {name}")
    svg = out_dir / f"curves_{name}.svg"
    svg.write_text(curves_svg(curves, table, name))
    return CurveOutputs(curves_csv, spread_csv, svg, avg, [s["model"] for s in chosen])
