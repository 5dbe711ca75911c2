"""Execute one approach end to end and persist everything a rerun or report needs."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__, _backend
from ..data import (
    INPUT_FIELDS,
    DataSplit,
    Records,
    SyntheticConfig,
    generate_synthetic,
    load_csv,
    prepare,
    synthetic_config_from_dict,
)
from ..errors import ConfigError, DataError
from ..evo import GENE_NAMES, DataContext, GARunConfig, evolve
from ..metrics import MEDIAN_CSV_FIELDS
from ..nn_core import TrainingSchedule, save_model
from .config import DataOptions, RunConfig

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"
HISTORY = "history.csv"
ARCHIVE = "archive.csv"
EVALUATIONS = "evaluations.csv"
SCALING = "scaling.json"
MEDIANS = "medians.csv"
SPLIT = "split.npz"
MODELS = "models"
REQUIRED_ARTIFACTS = (MANIFEST, HISTORY, ARCHIVE, SCALING, SPLIT)


@dataclass(frozen=True)
class ApproachSpec:
    id: str
    objective_set: tuple[str, ...]
    regularisation_mask: bool

    @property
    def cli_name(self) -> str:
        return self.id.lower().replace("_", "-")


# A single objective is encoded as a duplicated pair so the same
# two-objective machinery runs unchanged.
APPROACHES = {
    "GA_I": ApproachSpec("GA_I", ("MARE", "MARE"), False),
    "GA_II": ApproachSpec("GA_II", ("MARE", "MaxARE"), False),
    "GA_III": ApproachSpec("GA_III", ("MFME", "MARE"), True),
    "GA_IV": ApproachSpec("GA_IV", ("MARE", "MaxARE"), True),
}


def approach(name: str) -> ApproachSpec:
    key = name.upper().replace("-", "_")
    if key not in APPROACHES:
        raise ConfigError(f"unknown approach {name!r}; choose from "
                          f"{', '.join(a.cli_name for a in APPROACHES.values())}")
    return APPROACHES[key]


@dataclass
class RunManifest:
    approach: str
    ga: dict
    training: dict
    data_source: dict
    data_options: dict
    seed: int
    tool_version: str = __version__
    backend: str = ""
    started: str = ""
    finished: str = ""
    outputs: dict = field(default_factory=dict)
    notes: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> RunManifest:
        try:
            return cls(**json.loads(text))
        except (TypeError, json.JSONDecodeError) as exc:
            raise ConfigError(f"invalid run manifest: {exc}") from None

    @classmethod
    def load(cls, path) -> RunManifest:
        try:
            return cls.from_json(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read manifest {path}: {exc.strerror}") from None

    def run_config(self) -> RunConfig:
        from .config import config_from_dict
        cfg = config_from_dict({"ga": self.ga, "training": self.training, "data": self.data_options})
        return cfg


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def describe_source(data_source) -> dict:
    """Manifest entry for a synthetic config or a CSV path."""
    if isinstance(data_source, SyntheticConfig):
        return {"kind": "synthetic", "config": asdict(data_source)}
    path = Path(data_source)
    if not path.is_file():
        raise DataError(f"data file {path} does not exist")
    return {"kind": "csv", "path": str(path.resolve()), "sha256": _sha256(path)}


def load_source(source: dict, options: DataOptions) -> Records:
    if source["kind"] == "synthetic":
        return generate_synthetic(synthetic_config_from_dict(source["config"]))
    if source["kind"] != "csv":
        raise ConfigError(f"unknown data source kind {source['kind']!r}")
    path = Path(source["path"])
    if not path.is_file():
        raise DataError(f"data file {path} does not exist")
    if source.get("sha256") and _sha256(path) != source["sha256"]:
        raise DataError(f"{path} has changed since the manifest was written")
    records, _ = load_csv(path, options.column_map)
    return records


def _check_out_dir(out_dir: Path):
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out_dir}: {exc.strerror}") from None
    if not os.access(out_dir, os.W_OK):
        raise ConfigError(f"output directory {out_dir} is not writable")
    if (out_dir / ARCHIVE).exists() or (out_dir / MANIFEST).exists():
        raise ConfigError(f"{out_dir} already holds a run; choose a fresh directory")


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _write_rows(path: Path, rows, header=None):
    header = header or (list(rows[0].keys()) if rows else [])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(row.get(h, "")) for h in header])


def _eval_row(e, model_path=""):
    cfg = e.config
    row = {"generation": e.generation, "index": e.index}
    for k, name in enumerate(e.objectives.names):
        row[f"obj{k}_{name}"] = e.objectives.values[k]
    row.update({"hidden_layers": cfg.hidden_layers,
                "neurons": "x".join(str(n) for n in cfg.neurons_per_layer),
                "activation": cfg.activation, "optimizer": cfg.optimizer,
                "l1_rate": cfg.l1_rate, "l2_rate": cfg.l2_rate, "dropout_rate": cfg.dropout_rate,
                "epochs": e.epochs})
    row.update({f"g_{n}": float(v) for n, v in zip(GENE_NAMES, e.genome)})
    row["model"] = model_path
    return row


def build_context(prepared_split: DataSplit, schedule: TrainingSchedule,
                  options: DataOptions) -> DataContext:
    return DataContext.from_split(prepared_split, schedule, options.n_bins, options.min_count,
                                  options.sweep_points, INPUT_FIELDS)


def run_approach(spec: ApproachSpec, run_config: RunConfig, data_source, seed: int, out_dir,
                 progress=None, trainer=None) -> RunManifest:
    """Prepare data, run the search and write the run directory.

    ``data_source`` is a :class:`SyntheticConfig`, a CSV path, or a manifest
    ``data_source`` dict. Configuration and output problems are raised
    before any training starts.
    """
    out_dir = Path(out_dir)
    ga = GARunConfig(**{**asdict(run_config.ga),
                        "objective_set": spec.objective_set,
                        "regularisation_mask": spec.regularisation_mask})
    source = data_source if isinstance(data_source, dict) else describe_source(data_source)
    _check_out_dir(out_dir)

    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    opts = run_config.data
    records = load_source(source, opts)
    split_seed = seed if opts.split_seed is None else opts.split_seed
    prepared = prepare(records, split_seed, opts.system_status)
    ctx = build_context(prepared.split, run_config.training, opts)
    log.info("%s: %d rows -> %s train/val/test", spec.id, prepared.source_rows,
             "/".join(map(str, prepared.split.sizes())))

    result = evolve(ga, ctx, seed, trainer=trainer, progress=progress)

    models_dir = out_dir / MODELS
    models_dir.mkdir(exist_ok=True)
    archive = sorted(result.archive, key=lambda e: (tuple(e.objectives.values), e.generation, e.index))
    rows = []
    for rank, e in enumerate(archive):
        rel = f"{MODELS}/archive_{rank:03d}.npz"
        save_model(e.model, out_dir / rel)
        rows.append({"rank": rank, **_eval_row(e, rel)})
    _write_rows(out_dir / ARCHIVE, rows)

    final_rows = []
    for i, e in enumerate(result.final_population):
        if e.failed or e.model is None:
            continue
        rel = f"{MODELS}/final_{i:03d}.npz"
        save_model(e.model, out_dir / rel)
        final_rows.append(_eval_row(e, rel))
    _write_rows(out_dir / "final_population.csv", final_rows)

    _write_rows(out_dir / HISTORY, result.history)
    _write_rows(out_dir / EVALUATIONS, result.evaluations)
    (out_dir / SCALING).write_text(prepared.scaling.to_json())
    med_rows = [r for t in ctx.tables for r in t.csv_rows()]
    _write_rows(out_dir / MEDIANS, med_rows, list(MEDIAN_CSV_FIELDS))
    sp = prepared.split
    np.savez(out_dir / SPLIT,
             train_X=sp.train.inputs, train_y=sp.train.target,
             val_X=sp.validation.inputs, val_y=sp.validation.target,
             test_X=sp.test.inputs, test_y=sp.test.target)

    manifest = RunManifest(
        approach=spec.id,
        ga=asdict(ga),
        training=asdict(run_config.training),
        data_source=source,
        data_options=asdict(opts),
        seed=int(seed),
        backend=_backend.backend_name(),
        started=started,
        finished=time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        outputs={"archive": ARCHIVE, "history": HISTORY, "evaluations": EVALUATIONS,
                 "scaling": SCALING, "medians": MEDIANS, "split": SPLIT, "models": MODELS,
                 "final_population": "final_population.csv"},
        notes={"source_rows": prepared.source_rows, "split_sizes": list(sp.sizes()),
               "archive_size": len(archive)},
    )
    # written last so its presence marks a finished run
    (out_dir / MANIFEST).write_text(manifest.to_json())
    return manifest


def rerun(manifest: RunManifest, out_dir, workers: int | None = None, progress=None) -> RunManifest:
    cfg = manifest.run_config()
    if workers is not None:
        cfg.ga.workers = workers
    return run_approach(approach(manifest.approach), cfg, manifest.data_source, manifest.seed,
                        out_dir, progress=progress)
