"""Ship-power records: ingestion, cleaning, scaling, splitting, sampling.

``generate_synthetic`` stands in for a proprietary vessel log. It produces
a dense speed cluster around a service speed with a sparse low-speed tail,
cubic speed-power behaviour, speed-dependent noise and a small population of
high-power outliers.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError

log = logging.getLogger(__name__)

INPUT_FIELDS = (
    "speed_through_water",
    "relative_wind_speed",
    "relative_wind_direction",
    "draught",
    "trim",
)
TARGET_FIELD = "shaft_power"
FIELDS = INPUT_FIELDS + (TARGET_FIELD,)
STATUS_FIELD = "system_status"
STATUSES = ("on", "off")

MIN_SHAFT_POWER = 0.05
MAX_SPEED = 35.0

TRAIN_FRACTION = 0.70
VALIDATION_FRACTION = 0.15
SAMPLE_SIZES = (35_000, 7_500, 7_500)


class Records:
    """Column-major record table; missing numeric values are NaN."""

    def __init__(self, values, status=None):
        values = np.asarray(values, dtype=float)
        if values.ndim != 2 or values.shape[1] != len(FIELDS):
            raise DataError(f"records need {len(FIELDS)} columns, got shape {values.shape}")
        if status is None:
            status = np.full(len(values), "off", dtype=object)
        self.values = values
        self.status = np.asarray(status, dtype=object)
        if len(self.status) != len(values):
            raise DataError("status column length does not match values")

    def __len__(self):
        return len(self.values)

    def __getitem__(self, idx):
        return Records(self.values[idx], self.status[idx])

    def __eq__(self, other):
        return (isinstance(other, Records)
                and np.array_equal(self.values, other.values, equal_nan=True)
                and np.array_equal(self.status, other.status))

    def column(self, name) -> np.ndarray:
        return self.values[:, FIELDS.index(name)]

    @property
    def inputs(self) -> np.ndarray:
        return np.ascontiguousarray(self.values[:, :len(INPUT_FIELDS)])

    @property
    def target(self) -> np.ndarray:
        return np.ascontiguousarray(self.values[:, -1])

    def with_status(self, status) -> Records:
        return self[self.status == status]

    @classmethod
    def concat(cls, parts) -> Records:
        parts = list(parts)
        return cls(np.vstack([p.values for p in parts]), np.concatenate([p.status for p in parts]))


def physical_mask(records: Records) -> np.ndarray:
    v = records.values
    ok = np.isfinite(v).all(axis=1)
    ok &= np.isin(records.status, STATUSES)
    with np.errstate(invalid="ignore"):
        speed = records.column("speed_through_water")
        direction = records.column("relative_wind_direction")
        power = records.column(TARGET_FIELD)
        ok &= (speed > 0) & (speed <= MAX_SPEED)
        ok &= records.column("relative_wind_speed") >= 0
        ok &= (direction >= 0) & (direction < 360)
        ok &= records.column("draught") > 0
        ok &= (power >= 0) & (power <= 1)
        ok &= power >= MIN_SHAFT_POWER
    return ok


def clean(records: Records) -> Records:
    """Drop missing, non-finite or non-physical rows and low-power rows."""
    out = records[physical_mask(records)]
    if len(out) == 0:
        raise DataError("cleaning removed every record")
    dropped = len(records) - len(out)
    if dropped:
        log.info("cleaning dropped %d of %d records", dropped, len(records))
    return out


@dataclass
class ScalingManifest:
    """Per-field scaling. Inputs are min-max scaled; the target is divided by
    its maximum so it stays strictly positive for relative errors."""
    fields: tuple[str, ...]
    minimum: list[float]
    maximum: list[float]
    constant: list[bool]

    def _coeffs(self):
        lo = np.array(self.minimum)
        hi = np.array(self.maximum)
        const = np.array(self.constant)
        offset = lo.copy()
        scale = np.where(const, 1.0, hi - lo)
        t = self.fields.index(TARGET_FIELD)
        offset[t] = 0.0
        scale[t] = hi[t] if hi[t] != 0 else 1.0
        return offset, scale, const, t

    def apply(self, records: Records) -> Records:
        offset, scale, const, t = self._coeffs()
        out = (records.values - offset) / scale
        fill = const.copy()
        fill[t] = False
        out[:, fill] = 0.5
        return Records(out, records.status.copy())

    def invert(self, records: Records) -> Records:
        offset, scale, const, t = self._coeffs()
        out = records.values * scale + offset
        fill = const.copy()
        fill[t] = False
        out[:, fill] = np.array(self.minimum)[fill]
        return Records(out, records.status.copy())

    def invert_target(self, y):
        return np.asarray(y) * self._coeffs()[1][self.fields.index(TARGET_FIELD)]

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_json(cls, text) -> ScalingManifest:
        d = json.loads(text)
        d["fields"] = tuple(d["fields"])
        return cls(**d)


def normalize(records: Records) -> tuple[Records, ScalingManifest]:
    if len(records) == 0:
        raise DataError("cannot normalize an empty record set")
    lo = records.values.min(axis=0)
    hi = records.values.max(axis=0)
    manifest = ScalingManifest(FIELDS, lo.tolist(), hi.tolist(), (lo == hi).tolist())
    return manifest.apply(records), manifest


@dataclass
class DataSplit:
    train: Records
    validation: Records
    test: Records
    seed: int

    def sizes(self):
        return len(self.train), len(self.validation), len(self.test)


def split(records: Records, seed: int) -> DataSplit:
    n = len(records)
    if n < 10:
        raise DataError("need at least 10 records to split")
    order = np.random.default_rng(seed).permutation(n)
    n_train = round(TRAIN_FRACTION * n)
    n_val = round(VALIDATION_FRACTION * n)
    return DataSplit(
        records[order[:n_train]],
        records[order[n_train:n_train + n_val]],
        records[order[n_train + n_val:]],
        seed,
    )


def subsample_indices(pool_sizes, seed, sizes=SAMPLE_SIZES):
    """Without-replacement index draws per pool; small pools are used whole."""
    rng = np.random.default_rng(seed)
    out = []
    for n, quota in zip(pool_sizes, sizes):
        if n <= quota:
            out.append(np.arange(n))
        else:
            out.append(np.sort(rng.choice(n, size=quota, replace=False)))
    return out


def subsample(data: DataSplit, seed: int, sizes=SAMPLE_SIZES) -> DataSplit:
    idx = subsample_indices(data.sizes(), seed, sizes)
    return DataSplit(data.train[idx[0]], data.validation[idx[1]], data.test[idx[2]], seed)


@dataclass
class SyntheticConfig:
    n_points: int = 20_000
    cubic_coefficient: float = 1.0
    service_speed: float = 19.0
    service_speed_sd: float = 0.7
    speed_mixture: tuple[float, float] = (0.84, 0.16)
    tail_speed_range: tuple[float, float] = (6.0, 21.0)
    noise_scale: float = 0.04
    noise_speed_exponent: float = 6.0
    idiosyncratic_fraction: float = 0.04
    idiosyncratic_range: tuple[float, float] = (0.05, 0.35)
    wind_coefficient: float = 0.08
    draught_coefficient: float = 0.6
    trim_coefficient: float = 0.05
    system_on_fraction: float = 0.0
    system_saving: float = 0.06
    seed: int = 0

    def __post_init__(self):
        self.speed_mixture = tuple(self.speed_mixture)
        self.tail_speed_range = tuple(self.tail_speed_range)
        self.idiosyncratic_range = tuple(self.idiosyncratic_range)
        if self.n_points < 1:
            raise ConfigError("n_points must be positive")
        if len(self.speed_mixture) != 2 or min(self.speed_mixture) < 0 \
                or not math.isclose(sum(self.speed_mixture), 1.0):
            raise ConfigError("speed_mixture must be two nonnegative weights summing to 1")
        if self.noise_scale < 0 or self.service_speed_sd < 0:
            raise ConfigError("noise scales must be >= 0")
        if not 0 <= self.idiosyncratic_fraction <= 1 or not 0 <= self.system_on_fraction <= 1:
            raise ConfigError("fractions must lie in [0, 1]")
        lo, hi = self.tail_speed_range
        if not 0 < lo < hi <= MAX_SPEED:
            raise ConfigError("tail_speed_range must satisfy 0 < lo < hi <= 35")


def _synthetic_raw(config: SyntheticConfig):
    rng = np.random.default_rng(config.seed)
    n = config.n_points
    in_cluster = rng.random(n) < config.speed_mixture[0]
    speed = np.where(
        in_cluster,
        rng.normal(config.service_speed, config.service_speed_sd, n),
        rng.uniform(*config.tail_speed_range, n),
    )
    speed = np.clip(speed, 0.5, MAX_SPEED)
    wind = np.minimum(8.0 * rng.weibull(2.0, n), 40.0)
    direction = rng.uniform(0.0, 360.0, n)
    draught = rng.normal(10.5, 0.6, n)
    trim = rng.normal(0.3, 0.4, n)
    system_on = rng.random(n) < config.system_on_fraction

    power = config.cubic_coefficient * speed ** 3
    power = power * (1 + config.wind_coefficient * (wind / 10.0) ** 2 * np.cos(np.radians(direction)))
    power = power * (1 + config.draught_coefficient * (draught - 10.5) / 10.5)
    power = power * (1 + config.trim_coefficient * trim ** 2)
    power = power * np.where(system_on, 1 - config.system_saving, 1.0)

    rel_sd = config.noise_scale * (speed / config.service_speed) ** config.noise_speed_exponent
    power = power * (1 + rel_sd * rng.standard_normal(n))
    # pitch-change events cluster near service speed
    pitch_rate = config.idiosyncratic_fraction * (speed / config.service_speed) ** config.noise_speed_exponent
    pitch = rng.random(n) < np.minimum(pitch_rate, 1.0)
    power = power * (1 + pitch * rng.uniform(*config.idiosyncratic_range, n))
    power = np.maximum(power, 0.0)

    values = np.column_stack([speed, wind, direction, draught, trim, power / power.max()])
    status = np.where(system_on, "on", "off").astype(object)
    return Records(values, status)


def generate_synthetic(config: SyntheticConfig) -> Records:
    """Synthetic records with physical inputs and max-normalised power, cleaned."""
    return clean(_synthetic_raw(config))


def synthetic_config_from_dict(d) -> SyntheticConfig:
    try:
        return SyntheticConfig(**(d or {}))
    except TypeError as exc:
        raise ConfigError(f"bad synthetic config: {exc}") from None


DEFAULT_COLUMNS = {f: f for f in FIELDS + (STATUS_FIELD,)}


def load_csv(path, column_map=None) -> tuple[Records, int]:
    """Read records from a CSV with a header row.

    ``column_map`` maps record field names to CSV column names. Empty cells
    become missing values (dropped later by :func:`clean`); rows with
    unparseable text are skipped and counted. The status column is optional
    and defaults to ``off``.
    """
    mapping = dict(DEFAULT_COLUMNS)
    mapping.update(column_map or {})
    rows, statuses = [], []
    skipped = 0
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [mapping[f] for f in FIELDS if mapping[f] not in header]
        if missing:
            raise DataError(f"{path}: missing column(s) {', '.join(missing)}")
        status_col = mapping[STATUS_FIELD] if mapping[STATUS_FIELD] in header else None
        for row in reader:
            try:
                vals = [float(row[mapping[f]]) if (row[mapping[f]] or "").strip() else math.nan
                        for f in FIELDS]
            except ValueError:
                skipped += 1
                continue
            rows.append(vals)
            statuses.append((row[status_col] or "").strip().lower() if status_col else "off")
    if skipped:
        log.warning("%s: skipped %d unparseable row(s)", path, skipped)
    values = np.array(rows, dtype=float).reshape(-1, len(FIELDS))
    return Records(values, np.array(statuses, dtype=object)), skipped


def _fmt(x):
    return "" if math.isnan(x) else repr(float(x))


def write_csv(records: Records, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(FIELDS + (STATUS_FIELD,))
        for row, status in zip(records.values, records.status):
            w.writerow([_fmt(x) for x in row] + [status])
    return path


@dataclass
class PreparedData:
    """Cleaned, scaled and split data ready for the search."""
    split: DataSplit
    scaling: ScalingManifest
    source_rows: int
    notes: dict = field(default_factory=dict)


def prepare(records: Records, seed: int, system_status: str | None = "off") -> PreparedData:
    n0 = len(records)
    if system_status is not None:
        records = records.with_status(system_status)
    cleaned = clean(records)
    scaled, manifest = normalize(cleaned)
    return PreparedData(split(scaled, seed), manifest, n0)
