"""Dataset schema, CSV ingestion, weekly aggregation, scaling, and synthetic data.

The feature layout follows the benchmark convention: three phenology
columns (sowing/flowering/harvest day-of-year), four soil columns
(LL, DUL, SAT, BD), then six weather variables at weekly resolution,
variable-major (tmin_w1..tmin_wW, tmax_w1, ...). With the default
W = 45 weeks that is 3 + 4 + 6*45 = 277 feature columns.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

WEATHER_VARS = ("tmin", "tmax", "precip", "radiation", "rh", "wind")
SOIL_FEATURES = ("LL", "DUL", "SAT", "BD")
PHENOLOGY_FEATURES = ("sowing_doy", "flowering_doy", "harvest_doy")
META_COLUMNS = ("region_id", "year", "yield_t_ha")
DEFAULT_WEEKS = 45


class SchemaError(ValueError):
    """CSV header does not match the expected schema."""


class ParseError(ValueError):
    """A cell could not be parsed as a finite number."""

    def __init__(self, row: int, column: str, value: str):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(f"cannot parse {value!r} at row {row}, column {column!r}")


class DuplicateKeyError(ValueError):
    """Two rows share the same (region_id, year) pair."""


@dataclass(frozen=True)
class FeatureDescriptor:
    """Describes one feature column.

    Weather descriptors carry both ``weather_var`` and ``week_index``;
    soil and phenology descriptors carry neither.
    """

    name: str
    group: str  # weather | soil | phenology
    weather_var: str | None = None
    week_index: int | None = None

    def __post_init__(self):
        if self.group not in ("weather", "soil", "phenology"):
            raise ValueError(f"unknown feature group {self.group!r}")
        if self.group == "weather":
            if self.weather_var not in WEATHER_VARS:
                raise ValueError(f"{self.name}: weather descriptor needs a weather_var")
            if self.week_index is None or self.week_index < 1:
                raise ValueError(f"{self.name}: weather descriptor needs week_index >= 1")
        elif self.weather_var is not None or self.week_index is not None:
            raise ValueError(f"{self.name}: only weather descriptors carry var/week")


def weather_feature_name(var: str, week: int) -> str:
    return f"{var}_w{week}"


def default_descriptors(weeks: int = DEFAULT_WEEKS) -> tuple[FeatureDescriptor, ...]:
    """Canonical descriptor list: phenology, soil, then weather variable-major."""
    if weeks < 1:
        raise ValueError("weeks must be >= 1")
    out = [FeatureDescriptor(n, "phenology") for n in PHENOLOGY_FEATURES]
    out += [FeatureDescriptor(n, "soil") for n in SOIL_FEATURES]
    for var in WEATHER_VARS:
        for week in range(1, weeks + 1):
            out.append(FeatureDescriptor(weather_feature_name(var, week), "weather", var, week))
    return tuple(out)


@dataclass
class FeatureTable:
    """Instance rows (region, year, yield) by described feature columns.

    Invariants enforced on construction: no NaN/inf anywhere, descriptor
    names unique, column count equal to the descriptor count, and every
    (region_id, year) pair unique.
    """

    descriptors: tuple[FeatureDescriptor, ...]
    X: np.ndarray  # (n, d) float64
    y: np.ndarray  # (n,) float64, yield in t/ha
    region_id: np.ndarray  # (n,) str
    year: np.ndarray  # (n,) int

    def __post_init__(self):
        self.descriptors = tuple(self.descriptors)
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        self.region_id = np.asarray(self.region_id, dtype=str)
        self.year = np.asarray(self.year, dtype=np.int64)
        n, d = self.X.shape
        if d != len(self.descriptors):
            raise ValueError(f"X has {d} columns but {len(self.descriptors)} descriptors")
        if not (self.y.shape == self.region_id.shape == self.year.shape == (n,)):
            raise ValueError("row metadata lengths do not match X")
        names = [f.name for f in self.descriptors]
        if len(set(names)) != len(names):
            raise ValueError("duplicate feature names")
        if not np.all(np.isfinite(self.X)) or not np.all(np.isfinite(self.y)):
            raise ValueError("table contains NaN or infinite values")
        keys = list(zip(self.region_id.tolist(), self.year.tolist()))
        if len(set(keys)) != len(keys):
            raise DuplicateKeyError("duplicate (region_id, year) rows")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def feature_names(self) -> list[str]:
        return [f.name for f in self.descriptors]

    def column(self, name: str) -> int:
        try:
            return self.feature_names.index(name)
        except ValueError:
            raise KeyError(f"no feature named {name!r}") from None


def take_rows(table: FeatureTable, idx: np.ndarray) -> FeatureTable:
    idx = np.asarray(idx)
    return FeatureTable(table.descriptors, table.X[idx], table.y[idx],
                        table.region_id[idx], table.year[idx])


def take_features(table: FeatureTable, names: Sequence[str]) -> FeatureTable:
    """Reduced view keeping only the named features, in original column order."""
    wanted = set(names)
    missing = wanted - set(table.feature_names)
    if missing:
        raise KeyError(f"unknown features: {sorted(missing)}")
    cols = [i for i, f in enumerate(table.descriptors) if f.name in wanted]
    kept = tuple(table.descriptors[i] for i in cols)
    return FeatureTable(kept, table.X[:, cols], table.y, table.region_id, table.year)


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------

def load_table(path: str | Path, descriptors: Sequence[FeatureDescriptor]) -> FeatureTable:
    """Load a feature table from CSV.

    The header must contain exactly the meta columns (region_id, year,
    yield_t_ha) plus one column per descriptor, in any order. Row indices
    in errors are 0-based data rows (header excluded).
    """
    path = Path(path)
    descriptors = tuple(descriptors)
    expected = set(META_COLUMNS) | {f.name for f in descriptors}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        have = set(header)
        for name in META_COLUMNS + tuple(f.name for f in descriptors):
            if name not in have:
                raise SchemaError(f"{path}: missing column {name!r}")
        extra = have - expected
        if extra:
            raise SchemaError(f"{path}: unexpected columns {sorted(extra)}")
        if len(header) != len(have):
            raise SchemaError(f"{path}: repeated header columns")

        col_of = {name: header.index(name) for name in header}
        feat_cols = [col_of[f.name] for f in descriptors]

        rows, ys, regions, years = [], [], [], []
        for i, rec in enumerate(reader):
            if len(rec) != len(header):
                raise ParseError(i, "<row>", f"{len(rec)} fields, expected {len(header)}")
            regions.append(rec[col_of["region_id"]].strip())
            years.append(_parse_cell(rec, i, "year", col_of, integer=True))
            ys.append(_parse_cell(rec, i, "yield_t_ha", col_of))
            rows.append([_parse_cell_at(rec, i, descriptors[j].name, feat_cols[j])
                         for j in range(len(descriptors))])

    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return FeatureTable(descriptors, np.array(rows), np.array(ys),
                        np.array(regions), np.array(years, dtype=np.int64))


def _parse_cell(rec, row, name, col_of, integer=False):
    return _parse_cell_at(rec, row, name, col_of[name], integer)


def _parse_cell_at(rec, row, name, col, integer=False):
    raw = rec[col].strip()
    try:
        value = int(raw) if integer else float(raw)
    except ValueError:
        raise ParseError(row, name, raw) from None
    if not math.isfinite(value):
        raise ParseError(row, name, raw)
    return value


def write_table_csv(table: FeatureTable, path: str | Path) -> None:
    """Write a table in the canonical CSV layout (meta columns first)."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(META_COLUMNS) + table.feature_names)
        for i in range(table.n):
            writer.writerow([table.region_id[i], int(table.year[i]), repr(float(table.y[i]))]
                            + [repr(float(v)) for v in table.X[i]])


# ---------------------------------------------------------------------------
# Daily -> weekly aggregation
# ---------------------------------------------------------------------------

@dataclass
class DailyWeatherSeries:
    """Daily values for all six weather variables over one growing season."""

    values: Mapping[str, np.ndarray]
    season_start_doy: int = 1

    def __post_init__(self):
        missing = set(WEATHER_VARS) - set(self.values)
        if missing:
            raise ValueError(f"missing weather variables: {sorted(missing)}")
        self.values = {v: np.asarray(self.values[v], dtype=np.float64) for v in WEATHER_VARS}
        lengths = {a.shape[0] for a in self.values.values()}
        if len(lengths) != 1:
            raise ValueError("weather variables have unequal lengths")

    @property
    def n_days(self) -> int:
        return next(iter(self.values.values())).shape[0]


def aggregate_daily_to_weekly(series: DailyWeatherSeries, weeks: int) -> tuple[dict[str, np.ndarray], bool]:
    """Collapse daily series to ``weeks`` weekly means per variable.

    Week k (k < W) is the mean of days 7(k-1)+1 .. 7k. The final week
    absorbs any trailing remainder days. If the series is shorter than
    7*W days, the trailing weeks repeat the last observed weekly mean
    and the returned flag is True.
    """
    n = series.n_days
    if n == 0:
        raise ValueError("empty weather series")
    if n < 7:
        raise ValueError(f"series has {n} days; need at least one full week")
    if weeks < 1:
        raise ValueError("weeks must be >= 1")

    complete = n // 7
    padded = complete < weeks
    out: dict[str, np.ndarray] = {}
    for var, daily in series.values.items():
        weekly = np.empty(weeks)
        if complete >= weeks:
            # last week absorbs everything from day 7*(W-1) on
            for k in range(weeks - 1):
                weekly[k] = daily[7 * k: 7 * (k + 1)].mean()
            weekly[weeks - 1] = daily[7 * (weeks - 1):].mean()
        else:
            for k in range(complete - 1):
                weekly[k] = daily[7 * k: 7 * (k + 1)].mean()
            # remainder days (< 7) fold into the last complete week
            weekly[complete - 1] = daily[7 * (complete - 1):].mean()
            weekly[complete:] = weekly[complete - 1]
        out[var] = weekly
    return out, padded


# ---------------------------------------------------------------------------
# z-score scaling
# ---------------------------------------------------------------------------

@dataclass
class ScalerParams:
    """Per-feature mean/std fitted on the training rows only."""

    mean: np.ndarray
    std: np.ndarray
    constant_columns: np.ndarray  # bool, set exactly where std == 0

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist(),
                "constant_columns": self.constant_columns.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ScalerParams":
        return cls(np.array(d["mean"]), np.array(d["std"]),
                   np.array(d["constant_columns"], dtype=bool))


def fit_scaler(table: FeatureTable, fit_rows: np.ndarray | None = None) -> ScalerParams:
    """Fit per-feature mean and population std on ``fit_rows`` (default: all)."""
    X = table.X if fit_rows is None else table.X[np.asarray(fit_rows)]
    if X.shape[0] == 0:
        raise ValueError("fit_rows is empty")
    mean = X.mean(axis=0)
    std = X.std(axis=0)  # ddof=0 so scaled train columns have std exactly 1
    return ScalerParams(mean, std, std == 0.0)


def apply_scaler(table: FeatureTable, params: ScalerParams) -> FeatureTable:
    """Z-score the features; constant columns (std 0) map to 0."""
    safe = np.where(params.constant_columns, 1.0, params.std)
    Xs = (table.X - params.mean) / safe
    Xs[:, params.constant_columns] = 0.0
    return FeatureTable(table.descriptors, Xs, table.y, table.region_id, table.year)


def invert_scaler(table: FeatureTable, params: ScalerParams) -> FeatureTable:
    """Undo apply_scaler on non-constant columns; constant ones restore the mean."""
    safe = np.where(params.constant_columns, 0.0, params.std)
    X = table.X * safe + params.mean
    return FeatureTable(table.descriptors, X, table.y, table.region_id, table.year)


# ---------------------------------------------------------------------------
# Temporal hold-out split
# ---------------------------------------------------------------------------

def temporal_split(table: FeatureTable, test_year: int) -> tuple[FeatureTable, FeatureTable]:
    """Train on all years strictly before ``test_year``, test on it exactly.

    Years after the test year are dropped from both sides.
    """
    if not np.any(table.year == test_year):
        raise ValueError(f"test year {test_year} not present in table")
    train = take_rows(table, np.where(table.year < test_year)[0])
    test = take_rows(table, np.where(table.year == test_year)[0])
    return train, test


# ---------------------------------------------------------------------------
# Synthetic benchmark generator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InteractionTerm:
    """Centered product effect: coeff * (x_a - center_a) * (x_b - center_b)."""

    a: str
    b: str
    coeff: float
    center_a: float = 0.0
    center_b: float = 0.0


@dataclass(frozen=True)
class ThresholdTerm:
    """Hinge effect: coeff * max(0, x - threshold)."""

    feature: str
    threshold: float
    coeff: float


# weekly weather synthesis parameters: mean, seasonal amplitude, noise sd, floor
_WEATHER_CLIMATE = {
    "tmin": (4.0, 6.0, 1.5, None),
    "tmax": (12.0, 8.0, 1.5, None),
    "precip": (2.0, 0.8, 0.9, 0.0),
    "radiation": (12.0, 8.0, 1.5, 0.5),
    "rh": (78.0, 8.0, 3.0, None),
    "wind": (3.5, 1.0, 0.8, 0.3),
}


@dataclass(frozen=True)
class SynthSpec:
    """Seeded synthetic benchmark with a known ground-truth yield function.

    The target is base_yield + linear terms + interaction terms +
    threshold terms + Normal(0, noise_sigma). Features listed in
    ``null_features`` must not appear in any effect term; they exist to
    verify that attribution methods assign them no importance.
    """

    n_regions: int = 60
    years: tuple[int, ...] = tuple(range(2008, 2020))
    weeks: int = DEFAULT_WEEKS
    seed: int = 0
    noise_sigma: float = 0.25
    base_yield: float = 7.0
    linear_coeffs: tuple[tuple[str, float], ...] = ()
    interactions: tuple[InteractionTerm, ...] = ()
    thresholds: tuple[ThresholdTerm, ...] = ()
    null_features: tuple[str, ...] = ()

    def descriptors(self) -> tuple[FeatureDescriptor, ...]:
        return default_descriptors(self.weeks)

    def validate(self) -> None:
        names = {f.name for f in self.descriptors()}
        used: list[str] = [n for n, _ in self.linear_coeffs]
        for t in self.interactions:
            used += [t.a, t.b]
        for t in self.thresholds:
            used.append(t.feature)
        unknown = [n for n in used if n not in names]
        if unknown:
            raise ValueError(f"effect terms reference unknown features: {unknown}")
        if len(self.years) < 1 or self.n_regions < 1:
            raise ValueError("need at least one region and one year")
        clash = set(self.null_features) & set(used)
        if clash:
            raise ValueError(f"null features appear in effect terms: {sorted(clash)}")
        unknown_nulls = set(self.null_features) - names
        if unknown_nulls:
            raise ValueError(f"unknown null features: {sorted(unknown_nulls)}")


def default_synth_spec(n_regions: int = 60, years: Sequence[int] | None = None,
                       weeks: int = DEFAULT_WEEKS, seed: int = 0,
                       noise_sigma: float = 0.25) -> SynthSpec:
    """Benchmark spec with effect windows placed relative to the season length.

    The ground truth mixes linear weather/soil/phenology effects with a
    multi-week precipitation-by-DUL interaction (water supply times storage
    capacity) and hinge penalties on late-season tmax and early radiation,
    so linear models face an irreducible gap. The nonlinear effects span
    contiguous week windows rather than isolated weeks; single-week signals
    at this noise level drown in the weekly weather variance, and window
    averages are what the yield response plausibly integrates anyway.
    Four planted null features carry no effect.
    """
    if years is None:
        years = range(2008, 2020)

    def wk(frac: float) -> int:
        return min(weeks, max(1, round(frac * weeks)))

    rad = [weather_feature_name("radiation", wk(0.15) + o) for o in (-1, 0, 1)]
    tmin_win = [weather_feature_name("tmin", wk(0.70) + o) for o in (-1, 0)]
    linear = (
        ("harvest_doy", 0.015),
        ("flowering_doy", -0.008),
        ("DUL", 5.0),
        ("LL", -3.0),
        (weather_feature_name("wind", wk(0.22)), -0.10),
        (weather_feature_name("precip", wk(0.45)), 0.06),
        (rad[0], -0.025),
        (rad[1], -0.035),
        (rad[2], -0.025),
        (tmin_win[0], 0.030),
        (tmin_win[1], 0.030),
    )
    interactions = tuple(
        InteractionTerm(weather_feature_name("precip", w), "DUL",
                        coeff=4.0, center_a=2.0, center_b=0.27)
        for w in range(wk(0.40), wk(0.49) + 1)
    )
    thresholds = tuple(
        ThresholdTerm(weather_feature_name("tmax", w), threshold=14.0, coeff=-0.10)
        for w in range(wk(0.60), wk(0.73) + 1)
    ) + tuple(
        ThresholdTerm(weather_feature_name("radiation", w), threshold=13.0, coeff=-0.08)
        for w in range(wk(0.18), wk(0.27) + 1)
    )
    nulls = (
        "BD",
        weather_feature_name("rh", wk(0.05)),
        weather_feature_name("tmin", wk(0.10)),
        weather_feature_name("wind", wk(0.95)),
    )
    spec = SynthSpec(n_regions=n_regions, years=tuple(int(y) for y in years), weeks=weeks,
                     seed=seed, noise_sigma=noise_sigma, linear_coeffs=linear,
                     interactions=interactions, thresholds=thresholds, null_features=nulls)
    spec.validate()
    return spec


def generate_synthetic(spec: SynthSpec) -> FeatureTable:
    """Generate the synthetic table; a given SynthSpec always yields identical bytes."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    descriptors = spec.descriptors()
    W = spec.weeks
    n_rows = spec.n_regions * len(spec.years)

    # per-region constants
    soil = {
        "LL": rng.uniform(0.08, 0.16, spec.n_regions),
        "DUL": rng.uniform(0.20, 0.34, spec.n_regions),
        "SAT": rng.uniform(0.36, 0.50, spec.n_regions),
        "BD": rng.uniform(1.1, 1.6, spec.n_regions),
    }
    phase = rng.uniform(0.0, 52.0, spec.n_regions)

    X = np.empty((n_rows, len(descriptors)))
    regions, years_col = [], []
    week_grid = np.arange(1, W + 1)

    row = 0
    for r in range(spec.n_regions):
        rid = f"R{r:03d}"
        for yr in spec.years:
            regions.append(rid)
            years_col.append(yr)
            pheno = {
                "sowing_doy": float(np.clip(round(rng.normal(285, 8)), 244, 320)),
                "flowering_doy": float(np.clip(round(rng.normal(152, 7)), 121, 182)),
                "harvest_doy": float(np.clip(round(rng.normal(208, 7)), 182, 244)),
            }
            col = 0
            for name in PHENOLOGY_FEATURES:
                X[row, col] = pheno[name]
                col += 1
            for name in SOIL_FEATURES:
                X[row, col] = soil[name][r]
                col += 1
            for var in WEATHER_VARS:
                mu, amp, sd, floor = _WEATHER_CLIMATE[var]
                vals = mu + amp * np.sin(2 * np.pi * (week_grid + phase[r]) / 52.0)
                vals = vals + rng.normal(0.0, sd, W)
                if floor is not None:
                    vals = np.maximum(vals, floor)
                X[row, col: col + W] = vals
                col += W
            row += 1

    table = FeatureTable(descriptors, X, np.zeros(n_rows), np.array(regions),
                         np.array(years_col, dtype=np.int64))
    y = ground_truth_yield(spec, table)
    if spec.noise_sigma > 0:
        y = y + rng.normal(0.0, spec.noise_sigma, n_rows)
    return FeatureTable(descriptors, X, y, table.region_id, table.year)


def ground_truth_yield(spec: SynthSpec, table: FeatureTable) -> np.ndarray:
    """Evaluate the noiseless ground-truth function on a table's features."""
    g = np.full(table.n, spec.base_yield)
    for name, coeff in spec.linear_coeffs:
        g = g + coeff * table.X[:, table.column(name)]
    for t in spec.interactions:
        a = table.X[:, table.column(t.a)] - t.center_a
        b = table.X[:, table.column(t.b)] - t.center_b
        g = g + t.coeff * a * b
    for t in spec.thresholds:
        x = table.X[:, table.column(t.feature)]
        g = g + t.coeff * np.maximum(0.0, x - t.threshold)
    return g
