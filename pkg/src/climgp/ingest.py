"""Loading, unit conversion and alignment of temperature series."""
import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    EmptySeries,
    InputError,
    MisalignedModels,
    MissingYears,
    NoOverlap,
    NonPositiveTemperature,
    UnknownUnit,
    ZeroStride,
)

UNITS = ("anomaly-celsius", "absolute-celsius", "kelvin")
ROLES = ("observed", "model")
ANOMALY_OFFSET = 14.0
KELVIN_OFFSET = 273.15


@dataclass(frozen=True)
class RawTemperatureSeries:
    start_year: int
    values: tuple
    unit: str
    label: str = ""

    def __post_init__(self):
        if self.unit not in UNITS:
            raise UnknownUnit(f"unknown unit {self.unit!r}; expected one of {', '.join(UNITS)}")
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))


@dataclass(frozen=True)
class LogTempSeries:
    """Natural log of temperature in degrees Celsius; ``x[t]`` is year ``start_year + t``."""

    start_year: int
    x: np.ndarray
    label: str = ""

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        x.setflags(write=False)
        object.__setattr__(self, "x", x)

    def __len__(self):
        return len(self.x)

    @property
    def end_year(self):
        return self.start_year + len(self.x) - 1

    @property
    def years(self):
        return np.arange(self.start_year, self.end_year + 1)

    def at_years(self, first, last):
        """Values for calendar years ``first..last`` inclusive."""
        if first < self.start_year or last > self.end_year:
            raise InputError(
                f"series {self.label!r} covers {self.start_year}-{self.end_year}, "
                f"requested {first}-{last}"
            )
        return self.x[first - self.start_year:last - self.start_year + 1]


def to_celsius(values, unit):
    v = np.asarray(values, dtype=float)
    if unit == "anomaly-celsius":
        return v + ANOMALY_OFFSET
    if unit == "kelvin":
        return v - KELVIN_OFFSET
    if unit == "absolute-celsius":
        return v
    raise UnknownUnit(f"unknown unit {unit!r}")


def convert_to_log_celsius(raw):
    if len(raw.values) == 0:
        raise EmptySeries(f"series {raw.label!r} is empty")
    celsius = to_celsius(raw.values, raw.unit)
    if not np.all(np.isfinite(celsius)):
        raise InputError(f"series {raw.label!r} has missing or non-finite values")
    bad = np.flatnonzero(celsius <= 0)
    if bad.size:
        year = raw.start_year + int(bad[0])
        raise NonPositiveTemperature(
            f"series {raw.label!r}: {celsius[bad[0]]:.4g} degC at year {year} cannot be logged"
        )
    return LogTempSeries(raw.start_year, np.log(celsius), raw.label)


def thin_series(x, stride):
    if stride < 1:
        raise ZeroStride("stride must be a positive integer")
    return LogTempSeries(x.start_year, x.x[::stride], x.label)


@dataclass(frozen=True)
class AlignedDataset:
    """Observed and model series placed on one integer time axis.

    Axis index ``t`` is calendar year ``origin_year + t``. ``T0`` is the index
    of the last observed year and ``T`` the index of the last model year.
    """

    observed: LogTempSeries
    models: tuple
    averaged: LogTempSeries
    T0: int
    T: int
    origin_year: int

    @property
    def K(self):
        return len(self.models)

    @property
    def horizon(self):
        """Number of years on the axis; scaled time is ``t / horizon``."""
        return self.T + 1

    def year(self, t):
        return self.origin_year + t

    def index(self, year):
        return year - self.origin_year

    def observed_segment(self):
        """``x0`` and the observed values for indices ``1..T0``."""
        x = self.observed.at_years(self.year(0), self.year(self.T0))
        return float(x[0]), x[1:].copy()

    def future_segment(self, series):
        """Known predecessor ``x_{T0}`` and values for indices ``T0+1..T``."""
        x = series.at_years(self.year(self.T0), self.year(self.T))
        return float(x[0]), x[1:].copy()

    def model_matrix(self):
        """``(years, K)`` matrix of model series over their common range."""
        return np.column_stack([m.x for m in self.models])


def average_series(models, label="averaged"):
    years = {(m.start_year, len(m)) for m in models}
    if len(years) != 1:
        raise MisalignedModels("model series do not share one year range")
    stacked = np.vstack([m.x for m in models])
    # deviations from the first series keep the average of identical copies exact
    base = stacked[0]
    return LogTempSeries(models[0].start_year, base + (stacked - base).mean(axis=0), label)


def build_aligned_dataset(observed, models, origin_year=None):
    """Convert, average and align raw series.

    Accepts raw series or already-converted :class:`LogTempSeries`. The axis
    origin defaults to the observed start year.
    """
    models = list(models)
    if not models:
        raise InputError("at least one model series is required")
    obs = observed if isinstance(observed, LogTempSeries) else convert_to_log_celsius(observed)
    mods = tuple(m if isinstance(m, LogTempSeries) else convert_to_log_celsius(m) for m in models)
    averaged = average_series(mods)
    if obs.start_year > mods[0].start_year:
        raise InputError("observed series must start no later than the model series")
    if obs.end_year < mods[0].start_year or obs.start_year > mods[0].end_year:
        raise NoOverlap(
            f"observed {obs.start_year}-{obs.end_year} and models "
            f"{mods[0].start_year}-{mods[0].end_year} do not overlap"
        )
    origin = obs.start_year if origin_year is None else int(origin_year)
    T0 = obs.end_year - origin
    T = mods[0].end_year - origin
    if not T0 < T:
        raise InputError("model series must extend beyond the last observed year")
    return AlignedDataset(obs, mods, averaged, T0, T, origin)


# ---------------------------------------------------------------------------
# files
# ---------------------------------------------------------------------------

def read_series_csv(path, unit, label=None, end_year=None, start_year=None):
    """Read a ``year,value`` CSV. Gaps and blank values are errors."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: file not found")
    years, values = [], []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"year", "value"} <= set(reader.fieldnames):
            raise InputError(f"{path}: header must contain 'year,value'")
        for lineno, row in enumerate(reader, start=2):
            try:
                year = int(row["year"])
            except (TypeError, ValueError):
                raise InputError(f"{path}:{lineno}: bad year {row['year']!r}") from None
            raw = (row["value"] or "").strip()
            try:
                value = float(raw)
            except ValueError:
                raise InputError(f"{path}:{lineno}: missing or bad value {raw!r}") from None
            if not math.isfinite(value):
                raise InputError(f"{path}:{lineno}: non-finite value")
            if start_year is not None and year < start_year:
                continue
            if end_year is not None and year > end_year:
                continue
            if years and year != years[-1] + 1:
                raise MissingYears(f"{path}:{lineno}: year {year} follows {years[-1]}")
            years.append(year)
            values.append(value)
    if not years:
        raise EmptySeries(f"{path}: no rows")
    return RawTemperatureSeries(years[0], values, unit, label or path.stem)


def load_manifest(path):
    """Parse a manifest and return ``(observed_raw, [model_raw, ...], origin_year)``."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: manifest not found")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None
    entries = doc.get("series")
    if not isinstance(entries, list) or not entries:
        raise InputError(f"{path}: manifest needs a non-empty 'series' list")
    observed, models = None, []
    for i, entry in enumerate(entries):
        where = f"{path}: series[{i}]"
        unit = entry.get("unit")
        if unit not in UNITS:
            raise UnknownUnit(f"{where}: unknown unit {unit!r}; expected one of {', '.join(UNITS)}")
        role = entry.get("role")
        if role not in ROLES:
            raise InputError(f"{where}: role must be 'observed' or 'model', got {role!r}")
        if "path" not in entry:
            raise InputError(f"{where}: missing 'path'")
        file = Path(entry["path"])
        if not file.is_absolute():
            file = path.parent / file
        raw = read_series_csv(
            file, unit, entry.get("label"),
            end_year=entry.get("end_year"), start_year=entry.get("start_year"),
        )
        if role == "observed":
            if observed is not None:
                raise InputError(f"{where}: more than one observed series")
            observed = raw
        else:
            models.append(raw)
    return observed, models, doc.get("origin_year")


def dataset_to_dict(ds):
    def ser(s):
        return {"label": s.label, "start_year": s.start_year, "x": s.x.tolist()}

    return {
        "origin_year": ds.origin_year,
        "T0": ds.T0,
        "T": ds.T,
        "observed": ser(ds.observed),
        "models": [ser(m) for m in ds.models],
        "averaged": ser(ds.averaged),
    }


def dataset_from_dict(d):
    def de(s):
        return LogTempSeries(int(s["start_year"]), np.asarray(s["x"], dtype=float), s.get("label", ""))

    return build_aligned_dataset(de(d["observed"]), [de(m) for m in d["models"]], d.get("origin_year"))
