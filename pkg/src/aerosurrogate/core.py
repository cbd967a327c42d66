"""Domain types, constants, configuration and file I/O shared by every module."""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

# Unit conversions (ingestion only; everything downstream is SI).
FT_TO_M = 0.3048
KT_TO_MS = 0.514444
ZERO_CELSIUS_K = 273.15
SECONDS_PER_HOUR = 3600.0

R_AIR = 287.05  # J/(kg K)
KAPPA_AIR = 1.4
G0_ISA = 9.80665  # used for the ISA pressure law only

RAW_COLUMNS = (
    "time_s", "alt_ft", "tas_kt", "mach", "aoa_deg", "pitch_deg_or_gamma_deg",
    "mass_kg", "ff_kgph", "sat_c", "heading_deg", "wind_kt",
)

FRAME_FIELDS = (
    "time", "altitude", "tas", "mach", "alpha", "gamma", "mass",
    "fuel_flow", "sat", "rho", "heading", "wind",
)

DATASET_COLUMNS = (
    "flight_id", "interval_id", "time_s",
    "rho", "tas", "alpha", "fuel_flow", "sat", "altitude", "mach", "mass", "gamma",
    "tas_rate", "gamma_rate", "cd", "cl",
)


class ConfigError(ValueError):
    pass


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class FlightFrame:
    """Time-indexed telemetry of one flight in SI units.

    Angles in rad, speeds in m/s, temperatures in K, fuel flow in kg/s.
    ``valid`` flags samples whose raw row was complete.
    """
    time: np.ndarray
    altitude: np.ndarray
    tas: np.ndarray
    mach: np.ndarray
    alpha: np.ndarray
    gamma: np.ndarray
    mass: np.ndarray
    fuel_flow: np.ndarray
    sat: np.ndarray
    rho: np.ndarray
    heading: np.ndarray
    wind: np.ndarray
    valid: np.ndarray | None = None
    flight_id: str = ""

    def __post_init__(self):
        for name in FRAME_FIELDS:
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        valid = self.valid
        if valid is None:
            valid = np.ones(len(self.time), dtype=bool)
        valid = np.array(valid, dtype=bool)
        valid.setflags(write=False)
        object.__setattr__(self, "valid", valid)

    def __len__(self) -> int:
        return len(self.time)

    def slice(self, start: int, stop: int) -> "FlightFrame":
        kw = {name: getattr(self, name)[start:stop] for name in FRAME_FIELDS}
        return FlightFrame(**kw, valid=self.valid[start:stop], flight_id=self.flight_id)

    def replace(self, **changes) -> "FlightFrame":
        return dataclasses.replace(self, **changes)

    def equals(self, other: "FlightFrame") -> bool:
        if self.flight_id != other.flight_id or len(self) != len(other):
            return False
        same = all(np.array_equal(getattr(self, n), getattr(other, n), equal_nan=True)
                   for n in FRAME_FIELDS)
        return same and np.array_equal(self.valid, other.valid)


@dataclass(frozen=True)
class Violation:
    index: int | None
    field: str
    message: str


def validate_frame(frame: FlightFrame, dt: float = 1.0) -> list[Violation]:
    """Return every invariant violation of ``frame``; an empty list means valid."""
    out: list[Violation] = []
    n = len(frame.time)
    for name in FRAME_FIELDS:
        if len(getattr(frame, name)) != n:
            out.append(Violation(None, name, f"length {len(getattr(frame, name))} != {n}"))
    if len(frame.valid) != n:
        out.append(Violation(None, "valid", "mask length mismatch"))
    if out:
        return out

    steps = np.diff(frame.time)
    for i in np.flatnonzero(~np.isclose(steps, dt, rtol=0.0, atol=1e-9)):
        out.append(Violation(int(i + 1), "time", f"non-uniform grid: step {steps[i]!r} s"))

    ok = frame.valid
    checks = [
        ("tas", frame.tas > 0, "must be > 0"),
        ("rho", frame.rho > 0, "must be > 0"),
        ("mass", frame.mass > 0, "must be > 0"),
        ("sat", frame.sat > 0, "must be > 0"),
        ("mach", (frame.mach > 0) & (frame.mach < 1), "must lie in (0, 1)"),
    ]
    for name, good, msg in checks:
        for i in np.flatnonzero(ok & ~good):
            out.append(Violation(int(i), name, msg))
    for name in FRAME_FIELDS:
        for i in np.flatnonzero(ok & ~np.isfinite(getattr(frame, name))):
            out.append(Violation(int(i), name, "not finite"))
    out.sort(key=lambda v: (-1 if v.index is None else v.index, v.field))
    return out


@dataclass(frozen=True)
class PiecewiseLinear:
    """Continuous-domain piecewise linear function of altitude.

    Segment ``i`` covers ``[breakpoints[i], breakpoints[i+1])``; the last
    segment is closed on the right.
    """
    breakpoints: tuple[float, ...]
    slopes: tuple[float, ...]
    intercepts: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "breakpoints", tuple(float(b) for b in self.breakpoints))
        object.__setattr__(self, "slopes", tuple(float(s) for s in self.slopes))
        object.__setattr__(self, "intercepts", tuple(float(c) for c in self.intercepts))
        nseg = len(self.breakpoints) - 1
        if nseg < 1 or len(self.slopes) != nseg or len(self.intercepts) != nseg:
            raise ConfigError("piecewise function needs n+1 breakpoints for n segments")
        if any(b1 <= b0 for b0, b1 in zip(self.breakpoints, self.breakpoints[1:])):
            raise ConfigError("breakpoints must be strictly increasing")

    @classmethod
    def through(cls, breakpoints: Sequence[float], values: Sequence[float]) -> "PiecewiseLinear":
        """Build the continuous interpolant of ``values`` at ``breakpoints``."""
        b = np.asarray(breakpoints, float)
        v = np.asarray(values, float)
        slopes = np.diff(v) / np.diff(b)
        intercepts = v[:-1] - slopes * b[:-1]
        return cls(tuple(b), tuple(slopes), tuple(intercepts))

    @property
    def domain(self) -> tuple[float, float]:
        return self.breakpoints[0], self.breakpoints[-1]

    def segment_index(self, h) -> np.ndarray:
        h = np.asarray(h, float)
        lo, hi = self.domain
        if np.any(~((h >= lo) & (h <= hi))):
            bad = h[~((h >= lo) & (h <= hi))].ravel()[0]
            raise ValueError(f"altitude {bad!r} m outside piecewise domain [{lo}, {hi}]")
        idx = np.searchsorted(self.breakpoints, h, side="right") - 1
        return np.clip(idx, 0, len(self.slopes) - 1)

    def __call__(self, h):
        idx = self.segment_index(h)
        s = np.asarray(self.slopes)[idx]
        c = np.asarray(self.intercepts)[idx]
        out = s * np.asarray(h, float) + c
        return float(out) if np.ndim(out) == 0 else out

    def to_dict(self) -> dict:
        return {"breakpoints": list(self.breakpoints), "slopes": list(self.slopes),
                "intercepts": list(self.intercepts)}

    @classmethod
    def from_dict(cls, d: dict) -> "PiecewiseLinear":
        return cls(tuple(d["breakpoints"]), tuple(d["slopes"]), tuple(d["intercepts"]))


_PLACEHOLDER_BREAKS = (0.0, 6000.0, 11000.0, 13500.0)


@dataclass(frozen=True)
class EngineParams:
    """Engine and airframe constants of the fuel-consumption model.

    ``csr`` values are in kg/(N s). The shipped defaults are a
    NON-AUTHORITATIVE placeholder tuned to give a realistic cruise
    consumption (~1.7e-5 kg/(N s)); load real coefficients from a config file.
    """
    bypass_ratio: float = 6.0
    pressure_ratio: float = 31.0
    a1: PiecewiseLinear = PiecewiseLinear.through(_PLACEHOLDER_BREAKS, (1.25e-6, 1.20e-6, 1.15e-6, 1.15e-6))
    a2: PiecewiseLinear = PiecewiseLinear.through(_PLACEHOLDER_BREAKS, (3.6e-6, 3.7e-6, 3.8e-6, 3.8e-6))
    b1: PiecewiseLinear = PiecewiseLinear.through(_PLACEHOLDER_BREAKS, (1.10e-6, 1.05e-6, 1.00e-6, 1.00e-6))
    b2: PiecewiseLinear = PiecewiseLinear.through(_PLACEHOLDER_BREAKS, (4.4e-6, 4.6e-6, 4.8e-6, 4.8e-6))
    c: float = 1.0e-7
    sat0: float = 288.15
    wing_area: float = 122.6
    g: float = 9.81
    note: str = "placeholder parameter set, non-authoritative"

    def __post_init__(self):
        if not (self.sat0 > 0 and self.wing_area > 0 and self.g > 0):
            raise ConfigError("sat0, wing_area and g must be positive")
        domains = {f.domain for f in (self.a1, self.a2, self.b1, self.b2)}
        if len(domains) != 1:
            raise ConfigError("a1, a2, b1, b2 must share one altitude domain")

    @property
    def altitude_domain(self) -> tuple[float, float]:
        return self.a1.domain

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for k in ("a1", "a2", "b1", "b2"):
            d[k] = getattr(self, k).to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EngineParams":
        d = dict(d)
        for k in ("a1", "a2", "b1", "b2"):
            if k in d:
                d[k] = PiecewiseLinear.from_dict(d[k])
        return cls(**d)


@dataclass(frozen=True)
class PipelineConfig:
    # window thresholds; the defaults are this toolkit's choice
    altitude_std_max: float = 5.0
    heading_std_max: float = 0.01
    wind_rate_mean_max: float = 0.05
    wind_rate_std_max: float = 0.1
    min_interval_s: float = 10.0
    window_s: int = 60
    window_step_s: int = 10
    cruise_band_m: float = 1500.0
    climb_floor_m: float = 3000 * FT_TO_M
    sampling_period_s: float = 10.0
    spline_penalty: str | float = "gcv"
    split_fractions: tuple[float, float, float] = (0.7, 0.2, 0.1)
    split_by_flight: bool = False
    seed: int = 0
    phase: str = "cruise"
    csr_rel_error: float | None = 3.68e-2

    def __post_init__(self):
        object.__setattr__(self, "split_fractions", tuple(float(f) for f in self.split_fractions))
        positive = ("altitude_std_max", "heading_std_max", "wind_rate_mean_max",
                    "wind_rate_std_max", "min_interval_s", "window_s", "window_step_s",
                    "cruise_band_m", "sampling_period_s")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be strictly positive")
        fr = self.split_fractions
        if len(fr) != 3 or any(f <= 0 for f in fr) or not math.isclose(sum(fr), 1.0, abs_tol=1e-9):
            raise ConfigError("split fractions must be three positive numbers summing to 1")
        if self.phase not in ("cruise", "climb"):
            raise ConfigError(f"unknown phase {self.phase!r}")
        if isinstance(self.spline_penalty, str) and self.spline_penalty != "gcv":
            raise ConfigError("spline_penalty must be 'gcv' or a positive number")
        if not isinstance(self.spline_penalty, str) and not self.spline_penalty > 0:
            raise ConfigError("spline_penalty must be 'gcv' or a positive number")
        if self.csr_rel_error is not None and self.csr_rel_error < 0:
            raise ConfigError("csr_rel_error must be >= 0")

    @property
    def bounds_available(self) -> bool:
        # no reference fuel-consumption error level outside cruise
        return self.phase == "cruise" and self.csr_rel_error is not None


@dataclass(frozen=True)
class Config:
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    engine: EngineParams = field(default_factory=EngineParams)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {"pipeline": dataclasses.asdict(self.pipeline), "engine": self.engine.to_dict()}
        d["pipeline"]["split_fractions"] = list(self.pipeline.split_fractions)
        d.update(self.extra)
        return d

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_phase(self, phase: str) -> "Config":
        csr = self.pipeline.csr_rel_error if phase == "cruise" else None
        pipe = dataclasses.replace(self.pipeline, phase=phase, csr_rel_error=csr)
        return dataclasses.replace(self, pipeline=pipe)


def load_config(path: str | Path | None) -> Config:
    """Read a JSON config; missing sections fall back to defaults."""
    if path is None:
        return Config()
    with open(path) as fh:
        doc = json.load(fh)
    pipe = PipelineConfig(**doc.get("pipeline", {}))
    engine = EngineParams.from_dict(doc["engine"]) if "engine" in doc else EngineParams()
    extra = {k: v for k, v in doc.items() if k not in ("pipeline", "engine")}
    return Config(pipe, engine, extra)


def save_config(config: Config, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


@dataclass(frozen=True)
class FlightState:
    """The physical vector used by the inverse formulas, plus time derivatives.

    Fields may be scalars or equally shaped arrays.
    """
    rho: np.ndarray | float
    tas: np.ndarray | float
    alpha: np.ndarray | float
    fuel_flow: np.ndarray | float
    sat: np.ndarray | float
    altitude: np.ndarray | float
    mach: np.ndarray | float
    mass: np.ndarray | float
    gamma: np.ndarray | float
    tas_rate: np.ndarray | float = 0.0
    gamma_rate: np.ndarray | float = 0.0


@dataclass(frozen=True)
class Observation:
    flight_id: str
    interval_id: int
    time_s: float
    state: FlightState
    cd: float
    cl: float

    @property
    def x(self) -> tuple[float, float]:
        return (self.state.alpha, self.state.mach)


class Dataset:
    """Column store of observations; ``target`` selects ``cd`` or ``cl``."""

    def __init__(self, columns: dict[str, np.ndarray], target: str = "cd"):
        if target not in ("cd", "cl"):
            raise ValueError(f"target must be 'cd' or 'cl', got {target!r}")
        missing = [c for c in DATASET_COLUMNS if c not in columns]
        if missing:
            raise ValueError(f"dataset missing columns {missing}")
        n = {len(v) for v in columns.values()}
        if len(n) > 1:
            raise ValueError("dataset columns differ in length")
        self.columns = {}
        for c in DATASET_COLUMNS:
            v = np.asarray(columns[c], dtype=object if c == "flight_id" else None)
            if c == "flight_id":
                v = np.array([str(s) for s in v], dtype=object)
            elif c == "interval_id":
                v = v.astype(int)
            else:
                v = v.astype(float)
            v.setflags(write=False)
            self.columns[c] = v
        self.target = target

    @classmethod
    def from_observations(cls, obs: Iterable[Observation], target: str = "cd") -> "Dataset":
        obs = list(obs)
        cols: dict[str, list] = {c: [] for c in DATASET_COLUMNS}
        for o in obs:
            cols["flight_id"].append(o.flight_id)
            cols["interval_id"].append(o.interval_id)
            cols["time_s"].append(o.time_s)
            s = o.state
            for c in ("rho", "tas", "alpha", "fuel_flow", "sat", "altitude", "mach",
                      "mass", "gamma", "tas_rate", "gamma_rate"):
                cols[c].append(float(getattr(s, c)))
            cols["cd"].append(o.cd)
            cols["cl"].append(o.cl)
        return cls({k: np.array(v, dtype=object if k == "flight_id" else float)
                    if k != "interval_id" else np.array(v, dtype=int)
                    for k, v in cols.items()}, target)

    def __len__(self) -> int:
        return len(self.columns["time_s"])

    def __getitem__(self, name: str) -> np.ndarray:
        return self.columns[name]

    @property
    def X(self) -> np.ndarray:
        return np.column_stack([self["alpha"], self["mach"]])

    @property
    def y(self) -> np.ndarray:
        return self[self.target]

    def with_target(self, target: str) -> "Dataset":
        return Dataset(self.columns, target)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset({k: v[idx] for k, v in self.columns.items()}, self.target)

    def state(self) -> FlightState:
        return FlightState(**{c: self[c] for c in (
            "rho", "tas", "alpha", "fuel_flow", "sat", "altitude", "mach", "mass",
            "gamma", "tas_rate", "gamma_rate")})

    def equals(self, other: "Dataset") -> bool:
        return self.target == other.target and all(
            np.array_equal(self[c], other[c]) for c in DATASET_COLUMNS)


@dataclass(frozen=True)
class SplitSet:
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray
    seed: int

    def __post_init__(self):
        for name in ("train", "validation", "test"):
            a = np.array(getattr(self, name), dtype=int)
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def sizes(self) -> tuple[int, int, int]:
        return len(self.train), len(self.validation), len(self.test)


# --- CSV I/O -----------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return "" if math.isnan(v) else repr(v)


def write_rows(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def read_table(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file, header row required")
    return rows[0], rows[1:]


def write_dataset_csv(dataset: Dataset, path: str | Path) -> None:
    cols = [dataset[c] for c in DATASET_COLUMNS]
    write_rows(path, DATASET_COLUMNS, zip(*cols))


def read_dataset_csv(path: str | Path, target: str = "cd") -> Dataset:
    header, rows = read_table(path)
    missing = [c for c in DATASET_COLUMNS if c not in header]
    if missing:
        raise ValueError(f"{path}: missing columns {missing}")
    pos = {c: header.index(c) for c in DATASET_COLUMNS}
    cols = {}
    for c in DATASET_COLUMNS:
        raw = [r[pos[c]] for r in rows]
        if c == "flight_id":
            cols[c] = np.array(raw, dtype=object)
        elif c == "interval_id":
            cols[c] = np.array([int(v) for v in raw], dtype=int)
        else:
            cols[c] = np.array([float(v) for v in raw], dtype=float)
    return Dataset(cols, target)


def write_frame_csv(frame: FlightFrame, path: str | Path) -> None:
    """SI-unit frame dump (lossless)."""
    header = ("flight_id", *FRAME_FIELDS, "valid")
    cols = [getattr(frame, n) for n in FRAME_FIELDS]
    rows = ((frame.flight_id, *vals, int(ok)) for *vals, ok in zip(*cols, frame.valid))
    write_rows(path, header, rows)


def read_frame_csv(path: str | Path) -> FlightFrame:
    header, rows = read_table(path)
    pos = {h: i for i, h in enumerate(header)}
    kw = {n: np.array([float(r[pos[n]]) if r[pos[n]] else np.nan for r in rows])
          for n in FRAME_FIELDS}
    valid = np.array([r[pos["valid"]] == "1" for r in rows], dtype=bool)
    fid = rows[0][pos["flight_id"]] if rows else ""
    return FlightFrame(**kw, valid=valid, flight_id=fid)
