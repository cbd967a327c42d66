"""Raw flight files -> modelling dataset.

Steps: unit conversion, spline smoothing (values and time derivatives),
stable-interval segmentation, periodic sampling, target computation, split.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import physics
from .core import (
    FT_TO_M, KT_TO_MS, RAW_COLUMNS, SECONDS_PER_HOUR, ZERO_CELSIUS_K,
    Config, Dataset, EngineParams, FlightFrame, FlightState, Observation,
    PipelineConfig, SplitSet, read_table, validate_frame,
)
from .smoothing import SmoothedSeries, smooth

log = logging.getLogger(__name__)

SMOOTHED_CHANNELS = ("altitude", "tas", "mach", "alpha", "gamma", "mass",
                     "fuel_flow", "sat", "heading", "wind")


class SchemaError(ValueError):
    pass


# --- ingestion -----------------------------------------------------------------

def read_raw_csv(path: str | Path) -> dict[str, list[str]]:
    header, rows = read_table(path)
    missing = [c for c in RAW_COLUMNS if c not in header]
    if missing:
        raise SchemaError(f"{path}: missing columns {missing}")
    pos = {c: header.index(c) for c in RAW_COLUMNS}
    out = {c: [] for c in RAW_COLUMNS}
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise SchemaError(f"{path}: row {i + 1} has {len(row)} cells, expected {len(header)}")
        for c in RAW_COLUMNS:
            out[c].append(row[pos[c]])
    return out


def _parse(col: str, cells: Sequence) -> np.ndarray:
    out = np.empty(len(cells))
    for i, cell in enumerate(cells):
        if isinstance(cell, str):
            cell = cell.strip()
            if cell == "":
                out[i] = np.nan
                continue
            try:
                out[i] = float(cell)
            except ValueError:
                raise SchemaError(f"row {i + 1}, column {col}: cannot parse {cell!r}") from None
        else:
            out[i] = np.nan if cell is None else float(cell)
    return out


def _unwrap_valid(angle: np.ndarray, valid: np.ndarray) -> np.ndarray:
    out = np.full_like(angle, np.nan)
    out[valid] = np.unwrap(angle[valid])
    return out


def to_si(raw: Mapping[str, Sequence], flight_id: str = "") -> FlightFrame:
    """Convert raw aeronautic-unit columns to an SI ``FlightFrame``.

    Rows with any empty cell are kept on the grid but flagged invalid.
    """
    missing = [c for c in RAW_COLUMNS if c not in raw]
    if missing:
        raise SchemaError(f"missing columns {missing}")
    col = {c: _parse(c, raw[c]) for c in RAW_COLUMNS}
    valid = np.all([np.isfinite(col[c]) for c in RAW_COLUMNS], axis=0)

    altitude = col["alt_ft"] * FT_TO_M
    sat = col["sat_c"] + ZERO_CELSIUS_K
    rho = np.full_like(altitude, np.nan)
    ok = valid & (sat > 0)
    rho[ok] = physics.isa_density(altitude[ok], sat[ok])
    return FlightFrame(
        time=col["time_s"],
        altitude=altitude,
        tas=col["tas_kt"] * KT_TO_MS,
        mach=col["mach"],
        alpha=np.radians(col["aoa_deg"]),
        gamma=np.radians(col["pitch_deg_or_gamma_deg"]),
        mass=col["mass_kg"],
        fuel_flow=col["ff_kgph"] / SECONDS_PER_HOUR,
        sat=sat,
        rho=rho,
        heading=_unwrap_valid(np.radians(col["heading_deg"]), valid),
        wind=col["wind_kt"] * KT_TO_MS,
        valid=valid,
        flight_id=flight_id,
    )


def valid_runs(frame: FlightFrame, min_len: int = 4) -> list[tuple[int, int]]:
    """Maximal [start, stop) runs of valid samples; gaps are never filled."""
    v = np.concatenate(([False], frame.valid, [False]))
    edges = np.flatnonzero(np.diff(v.astype(int)))
    runs = [(int(a), int(b)) for a, b in zip(edges[::2], edges[1::2])]
    return [r for r in runs if r[1] - r[0] >= min_len]


# --- smoothing -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SmoothedFlight:
    frame: FlightFrame
    series: dict[str, SmoothedSeries]

    @property
    def time(self) -> np.ndarray:
        return self.frame.time

    def values(self, channel: str, t=None):
        return self.series[channel](self.time if t is None else t)

    def rate(self, channel: str, t=None):
        return self.series[channel].derivative(self.time if t is None else t)

    def state_at(self, t) -> FlightState:
        v = {c: self.values(c, t) for c in SMOOTHED_CHANNELS}
        return FlightState(
            rho=physics.isa_density(v["altitude"], v["sat"]),
            tas=v["tas"], alpha=v["alpha"], fuel_flow=v["fuel_flow"], sat=v["sat"],
            altitude=v["altitude"], mach=v["mach"], mass=v["mass"], gamma=v["gamma"],
            tas_rate=self.rate("tas", t), gamma_rate=self.rate("gamma", t),
        )


def smooth_frame(frame: FlightFrame, penalty: str | float = "gcv") -> SmoothedFlight:
    if not np.all(frame.valid):
        raise ValueError("smooth_frame needs a fully valid frame; split at gaps first")
    series = {c: smooth(frame.time, getattr(frame, c), penalty) for c in SMOOTHED_CHANNELS}
    return SmoothedFlight(frame, series)


# --- segmentation --------------------------------------------------------------

@dataclass(frozen=True)
class StableInterval:
    flight_id: str
    start_s: float
    end_s: float
    phase: str
    altitude_std: float
    heading_std: float
    wind_rate_mean: float
    wind_rate_std: float

    @property
    def length_s(self) -> float:
        return self.end_s - self.start_s


@dataclass(frozen=True)
class RejectedSpan:
    flight_id: str
    start_s: float
    end_s: float
    reasons: tuple[str, ...]


@dataclass(frozen=True)
class WindowStats:
    start: np.ndarray  # first sample index of each window
    stop: np.ndarray   # one past the last sample index
    altitude_mean: np.ndarray
    altitude_std: np.ndarray
    heading_std: np.ndarray
    wind_rate_mean: np.ndarray
    wind_rate_std: np.ndarray


def window_stats(sf: SmoothedFlight, config: PipelineConfig) -> WindowStats:
    w, step = int(config.window_s), int(config.window_step_s)
    n = len(sf.time)
    if n < w:
        empty = np.empty(0)
        return WindowStats(empty.astype(int), empty.astype(int), *(empty,) * 5)

    def win(a):
        return sliding_window_view(a, w)[::step]

    alt = win(sf.values("altitude"))
    head = win(sf.values("heading"))
    wind_rate = win(sf.rate("wind"))
    start = np.arange(0, n - w + 1, step)
    return WindowStats(start, start + w, alt.mean(axis=1), alt.std(axis=1), head.std(axis=1),
                       np.abs(wind_rate.mean(axis=1)), wind_rate.std(axis=1))


def _failures(ws: WindowStats, config: PipelineConfig, check_altitude: bool) -> dict[str, np.ndarray]:
    fails = {
        "heading_std": ws.heading_std >= config.heading_std_max,
        "wind_rate_mean": ws.wind_rate_mean >= config.wind_rate_mean_max,
        "wind_rate_std": ws.wind_rate_std >= config.wind_rate_std_max,
    }
    if check_altitude:
        fails["altitude_std"] = ws.altitude_std >= config.altitude_std_max
    return fails


def _coverage(ws: WindowStats, n: int, mask: np.ndarray) -> np.ndarray:
    diff = np.zeros(n + 1, dtype=int)
    np.add.at(diff, ws.start[mask], 1)
    np.add.at(diff, ws.stop[mask], -1)
    return np.cumsum(diff)[:n]


def top_of_climb_descent(sf: SmoothedFlight, config: PipelineConfig,
                         ws: WindowStats | None = None) -> tuple[int, int] | None:
    """Sample indices of top of climb and top of descent, or None without a cruise level.

    A window is level when its altitude std passes the cruise threshold; cruise
    levels are level windows within ``cruise_band_m`` of the highest one.
    """
    ws = ws if ws is not None else window_stats(sf, config)
    level = ws.altitude_std < config.altitude_std_max
    if not np.any(level):
        return None
    top = ws.altitude_mean[level].max()
    cruise = level & (ws.altitude_mean >= top - config.cruise_band_m)
    idx = np.flatnonzero(cruise)
    return int(ws.start[idx[0]]), int(ws.stop[idx[-1]] - 1)


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    m = np.concatenate(([False], mask, [False]))
    edges = np.flatnonzero(np.diff(m.astype(int)))
    return [(int(a), int(b)) for a, b in zip(edges[::2], edges[1::2])]


def segment_details(sf: SmoothedFlight, config: PipelineConfig,
                    phase: str = "cruise") -> tuple[list[StableInterval], list[RejectedSpan]]:
    """Stable intervals plus the rejected spans (with reasons) inside the phase window.

    A sample is eligible when every sliding window covering it passes the
    thresholds; eligible runs longer than ``min_interval_s`` become intervals.
    """
    n = len(sf.time)
    t = sf.time
    fid = sf.frame.flight_id
    ws = window_stats(sf, config)
    if len(ws.start) == 0:
        return [], []

    in_phase = np.zeros(n, dtype=bool)
    marks = top_of_climb_descent(sf, config, ws)
    alt = sf.values("altitude")
    if phase == "cruise":
        if marks is not None:
            in_phase[marks[0]:marks[1] + 1] = True
    elif phase == "climb":
        above = np.flatnonzero(alt >= config.climb_floor_m - config.altitude_std_max)
        if above.size:
            end = marks[0] if marks is not None else n
            in_phase[above[0]:end] = True
    else:
        raise ValueError(f"unknown phase {phase!r}")

    fails = _failures(ws, config, check_altitude=(phase == "cruise"))
    bad = np.zeros(len(ws.start), dtype=bool)
    for f in fails.values():
        bad |= f
    covered = _coverage(ws, n, np.ones(len(ws.start), dtype=bool))
    n_bad = _coverage(ws, n, bad)
    eligible = in_phase & (covered > 0) & (n_bad == 0)

    intervals, rejected = [], []
    for a, b in _runs(eligible):
        start_s, end_s = float(t[a]), float(t[b - 1])
        touching = (ws.start < b) & (ws.stop > a)
        if end_s - start_s > config.min_interval_s:
            intervals.append(StableInterval(
                fid, start_s, end_s, phase,
                float(ws.altitude_std[touching].max()), float(ws.heading_std[touching].max()),
                float(ws.wind_rate_mean[touching].max()), float(ws.wind_rate_std[touching].max()),
            ))
        else:
            rejected.append(RejectedSpan(fid, start_s, end_s, ("too_short",)))
    for a, b in _runs(in_phase & ~eligible):
        touching = (ws.start < b) & (ws.stop > a)
        reasons = tuple(k for k, f in fails.items() if np.any(f & touching)) or ("uncovered",)
        rejected.append(RejectedSpan(fid, float(t[a]), float(t[b - 1]), reasons))
    rejected.sort(key=lambda r: r.start_s)
    return intervals, rejected


def segment(sf: SmoothedFlight, config: PipelineConfig) -> list[StableInterval]:
    return segment_details(sf, config, "cruise")[0]


def segment_climb(sf: SmoothedFlight, config: PipelineConfig) -> list[StableInterval]:
    return segment_details(sf, config, "climb")[0]


# --- sampling and targets ---------------------------------------------------------

def sample_times(interval: StableInterval, period: float) -> np.ndarray:
    k = np.arange(int(math.floor(interval.length_s / period + 1e-9)) + 1)
    return interval.start_s + period * k


def sample(intervals: Sequence[StableInterval], sf: SmoothedFlight, params: EngineParams,
           period: float = 10.0) -> list[Observation]:
    obs: list[Observation] = []
    for iid, iv in enumerate(intervals):
        times = sample_times(iv, period)
        z = sf.state_at(times)
        cd = np.atleast_1d(physics.phi_cd(z, params))
        cl = np.atleast_1d(physics.phi_cl(z, params))
        for j, t in enumerate(times):
            zj = FlightState(**{k: float(np.asarray(v)[j]) for k, v in vars(z).items()})
            obs.append(Observation(iv.flight_id, iid, float(t), zj, float(cd[j]), float(cl[j])))
    return obs


# --- whole-flight pipeline ----------------------------------------------------------

@dataclass
class FlightReport:
    flight_id: str
    n_samples: int
    n_invalid_rows: int
    intervals: list[StableInterval] = field(default_factory=list)
    rejected: list[RejectedSpan] = field(default_factory=list)
    n_observations: int = 0
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "flight_id": self.flight_id,
            "n_samples": self.n_samples,
            "n_invalid_rows": self.n_invalid_rows,
            "n_intervals": len(self.intervals),
            "n_observations": self.n_observations,
            "error": self.error,
            "intervals": [[iv.start_s, iv.end_s] for iv in self.intervals],
            "rejected": [{"start_s": r.start_s, "end_s": r.end_s, "reasons": list(r.reasons)}
                         for r in self.rejected],
        }


def preprocess_frame(frame: FlightFrame, config: Config) -> tuple[list[Observation], FlightReport]:
    pipe = config.pipeline
    report = FlightReport(frame.flight_id, len(frame), int(np.sum(~frame.valid)))
    if report.n_invalid_rows:
        log.info("%s: %d rows with missing cells excluded", frame.flight_id, report.n_invalid_rows)
    problems = [v for v in validate_frame(frame) if v.field == "time" or v.index is None]
    if problems:
        report.error = f"{problems[0].field}: {problems[0].message} (index {problems[0].index})"
        return [], report
    obs: list[Observation] = []
    run_offset = 0
    for a, b in valid_runs(frame, min_len=max(4, pipe.window_s)):
        part = frame.slice(a, b)
        bad = validate_frame(part)
        if bad:
            report.error = f"sample {a + bad[0].index}: {bad[0].field} {bad[0].message}"
            return [], report
        sf = smooth_frame(part, pipe.spline_penalty)
        intervals, rejected = segment_details(sf, pipe, pipe.phase)
        found = sample(intervals, sf, config.engine, pipe.sampling_period_s)
        # interval ids are unique per flight across runs
        obs.extend(Observation(o.flight_id, o.interval_id + run_offset, o.time_s, o.state, o.cd, o.cl)
                   for o in found)
        run_offset += len(intervals)
        report.intervals.extend(intervals)
        report.rejected.extend(rejected)
    report.n_observations = len(obs)
    return obs, report


def preprocess_flights(frames: Sequence[FlightFrame], config: Config,
                       target: str = "cd") -> tuple[Dataset, list[FlightReport]]:
    all_obs, reports = [], []
    for frame in frames:
        obs, rep = preprocess_frame(frame, config)
        all_obs.extend(obs)
        reports.append(rep)
    return Dataset.from_observations(all_obs, target), reports


# --- splitting ---------------------------------------------------------------------

def split_sizes(n: int, fractions: Sequence[float]) -> tuple[int, int, int]:
    if n < 3:
        raise ValueError(f"need at least 3 observations to split, got {n}")
    n_val = max(1, int(round(fractions[1] * n)))
    n_test = max(1, int(round(fractions[2] * n)))
    return n - n_val - n_test, n_val, n_test


def split(dataset: Dataset | int, fractions: Sequence[float] = (0.7, 0.2, 0.1), seed: int = 0,
          by_flight: bool = False) -> SplitSet:
    """Uniform random train/validation/test partition, deterministic for a seed."""
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f <= 0 for f in fractions) or not math.isclose(sum(fractions), 1.0):
        raise ValueError("fractions must be three positive numbers summing to 1")
    n = dataset if isinstance(dataset, int) else len(dataset)
    n_train, n_val, _ = split_sizes(n, fractions)
    rng = np.random.default_rng(seed)
    if not by_flight:
        perm = rng.permutation(n)
        return SplitSet(np.sort(perm[:n_train]), np.sort(perm[n_train:n_train + n_val]),
                        np.sort(perm[n_train + n_val:]), seed)
    if isinstance(dataset, int):
        raise ValueError("per-flight splitting needs a Dataset")
    ids = dataset["flight_id"]
    flights = np.array(sorted(set(ids)), dtype=object)
    flights = flights[rng.permutation(len(flights))]
    parts: list[list[int]] = [[], [], []]
    targets = (n_train, n_train + n_val)
    count = 0
    for f in flights:
        members = np.flatnonzero(ids == f)
        slot = 0 if count < targets[0] else (1 if count < targets[1] else 2)
        parts[slot].extend(members.tolist())
        count += len(members)
    return SplitSet(*(np.sort(np.array(p, dtype=int)) for p in parts), seed)
