"""Synthetic flights with a known drag polar and a known fuel-consumption error.

Each 1 Hz step is trimmed quasi-statically: altitude and Mach schedules fix
the kinematics (V, dV/dt, gamma, dgamma/dt); the angle of attack solves the
normal force balance, thrust closes the longitudinal balance, and fuel flow is
``C_SR* T`` with ``C_SR* = csr * (1 + delta(t))``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.signal import lfilter

from . import physics
from .core import (
    FT_TO_M, KT_TO_MS, RAW_COLUMNS, SECONDS_PER_HOUR, ZERO_CELSIUS_K,
    EngineParams, FlightFrame, write_rows,
)

TRUTH_COLUMNS = ("time_s", "cd_true", "cl_true", "alpha_true_rad", "thrust_n")


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class GroundTruthPolar:
    """C_L = a0/sqrt(1-M^2) (alpha - alpha0); C_D = C_D0 + k C_L^2 + wave drag."""
    lift_slope: float = 4.07          # per rad, incompressible
    zero_lift_alpha: float = -0.035   # rad
    cd0: float = 0.018
    induced_k: float = 0.05
    mach_crit: float = 0.70
    wave_coeff: float = 20.0
    alpha_range: tuple[float, float] = (-0.1, 0.25)
    mach_range: tuple[float, float] = (0.2, 0.9)

    def cl(self, alpha, mach):
        return self.lift_slope / np.sqrt(1.0 - np.asarray(mach) ** 2) * (np.asarray(alpha) - self.zero_lift_alpha)

    def cd_from_cl(self, cl, mach):
        wave = self.wave_coeff * np.maximum(np.asarray(mach) - self.mach_crit, 0.0) ** 4
        return self.cd0 + self.induced_k * np.asarray(cl) ** 2 + wave


def oracle_eval(polar: GroundTruthPolar, alpha, mach):
    """Exact (C_D*, C_L*) of the generating polar."""
    a = np.asarray(alpha, float)
    m = np.asarray(mach, float)
    lo, hi = polar.alpha_range
    mlo, mhi = polar.mach_range
    if np.any((a < lo) | (a > hi)) or np.any((m < mlo) | (m > mhi)):
        raise ValueError("alpha or Mach outside the simulated range")
    cl = polar.cl(a, m)
    cd = polar.cd_from_cl(cl, m)
    if np.ndim(cd) == 0:
        return float(cd), float(cl)
    return cd, cl


# --- schedules -------------------------------------------------------------------------

def _quintic(x):
    s = x * x * x * (10.0 + x * (-15.0 + 6.0 * x))
    d1 = 30.0 * x * x * (1.0 - x) ** 2
    d2 = 60.0 * x * (1.0 - x) * (1.0 - 2.0 * x)
    return s, d1, d2


def waypoint_schedule(waypoints: Sequence[tuple[float, float]], t):
    """Value, first and second derivative of a C2 quintic blend through waypoints."""
    t = np.asarray(t, float)
    wt = np.array([w[0] for w in waypoints], float)
    wv = np.array([w[1] for w in waypoints], float)
    val = np.full_like(t, wv[0])
    d1 = np.zeros_like(t)
    d2 = np.zeros_like(t)
    val[t >= wt[-1]] = wv[-1]
    for i in range(len(wt) - 1):
        span = wt[i + 1] - wt[i]
        sel = (t >= wt[i]) & (t < wt[i + 1])
        x = (t[sel] - wt[i]) / span
        s, s1, s2 = _quintic(x)
        dv = wv[i + 1] - wv[i]
        val[sel] = wv[i] + dv * s
        d1[sel] = dv * s1 / span
        d2[sel] = dv * s2 / span ** 2
    return val, d1, d2


@dataclass(frozen=True)
class ClimbStep:
    start_s: float
    duration_s: float
    delta_m: float = 2000 * FT_TO_M

    def altitude(self, t):
        x = np.clip((np.asarray(t, float) - self.start_s) / self.duration_s, 0.0, 1.0)
        s, d1, d2 = _quintic(x)
        inside = (x > 0) & (x < 1)
        return (self.delta_m * s, np.where(inside, self.delta_m * d1 / self.duration_s, 0.0),
                np.where(inside, self.delta_m * d2 / self.duration_s ** 2, 0.0))


@dataclass(frozen=True)
class HeadingTurn:
    start_s: float
    duration_s: float
    delta_rad: float = math.radians(30.0)

    def heading(self, t):
        x = np.clip((np.asarray(t, float) - self.start_s) / self.duration_s, 0.0, 1.0)
        return self.delta_rad * _quintic(x)[0]


@dataclass(frozen=True)
class WindGust:
    """Smooth bump in recorded wind speed that returns to the baseline."""
    start_s: float
    duration_s: float
    amplitude_ms: float = 10.0

    def wind(self, t):
        x = np.clip((np.asarray(t, float) - self.start_s) / self.duration_s, 0.0, 1.0)
        return self.amplitude_ms * np.sin(np.pi * x) ** 2


Disturbance = ClimbStep | HeadingTurn | WindGust


def _check_script(script: Sequence[Disturbance], t0: float, t1: float) -> None:
    spans = sorted((d.start_s, d.start_s + d.duration_s) for d in script)
    for d in script:
        if d.duration_s <= 0:
            raise ValueError("disturbance duration must be positive")
        if d.start_s < t0 or d.start_s + d.duration_s > t1:
            raise ValueError(f"disturbance at {d.start_s} s outside frame [{t0}, {t1}]")
    for (a0, a1), (b0, _) in zip(spans, spans[1:]):
        if b0 < a1:
            raise ValueError(f"overlapping disturbances at {a0} s and {b0} s")


def inject_disturbance(frame: FlightFrame, script: Sequence[Disturbance]) -> FlightFrame:
    """Apply scripted steps, turns and gusts to recorded series (no re-trim)."""
    if not script:
        return frame
    t = frame.time
    _check_script(script, float(t[0]), float(t[-1]))
    alt = np.array(frame.altitude)
    head = np.array(frame.heading)
    wind = np.array(frame.wind)
    for d in script:
        if isinstance(d, ClimbStep):
            alt += d.altitude(t)[0]
        elif isinstance(d, HeadingTurn):
            head += d.heading(t)
        elif isinstance(d, WindGust):
            wind += d.wind(t)
        else:
            raise TypeError(f"unknown disturbance {d!r}")
    rho = physics.isa_density(alt, frame.sat)
    return frame.replace(altitude=alt, heading=head, wind=wind, rho=rho)


# --- profiles --------------------------------------------------------------------------

@dataclass(frozen=True)
class SensorNoise:
    """Gaussian sensor noise standard deviations (SI)."""
    altitude_m: float = 0.3
    tas_ms: float = 0.05
    mach: float = 0.0002
    alpha_rad: float = math.radians(0.1)
    gamma_rad: float = math.radians(0.01)
    mass_kg: float = 0.0
    fuel_flow_kgs: float = 1.0 / SECONDS_PER_HOUR
    sat_k: float = 0.05
    heading_rad: float = math.radians(0.02)
    wind_ms: float = 0.1

    @classmethod
    def none(cls) -> "SensorNoise":
        return cls(*(0.0,) * 10)


@dataclass(frozen=True)
class FlightProfile:
    duration_s: int = 3600
    altitude_waypoints: tuple[tuple[float, float], ...] = ((0.0, 10668.0),)
    mach_waypoints: tuple[tuple[float, float], ...] = ((0.0, 0.78),)
    mach_amplitude: float = 0.0
    mach_period_s: float = 1800.0
    mach_phase: float = 0.0
    initial_mass_kg: float = 66000.0
    isa_deviation_k: float = 0.0
    heading_deg: float = 90.0
    wind_kt: float = 20.0
    disturbances: tuple = ()
    noise: SensorNoise = field(default_factory=SensorNoise)
    csr_error_level: float = 3.68e-2
    csr_error_tau_s: float = 5.0
    flight_id: str = "F0000"

    def __post_init__(self):
        if self.duration_s < 2:
            raise ValueError("profile needs at least two samples")
        m = np.array([w[1] for w in self.mach_waypoints])
        if np.any(m - abs(self.mach_amplitude) <= 0.0) or np.any(m + abs(self.mach_amplitude) >= 0.9):
            raise ValueError("Mach schedule must stay within (0, 0.9)")
        _check_script(self.disturbances, 0.0, float(self.duration_s - 1))

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.duration_s, dtype=float)


def level_cruise(duration_s: int = 3600, altitude_m: float = 10668.0, mach: float = 0.78,
                 quiet: bool = True, **kw) -> FlightProfile:
    """Constant-altitude, constant-Mach cruise; ``quiet`` removes all noise."""
    if quiet:
        kw.setdefault("noise", SensorNoise.none())
        kw.setdefault("csr_error_level", 0.0)
    return FlightProfile(duration_s=duration_s, altitude_waypoints=((0.0, altitude_m),),
                         mach_waypoints=((0.0, mach),), **kw)


def climb_then_cruise(climb_s: float = 1500.0, cruise_s: float = 1800.0,
                      start_altitude_m: float = 3000 * FT_TO_M, cruise_altitude_m: float = 10668.0,
                      start_mach: float = 0.45, cruise_mach: float = 0.78,
                      level_off: tuple[float, float] | None = None, **kw) -> FlightProfile:
    """Climb from ``start_altitude_m`` to cruise, optionally holding ``level_off=(alt, seconds)``."""
    if level_off is None:
        alt_wp = ((0.0, start_altitude_m), (climb_s, cruise_altitude_m))
    else:
        h_lo, hold = level_off
        frac = (h_lo - start_altitude_m) / (cruise_altitude_m - start_altitude_m)
        t_lo = frac * climb_s
        alt_wp = ((0.0, start_altitude_m), (t_lo, h_lo), (t_lo + hold, h_lo),
                  (climb_s + hold, cruise_altitude_m))
        climb_s = climb_s + hold
    mach_wp = ((0.0, start_mach), (climb_s, cruise_mach))
    return FlightProfile(duration_s=int(climb_s + cruise_s), altitude_waypoints=alt_wp,
                         mach_waypoints=mach_wp, **kw)


@dataclass(frozen=True)
class SimulationSettings:
    """Ranges for randomly drawn flights (flight profiles are a documented guess)."""
    cruise_s: tuple[float, float] = (3600.0, 10800.0)
    climb: bool = True
    climb_s: tuple[float, float] = (1200.0, 1800.0)
    cruise_altitude_m: tuple[float, float] = (10000.0, 11600.0)
    cruise_mach: tuple[float, float] = (0.778, 0.792)
    mach_amplitude: float = 0.006
    mach_period_s: tuple[float, float] = (900.0, 2400.0)
    initial_mass_kg: tuple[float, float] = (60000.0, 72000.0)
    isa_deviation_k: tuple[float, float] = (-5.0, 5.0)
    csr_error_level: float = 3.68e-2
    csr_error_tau_s: float = 5.0
    step_climb_prob: float = 0.3
    turn_prob: float = 0.5
    gust_prob: float = 0.3
    noise: SensorNoise = field(default_factory=SensorNoise)

    @classmethod
    def from_dict(cls, d: dict) -> "SimulationSettings":
        d = dict(d)
        if "noise" in d:
            d["noise"] = SensorNoise(**d["noise"])
        for k, v in d.items():
            if isinstance(v, list):
                d[k] = tuple(v)
        return cls(**d)


def random_profile(rng: np.random.Generator, flight_id: str,
                   settings: SimulationSettings = SimulationSettings()) -> FlightProfile:
    u = lambda lohi: float(rng.uniform(*lohi))  # noqa: E731
    cruise_s = round(u(settings.cruise_s))
    h_cruise = u(settings.cruise_altitude_m)
    mach = u(settings.cruise_mach)
    climb_s = round(u(settings.climb_s)) if settings.climb else 0
    start = 0.0
    if climb_s:
        alt_wp = ((0.0, 3000 * FT_TO_M), (float(climb_s), h_cruise))
        mach_wp = ((0.0, 0.45), (float(climb_s), mach))
        start = float(climb_s)
    else:
        alt_wp, mach_wp = ((0.0, h_cruise),), ((0.0, mach),)
    # disturbances in the second half of the cruise, one of each kind at most
    script, cursor = [], start + 0.3 * cruise_s
    if rng.random() < settings.step_climb_prob and h_cruise + 2000 * FT_TO_M < 12500:
        script.append(ClimbStep(cursor, 120.0))
        cursor += 600.0
    if rng.random() < settings.turn_prob:
        script.append(HeadingTurn(cursor, 20.0, math.radians(float(rng.choice([-30.0, 30.0])))))
        cursor += 600.0
    if rng.random() < settings.gust_prob:
        script.append(WindGust(cursor, 40.0, 8.0))
    duration = int(start + cruise_s)
    script = [d for d in script if d.start_s + d.duration_s <= duration - 1]
    return FlightProfile(
        duration_s=duration, altitude_waypoints=alt_wp, mach_waypoints=mach_wp,
        mach_amplitude=settings.mach_amplitude, mach_period_s=u(settings.mach_period_s),
        mach_phase=float(rng.uniform(0, 2 * np.pi)), initial_mass_kg=u(settings.initial_mass_kg),
        isa_deviation_k=u(settings.isa_deviation_k), heading_deg=float(rng.uniform(0, 360)),
        wind_kt=float(rng.uniform(5, 60)), disturbances=tuple(script), noise=settings.noise,
        csr_error_level=settings.csr_error_level, csr_error_tau_s=settings.csr_error_tau_s,
        flight_id=flight_id,
    )


# --- generation ------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GroundTruthTrace:
    time: np.ndarray
    cd: np.ndarray
    cl: np.ndarray
    alpha: np.ndarray
    thrust: np.ndarray
    mass: np.ndarray
    tas: np.ndarray
    tas_rate: np.ndarray
    gamma: np.ndarray
    gamma_rate: np.ndarray
    rho: np.ndarray
    fuel_flow: np.ndarray
    csr_model: np.ndarray
    csr_true: np.ndarray
    delta: np.ndarray

    def at(self, times) -> dict[str, np.ndarray]:
        idx = np.searchsorted(self.time, np.asarray(times, float))
        if np.any(idx >= len(self.time)) or not np.array_equal(self.time[idx], np.asarray(times, float)):
            raise KeyError("requested times not on the simulation grid")
        return {k: getattr(self, k)[idx] for k in ("cd", "cl", "alpha", "thrust", "delta")}


def csr_error_process(n: int, level: float, tau_s: float, rng: np.random.Generator) -> np.ndarray:
    """Smooth zero-mean relative error with mean absolute value exactly ``level``."""
    if level == 0.0:
        return np.zeros(n)
    a = math.exp(-1.0 / tau_s)
    x = rng.standard_normal(n)
    for _ in range(2):
        x = lfilter([1.0 - a], [1.0, -a], x)
    x -= x.mean()
    return x * (level / np.mean(np.abs(x)))


def _trim(alpha_lo, alpha_hi, mach, qs, m, g, gamma, lift_extra, tas_rate, polar, time):
    """Bisection for alpha solving T sin(a) + L = m g cos(gamma) + m V dgamma/dt."""
    def residual(a):
        cl = polar.cl(a, mach)
        drag = qs * polar.cd_from_cl(cl, mach)
        thrust = (m * tas_rate + drag + m * g * np.sin(gamma)) / np.cos(a)
        return thrust * np.sin(a) + qs * cl - m * g * np.cos(gamma) - lift_extra

    lo = np.full_like(mach, alpha_lo)
    hi = np.full_like(mach, alpha_hi)
    f_lo, f_hi = residual(lo), residual(hi)
    bad = ~((f_lo < 0) & (f_hi > 0))
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise SimulationError(f"trim failure at t={time[k]:.0f} s: no angle of attack in "
                              f"[{alpha_lo}, {alpha_hi}] rad balances lift")
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        pos = residual(mid) > 0
        hi = np.where(pos, mid, hi)
        lo = np.where(pos, lo, mid)
    return 0.5 * (lo + hi)


def generate(polar: GroundTruthPolar, profile: FlightProfile, params: EngineParams,
             seed: int = 0) -> tuple[FlightFrame, GroundTruthTrace]:
    rng = np.random.default_rng(seed)
    t = profile.times
    g = params.g

    h, hd, hdd = waypoint_schedule(profile.altitude_waypoints, t)
    heading = np.full_like(t, math.radians(profile.heading_deg))
    wind = np.full_like(t, profile.wind_kt * KT_TO_MS)
    for d in profile.disturbances:
        if isinstance(d, ClimbStep):
            dh, dhd, dhdd = d.altitude(t)
            h, hd, hdd = h + dh, hd + dhd, hdd + dhdd
        elif isinstance(d, HeadingTurn):
            heading = heading + d.heading(t)
        elif isinstance(d, WindGust):
            wind = wind + d.wind(t)

    sat = physics.isa_temperature(h) + profile.isa_deviation_k
    sat_rate = np.where(h < physics.TROPOPAUSE_M, physics.ISA_LAPSE * hd, 0.0)
    a = physics.speed_of_sound(sat)
    a_rate = a / (2.0 * sat) * sat_rate
    mach, mach_rate, _ = waypoint_schedule(profile.mach_waypoints, t)
    w = 2.0 * np.pi / profile.mach_period_s
    mach = mach + profile.mach_amplitude * np.sin(w * t + profile.mach_phase)
    mach_rate = mach_rate + profile.mach_amplitude * w * np.cos(w * t + profile.mach_phase)
    tas = mach * a
    tas_rate = mach_rate * a + mach * a_rate
    gamma = np.arcsin(hd / tas)
    gamma_rate = (hdd * tas - hd * tas_rate) / (tas * tas * np.cos(gamma))
    rho = physics.isa_density(h, sat)
    qs = 0.5 * rho * tas * tas * params.wing_area

    csr_model = physics.csr(sat, h, mach, params).value
    delta = csr_error_process(len(t), profile.csr_error_level, profile.csr_error_tau_s, rng)
    csr_true = csr_model * (1.0 + delta)

    m0 = profile.initial_mass_kg
    mass = np.full_like(t, m0)
    for _ in range(100):
        alpha = _trim(*polar.alpha_range, mach, qs, mass, g, gamma, mass * tas * gamma_rate,
                      tas_rate, polar, t)
        cl = polar.cl(alpha, mach)
        cd = polar.cd_from_cl(cl, mach)
        thrust = (mass * tas_rate + qs * cd + mass * g * np.sin(gamma)) / np.cos(alpha)
        ff = csr_true * thrust
        new_mass = m0 - np.concatenate(([0.0], np.cumsum(ff[:-1])))  # dt = 1 s
        converged = np.max(np.abs(new_mass - mass)) < 1e-9
        mass = new_mass
        if converged:
            break
    else:
        raise SimulationError("mass integration did not converge")
    alpha = _trim(*polar.alpha_range, mach, qs, mass, g, gamma, mass * tas * gamma_rate,
                  tas_rate, polar, t)
    cl = polar.cl(alpha, mach)
    cd = polar.cd_from_cl(cl, mach)
    thrust = (mass * tas_rate + qs * cd + mass * g * np.sin(gamma)) / np.cos(alpha)
    ff = csr_true * thrust

    trace = GroundTruthTrace(t, cd, cl, alpha, thrust, mass, tas, tas_rate, gamma, gamma_rate,
                             rho, ff, csr_model, csr_true, delta)

    nz = profile.noise
    def noisy(x, sd):  # noqa: E306
        return x + rng.normal(0.0, sd, x.shape) if sd > 0 else x.copy()

    h_rec = noisy(h, nz.altitude_m)
    sat_rec = noisy(sat, nz.sat_k)
    frame = FlightFrame(
        time=t, altitude=h_rec, tas=noisy(tas, nz.tas_ms), mach=noisy(mach, nz.mach),
        alpha=noisy(alpha, nz.alpha_rad), gamma=noisy(gamma, nz.gamma_rad),
        mass=noisy(mass, nz.mass_kg), fuel_flow=noisy(ff, nz.fuel_flow_kgs), sat=sat_rec,
        rho=physics.isa_density(h_rec, sat_rec), heading=noisy(heading, nz.heading_rad),
        wind=noisy(wind, nz.wind_ms), flight_id=profile.flight_id,
    )
    return frame, trace


def force_residuals(trace: GroundTruthTrace, params: EngineParams) -> tuple[np.ndarray, np.ndarray]:
    """Relative residuals of both force-balance equations along a trace."""
    qs = 0.5 * trace.rho * trace.tas ** 2 * params.wing_area
    m, g = trace.mass, params.g
    drag, lift = qs * trace.cd, qs * trace.cl
    r1 = m * trace.tas_rate - (trace.thrust * np.cos(trace.alpha) - drag - m * g * np.sin(trace.gamma))
    r2 = m * trace.tas * trace.gamma_rate - (trace.thrust * np.sin(trace.alpha) + lift - m * g * np.cos(trace.gamma))
    return np.abs(r1) / (m * g), np.abs(r2) / (m * g)


# --- raw file output -------------------------------------------------------------------

def frame_to_raw(frame: FlightFrame) -> dict[str, np.ndarray]:
    return {
        "time_s": frame.time,
        "alt_ft": frame.altitude / FT_TO_M,
        "tas_kt": frame.tas / KT_TO_MS,
        "mach": frame.mach,
        "aoa_deg": np.degrees(frame.alpha),
        "pitch_deg_or_gamma_deg": np.degrees(frame.gamma),
        "mass_kg": frame.mass,
        "ff_kgph": frame.fuel_flow * SECONDS_PER_HOUR,
        "sat_c": frame.sat - ZERO_CELSIUS_K,
        "heading_deg": np.mod(np.degrees(frame.heading), 360.0),
        "wind_kt": frame.wind / KT_TO_MS,
    }


def write_raw_csv(frame: FlightFrame, path: str | Path) -> None:
    raw = frame_to_raw(frame)
    cols = [raw[c] for c in RAW_COLUMNS]
    write_rows(path, RAW_COLUMNS, zip(*cols))


def write_truth_csv(trace: GroundTruthTrace, path: str | Path) -> None:
    write_rows(path, TRUTH_COLUMNS, zip(trace.time, trace.cd, trace.cl, trace.alpha, trace.thrust))


def read_truth_csv(path: str | Path) -> dict[str, np.ndarray]:
    from .core import read_table
    header, rows = read_table(path)
    return {c: np.array([float(r[header.index(c)]) for r in rows]) for c in TRUTH_COLUMNS}


def with_profile(profile: FlightProfile, **changes) -> FlightProfile:
    return replace(profile, **changes)
