"""Deterministic aeronautic formulas and the total-error bound arithmetic.

Every function here is pure and accepts scalars or numpy arrays.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import G0_ISA, KAPPA_AIR, R_AIR, Dataset, EngineParams, FlightState

ISA_T0 = 288.15
ISA_P0 = 101325.0
ISA_LAPSE = -0.0065  # K/m, troposphere
TROPOPAUSE_M = 11000.0
ISA_TOP_M = 20000.0
ISA_BOTTOM_M = -610.0


class BoundUndefinedError(ValueError):
    """The relative bound needs the mean surrogate to exceed the physical bound."""


def _scalarize(x):
    return float(x) if np.ndim(x) == 0 else x


def isa_pressure(h):
    h = np.asarray(h, dtype=float)
    if np.any(~((h >= ISA_BOTTOM_M) & (h <= ISA_TOP_M))):
        raise ValueError(f"altitude outside ISA model range [{ISA_BOTTOM_M}, {ISA_TOP_M}] m")
    t11 = ISA_T0 + ISA_LAPSE * TROPOPAUSE_M
    expo = -G0_ISA / (R_AIR * ISA_LAPSE)
    p11 = ISA_P0 * (t11 / ISA_T0) ** expo
    tropo = ISA_P0 * ((ISA_T0 + ISA_LAPSE * np.minimum(h, TROPOPAUSE_M)) / ISA_T0) ** expo
    strato = p11 * np.exp(-G0_ISA * (h - TROPOPAUSE_M) / (R_AIR * t11))
    return _scalarize(np.where(h <= TROPOPAUSE_M, tropo, strato))


def isa_temperature(h):
    h = np.asarray(h, dtype=float)
    return _scalarize(ISA_T0 + ISA_LAPSE * np.minimum(h, TROPOPAUSE_M))


def isa_density(h, sat):
    """Air density from ISA pressure at ``h`` and the measured static temperature."""
    sat = np.asarray(sat, dtype=float)
    if np.any(~(sat > 0)):
        raise ValueError("static air temperature must be > 0 K")
    return _scalarize(isa_pressure(h) / (R_AIR * sat))


def speed_of_sound(sat):
    return _scalarize(np.sqrt(KAPPA_AIR * R_AIR * np.asarray(sat, dtype=float)))


def mach_from_tas(tas, sat):
    tas = np.asarray(tas, dtype=float)
    sat = np.asarray(sat, dtype=float)
    if np.any(~(sat > 0)) or np.any(tas < 0):
        raise ValueError("need sat > 0 and tas >= 0")
    return _scalarize(tas / np.sqrt(KAPPA_AIR * R_AIR * sat))


@dataclass(frozen=True)
class CsrValue:
    value: np.ndarray | float  # kg/(N s)
    sat: np.ndarray | float
    altitude: np.ndarray | float
    mach: np.ndarray | float


def csr(sat, h, mach, params: EngineParams) -> CsrValue:
    """Specific fuel consumption of the turbofan model."""
    lam = params.bypass_ratio
    eps = params.pressure_ratio - 30.0
    h = np.asarray(h, dtype=float)
    mach = np.asarray(mach, dtype=float)
    sat = np.asarray(sat, dtype=float)
    slope = params.a1(h) * lam + params.a2(h)
    offset = params.b1(h) * lam + params.b2(h)
    value = (slope * mach + offset) * np.sqrt(sat / params.sat0) + (7.4e-13 * eps * h + params.c) * eps
    return CsrValue(_scalarize(value), _scalarize(sat), _scalarize(h), _scalarize(mach))


def _dynamic_factor(z: FlightState, params: EngineParams):
    rho = np.asarray(z.rho, float)
    v = np.asarray(z.tas, float)
    qs = rho * v * v * params.wing_area
    if np.any(~(qs > 0)):
        raise ValueError("rho * V^2 * S must be > 0")
    return 2.0 / qs


def _thrust(z: FlightState, params: EngineParams, c_sr):
    if c_sr is None:
        c_sr = csr(z.sat, z.altitude, z.mach, params).value
    c_sr = np.asarray(c_sr, float)
    if np.any(~(c_sr > 0)):
        raise ValueError("specific fuel consumption must be > 0")
    return np.asarray(z.fuel_flow, float) / c_sr


def _check_finite(z: FlightState):
    for name, val in vars(z).items():
        if not np.all(np.isfinite(val)):
            raise ValueError(f"non-finite input in {name}")


def phi_cd(z: FlightState, params: EngineParams, c_sr=None):
    """Drag coefficient from the longitudinal force balance.

    ``c_sr`` overrides the modelled consumption (e.g. with a known exact value).
    """
    _check_finite(z)
    k = _dynamic_factor(z, params)
    thrust = _thrust(z, params, c_sr)
    m = np.asarray(z.mass, float)
    force = np.cos(z.alpha) * thrust - m * np.asarray(z.tas_rate, float) - m * params.g * np.sin(z.gamma)
    return _scalarize(k * force)


def phi_cl(z: FlightState, params: EngineParams, c_sr=None):
    """Lift coefficient from the normal force balance."""
    _check_finite(z)
    k = _dynamic_factor(z, params)
    thrust = _thrust(z, params, c_sr)
    m = np.asarray(z.mass, float)
    force = (-np.sin(z.alpha) * thrust + m * np.asarray(z.tas, float) * np.asarray(z.gamma_rate, float)
             + m * params.g * np.cos(z.gamma))
    return _scalarize(k * force)


def phi_steady(z: FlightState, params: EngineParams, c_sr=None):
    """Level, zero-incidence, constant-speed simplification: (C_D, C_L)."""
    _check_finite(z)
    k = _dynamic_factor(z, params)
    thrust = _thrust(z, params, c_sr)
    return _scalarize(k * thrust), _scalarize(k * np.asarray(z.mass, float) * params.g)


def k_integrands(z: FlightState, params: EngineParams):
    """Per-sample |2 cos(a)/(rho V^2 S) FF/C_SR| and its sine counterpart."""
    k = _dynamic_factor(z, params)
    thrust = _thrust(z, params, None)
    return np.abs(k * np.cos(z.alpha) * thrust), np.abs(k * np.sin(z.alpha) * thrust)


def k_constants(data: Dataset | FlightState, params: EngineParams) -> tuple[float, float]:
    """Empirical suprema (K_CD, K_CL) over the working data."""
    z = data.state() if isinstance(data, Dataset) else data
    if np.size(z.rho) == 0:
        raise ValueError("k_constants needs a nonempty dataset")
    kd, kl = k_integrands(z, params)
    return float(np.max(kd)), float(np.max(kl))


@dataclass(frozen=True)
class BoundInputs:
    r_rel: float
    k_cd: float
    k_cl: float
    mean_phi_cd: float
    mean_phi_cl: float

    def __post_init__(self):
        if min(self.r_rel, self.k_cd, self.k_cl) < 0:
            raise ValueError("bound inputs must be >= 0")

    @property
    def r_cd(self) -> float:
        return physical_bound(self.k_cd, self.r_rel)

    @property
    def r_cl(self) -> float:
        return physical_bound(self.k_cl, self.r_rel)

    def for_target(self, target: str) -> tuple[float, float]:
        """(r, mean_phi) for ``'cd'`` or ``'cl'``."""
        if target == "cd":
            return self.r_cd, self.mean_phi_cd
        if target == "cl":
            return self.r_cl, self.mean_phi_cl
        raise ValueError(target)


def physical_bound(k: float, r_rel: float) -> float:
    if k < 0 or r_rel < 0:
        raise ValueError("K and r_rel must be >= 0")
    return k * r_rel


def total_bound_abs(r: float, learning_mae: float) -> float:
    if r < 0 or learning_mae < 0:
        raise ValueError("r and learning MAE must be >= 0")
    return r + learning_mae


def total_bound_rel(r: float, learning_mae: float, mean_phi: float) -> float:
    """Relative total-error bound in percent."""
    if r < 0 or learning_mae < 0:
        raise ValueError("r and learning MAE must be >= 0")
    if not mean_phi > r:
        raise BoundUndefinedError(
            f"relative bound undefined: mean surrogate {mean_phi!r} does not exceed r={r!r}")
    return 100.0 * (r + learning_mae) / (mean_phi - r)
