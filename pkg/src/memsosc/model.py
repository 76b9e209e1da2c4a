"""Dimensionless equation of motion for the forced parallel-plate oscillator.

The moving capacitor plate obeys

    x'' + c x' + h(x) = V(t)^2 / (1 - x)^2,      V(t) = lam * (1 + delta*cos(omega*t))

with displacement normalized by the gap, so the fixed plate sits at x = 1.
The restoring law h is either the graphene constitutive law
h(x) = x - alpha*x*|x|, plain Hooke h(x) = x, or a tabulated custom law.
Physical (SI) parameters map onto the dimensionless group (c, alpha, lam,
delta, omega) through :func:`nondimensionalize`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

GRAPHENE = "graphene"
LINEAR = "linear"
CUSTOM = "custom"

# below this distance from the gap the electrostatic term is numerically singular
SINGULAR_FLOOR = 1e-12


class SingularStateError(ValueError):
    """Raised when (1 - x) falls below the machine-safe floor."""


@dataclass(frozen=True)
class CustomStiffness:
    """Tabulated restoring force, cubic-interpolated and clamped outside the table."""

    x: tuple[float, ...]
    h: tuple[float, ...]

    def __post_init__(self):
        xs = np.asarray(self.x, dtype=float)
        hs = np.asarray(self.h, dtype=float)
        if xs.ndim != 1 or xs.size < 4 or xs.shape != hs.shape:
            raise ValueError("custom stiffness needs >= 4 matching (x, h) samples")
        if np.any(np.diff(xs) <= 0):
            raise ValueError("custom stiffness grid must be strictly increasing")
        object.__setattr__(self, "x", tuple(float(v) for v in xs))
        object.__setattr__(self, "h", tuple(float(v) for v in hs))

    def spline(self) -> CubicSpline:
        return CubicSpline(np.asarray(self.x), np.asarray(self.h))

    def __call__(self, x):
        xs = np.asarray(self.x)
        return self.spline()(np.clip(x, xs[0], xs[-1]))


@dataclass(frozen=True)
class PhysicalParams:
    """SI parameters of the mass-spring capacitor (masses kg, lengths m, voltages V)."""

    m: float            # plate mass
    c_phys: float       # viscous damping, kg/s
    E: float            # Young's modulus, Pa
    D: float            # second-order elastic stiffness, Pa
    A_c: float          # spring cross-section area, m^2
    L: float            # spring length, m
    d: float            # capacitor gap, m
    eps0: float         # electric emissivity, F/m
    A: float            # plate area, m^2
    V_dc: float
    V_ac: float
    omega_phys: float   # forcing angular frequency, rad/s

    def __post_init__(self):
        for name in ("m", "E", "A_c", "L", "d", "eps0", "A"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")
        for name in ("D", "c_phys", "V_dc", "V_ac"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    def to_dict(self) -> dict:
        return {
            "m": self.m, "c_phys": self.c_phys, "E": self.E, "D": self.D,
            "A_c": self.A_c, "L": self.L, "d": self.d, "eps0": self.eps0,
            "A": self.A, "V_dc": self.V_dc, "V_ac": self.V_ac,
            "omega_phys": self.omega_phys,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PhysicalParams":
        return cls(**d)


@dataclass(frozen=True)
class ModelParams:
    """Dimensionless parameter set; the single source of truth for a run.

    ``lam`` is the DC voltage amplitude (JSON key "lambda"), ``delta`` the
    AC/DC ratio.  ``delta`` is deliberately not restricted to |delta| < 1:
    runs with the waveform crossing zero are legal and flagged downstream.
    """

    c: float = 0.0
    alpha: float = 0.5
    lam: float = 0.0
    delta: float = 0.0
    omega: float = 1.0
    stiffness: str | CustomStiffness = GRAPHENE

    def __post_init__(self):
        if self.c < 0:
            raise ValueError("damping c must be nonnegative")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if not (self.omega > 0 and math.isfinite(self.omega)):
            raise ValueError("omega must be positive and finite")
        if isinstance(self.stiffness, str) and self.stiffness not in (GRAPHENE, LINEAR):
            raise ValueError(f"unknown stiffness {self.stiffness!r}")

    @property
    def period(self) -> float:
        return 2.0 * math.pi / self.omega

    def h(self, x):
        """Restoring force at displacement x (scalar or array)."""
        if isinstance(self.stiffness, CustomStiffness):
            return self.stiffness(x)
        xa = np.asarray(x, dtype=float)
        if self.stiffness == LINEAR:
            out = xa.copy()
        else:
            out = xa - self.alpha * xa * np.abs(xa)
        return out if np.ndim(x) else float(out)

    def to_dict(self) -> dict:
        if isinstance(self.stiffness, CustomStiffness):
            stiff = {"kind": CUSTOM, "x": list(self.stiffness.x), "h": list(self.stiffness.h)}
        else:
            stiff = self.stiffness
        return {"c": self.c, "alpha": self.alpha, "lambda": self.lam,
                "delta": self.delta, "omega": self.omega, "stiffness": stiff}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        d = dict(d)
        stiff = d.pop("stiffness", GRAPHENE)
        if isinstance(stiff, dict):
            if stiff.get("kind") != CUSTOM:
                raise ValueError(f"unknown stiffness spec {stiff!r}")
            stiff = CustomStiffness(x=tuple(stiff["x"]), h=tuple(stiff["h"]))
        known = {"c", "alpha", "lambda", "delta", "omega"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown model keys: {sorted(unknown)}")
        return cls(c=float(d.get("c", 0.0)), alpha=float(d.get("alpha", 0.5)),
                   lam=float(d.get("lambda", 0.0)), delta=float(d.get("delta", 0.0)),
                   omega=float(d.get("omega", 1.0)), stiffness=stiff)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> "ModelParams":
        return cls.from_dict(json.loads(s))


@dataclass(frozen=True)
class State:
    """Phase-space point (x, v) at time t, gap-normalized."""

    x: float
    v: float
    t: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.v], dtype=float)


def voltage(p: ModelParams, t):
    """V(t) = lam * (1 + delta*cos(omega*t)); vectorized over t."""
    ta = np.asarray(t, dtype=float)
    out = p.lam * (1.0 + p.delta * np.cos(p.omega * ta))
    return out if np.ndim(t) else float(out)


def voltage_extrema(p: ModelParams) -> tuple[float, float]:
    """(V_m, V_M) = (min |V|, max |V|) over a forcing period.

    For |delta| > 1 the waveform changes sign, so V_m = 0.
    """
    v_max = p.lam * (1.0 + abs(p.delta))
    v_min = p.lam * (1.0 - abs(p.delta)) if abs(p.delta) <= 1.0 else 0.0
    return v_min, v_max


def rhs(p: ModelParams, s: State) -> tuple[float, float]:
    """Right-hand side (dx/dt, dv/dt) of the first-order system."""
    gap = 1.0 - s.x
    if abs(gap) < SINGULAR_FLOOR:
        raise SingularStateError(f"state x={s.x} within {SINGULAR_FLOOR} of the gap singularity")
    vlt = voltage(p, s.t)
    return s.v, -p.c * s.v - p.h(s.x) + vlt * vlt / (gap * gap)


def nondimensionalize(pp: PhysicalParams) -> ModelParams:
    """Map SI parameters to the dimensionless group via the gap/time rescaling.

    Raises ValueError when V_dc = 0 with V_ac > 0 (the AC/DC ratio is undefined).
    """
    alpha = pp.D * pp.d / (pp.E * pp.L)
    c = pp.c_phys * math.sqrt(pp.L / (pp.m * pp.E * pp.A_c))
    lam = pp.V_dc * math.sqrt(pp.eps0 * pp.A * pp.L / (2.0 * pp.E * pp.A_c * pp.d ** 3))
    if pp.V_dc == 0.0:
        if pp.V_ac > 0.0:
            raise ValueError("delta = V_ac/V_dc undefined for V_dc = 0 with V_ac > 0")
        delta = 0.0
    else:
        delta = pp.V_ac / pp.V_dc
    omega = pp.omega_phys * math.sqrt(pp.m * pp.L / (pp.E * pp.A_c))
    return ModelParams(c=c, alpha=alpha, lam=lam, delta=delta, omega=omega,
                       stiffness=GRAPHENE)


def stiffness_tables(p: ModelParams) -> tuple[int, np.ndarray, np.ndarray]:
    """(kind code, breakpoints, spline coefficients) for the compiled kernels.

    Kind 0 = graphene, 1 = linear, 2 = custom cubic table.  For the analytic
    kinds the arrays are empty placeholders.
    """
    if isinstance(p.stiffness, CustomStiffness):
        sp = p.stiffness.spline()
        return 2, np.asarray(sp.x, dtype=float), np.asarray(sp.c, dtype=float)
    kind = 0 if p.stiffness == GRAPHENE else 1
    return kind, np.empty(0, dtype=float), np.empty((4, 0), dtype=float)
