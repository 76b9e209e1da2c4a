"""Stroboscopic Poincare map, periodic-orbit shooting, Floquet multipliers.

The map advances a section point (x, v) by n forcing periods from the
t = 0 phase (maximum voltage).  Fixed points of the n-fold map are located
by damped Newton iteration with a finite-difference Jacobian; the monodromy
matrix at a solution is differenced centrally for better multiplier
accuracy and its eigenvalues are the Floquet multipliers.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .integrator import IntegratorConfig, StepUnderflowError
from .model import ModelParams, State, stiffness_tables

NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 50
JACOBIAN_STEP = 1e-7
MONODROMY_STEP = 1e-5
STABILITY_TOL = 1e-7
MIN_PERIOD_TOL = 1e-8
DIVERGENCE_NORM = 1e6


class NoConvergenceError(RuntimeError):
    """Newton shooting failed; carries the last residual for diagnostics."""

    def __init__(self, message: str, residual: float = math.inf):
        super().__init__(message)
        self.residual = residual


class EventInterruptedError(NoConvergenceError):
    """A shot left the physical window (pull-in or escape) during the search."""


@dataclass(frozen=True)
class PoincareMapSpec:
    """The n-fold stroboscopic map of a parameter set (orbit period n*T)."""

    params: ModelParams
    cfg: IntegratorConfig = field(default_factory=IntegratorConfig)
    n: int = 1

    def __post_init__(self):
        if not (isinstance(self.n, int) and self.n >= 1):
            raise ValueError("period multiple n must be an integer >= 1")


@dataclass(frozen=True)
class MapResult:
    """Image of one map application, or the event that truncated it."""

    point: tuple[float, float] | None
    event: str | None = None          # PullIn | Escape when truncated
    t_event: float | None = None

    @property
    def ok(self) -> bool:
        return self.point is not None


@dataclass(frozen=True)
class PeriodicOrbit:
    """Fixed point of the n-fold map with its Floquet data.

    ``n`` is the minimal period multiple; ``stable`` means both multipliers
    lie inside the unit circle up to a small tolerance (conservative-case
    multipliers sit exactly on it).
    """

    n: int
    point: State
    multipliers: tuple[complex, complex]
    stable: bool
    residual: float

    @property
    def monodromy_det(self) -> float:
        return float((self.multipliers[0] * self.multipliers[1]).real)

    def cycle_points(self, spec: PoincareMapSpec) -> list[tuple[float, float]]:
        """The n distinct section points visited by the orbit."""
        pts = [(self.point.x, self.point.v)]
        s = (self.point.x, self.point.v)
        one = PoincareMapSpec(spec.params, spec.cfg, 1)
        for _ in range(self.n - 1):
            r = map_apply(one, s)
            if not r.ok:
                raise EventInterruptedError("orbit left the window while listing cycle points")
            s = r.point
            pts.append(s)
        return pts

    def to_json_dict(self) -> dict:
        return {
            "n": self.n,
            "x": self.point.x,
            "v": self.point.v,
            "multipliers": [[m.real, m.imag] for m in self.multipliers],
            "stable": self.stable,
            "residual": self.residual,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "PeriodicOrbit":
        mus = tuple(complex(re, im) for re, im in d["multipliers"])
        return cls(n=int(d["n"]), point=State(float(d["x"]), float(d["v"]), 0.0),
                   multipliers=mus, stable=bool(d["stable"]),
                   residual=float(d["residual"]))


def _pack(p: ModelParams, cfg: IntegratorConfig):
    kind, xs, cs = stiffness_tables(p)
    return (p.c, p.alpha, p.lam, p.delta, p.omega, kind, xs, cs,
            cfg.rel_tol, cfg.abs_tol, cfg.effective_max_step(p),
            cfg.pull_in_threshold, cfg.escape_floor)


def map_apply(spec: PoincareMapSpec, s: tuple[float, float]) -> MapResult:
    """Apply the n-fold stroboscopic map to the section point s = (x, v)."""
    x0, v0 = float(s[0]), float(s[1])
    if x0 >= spec.cfg.pull_in_threshold or x0 <= spec.cfg.escape_floor:
        raise ValueError(f"section point x={x0} is outside the physical window")
    status, x, v, t = K.map_points(*_pack(spec.params, spec.cfg),
                                   x0, v0, spec.n, spec.params.period)
    if status == K.STATUS_COMPLETED:
        return MapResult(point=(float(x), float(v)))
    if status == K.STATUS_UNDERFLOW:
        raise StepUnderflowError(f"step size underflow at t={t}")
    kind = "PullIn" if status == K.STATUS_PULL_IN else "Escape"
    return MapResult(point=None, event=kind, t_event=float(t))


def _shoot(spec: PoincareMapSpec, s: np.ndarray) -> np.ndarray:
    if not (spec.cfg.escape_floor < s[0] < spec.cfg.pull_in_threshold):
        raise EventInterruptedError(f"trial point x={s[0]} is outside the physical window")
    r = map_apply(spec, (s[0], s[1]))
    if not r.ok:
        raise EventInterruptedError(
            f"shot from ({s[0]}, {s[1]}) ended in {r.event} at t={r.t_event}")
    return np.array(r.point) - s


def _jacobian_step(cfg: IntegratorConfig) -> float:
    # forward differences need the map smooth below the step; loose-tolerance
    # maps carry controller noise of order rel_tol, so scale the step up
    if cfg.rel_tol <= 1e-9:
        return JACOBIAN_STEP
    return math.sqrt(cfg.rel_tol)


def _fd_jacobian(spec: PoincareMapSpec, s: np.ndarray, f0: np.ndarray,
                 step: float) -> np.ndarray:
    J = np.empty((2, 2))
    for j in range(2):
        sp = s.copy()
        sp[j] += step
        fj = _shoot(spec, sp)
        J[:, j] = (fj - f0) / step
    return J


def _monodromy(spec: PoincareMapSpec, s: np.ndarray) -> np.ndarray:
    """Derivative of the n-fold map at s by Richardson-extrapolated central
    differences.

    The stencil is integrated at a fixed step (inactive tolerances, small
    max_step) so the numerical map is smooth in the initial condition;
    differencing an adaptive map is limited by step-acceptance noise, which
    costs several digits on strongly sheared island maps.
    """
    cfg = spec.cfg
    fixed = IntegratorConfig(
        rel_tol=1e9, abs_tol=1e9,
        max_step=spec.params.period / 1500.0,
        pull_in_threshold=cfg.pull_in_threshold,
        escape_floor=cfg.escape_floor, max_time=None)
    tspec = PoincareMapSpec(spec.params, fixed, spec.n)

    def central(h: float) -> np.ndarray:
        M = np.empty((2, 2))
        for j in range(2):
            sp = s.copy(); sp[j] += h
            sm = s.copy(); sm[j] -= h
            rp = map_apply(tspec, (sp[0], sp[1]))
            rm = map_apply(tspec, (sm[0], sm[1]))
            if not (rp.ok and rm.ok):
                raise EventInterruptedError("monodromy stencil left the physical window")
            M[:, j] = (np.array(rp.point) - np.array(rm.point)) / (2.0 * h)
        return M

    coarse = central(2.0 * MONODROMY_STEP)
    fine = central(MONODROMY_STEP)
    return (4.0 * fine - coarse) / 3.0


def find_orbit(spec: PoincareMapSpec, guess: tuple[float, float]) -> PeriodicOrbit:
    """Newton shooting for a fixed point of the n-fold map.

    Converges when the residual norm drops below 1e-10 within 50 iterations;
    the step is halved (up to 8 times) whenever a full Newton step would grow
    the residual, which rescues the search near strongly sheared islands.
    After convergence the minimal period multiple (a divisor of n) is
    reported, so an n = 6 search that lands on a 3T orbit returns n = 3.

    Raises NoConvergenceError / EventInterruptedError on failure.
    """
    s = np.array([float(guess[0]), float(guess[1])])
    step = _jacobian_step(spec.cfg)
    f = _shoot(spec, s)
    res = float(np.hypot(*f))
    for _ in range(NEWTON_MAX_ITER):
        if res < NEWTON_TOL:
            break
        if not np.isfinite(res) or res > DIVERGENCE_NORM:
            raise NoConvergenceError(f"Newton diverged, residual {res}", residual=res)
        J = _fd_jacobian(spec, s, f, step)
        try:
            ds = np.linalg.solve(J, -f)
        except np.linalg.LinAlgError:
            ds = -np.linalg.lstsq(J, f, rcond=None)[0]
        if not np.all(np.isfinite(ds)):
            raise NoConvergenceError("Newton step not finite", residual=res)
        # backtracking on the residual norm
        lam = 1.0
        for _bt in range(8):
            s_try = s + lam * ds
            try:
                f_try = _shoot(spec, s_try)
            except EventInterruptedError:
                lam *= 0.5
                continue
            res_try = float(np.hypot(*f_try))
            if res_try < res or res_try < NEWTON_TOL:
                break
            lam *= 0.5
        else:
            raise NoConvergenceError(
                f"Newton stalled at residual {res}", residual=res)
        s, f, res = s_try, f_try, res_try
    else:
        raise NoConvergenceError(
            f"no convergence in {NEWTON_MAX_ITER} iterations, residual {res}",
            residual=res)

    n_min = _minimal_period(spec, s)
    M = _monodromy(PoincareMapSpec(spec.params, spec.cfg, n_min), s)
    mus = np.linalg.eigvals(M)
    stable = bool(np.all(np.abs(mus) <= 1.0 + STABILITY_TOL))
    return PeriodicOrbit(n=n_min, point=State(float(s[0]), float(s[1]), 0.0),
                         multipliers=(complex(mus[0]), complex(mus[1])),
                         stable=stable, residual=res)


def _minimal_period(spec: PoincareMapSpec, s: np.ndarray) -> int:
    for m in sorted(d for d in range(1, spec.n + 1) if spec.n % d == 0):
        r = map_apply(PoincareMapSpec(spec.params, spec.cfg, m), (s[0], s[1]))
        if r.ok and np.hypot(r.point[0] - s[0], r.point[1] - s[1]) < MIN_PERIOD_TOL:
            return m
    return spec.n


@dataclass(frozen=True)
class PssCloud:
    """Raw section point cloud from iterating seeds under the map."""

    seeds: list[tuple[float, float]]
    points: list[np.ndarray]          # per seed, shape (k, 2) visited points
    status: list[str]                 # per seed: Completed | PullIn | Escape

    def to_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed_id", "k", "x", "v"])
        for sid, pts in enumerate(self.points):
            for k in range(pts.shape[0]):
                w.writerow([sid, k, repr(float(pts[k, 0])), repr(float(pts[k, 1]))])


def pss_scan(spec: PoincareMapSpec, seeds, iterations: int) -> PssCloud:
    """Iterate the map from every seed, collecting all visited section points.

    Seeds that pull in or escape keep the points visited before the event;
    output ordering is deterministic by seed index.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    seed_arr = np.asarray(list(seeds), dtype=float).reshape(-1, 2)
    n_seeds = seed_arr.shape[0]
    out = np.empty((n_seeds, iterations + 1, 2))
    counts = np.empty(n_seeds, dtype=np.int64)
    codes = np.empty(n_seeds, dtype=np.int64)
    K.pss_scan_core(*_pack(spec.params, spec.cfg), seed_arr, iterations,
                    spec.n, spec.params.period, out, counts, codes)
    status_of = {K.STATUS_COMPLETED: "Completed", K.STATUS_PULL_IN: "PullIn",
                 K.STATUS_ESCAPE: "Escape", K.STATUS_UNDERFLOW: "Underflow",
                 K.STATUS_BAD_START: "BadStart"}
    points = [out[i, :counts[i]].copy() for i in range(n_seeds)]
    return PssCloud(seeds=[(float(a), float(b)) for a, b in seed_arr],
                    points=points, status=[status_of[int(c)] for c in codes])


def radial_fan_seeds(n_rays: int, n_radii: int, x_range: tuple[float, float],
                     v_range: tuple[float, float],
                     center: tuple[float, float] = (0.0, 0.0)) -> list[tuple[float, float]]:
    """Deterministic fan of seeds: n_rays directions, n_radii points per ray."""
    cx, cv = center
    seeds = []
    for i in range(n_rays):
        ang = 2.0 * math.pi * i / n_rays
        rx = max(x_range[1] - cx, cx - x_range[0])
        rv = max(v_range[1] - cv, cv - v_range[0])
        for j in range(1, n_radii + 1):
            frac = j / n_radii
            x = cx + frac * rx * math.cos(ang)
            v = cv + frac * rv * math.sin(ang)
            if x_range[0] <= x <= x_range[1] and v_range[0] <= v <= v_range[1]:
                seeds.append((x, v))
    return seeds
