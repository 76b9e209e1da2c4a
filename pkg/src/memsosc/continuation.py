"""Damping continuation of periodic orbits and critical-damping detection.

An nT orbit found at low damping is tracked as c increases by re-Newtoning
from the previous solution (continue_in_c).  find_c_star brackets the
critical damping c* at which the orbit "vanishes", under either of two
operational criteria:

* ``basin`` (default): the orbit is considered gone once a trajectory
  started from the seed orbit's original section coordinates no longer
  reaches the continued n-cycle attractor.  Re-seeding from the undamped
  coordinates is how the reference critical values were measured, and this
  criterion reproduces them; the attractor itself typically survives to
  larger c with a shrinking basin.
* ``fold``: the orbit is considered gone once Newton from the continued
  guess stops converging, i.e. the actual saddle-node where the stable and
  unstable orbits coalesce.  The leading multiplier approaches +1 along
  this branch, which is recorded as a diagnostic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .integrator import IntegratorConfig, State, StepUnderflowError, strobe
from .poincare import (
    EventInterruptedError,
    NEWTON_TOL,
    NoConvergenceError,
    PeriodicOrbit,
    PoincareMapSpec,
    find_orbit,
)

STEP_GROWTH = 1.2
STEP_CAP = 1e-3
STEP_INIT = 1e-6
LOSS_REL = 1e-9
BRACKET_REL = 1e-3
MU_DIAG_TARGET = 0.1
MU_REFINE_REL = 1e-6

# basin-criterion machinery
BASIN_MATCH_RADIUS = 0.02
BASIN_BLOCK = 500
BASIN_MIN_ITER = 2000
BASIN_MAX_ITER = 60000
BASIN_REL_TOL = 1e-6
BASIN_ABS_TOL = 1e-9


class SeedInvalidError(ValueError):
    """The seed orbit does not satisfy the continuation preconditions."""


class BracketInvalidError(RuntimeError):
    """The orbit still exists at the requested upper damping bound."""


class OrbitLossError(RuntimeError):
    """The branch was lost before reaching c_target; carries the last survivor."""

    def __init__(self, message: str, c_last: float, orbit: PeriodicOrbit,
                 steps: list["ContinuationStep"]):
        super().__init__(message)
        self.c_last = c_last
        self.orbit = orbit
        self.steps = steps


@dataclass(frozen=True)
class ContinuationStep:
    c: float
    converged: bool
    residual: float
    mu_dist: float | None = None   # |leading multiplier - (+1)| when converged

    def to_json_list(self) -> list:
        return [self.c, self.converged, self.residual, self.mu_dist]


@dataclass(frozen=True)
class ContinuationResult:
    """Outcome of a c* search: final bracket, audit trail, last surviving orbit."""

    n: int
    omega: float
    c_star: float
    bracket: tuple[float, float]       # (c_exists, c_gone)
    orbit_at_last: PeriodicOrbit
    criterion: str
    steps: list[ContinuationStep] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "n": self.n,
            "omega": self.omega,
            "c_star": self.c_star,
            "bracket": [self.bracket[0], self.bracket[1]],
            "criterion": self.criterion,
            "orbit_at_last": self.orbit_at_last.to_json_dict(),
            "steps": [s.to_json_list() for s in self.steps],
        }


def _mu_dist(orbit: PeriodicOrbit) -> float:
    return min(abs(m - 1.0) for m in orbit.multipliers)


def _try_newton(spec: PoincareMapSpec, c: float, guess: tuple[float, float],
                n_required: int) -> tuple[PeriodicOrbit | None, float]:
    """(orbit, residual) at damping c; orbit is None on any failure.

    Convergence onto a shorter-period point (e.g. the central T orbit after
    the branch dies) counts as failure: the nT branch is gone.
    """
    probe = PoincareMapSpec(replace(spec.params, c=c), spec.cfg, spec.n)
    try:
        orb = find_orbit(probe, guess)
    except (NoConvergenceError, EventInterruptedError, StepUnderflowError) as e:
        return None, getattr(e, "residual", math.inf)
    if orb.n != n_required:
        return None, orb.residual
    return orb, orb.residual


def _check_seed(spec: PoincareMapSpec, seed_orbit: PeriodicOrbit) -> None:
    if seed_orbit.residual > 10.0 * NEWTON_TOL:
        raise SeedInvalidError(
            f"seed orbit residual {seed_orbit.residual} exceeds tolerance")
    if seed_orbit.n != spec.n:
        raise SeedInvalidError(
            f"seed orbit has minimal period {seed_orbit.n}, spec asks for {spec.n}")


def continue_in_c(spec: PoincareMapSpec, seed_orbit: PeriodicOrbit,
                  c_target: float) -> tuple[PeriodicOrbit, list[ContinuationStep]]:
    """Track the orbit from spec.params.c up to c_target.

    Returns (orbit at c_target, audit trail).  If the branch dies on the way,
    raises OrbitLossError carrying the last surviving damping and orbit; the
    loss is declared when the backtracking step underflows 1e-9 relative.
    """
    _check_seed(spec, seed_orbit)
    c_lo = spec.params.c
    if not c_target > c_lo:
        raise SeedInvalidError(f"c_target={c_target} must exceed the seed damping {c_lo}")

    orbit = seed_orbit
    steps: list[ContinuationStep] = []
    step = STEP_INIT
    while c_lo < c_target:
        c_try = min(c_lo + step, c_target)
        orb, res = _try_newton(spec, c_try, (orbit.point.x, orbit.point.v), spec.n)
        if orb is not None:
            steps.append(ContinuationStep(c_try, True, res, _mu_dist(orb)))
            orbit = orb
            c_lo = c_try
            step = min(step * STEP_GROWTH, STEP_CAP)
        else:
            steps.append(ContinuationStep(c_try, False, res))
            step *= 0.5
            if step < max(LOSS_REL * max(c_lo, c_try), 1e-16):
                raise OrbitLossError(
                    f"orbit lost near c={c_try} (last surviving c={c_lo})",
                    c_last=c_lo, orbit=orbit, steps=steps)
    return orbit, steps


class _BasinProbe:
    """Does a trajectory from the reference coordinates reach the n-cycle?

    The attractor's cycle points at each damping come from the Newton-tracked
    branch; the competing central T orbit is tracked alongside.  Long
    trajectories run at classification-grade tolerances for speed.
    """

    def __init__(self, spec: PoincareMapSpec, reference: tuple[float, float]):
        self.spec = spec
        self.reference = reference
        self.loose = IntegratorConfig(
            rel_tol=BASIN_REL_TOL, abs_tol=BASIN_ABS_TOL,
            max_step=spec.cfg.max_step,
            pull_in_threshold=spec.cfg.pull_in_threshold,
            escape_floor=spec.cfg.escape_floor)
        self.t_guess: tuple[float, float] | None = None

    def _t_point(self, c: float) -> tuple[float, float] | None:
        guess = self.t_guess if self.t_guess is not None else self.reference
        probe = PoincareMapSpec(replace(self.spec.params, c=c), self.spec.cfg, 1)
        for g in (guess, (0.0, 0.0)):
            try:
                orb = find_orbit(probe, g)
            except (NoConvergenceError, EventInterruptedError, StepUnderflowError):
                continue
            if orb.n == 1:
                self.t_guess = (orb.point.x, orb.point.v)
                return self.t_guess
        return None

    def reaches(self, c: float, orbit: PeriodicOrbit) -> bool:
        p = replace(self.spec.params, c=c)
        n = self.spec.n
        spec_c = PoincareMapSpec(p, self.spec.cfg, n)
        cycle = np.array(orbit.cycle_points(spec_c))
        t_pt = self._t_point(c)
        budget = int(min(BASIN_MAX_ITER,
                         max(BASIN_MIN_ITER, 24.0 / (c * n * p.period))))
        x, v = self.reference
        done = 0
        d_cyc = d_t = math.inf
        hits = misses = 0
        while done < budget:
            take = min(BASIN_BLOCK, budget - done)
            try:
                r = strobe(p, self.loose, State(x, v, 0.0), take * n)
            except (StepUnderflowError, ValueError):
                return False
            if r.outcome != "Completed":
                return False
            x, v = r.states[-1].x, r.states[-1].v
            done += take
            d_cyc = float(np.min(np.hypot(cycle[:, 0] - x, cycle[:, 1] - v)))
            d_t = (math.hypot(x - t_pt[0], v - t_pt[1])
                   if t_pt is not None else math.inf)
            # two consecutive block-end verdicts commit the classification
            hits = hits + 1 if d_cyc < BASIN_MATCH_RADIUS else 0
            misses = misses + 1 if d_t < BASIN_MATCH_RADIUS else 0
            if hits >= 2:
                return True
            if misses >= 2:
                return False
        return d_cyc < d_t


def find_c_star(spec: PoincareMapSpec, seed_orbit: PeriodicOrbit, c_hi: float,
                criterion: str = "basin") -> ContinuationResult:
    """Locate the critical damping where the nT orbit disappears.

    Marches c upward with geometric steps, always re-Newtoning the branch
    from the previous solution; after the first failure of the chosen
    existence criterion, bisects the (exists, gone) bracket down to a
    relative width of 1e-3.  In fold mode the bracket is refined further
    (to at most 1e-6 relative) until the surviving orbit's leading
    multiplier is within 0.1 of +1, so the recorded diagnostic actually
    exhibits the saddle-node signature.

    Raises BracketInvalidError if the orbit still exists at c_hi.
    """
    if criterion not in ("basin", "fold"):
        raise ValueError(f"unknown criterion {criterion!r}")
    _check_seed(spec, seed_orbit)
    c_lo = spec.params.c
    if not c_hi > c_lo:
        raise SeedInvalidError(f"c_hi={c_hi} must exceed the seed damping {c_lo}")

    basin = _BasinProbe(spec, (seed_orbit.point.x, seed_orbit.point.v)) \
        if criterion == "basin" else None

    def probe(c_try: float, guess: tuple[float, float]):
        orb, res = _try_newton(spec, c_try, guess, spec.n)
        if orb is None:
            return None, res
        if basin is not None and not basin.reaches(c_try, orb):
            return None, res
        return orb, res

    orbit = seed_orbit
    steps: list[ContinuationStep] = []
    step = STEP_INIT
    c_gone = None

    while True:
        if c_gone is None:
            c_try = min(c_lo + step, c_hi)
        else:
            c_try = 0.5 * (c_lo + c_gone)
        orb, res = probe(c_try, (orbit.point.x, orbit.point.v))
        if orb is not None:
            steps.append(ContinuationStep(c_try, True, res, _mu_dist(orb)))
            orbit = orb
            c_lo = c_try
            if c_gone is None:
                if c_try >= c_hi:
                    raise BracketInvalidError(
                        f"orbit still exists at c_hi={c_hi}; widen the bracket")
                step = min(step * STEP_GROWTH, STEP_CAP)
        else:
            steps.append(ContinuationStep(c_try, False, res))
            c_gone = c_try
        if c_gone is not None:
            width = c_gone - c_lo
            mid = 0.5 * (c_lo + c_gone)
            done = width <= BRACKET_REL * mid or width <= 1e-15
            if done and criterion == "fold" and _mu_dist(orbit) >= MU_DIAG_TARGET:
                done = width <= MU_REFINE_REL * mid or width <= 1e-15
            if done:
                return ContinuationResult(
                    n=spec.n, omega=spec.params.omega, c_star=mid,
                    bracket=(c_lo, c_gone), orbit_at_last=orbit,
                    criterion=criterion, steps=steps)
