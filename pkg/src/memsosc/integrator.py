"""Adaptive time stepping with stroboscopic sampling and pull-in/escape events.

Wraps the compiled Dormand-Prince 5(4) core with dense output.  Event times
are refined on the dense interpolant to 1e-10 in time.  All entry points are
pure functions of (params, config, initial state), so they are safe to call
from concurrent workers.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .model import ModelParams, State, stiffness_tables

KIND_COMPLETED = "Completed"
KIND_PULL_IN = "PullIn"
KIND_ESCAPE = "Escape"

_STATUS_KIND = {
    K.STATUS_COMPLETED: KIND_COMPLETED,
    K.STATUS_PULL_IN: KIND_PULL_IN,
    K.STATUS_ESCAPE: KIND_ESCAPE,
}


class StepUnderflowError(RuntimeError):
    """Adaptive controller stalled: near-singular dynamics missed by the events."""


@dataclass(frozen=True)
class IntegratorConfig:
    """Tolerances, event thresholds and step limits.

    ``max_step`` of None means one twentieth of the forcing period.  Pull-in
    is declared at ``pull_in_threshold`` (the singularity itself being
    unreachable), escape at ``escape_floor`` on the negative side.
    """

    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_step: float | None = None
    pull_in_threshold: float = 1.0 - 1e-3
    escape_floor: float = -5.0
    max_time: float | None = None

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be strictly positive")
        if not (0.0 < self.pull_in_threshold < 1.0):
            raise ValueError("pull_in_threshold must lie in (0, 1)")
        if not self.escape_floor < 0.0:
            raise ValueError("escape_floor must be negative")
        if self.max_step is not None and not self.max_step > 0:
            raise ValueError("max_step must be positive")
        if self.max_time is not None and not self.max_time > 0:
            raise ValueError("max_time must be positive")

    def effective_max_step(self, p: ModelParams) -> float:
        return self.max_step if self.max_step is not None else p.period / 20.0

    def to_dict(self) -> dict:
        return {"rel_tol": self.rel_tol, "abs_tol": self.abs_tol,
                "max_step": self.max_step,
                "pull_in_threshold": self.pull_in_threshold,
                "escape_floor": self.escape_floor, "max_time": self.max_time}

    @classmethod
    def from_dict(cls, d: dict) -> "IntegratorConfig":
        known = {"rel_tol", "abs_tol", "max_step", "pull_in_threshold",
                 "escape_floor", "max_time"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown integrator keys: {sorted(unknown)}")
        return cls(**{k: d[k] for k in d})


@dataclass(frozen=True)
class TrajectoryOutcome:
    """Result of one integration: how it ended, where, and the samples."""

    kind: str                    # Completed | PullIn | Escape
    final_state: State
    samples: list[State] = field(default_factory=list)
    t_event: float | None = None
    max_abs_x: float = 0.0

    def to_json_dict(self) -> dict:
        return {"kind": self.kind, "t_event": self.t_event,
                "final": [self.final_state.x, self.final_state.v]}

    def samples_to_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "x", "v"])
        for s in self.samples:
            w.writerow([repr(s.t), repr(s.x), repr(s.v)])


@dataclass(frozen=True)
class StrobeResult:
    """Stroboscopic section samples at t = kT, possibly truncated by an event."""

    states: list[State]
    outcome: str                 # Completed | PullIn | Escape
    t_event: float | None = None
    max_abs_x: float = 0.0


def _pack(p: ModelParams, cfg: IntegratorConfig):
    kind, xs, cs = stiffness_tables(p)
    return (p.c, p.alpha, p.lam, p.delta, p.omega, kind, xs, cs,
            cfg.rel_tol, cfg.abs_tol, cfg.effective_max_step(p),
            cfg.pull_in_threshold, cfg.escape_floor)


def _check_start(cfg: IntegratorConfig, s0: State) -> None:
    if s0.x >= cfg.pull_in_threshold:
        raise ValueError(f"initial x={s0.x} already beyond the pull-in threshold")
    if s0.x <= cfg.escape_floor:
        raise ValueError(f"initial x={s0.x} already beyond the escape floor")
    if not all(map(math.isfinite, (s0.x, s0.v, s0.t))):
        raise ValueError("initial state must be finite")


def integrate(p: ModelParams, cfg: IntegratorConfig, s0: State, t_end: float,
              sample_times=None) -> TrajectoryOutcome:
    """Advance s0 to t_end or to the first pull-in/escape event.

    ``sample_times`` is an int (that many equispaced times over the span,
    endpoints included) or an explicit monotone sequence inside the span;
    samples land on the dense output.  Integration may run backward
    (t_end < s0.t).  Raises StepUnderflowError when the controller stalls.
    """
    _check_start(cfg, s0)
    if cfg.max_time is not None and abs(t_end - s0.t) > cfg.max_time * (1 + 1e-12):
        raise ValueError(f"span |{t_end} - {s0.t}| exceeds cfg.max_time={cfg.max_time}")

    if sample_times is None:
        t_eval = np.empty(0, dtype=float)
    elif isinstance(sample_times, int):
        if sample_times < 2:
            raise ValueError("sample_times as an int must be >= 2")
        t_eval = np.linspace(s0.t, t_end, sample_times)
    else:
        t_eval = np.asarray(sample_times, dtype=float)
        direction = 1.0 if t_end >= s0.t else -1.0
        if np.any((t_eval - s0.t) * direction < -1e-12) or \
           np.any((t_eval - t_end) * direction > 1e-12):
            raise ValueError("sample times must lie within the integration span")
        if t_eval.size > 1 and np.any(np.diff(t_eval) * direction <= 0):
            raise ValueError("sample times must be strictly monotone toward t_end")

    out_eval = np.full((t_eval.size, 2), np.nan)
    status, t_f, x_f, v_f, _h, max_abs, n_filled = K.integrate_span(
        *_pack(p, cfg), s0.t, s0.x, s0.v, t_end, t_eval, out_eval, 1)

    if status == K.STATUS_UNDERFLOW:
        raise StepUnderflowError(f"step size underflow at t={t_f}, x={x_f}")
    if status == K.STATUS_BAD_START:
        raise ValueError(f"right-hand side not finite at the initial state {s0}")

    samples = [State(x=float(out_eval[i, 0]), v=float(out_eval[i, 1]), t=float(t_eval[i]))
               for i in range(int(n_filled))]
    kind = _STATUS_KIND[status]
    t_event = float(t_f) if kind != KIND_COMPLETED else None
    return TrajectoryOutcome(kind=kind, final_state=State(float(x_f), float(v_f), float(t_f)),
                             samples=samples, t_event=t_event, max_abs_x=float(max_abs))


def strobe(p: ModelParams, cfg: IntegratorConfig, s0: State, n: int) -> StrobeResult:
    """Stroboscopic samples at t = s0.t + k*T for k = 0..n, truncated at events.

    Requires s0.t to sit on the section (an integer multiple of the forcing
    period, the t = 0 phase having maximum voltage).
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    _check_start(cfg, s0)
    T = p.period
    if abs(s0.t / T - round(s0.t / T)) > 1e-9:
        raise ValueError(f"strobe start time {s0.t} is not a multiple of the period {T}")
    if cfg.max_time is not None and n * T > cfg.max_time * (1 + 1e-12):
        raise ValueError(f"{n} periods exceed cfg.max_time={cfg.max_time}")

    out = np.full((n + 1, 2), np.nan)
    status, k_done, t_f, x_f, v_f, max_abs = K.strobe_core(
        *_pack(p, cfg), s0.x, s0.v, s0.t, n, T, out, 1)

    if status == K.STATUS_UNDERFLOW:
        raise StepUnderflowError(f"step size underflow at t={t_f}, x={x_f}")
    if status == K.STATUS_BAD_START:
        raise ValueError(f"right-hand side not finite at the initial state {s0}")

    states = [State(x=float(out[k, 0]), v=float(out[k, 1]), t=float(s0.t + k * T))
              for k in range(int(k_done) + 1)]
    kind = _STATUS_KIND[status]
    t_event = float(t_f) if kind != KIND_COMPLETED else None
    return StrobeResult(states=states, outcome=kind, t_event=t_event,
                        max_abs_x=float(max_abs))
