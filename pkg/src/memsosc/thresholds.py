"""Closed-form existence, amplitude, period and pull-in criteria.

Everything here is algebra on the dimensionless parameter set: the
guaranteed-existence bound on the squared peak voltage, the nonexistence
test, amplitude bounds for periodic responses, the period floor for
nonnegative zero-IC oscillations, and the sufficient condition for
finite-time pull-in with its time bound.  Results are collected into a
ThresholdReport whose ``flags`` list records every hypothesis that the
given parameters violate; fields are still computed wherever they make
sense, never raised over.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .model import (
    GRAPHENE,
    LINEAR,
    CustomStiffness,
    ModelParams,
    voltage_extrema,
)

PERIOD_FLOOR = math.pi
ROOT_SCAN_NODES = 10_000
ROOT_BISECT_TOL = 1e-12
TAIL_SCAN_FLOOR = -1e6

GUARANTEED = "Guaranteed"
RULED_OUT = "RuledOut"
UNDETERMINED = "Undetermined"


def existence_bound(alpha: float) -> float:
    """Largest squared peak voltage with a guaranteed period-locked response.

    Equals the maximum of h(x)*(1-x)^2 over the physical well [0, min(1, 1/alpha)]
    for the graphene law; continuous at alpha = 0 with limit 4/27 (the linear
    static pull-in bound).  Evaluated in a cancellation-free form so the
    alpha -> 0 regime keeps full precision.
    """
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    if alpha == 0.0:
        return 4.0 / 27.0
    mu = math.sqrt(4.0 * alpha * alpha - 4.0 * alpha + 9.0)
    # 2a+3-mu = 16a/(2a+3+mu); 6a-3+mu = 32a(1-a)/(mu+3-6a) for a < 1
    f1 = 16.0 * alpha / (2.0 * alpha + 3.0 + mu)
    f2 = 5.0 - 2.0 * alpha + mu
    if alpha < 0.75:
        f3 = 32.0 * alpha * (1.0 - alpha) / (mu + 3.0 - 6.0 * alpha)
    else:
        f3 = 6.0 * alpha - 3.0 + mu
    return f1 * f2 * f3 * f3 / (4096.0 * alpha ** 3)


def static_pull_in_bound(alpha: float) -> float:
    """Squared DC voltage below which the undamped, constant-voltage,
    zero-IC oscillator stays periodic (no dynamic pull-in).

    Cancellation-free rewrite of the closed form; its alpha -> 0 limit is
    1/8, the classic zero-IC dynamic pull-in bound of the linear model.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    mu = math.sqrt(4.0 * alpha * alpha - 6.0 * alpha + 9.0)
    inner = 6.0 * (2.0 * alpha - 3.0) / (mu + 3.0) + 24.0 + 2.0 * mu - 4.0 * alpha
    return inner / (36.0 * (2.0 * alpha + 3.0 + mu))


def force_balance(p: ModelParams, x, v_sq: float):
    """h(x)*(1-x)^2 - v_sq, the stiffness-vs-electrostatic balance function."""
    xa = np.asarray(x, dtype=float)
    out = p.h(xa) * (1.0 - xa) ** 2 - v_sq
    return out if np.ndim(x) else float(out)


def _bisect(f, a: float, b: float) -> float:
    fa = f(a)
    for _ in range(200):
        if b - a <= ROOT_BISECT_TOL:
            break
        m = 0.5 * (a + b)
        fm = f(m)
        if fm == 0.0:
            return m
        if (fa < 0) == (fm < 0):
            a, fa = m, fm
        else:
            b = m
    return 0.5 * (a + b)


def _scan_root(f, lo: float, hi: float, nodes: int) -> float | None:
    xs = np.linspace(lo, hi, nodes)
    vals = np.asarray(f(xs))
    zero = np.flatnonzero(vals == 0.0)
    if zero.size:
        return float(xs[zero[0]])
    sign_flip = np.flatnonzero(np.signbit(vals[:-1]) != np.signbit(vals[1:]))
    if not sign_flip.size:
        return None
    i = int(sign_flip[0])
    return _bisect(lambda x: float(f(x)), float(xs[i]), float(xs[i + 1]))


def _tail_sign(p: ModelParams, v_min_sq: float) -> int | None:
    """Sign of the balance function as x -> -inf; None when undecidable."""
    stiff = p.stiffness
    if isinstance(stiff, CustomStiffness):
        h_lo = float(stiff.h[0])   # clamped constant below the table
        if h_lo > 0:
            return 1
        if h_lo < 0 or v_min_sq > 0:
            return -1
        return 0
    if stiff == GRAPHENE and p.alpha > 0:
        return 1        # alpha*x^2*(1-x)^2 dominates
    # linear law (or graphene with alpha = 0): x*(1-x)^2 -> -inf
    return -1


def existence_check(p: ModelParams) -> tuple[str, float | None]:
    """Tri-state periodic-existence verdict with a witness root.

    Guaranteed when h(x)*(1-x)^2 = V_M^2 has a root in [0, 1) (the witness);
    RuledOut when h(x)*(1-x)^2 = V_m^2 provably has no root on (-inf, 1)
    while h itself has a real root there; Undetermined otherwise.  Root
    location is a sign-change sweep plus bisection; the unbounded side
    combines a dense scan on [-10, 1], a logarithmic sweep to -1e6, and the
    analytic tail sign of the stiffness family.
    """
    v_min, v_max = voltage_extrema(p)

    root = _scan_root(lambda x: force_balance(p, x, v_max * v_max),
                      0.0, 1.0 - 1e-12, ROOT_SCAN_NODES)
    if root is not None:
        return GUARANTEED, float(root)

    # nonexistence side
    g = lambda x: force_balance(p, x, v_min * v_min)
    has_root = _scan_root(g, -10.0, 1.0 - 1e-12, ROOT_SCAN_NODES) is not None
    if not has_root:
        xs = -np.logspace(1.0, math.log10(-TAIL_SCAN_FLOOR), 200)
        vals = np.asarray(g(xs))
        if np.any(vals == 0.0) or np.any(np.signbit(vals[:-1]) != np.signbit(vals[1:])):
            has_root = True
        else:
            tail = _tail_sign(p, v_min * v_min)
            edge = float(vals[-1])   # most negative scanned point
            if tail is None or tail == 0:
                has_root = tail == 0
            elif (tail > 0) != (edge > 0):
                has_root = True      # sign change between the scan edge and the tail
    if not has_root and _stiffness_has_root(p):
        return RULED_OUT, None
    return UNDETERMINED, None


def _stiffness_has_root(p: ModelParams) -> bool:
    if isinstance(p.stiffness, CustomStiffness):
        return _scan_root(p.h, -10.0, 1.0 - 1e-12, ROOT_SCAN_NODES) is not None
    return True   # graphene and linear laws vanish at x = 0


@dataclass(frozen=True)
class AmplitudeUpper:
    """Dichotomy for the peak of a periodic response (alpha > 0).

    Either the whole orbit sits at or below -1/alpha, or its nonnegative
    peak is at most min(1/alpha, 1 - 2*V_m*sqrt(alpha)); the second branch
    is empty when 2*V_m*sqrt(alpha) > 1.
    """

    negative_branch_cap: float          # -1/alpha
    positive_branch_cap: float | None   # None when the branch is empty
    positive_branch_empty: bool

    def to_json_dict(self) -> dict:
        return {"negative_branch_cap": self.negative_branch_cap,
                "positive_branch_cap": self.positive_branch_cap,
                "positive_branch_empty": self.positive_branch_empty}


def amplitude_upper(p: ModelParams) -> AmplitudeUpper:
    if p.alpha <= 0:
        raise ValueError("amplitude bounds require alpha > 0")
    v_min, _ = voltage_extrema(p)
    margin = 2.0 * v_min * math.sqrt(p.alpha)
    if margin > 1.0:
        return AmplitudeUpper(-1.0 / p.alpha, None, True)
    cap = min(1.0 / p.alpha, 1.0 - margin)
    return AmplitudeUpper(-1.0 / p.alpha, cap, False)


@dataclass(frozen=True)
class AmplitudeLower:
    """Candidate floors for the minimum of a periodic response (c > 0).

    ``start_floor`` is the conservative bound on the reference point the
    dissipation estimates are anchored to; the two candidate bounds differ
    in which Cauchy-Schwarz route controls the velocity, and the
    voltage-ratio term of the second is unavailable when V_m = 0.
    """

    start_floor: float
    bound_dissipation: float | None       # (alpha*V_M/(1+alpha))^2 route
    bound_alt_alpha_term: float | None    # (alpha*V_M/(alpha-1))^2 route
    bound_alt_ratio_term: float | None    # (V_M/V_m)^2 / (4*alpha) route
    bound_alt: float | None               # max of the available alt terms

    def to_json_dict(self) -> dict:
        return {"start_floor": self.start_floor,
                "bound_dissipation": self.bound_dissipation,
                "bound_alt_alpha_term": self.bound_alt_alpha_term,
                "bound_alt_ratio_term": self.bound_alt_ratio_term,
                "bound_alt": self.bound_alt}


def amplitude_lower(p: ModelParams, period: float) -> AmplitudeLower:
    if p.alpha <= 0:
        raise ValueError("amplitude bounds require alpha > 0")
    if p.c <= 0:
        raise ValueError("the dissipation lower bounds require c > 0")
    v_min, v_max = voltage_extrema(p)
    a = p.alpha
    floor = (-1.0 - math.sqrt(1.0 + 4.0 * a * v_max * v_max)) / (2.0 * a)
    pref = math.sqrt(period) / (2.0 * p.c)

    if v_max == 0.0:
        return AmplitudeLower(floor, floor, floor, floor, floor)

    b1 = -pref * (a * v_max / (1.0 + a)) ** 2 + floor
    t_alpha = None
    if a != 1.0:
        t_alpha = -pref * (a * v_max / (a - 1.0)) ** 2 + floor
    t_ratio = None
    if v_min > 0.0:
        t_ratio = -(math.sqrt(period) / (8.0 * a * p.c)) * (v_max / v_min) ** 2 + floor
    avail = [t for t in (t_alpha, t_ratio) if t is not None]
    return AmplitudeLower(floor, b1, t_alpha, t_ratio,
                          max(avail) if avail else None)


def period_floor_ok(claimed_period: float, tol: float = 1e-9) -> bool:
    """Validator: nonnegative zero-IC periodic responses cannot beat pi."""
    return claimed_period >= PERIOD_FLOOR - tol


def pull_in_guaranteed(p: ModelParams) -> tuple[bool, float | None]:
    """Sufficient condition for finite-time collapse from rest, with a time bound.

    Requires delta < 1.  True when lam*(1-delta) > sqrt(1+alpha); the bound
    on the collapse time solves the quadratic (c = 0) or the damped-ramp
    (c > 0) lower envelope of the displacement reaching the gap.
    """
    if p.delta >= 1.0:
        raise ValueError("the sufficient pull-in condition requires delta < 1")
    drive = p.lam * (1.0 - p.delta)
    excess = drive * drive - (1.0 + p.alpha)
    if excess <= 0.0:
        return False, None
    if p.c == 0.0:
        return True, math.sqrt(2.0 / excess)
    # solve excess * (t - (1 - exp(-c t))/c)/c = 1 for t; LHS increases from 0
    c = p.c
    f = lambda t: excess * (t - (1.0 - math.exp(-c * t)) / c) / c - 1.0
    hi = 1.0
    while f(hi) < 0.0:
        hi *= 2.0
        if hi > 1e12:
            return True, None
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if hi - lo <= 1e-12 * max(1.0, hi):
            break
        if f(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return True, 0.5 * (lo + hi)


@dataclass(frozen=True)
class ThresholdReport:
    """All closed-form quantities for a parameter set, plus applicability flags."""

    v_min: float
    v_max: float
    existence_bound: float | None
    exists_t_periodic: str
    witness: float | None
    amp_upper: AmplitudeUpper | None
    amp_lower: AmplitudeLower | None
    period_floor: float
    pull_in_sufficient: bool | None
    pull_in_time_bound: float | None
    static_threshold: float | None
    flags: list[str] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "V_m": self.v_min,
            "V_M": self.v_max,
            "existence_bound": self.existence_bound,
            "exists_T_periodic": self.exists_t_periodic,
            "witness": self.witness,
            "amp_upper": self.amp_upper.to_json_dict() if self.amp_upper else None,
            "amp_lower_bounds": self.amp_lower.to_json_dict() if self.amp_lower else None,
            "period_floor": self.period_floor,
            "pull_in_sufficient": self.pull_in_sufficient,
            "pull_in_time_bound": self.pull_in_time_bound,
            "static_threshold": self.static_threshold,
            "flags": list(self.flags),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)

    def table(self) -> str:
        """Human-readable report table."""
        def fmt(v):
            if v is None:
                return "n/a"
            if isinstance(v, bool):
                return "yes" if v else "no"
            if isinstance(v, float):
                return repr(v)
            return str(v)

        rows = [
            ("min |V(t)|", fmt(self.v_min)),
            ("max |V(t)|", fmt(self.v_max)),
            ("existence bound on V_max^2", fmt(self.existence_bound)),
            ("T-periodic solution", self.exists_t_periodic),
            ("witness root", fmt(self.witness)),
        ]
        if self.amp_upper is not None:
            rows.append(("peak cap (negative branch)", fmt(self.amp_upper.negative_branch_cap)))
            rows.append(("peak cap (positive branch)",
                         "empty" if self.amp_upper.positive_branch_empty
                         else fmt(self.amp_upper.positive_branch_cap)))
        if self.amp_lower is not None:
            rows.append(("min floor (dissipation route)", fmt(self.amp_lower.bound_dissipation)))
            rows.append(("min floor (alternative route)", fmt(self.amp_lower.bound_alt)))
        rows += [
            ("period floor (nonneg, zero ICs)", fmt(self.period_floor)),
            ("pull-in guaranteed", fmt(self.pull_in_sufficient)),
            ("pull-in time bound", fmt(self.pull_in_time_bound)),
            ("static pull-in threshold (lam^2)", fmt(self.static_threshold)),
        ]
        width = max(len(r[0]) for r in rows)
        lines = [f"{name:<{width}}  {val}" for name, val in rows]
        for fl in self.flags:
            lines.append(f"! {fl}")
        return "\n".join(lines)


def compute_report(p: ModelParams) -> ThresholdReport:
    """Evaluate every closed-form criterion, flagging inapplicable hypotheses."""
    flags: list[str] = []
    v_min, v_max = voltage_extrema(p)
    if abs(p.delta) > 1.0:
        flags.append("|delta| > 1: voltage waveform crosses zero, V_m = 0")

    custom = isinstance(p.stiffness, CustomStiffness)
    graphene = not custom and p.stiffness == GRAPHENE
    bound = None
    if not custom:
        # the linear law is the alpha = 0 member of the same family
        bound = existence_bound(p.alpha if graphene else 0.0)
    else:
        flags.append("existence bound is specific to the analytic laws; not evaluated")

    verdict, witness = existence_check(p)

    amp_up = None
    amp_lo = None
    if graphene and p.alpha > 0:
        amp_up = amplitude_upper(p)
        if p.c > 0:
            amp_lo = amplitude_lower(p, p.period)
            if v_min == 0.0:
                flags.append("V_m = 0: voltage-ratio lower-bound term unavailable")
        else:
            flags.append("amplitude lower bounds require c > 0; not evaluated")
    else:
        flags.append("amplitude bounds require the graphene law with alpha > 0; not evaluated")

    pis: bool | None = None
    pib: float | None = None
    if p.delta < 1.0:
        pis, pib = pull_in_guaranteed(p)
    else:
        flags.append("pull-in sufficient condition requires delta < 1; not evaluated")

    static = None
    if graphene and p.alpha > 0:
        static = static_pull_in_bound(p.alpha)
        if p.c != 0.0 or p.delta != 0.0:
            flags.append("static threshold applies only for c = 0, delta = 0, zero ICs")
    else:
        flags.append("static threshold requires the graphene law with alpha > 0; not evaluated")

    return ThresholdReport(
        v_min=v_min, v_max=v_max, existence_bound=bound,
        exists_t_periodic=verdict, witness=witness,
        amp_upper=amp_up, amp_lower=amp_lo,
        period_floor=PERIOD_FLOOR,
        pull_in_sufficient=pis, pull_in_time_bound=pib,
        static_threshold=static, flags=flags)
