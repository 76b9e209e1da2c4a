"""Compiled numerical core: Dormand-Prince 5(4) stepping and grid sweeps.

Everything here is numba nopython code operating on unpacked scalars and
arrays; the public modules wrap these kernels with friendly dataclasses.
The pair is the classic DP 5(4) with its free quartic interpolant, so the
pure-Python reference integrators in the tests (scipy RK45) use literally
the same tableau.

Status codes shared by all kernels:
    0 = completed, 1 = pull-in event, 2 = escape event,
    3 = step-size underflow (near-singular dynamics), 4 = bad initial state.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

STATUS_COMPLETED = 0
STATUS_PULL_IN = 1
STATUS_ESCAPE = 2
STATUS_UNDERFLOW = 3
STATUS_BAD_START = 4

# Dormand-Prince 5(4) tableau
_C2, _C3, _C4, _C5 = 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0
_A21 = 1.0 / 5.0
_A31, _A32 = 3.0 / 40.0, 9.0 / 40.0
_A41, _A42, _A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
_A51, _A52, _A53, _A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
_A61, _A62, _A63, _A64, _A65 = (9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0,
                                49.0 / 176.0, -5103.0 / 18656.0)
_B1, _B3, _B4, _B5, _B6 = (35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0,
                           -2187.0 / 6784.0, 11.0 / 84.0)
_E1, _E3, _E4, _E5, _E6, _E7 = (71.0 / 57600.0, -71.0 / 16695.0, 71.0 / 1920.0,
                                -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0)

# free quartic interpolant, row i = cubic-in-theta weights of stage i
_P = np.array([
    [1.0, -8048581381.0 / 2820520608.0, 8663915743.0 / 2820520608.0,
     -12715105075.0 / 11282082432.0],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200.0 / 32700410799.0, -68118460800.0 / 10900136933.0,
     87487479700.0 / 32700410799.0],
    [0.0, -1754552775.0 / 470086768.0, 14199869525.0 / 1410260304.0,
     -10690763975.0 / 1880347072.0],
    [0.0, 127303824393.0 / 49829197408.0, -318862633887.0 / 49829197408.0,
     701980252875.0 / 199316789632.0],
    [0.0, -282668133.0 / 205662961.0, 2019193451.0 / 616988883.0,
     -1453857185.0 / 822651844.0],
    [0.0, 40617522.0 / 29380423.0, -110615467.0 / 29380423.0,
     69997945.0 / 29380423.0],
])

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0
_EVENT_TIME_TOL = 1e-10
_GAP_FLOOR_SQ = 1e-24  # (1 - x)^2 floor; matches the 1e-12 singular floor
_MAX_STEPS_PER_SPAN = 20_000_000


@njit(cache=True)
def _restoring(x, kind, xs, cs):
    """h(x): 0 graphene, 1 linear, 2 clamped cubic table."""
    if kind == 0:
        return x  # alpha applied by caller; placeholder never used
    if kind == 1:
        return x
    # clamped cubic spline, scipy coefficient layout cs[4, n-1]
    n = xs.shape[0]
    xq = x
    if xq <= xs[0]:
        xq = xs[0]
    elif xq >= xs[n - 1]:
        xq = xs[n - 1]
    lo = 0
    hi = n - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if xs[mid] <= xq:
            lo = mid
        else:
            hi = mid
    dx = xq - xs[lo]
    return ((cs[0, lo] * dx + cs[1, lo]) * dx + cs[2, lo]) * dx + cs[3, lo]


@njit(cache=True)
def _accel(t, x, v, c, alpha, lam, delta, omega, kind, xs, cs):
    gap = 1.0 - x
    g2 = gap * gap
    if g2 < _GAP_FLOOR_SQ:
        return np.nan
    if kind == 0:
        h = x - alpha * x * abs(x)
    else:
        h = _restoring(x, kind, xs, cs)
    vv = lam * (1.0 + delta * np.cos(omega * t))
    return -c * v - h + vv * vv / g2


@njit(cache=True)
def _interp_x(theta, h, x0, kx):
    """Dense-output x at fraction theta of the current step."""
    acc = 0.0
    for i in range(7):
        w = theta * (_P[i, 0] + theta * (_P[i, 1] + theta * (_P[i, 2] + theta * _P[i, 3])))
        acc += kx[i] * w
    return x0 + h * acc


@njit(cache=True)
def _interp_xv(theta, h, x0, v0, kx, kv):
    accx = 0.0
    accv = 0.0
    for i in range(7):
        w = theta * (_P[i, 0] + theta * (_P[i, 1] + theta * (_P[i, 2] + theta * _P[i, 3])))
        accx += kx[i] * w
        accv += kv[i] * w
    return x0 + h * accx, v0 + h * accv


@njit(cache=True)
def _initial_step(t0, x0, v0, f0x, f0v, direction, rtol, atol, max_step,
                  c, alpha, lam, delta, omega, kind, xs, cs):
    """scipy-style starting step-size heuristic."""
    scx = atol + rtol * abs(x0)
    scv = atol + rtol * abs(v0)
    d0 = np.sqrt(0.5 * ((x0 / scx) ** 2 + (v0 / scv) ** 2))
    d1 = np.sqrt(0.5 * ((f0x / scx) ** 2 + (f0v / scv) ** 2))
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    x1 = x0 + h0 * direction * f0x
    v1 = v0 + h0 * direction * f0v
    f1x = v1
    f1v = _accel(t0 + h0 * direction, x1, v1, c, alpha, lam, delta, omega, kind, xs, cs)
    if not np.isfinite(f1v):
        return min(h0, max_step)
    d2 = np.sqrt(0.5 * (((f1x - f0x) / scx) ** 2 + ((f1v - f0v) / scv) ** 2)) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100.0 * h0, h1, max_step)


@njit(cache=True)
def _span(c, alpha, lam, delta, omega, kind, xs, cs,
          rtol, atol, max_step, x_pi, x_esc,
          t0, x0, v0, t1, h_start,
          t_eval, out_eval, eval_pos, track_max, max_abs_in):
    """Advance (x, v) from t0 to t1 with events; fill requested sample times.

    Returns (status, t_final, x_final, v_final, h_last, max_abs, eval_pos).
    ``h_start`` < 0 means "choose the initial step"; otherwise it is reused
    from the previous span (magnitude only).
    """
    direction = 1.0 if t1 >= t0 else -1.0
    max_abs = max_abs_in
    if track_max and abs(x0) > max_abs:
        max_abs = abs(x0)

    t = t0
    x = x0
    v = v0
    f0x = v
    f0v = _accel(t, x, v, c, alpha, lam, delta, omega, kind, xs, cs)
    if not np.isfinite(f0v):
        return STATUS_BAD_START, t, x, v, 0.0, max_abs, eval_pos

    if t1 == t0:
        return STATUS_COMPLETED, t, x, v, abs(h_start), max_abs, eval_pos

    if h_start > 0.0:
        h = min(h_start, max_step)
    else:
        h = _initial_step(t, x, v, f0x, f0v, direction, rtol, atol, max_step,
                          c, alpha, lam, delta, omega, kind, xs, cs)
    if h > abs(t1 - t0):
        h = abs(t1 - t0)

    kx = np.empty(7)
    kv = np.empty(7)
    n_eval = t_eval.shape[0]
    step_rejected = False
    status = STATUS_COMPLETED

    for _step in range(_MAX_STEPS_PER_SPAN):
        if t == t1:
            break
        if h < 1e-15 * max(1.0, abs(t)):
            status = STATUS_UNDERFLOW
            break
        clipped = False
        if h >= abs(t1 - t):
            h = abs(t1 - t)
            clipped = True
        hs = h * direction

        kx[0] = f0x
        kv[0] = f0v
        # stage 2
        xa = x + hs * _A21 * kx[0]
        va = v + hs * _A21 * kv[0]
        kx[1] = va
        kv[1] = _accel(t + _C2 * hs, xa, va, c, alpha, lam, delta, omega, kind, xs, cs)
        # stage 3
        xa = x + hs * (_A31 * kx[0] + _A32 * kx[1])
        va = v + hs * (_A31 * kv[0] + _A32 * kv[1])
        kx[2] = va
        kv[2] = _accel(t + _C3 * hs, xa, va, c, alpha, lam, delta, omega, kind, xs, cs)
        # stage 4
        xa = x + hs * (_A41 * kx[0] + _A42 * kx[1] + _A43 * kx[2])
        va = v + hs * (_A41 * kv[0] + _A42 * kv[1] + _A43 * kv[2])
        kx[3] = va
        kv[3] = _accel(t + _C4 * hs, xa, va, c, alpha, lam, delta, omega, kind, xs, cs)
        # stage 5
        xa = x + hs * (_A51 * kx[0] + _A52 * kx[1] + _A53 * kx[2] + _A54 * kx[3])
        va = v + hs * (_A51 * kv[0] + _A52 * kv[1] + _A53 * kv[2] + _A54 * kv[3])
        kx[4] = va
        kv[4] = _accel(t + _C5 * hs, xa, va, c, alpha, lam, delta, omega, kind, xs, cs)
        # stage 6
        xa = x + hs * (_A61 * kx[0] + _A62 * kx[1] + _A63 * kx[2] + _A64 * kx[3] + _A65 * kx[4])
        va = v + hs * (_A61 * kv[0] + _A62 * kv[1] + _A63 * kv[2] + _A64 * kv[3] + _A65 * kv[4])
        kx[5] = va
        kv[5] = _accel(t + hs, xa, va, c, alpha, lam, delta, omega, kind, xs, cs)
        # 5th-order solution and FSAL stage
        x_new = x + hs * (_B1 * kx[0] + _B3 * kx[2] + _B4 * kx[3] + _B5 * kx[4] + _B6 * kx[5])
        v_new = v + hs * (_B1 * kv[0] + _B3 * kv[2] + _B4 * kv[3] + _B5 * kv[4] + _B6 * kv[5])
        t_new = t1 if clipped else t + hs
        kx[6] = v_new
        kv[6] = _accel(t_new, x_new, v_new, c, alpha, lam, delta, omega, kind, xs, cs)

        err_x = hs * (_E1 * kx[0] + _E3 * kx[2] + _E4 * kx[3] + _E5 * kx[4]
                      + _E6 * kx[5] + _E7 * kx[6])
        err_v = hs * (_E1 * kv[0] + _E3 * kv[2] + _E4 * kv[3] + _E5 * kv[4]
                      + _E6 * kv[5] + _E7 * kv[6])
        scx = atol + rtol * max(abs(x), abs(x_new))
        scv = atol + rtol * max(abs(v), abs(v_new))
        bad = (not np.isfinite(x_new)) or (not np.isfinite(v_new)) or (not np.isfinite(kv[6]))
        if bad:
            err = np.inf
        else:
            err = np.sqrt(0.5 * ((err_x / scx) ** 2 + (err_v / scv) ** 2))

        if err > 1.0 or not np.isfinite(err):
            if np.isfinite(err) and err > 0.0:
                factor = max(_MIN_FACTOR, _SAFETY * err ** -0.2)
            else:
                factor = _MIN_FACTOR
            h = h * factor
            step_rejected = True
            continue

        # accepted: locate events on the dense output
        theta_event = 2.0
        ev_status = STATUS_COMPLETED
        x_mid = _interp_x(0.5, hs, x, kx)
        # pull-in: x crosses x_pi upward; scan (0, .5), (.5, 1)
        g0 = x - x_pi
        gm = x_mid - x_pi
        g1 = x_new - x_pi
        ta_, tb_ = -1.0, -1.0
        if g0 < 0.0 and gm >= 0.0:
            ta_, tb_ = 0.0, 0.5
        elif gm < 0.0 and g1 >= 0.0:
            ta_, tb_ = 0.5, 1.0
        elif g0 < 0.0 and g1 >= 0.0:
            ta_, tb_ = 0.0, 1.0
        if ta_ >= 0.0:
            for _ in range(200):
                if (tb_ - ta_) * abs(hs) <= _EVENT_TIME_TOL:
                    break
                tm_ = 0.5 * (ta_ + tb_)
                if _interp_x(tm_, hs, x, kx) - x_pi >= 0.0:
                    tb_ = tm_
                else:
                    ta_ = tm_
            theta_event = tb_
            ev_status = STATUS_PULL_IN
        # escape: x crosses x_esc downward
        e0 = x - x_esc
        em = x_mid - x_esc
        e1 = x_new - x_esc
        ta_, tb_ = -1.0, -1.0
        if e0 > 0.0 and em <= 0.0:
            ta_, tb_ = 0.0, 0.5
        elif em > 0.0 and e1 <= 0.0:
            ta_, tb_ = 0.5, 1.0
        elif e0 > 0.0 and e1 <= 0.0:
            ta_, tb_ = 0.0, 1.0
        if ta_ >= 0.0:
            for _ in range(200):
                if (tb_ - ta_) * abs(hs) <= _EVENT_TIME_TOL:
                    break
                tm_ = 0.5 * (ta_ + tb_)
                if _interp_x(tm_, hs, x, kx) - x_esc <= 0.0:
                    tb_ = tm_
                else:
                    ta_ = tm_
            if tb_ < theta_event:
                theta_event = tb_
                ev_status = STATUS_ESCAPE

        theta_stop = theta_event if ev_status != STATUS_COMPLETED else 1.0
        t_stop = t + theta_stop * hs
        if ev_status == STATUS_COMPLETED:
            t_stop = t_new

        # requested sample times within the accepted portion
        while eval_pos < n_eval:
            te = t_eval[eval_pos]
            if (te - t_stop) * direction > 0.0:
                break
            th = (te - t) / hs
            if th < 0.0:
                th = 0.0
            ex, ev_ = _interp_xv(th, hs, x, v, kx, kv)
            out_eval[eval_pos, 0] = ex
            out_eval[eval_pos, 1] = ev_
            eval_pos += 1

        if track_max:
            for j in range(3):
                th = 0.25 * (j + 1)
                if th > theta_stop:
                    break
                xi = _interp_x(th, hs, x, kx)
                if abs(xi) > max_abs:
                    max_abs = abs(xi)

        if ev_status != STATUS_COMPLETED:
            ex, ev_ = _interp_xv(theta_stop, hs, x, v, kx, kv)
            if track_max and abs(ex) > max_abs:
                max_abs = abs(ex)
            return ev_status, t_stop, ex, ev_, h, max_abs, eval_pos

        if track_max and abs(x_new) > max_abs:
            max_abs = abs(x_new)

        # step-size controller (error estimator is order 4 -> exponent 1/5)
        if err == 0.0:
            factor = _MAX_FACTOR
        else:
            factor = min(_MAX_FACTOR, _SAFETY * err ** -0.2)
        if step_rejected:
            factor = min(1.0, factor)
        h = min(h * factor, max_step)
        step_rejected = False

        t = t_new
        x = x_new
        v = v_new
        f0x = kx[6]
        f0v = kv[6]
    else:
        status = STATUS_UNDERFLOW

    return status, t, x, v, h, max_abs, eval_pos


@njit(cache=True)
def integrate_span(c, alpha, lam, delta, omega, kind, xs, cs,
                   rtol, atol, max_step, x_pi, x_esc,
                   t0, x0, v0, t1, t_eval, out_eval, track_max):
    """Single integration span with sample times; see _span for the contract."""
    return _span(c, alpha, lam, delta, omega, kind, xs, cs,
                 rtol, atol, max_step, x_pi, x_esc,
                 t0, x0, v0, t1, -1.0, t_eval, out_eval, 0, track_max, 0.0)


@njit(cache=True)
def strobe_core(c, alpha, lam, delta, omega, kind, xs, cs,
                rtol, atol, max_step, x_pi, x_esc,
                x0, v0, t_start, n_periods, period, out_xv, track_max):
    """Stroboscopic samples at t = t_start + k*period, k = 0..n_periods.

    Fills out_xv[k] for every completed period boundary (out_xv[0] is the
    seed) and returns (status, k_done, t_final, x_final, v_final, max_abs):
    k_done is the last filled index; on an event the final state is the
    event state, not a section point.
    """
    out_xv[0, 0] = x0
    out_xv[0, 1] = v0
    x = x0
    v = v0
    max_abs = abs(x0) if track_max else 0.0
    h_carry = -1.0
    t = t_start
    no_eval = np.empty(0, dtype=np.float64)
    no_out = np.empty((0, 2), dtype=np.float64)
    for k in range(1, n_periods + 1):
        t_goal = t_start + k * period
        status, t, x, v, h_carry, max_abs, _ = _span(
            c, alpha, lam, delta, omega, kind, xs, cs,
            rtol, atol, max_step, x_pi, x_esc,
            t, x, v, t_goal, h_carry, no_eval, no_out, 0, track_max, max_abs)
        if status != STATUS_COMPLETED:
            return status, k - 1, t, x, v, max_abs
        out_xv[k, 0] = x
        out_xv[k, 1] = v
    return STATUS_COMPLETED, n_periods, t, x, v, max_abs


@njit(cache=True)
def map_points(c, alpha, lam, delta, omega, kind, xs, cs,
               rtol, atol, max_step, x_pi, x_esc,
               x0, v0, n_periods, period):
    """n-fold stroboscopic map of (x0, v0) from section phase t = 0.

    Returns (status, x, v, t_event); intermediate section points are not kept.
    """
    x = x0
    v = v0
    t = 0.0
    h_carry = -1.0
    no_eval = np.empty(0, dtype=np.float64)
    no_out = np.empty((0, 2), dtype=np.float64)
    for k in range(1, n_periods + 1):
        status, t, x, v, h_carry, _, _ = _span(
            c, alpha, lam, delta, omega, kind, xs, cs,
            rtol, atol, max_step, x_pi, x_esc,
            t, x, v, k * period, h_carry, no_eval, no_out, 0, 0, 0.0)
        if status != STATUS_COMPLETED:
            return status, x, v, t
    return STATUS_COMPLETED, x, v, t


@njit(cache=True, parallel=True)
def pss_scan_core(c, alpha, lam, delta, omega, kind, xs, cs,
                  rtol, atol, max_step, x_pi, x_esc,
                  seeds, iterations, n_periods, period,
                  out_pts, out_count, out_status):
    """Iterate the n-fold map from every seed, recording visited section points.

    out_pts has shape (n_seeds, iterations+1, 2); out_count[s] points were
    recorded for seed s (including the seed itself); out_status[s] is the
    per-seed termination status.
    """
    n_seeds = seeds.shape[0]
    for s in prange(n_seeds):
        x = seeds[s, 0]
        v = seeds[s, 1]
        out_pts[s, 0, 0] = x
        out_pts[s, 0, 1] = v
        count = 1
        status = STATUS_COMPLETED
        t = 0.0
        h_carry = -1.0
        no_eval = np.empty(0, dtype=np.float64)
        no_out = np.empty((0, 2), dtype=np.float64)
        for it in range(iterations):
            ok = True
            for k in range(n_periods):
                st, t, x, v, h_carry, _, _ = _span(
                    c, alpha, lam, delta, omega, kind, xs, cs,
                    rtol, atol, max_step, x_pi, x_esc,
                    t, x, v, t + period, h_carry, no_eval, no_out, 0, 0, 0.0)
                if st != STATUS_COMPLETED:
                    status = st
                    ok = False
                    break
            if not ok:
                break
            out_pts[s, count, 0] = x
            out_pts[s, count, 1] = v
            count += 1
        out_count[s] = count
        out_status[s] = status


@njit(cache=True)
def _classify_one(c, alpha, lam, delta, omega, kind, xs, cs,
                  rtol, atol, max_step, x_pi, x_esc,
                  x0, v0, iterations, block, att_pts, att_off, match_tol):
    """Classify one initial condition.

    Conservative mode (no attractors, block <= 0): iterate the period map up
    to ``iterations``; an event gives PullIn/Escape, survival gives Bounded.
    Damped mode: every ``block`` iterations compare the section point against
    all supplied attractor cycle points; two consecutive block-end matches to
    the same attractor classify the cell.

    Returns (code, attractor_id, amplitude, t_event) with code one of
    0 unresolved, 1 pull-in, 2 escape, 3 bounded, 4 attractor-matched.
    """
    period = 2.0 * np.pi / omega
    x = x0
    v = v0
    t = 0.0
    h_carry = -1.0
    max_abs = abs(x0)
    n_att = att_off.shape[0] - 1
    prev_match = -1
    no_eval = np.empty(0, dtype=np.float64)
    no_out = np.empty((0, 2), dtype=np.float64)
    for it in range(1, iterations + 1):
        status, t, x, v, h_carry, max_abs, _ = _span(
            c, alpha, lam, delta, omega, kind, xs, cs,
            rtol, atol, max_step, x_pi, x_esc,
            t, x, v, it * period, h_carry,
            no_eval, no_out, 0, 1, max_abs)
        if status == STATUS_PULL_IN:
            return 1, -1, np.nan, t
        if status == STATUS_ESCAPE:
            return 2, -1, np.nan, t
        if status != STATUS_COMPLETED:
            return 0, -1, np.nan, t
        if n_att > 0 and block > 0 and it % block == 0:
            match = -1
            for a in range(n_att):
                best = 1e300
                for j in range(att_off[a], att_off[a + 1]):
                    dxp = x - att_pts[j, 0]
                    dvp = v - att_pts[j, 1]
                    d2 = dxp * dxp + dvp * dvp
                    if d2 < best:
                        best = d2
                if best < match_tol * match_tol:
                    match = a
                    break
            if match >= 0 and match == prev_match:
                return 4, match, max_abs, np.nan
            prev_match = match
    if n_att > 0 and block > 0:
        return 0, -1, np.nan, np.nan
    return 3, -1, max_abs, np.nan


@njit(cache=True, parallel=True)
def sweep_core(c, alpha, lam, delta, omega, kind, xs, cs,
               rtol, atol, max_step, x_pi, x_esc,
               cx, cv, iterations, block, att_pts, att_off, match_tol,
               out_code, out_att, out_amp, out_tev):
    """Classify a batch of cell centers; embarrassingly parallel, per-cell pure."""
    n = cx.shape[0]
    for i in prange(n):
        code, att, amp, tev = _classify_one(
            c, alpha, lam, delta, omega, kind, xs, cs,
            rtol, atol, max_step, x_pi, x_esc,
            cx[i], cv[i], iterations, block, att_pts, att_off, match_tol)
        out_code[i] = code
        out_att[i] = att
        out_amp[i] = amp
        out_tev[i] = tev
