"""Compiled inner loops.

The adaptive integrator advances ``(w, v)`` with ``w = ln u``.  In these
coordinates ``w' = 1 - u - v - a c`` does not depend on ``w`` linearly, so
large aggressiveness values no longer make the system stiff, and ``u > 0``
is preserved exactly.  States with ``u = 0`` are handled by a flag that
freezes ``u`` at zero (the axis is invariant).
"""
import math

import numpy as np
from numba import njit

# Dormand-Prince 5(4) tableau
_A21 = 1.0 / 5.0
_A31, _A32 = 3.0 / 40.0, 9.0 / 40.0
_A41, _A42, _A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
_A51, _A52, _A53, _A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
_A61, _A62, _A63, _A64, _A65 = (
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
)
_B1, _B3, _B4, _B5, _B6 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
_E1 = 71.0 / 57600.0
_E3 = -71.0 / 16695.0
_E4 = 71.0 / 1920.0
_E5 = -17253.0 / 339200.0
_E6 = 22.0 / 525.0
_E7 = -1.0 / 40.0

# status codes
EXTINCTION = 0
SINK = 1
TMAX = 2
BUDGET = 3
EVENT = 4
BOX = 5
ORIGIN = 6
DEGENERATE = 7

# prm layout: c, rho, m, M, sgn, aseg
_C, _RHO, _M_LO, _M_HI, _SGN, _ASEG = 0, 1, 2, 3, 4, 5


@njit(cache=True, nogil=True)
def singular_value(u, v, c, rho):
    return (1.0 - u - v) * (u * (2.0 * c + 1.0 - rho * c) + rho * c) / (2.0 * c * u * (c + 1.0))


@njit(cache=True, nogil=True)
def _control(w, v, prm, mode, uzero):
    if mode == 0 or uzero:
        return prm[_ASEG]
    u = math.exp(w)
    a = singular_value(u, v, prm[_C], prm[_RHO])
    if a < prm[_M_LO]:
        a = prm[_M_LO]
    if a > prm[_M_HI]:
        a = prm[_M_HI]
    return a


@njit(cache=True, nogil=True)
def _rhs(w, v, prm, mode, uzero):
    a = _control(w, v, prm, mode, uzero)
    sgn = prm[_SGN]
    if uzero:
        s = 1.0 - v
        return 0.0, sgn * prm[_RHO] * v * s
    u = math.exp(w)
    s = 1.0 - u - v
    return sgn * (s - a * prm[_C]), sgn * (prm[_RHO] * v * s - a * u)


@njit(cache=True, nogil=True)
def _dp_step(w, v, k1w, k1v, h, prm, mode, uzero):
    k2w, k2v = _rhs(w + h * _A21 * k1w, v + h * _A21 * k1v, prm, mode, uzero)
    k3w, k3v = _rhs(
        w + h * (_A31 * k1w + _A32 * k2w), v + h * (_A31 * k1v + _A32 * k2v), prm, mode, uzero
    )
    k4w, k4v = _rhs(
        w + h * (_A41 * k1w + _A42 * k2w + _A43 * k3w),
        v + h * (_A41 * k1v + _A42 * k2v + _A43 * k3v),
        prm,
        mode,
        uzero,
    )
    k5w, k5v = _rhs(
        w + h * (_A51 * k1w + _A52 * k2w + _A53 * k3w + _A54 * k4w),
        v + h * (_A51 * k1v + _A52 * k2v + _A53 * k3v + _A54 * k4v),
        prm,
        mode,
        uzero,
    )
    k6w, k6v = _rhs(
        w + h * (_A61 * k1w + _A62 * k2w + _A63 * k3w + _A64 * k4w + _A65 * k5w),
        v + h * (_A61 * k1v + _A62 * k2v + _A63 * k3v + _A64 * k4v + _A65 * k5v),
        prm,
        mode,
        uzero,
    )
    wn = w + h * (_B1 * k1w + _B3 * k3w + _B4 * k4w + _B5 * k5w + _B6 * k6w)
    vn = v + h * (_B1 * k1v + _B3 * k3v + _B4 * k4v + _B5 * k5v + _B6 * k6v)
    k7w, k7v = _rhs(wn, vn, prm, mode, uzero)
    ew = h * (_E1 * k1w + _E3 * k3w + _E4 * k4w + _E5 * k5w + _E6 * k6w + _E7 * k7w)
    ev = h * (_E1 * k1v + _E3 * k3v + _E4 * k4v + _E5 * k5v + _E6 * k6v + _E7 * k7v)
    return wn, vn, k7w, k7v, ew, ev


@njit(cache=True, nogil=True)
def _event_g(kind, w, v, uzero, evp):
    if kind == 0:
        return v
    u = 0.0 if uzero else math.exp(w)
    if kind == 1:
        return evp[0] * u + evp[1] * v + evp[2]
    # kind 2: leaving the unit box through u = 1 or v = 1
    gw = -1.0 if uzero else w
    gv = v - 1.0
    return gw if gw > gv else gv


@njit(cache=True, nogil=True)
def _crossed(kind, g0, g1):
    if kind == 0:
        return g0 > 0.0 and g1 <= 0.0
    if kind == 1:
        return g0 != 0.0 and ((g0 > 0.0) != (g1 > 0.0) or g1 == 0.0)
    return g0 < 0.0 and g1 >= 0.0


@njit(cache=True, nogil=True)
def _locate(kind, w, v, k1w, k1v, h, g0, prm, mode, uzero, evp, event_tol):
    """Bisection on the step fraction; each probe is a genuine partial step."""
    lo = 0.0
    hi = 1.0
    pos0 = g0 > 0.0
    for _ in range(300):
        mid = 0.5 * (lo + hi)
        wm, vm, _a, _b, _c, _d = _dp_step(w, v, k1w, k1v, mid * h, prm, mode, uzero)
        gm = _event_g(kind, wm, vm, uzero, evp)
        same = (gm > 0.0) == pos0 and gm != 0.0
        if kind == 2:
            same = gm < 0.0
        if same:
            lo = mid
        else:
            hi = mid
        if (hi - lo) * h <= event_tol:
            wh, vh, _a, _b, _c, _d = _dp_step(w, v, k1w, k1v, hi * h, prm, mode, uzero)
            if abs(_event_g(kind, wh, vh, uzero, evp)) <= event_tol or (hi - lo) < 1e-15:
                return hi, wh, vh
    wh, vh, _a, _b, _c, _d = _dp_step(w, v, k1w, k1v, hi * h, prm, mode, uzero)
    return hi, wh, vh


@njit(cache=True, nogil=True)
def _grow(arr, n):
    out = np.empty(2 * arr.shape[0], dtype=arr.dtype)
    out[:n] = arr[:n]
    return out


@njit(cache=True, nogil=True)
def integrate(
    w0,
    v0,
    uzero,
    c,
    rho,
    mode,
    breaks,
    values,
    m,
    M,
    sgn,
    t_max,
    rtol,
    atol,
    h_max,
    max_steps,
    stop_v0,
    sink_eps,
    event_tol,
    ev_on,
    ev_wu,
    ev_wv,
    ev_w0,
    box_on,
    origin_eps,
    record,
):
    """Adaptive DP5(4) integration with events.

    Returns ``(ts, ws, vs, as_, n, status, t_end, w_end, v_end)``; the
    recorded arrays are valid up to index ``n``.
    """
    prm = np.empty(6)
    prm[_C] = c
    prm[_RHO] = rho
    prm[_M_LO] = m
    prm[_M_HI] = M
    prm[_SGN] = sgn
    prm[_ASEG] = values[0] if values.shape[0] > 0 else 0.0
    evp = np.empty(3)
    evp[0] = ev_wu
    evp[1] = ev_wv
    evp[2] = ev_w0

    cap = 256 if record else 2
    ts = np.empty(cap)
    ws = np.empty(cap)
    vs = np.empty(cap)
    as_ = np.empty(cap)
    n = 0

    w = w0
    v = v0
    tau = 0.0
    if mode == 1 and uzero:
        return ts, ws, vs, as_, 0, DEGENERATE, 0.0, w, v

    nb = breaks.shape[0]
    seg = 0
    seg_end = breaks[0] if nb > 0 else np.inf

    ts[0] = 0.0
    ws[0] = w
    vs[0] = v
    as_[0] = _control(w, v, prm, mode, uzero)
    n = 1

    k1w, k1v = _rhs(w, v, prm, mode, uzero)
    d1 = max(abs(k1w), abs(k1v))
    h = 0.01 / d1 if d1 > 0.0 else 1.0
    if h > 1.0:
        h = 1.0
    if h > h_max:
        h = h_max

    steps = 0
    while True:
        if tau >= t_max:
            return ts, ws, vs, as_, n, TMAX, tau, w, v
        while seg_end <= tau:
            seg += 1
            prm[_ASEG] = values[seg]
            seg_end = breaks[seg] if seg < nb else np.inf
            k1w, k1v = _rhs(w, v, prm, mode, uzero)
        t_stop = seg_end if seg_end < t_max else t_max
        h_nat = h
        hit = False
        if tau + h >= t_stop:
            h = t_stop - tau
            hit = True
        steps += 1
        if steps > max_steps:
            return ts, ws, vs, as_, n, BUDGET, tau, w, v
        wn, vn, k7w, k7v, ew, evv = _dp_step(w, v, k1w, k1v, h, prm, mode, uzero)
        scw = atol + rtol
        scv = atol + rtol * max(abs(v), abs(vn))
        if uzero:
            err = abs(evv) / scv
        else:
            err = math.sqrt(0.5 * ((ew / scw) ** 2 + (evv / scv) ** 2))
        if not (err <= 1.0):
            if err != err:
                fac = 0.2
            else:
                fac = 0.9 * err ** (-0.2)
                if fac < 0.2:
                    fac = 0.2
            h = h * fac
            if h < 1e-300:
                return ts, ws, vs, as_, n, BUDGET, tau, w, v
            continue
        if err == 0.0:
            fac = 5.0
        else:
            fac = 0.9 * err ** (-0.2)
            if fac > 5.0:
                fac = 5.0
            if fac < 0.2:
                fac = 0.2

        # events inside (tau, tau + h]
        best_theta = 2.0
        best_kind = -1
        bw = 0.0
        bv = 0.0
        for kind in range(3):
            if kind == 0 and not stop_v0:
                continue
            if kind == 1 and not ev_on:
                continue
            if kind == 2 and not box_on:
                continue
            g0 = _event_g(kind, w, v, uzero, evp)
            g1 = _event_g(kind, wn, vn, uzero, evp)
            if _crossed(kind, g0, g1):
                th, we, ve = _locate(kind, w, v, k1w, k1v, h, g0, prm, mode, uzero, evp, event_tol)
                if th < best_theta:
                    best_theta = th
                    best_kind = kind
                    bw = we
                    bv = ve
        if best_kind >= 0:
            te = tau + best_theta * h
            if record:
                if n >= ts.shape[0]:
                    ts = _grow(ts, n)
                    ws = _grow(ws, n)
                    vs = _grow(vs, n)
                    as_ = _grow(as_, n)
                ts[n] = te
                ws[n] = bw
                vs[n] = bv
                as_[n] = _control(bw, bv, prm, mode, uzero)
                n += 1
            if best_kind == 0:
                st = EXTINCTION
            elif best_kind == 1:
                st = EVENT
            else:
                st = BOX
            return ts, ws, vs, as_, n, st, te, bw, bv

        tau = t_stop if hit else tau + h
        w = wn
        v = vn
        k1w = k7w
        k1v = k7v
        if record:
            if n >= ts.shape[0]:
                ts = _grow(ts, n)
                ws = _grow(ws, n)
                vs = _grow(vs, n)
                as_ = _grow(as_, n)
            ts[n] = tau
            ws[n] = w
            vs[n] = v
            as_[n] = _control(w, v, prm, mode, uzero)
            n += 1
        else:
            ts[0] = tau
            ws[0] = w
            vs[0] = v

        u = 0.0 if uzero else math.exp(w)
        if sink_eps > 0.0:
            dist = math.sqrt(u * u + (v - 1.0) * (v - 1.0))
            if dist < sink_eps:
                a = _control(w, v, prm, mode, uzero)
                s = 1.0 - u - v
                fu = u * (s - a * c)
                fv = rho * v * s - a * u
                if -u * fu + (1.0 - v) * fv > 0.0 or dist == 0.0:
                    return ts, ws, vs, as_, n, SINK, tau, w, v
        if origin_eps > 0.0:
            if u * u + v * v < origin_eps * origin_eps:
                return ts, ws, vs, as_, n, ORIGIN, tau, w, v

        h = h * fac
        if hit:
            if h < h_nat:
                h = h_nat
            if t_stop >= t_max and seg_end >= t_max:
                return ts, ws, vs, as_, n, TMAX, tau, w, v
            # strategy breakpoint: switch value and restart the stage sequence
            seg += 1
            prm[_ASEG] = values[seg]
            seg_end = breaks[seg] if seg < nb else np.inf
            k1w, k1v = _rhs(w, v, prm, mode, uzero)
            if record:
                as_[n - 1] = _control(w, v, prm, mode, uzero)
        if h > h_max:
            h = h_max


# ---------------------------------------------------------------------------
# fixed-step RK4 on (u, v) for direct transcription


@njit(cache=True, nogil=True)
def _f(u, v, a, c, rho):
    s = 1.0 - u - v
    return u * s - a * c * u, rho * v * s - a * u


@njit(cache=True, nogil=True)
def _jt_mul(u, v, a, c, rho, lu, lv):
    """Return ``J(x, a)^T @ (lu, lv)``."""
    j11 = 1.0 - 2.0 * u - v - a * c
    j12 = -u
    j21 = -rho * v - a
    j22 = rho * (1.0 - u - 2.0 * v)
    return j11 * lu + j21 * lv, j12 * lu + j22 * lv


@njit(cache=True, nogil=True)
def rk4_forward(u0, v0, a, dur, K, c, rho):
    """States at every substep; node ``i`` holds ``a[i]`` for ``dur[i]`` time units."""
    n = a.shape[0]
    xs = np.empty((n * K + 1, 2))
    u = u0
    v = v0
    xs[0, 0] = u
    xs[0, 1] = v
    j = 0
    for i in range(n):
        ai = a[i]
        h = dur[i] / K
        for _ in range(K):
            k1u, k1v = _f(u, v, ai, c, rho)
            k2u, k2v = _f(u + 0.5 * h * k1u, v + 0.5 * h * k1v, ai, c, rho)
            k3u, k3v = _f(u + 0.5 * h * k2u, v + 0.5 * h * k2v, ai, c, rho)
            k4u, k4v = _f(u + h * k3u, v + h * k3v, ai, c, rho)
            u = u + h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u)
            v = v + h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
            j += 1
            xs[j, 0] = u
            xs[j, 1] = v
    return xs


@njit(cache=True, nogil=True)
def rk4_adjoint(xs, a, dur, K, c, rho, lu, lv):
    """Reverse sweep of :func:`rk4_forward`.

    ``(lu, lv)`` is the gradient of the objective with respect to the final
    state.  Returns the gradients with respect to the node values and the
    node durations.
    """
    n = a.shape[0]
    ga = np.zeros(n)
    gd = np.zeros(n)
    j = n * K
    for i in range(n - 1, -1, -1):
        ai = a[i]
        h = dur[i] / K
        gh = 0.0
        for _ in range(K):
            j -= 1
            u = xs[j, 0]
            v = xs[j, 1]
            k1u, k1v = _f(u, v, ai, c, rho)
            x2u = u + 0.5 * h * k1u
            x2v = v + 0.5 * h * k1v
            k2u, k2v = _f(x2u, x2v, ai, c, rho)
            x3u = u + 0.5 * h * k2u
            x3v = v + 0.5 * h * k2v
            k3u, k3v = _f(x3u, x3v, ai, c, rho)
            x4u = u + h * k3u
            x4v = v + h * k3v
            k4u, k4v = _f(x4u, x4v, ai, c, rho)

            gh += (lu * (k1u + 2.0 * k2u + 2.0 * k3u + k4u) + lv * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)) / 6.0
            b1u = h / 6.0 * lu
            b1v = h / 6.0 * lv
            b2u = h / 3.0 * lu
            b2v = h / 3.0 * lv
            b3u = b2u
            b3v = b2v
            b4u = b1u
            b4v = b1v
            xu = lu
            xv = lv
            # stage 4
            yu, yv = _jt_mul(x4u, x4v, ai, c, rho, b4u, b4v)
            ga[i] += -c * x4u * b4u - x4u * b4v
            xu += yu
            xv += yv
            b3u += h * yu
            b3v += h * yv
            gh += yu * k3u + yv * k3v
            # stage 3
            yu, yv = _jt_mul(x3u, x3v, ai, c, rho, b3u, b3v)
            ga[i] += -c * x3u * b3u - x3u * b3v
            xu += yu
            xv += yv
            b2u += 0.5 * h * yu
            b2v += 0.5 * h * yv
            gh += 0.5 * (yu * k2u + yv * k2v)
            # stage 2
            yu, yv = _jt_mul(x2u, x2v, ai, c, rho, b2u, b2v)
            ga[i] += -c * x2u * b2u - x2u * b2v
            xu += yu
            xv += yv
            b1u += 0.5 * h * yu
            b1v += 0.5 * h * yv
            gh += 0.5 * (yu * k1u + yv * k1v)
            # stage 1
            yu, yv = _jt_mul(u, v, ai, c, rho, b1u, b1v)
            ga[i] += -c * u * b1u - u * b1v
            xu += yu
            xv += yv
            lu = xu
            lv = xv
        gd[i] = gh / K
    return ga, gd
