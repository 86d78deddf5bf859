"""The basin wall between extinction and sink convergence.

For constant ``a`` the wall is the stable manifold of the saddle (or the
centre manifold of the origin when ``ac = 1``) and is the graph of an
increasing function ``gamma_a`` on ``[0, u_M]``.  It is computed here by
backward shooting from a seed offset ``delta`` along the stable direction.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from . import _kernels as K
from .equilibria import eig2, limit_saddle, saddle_point
from .errors import InvalidInputError, InvalidParamsError, TraceError
from .integrator import SimOptions, run_kernel
from .model import Constant, State, StructParams, jacobian

__all__ = [
    "SepOptions",
    "Regime",
    "SeparatrixCurve",
    "Region",
    "trace_gamma",
    "gamma0",
    "u_M0",
    "classify_point",
    "a0_limit_equilibrium",
]


@dataclass(frozen=True)
class SepOptions:
    """Shooting controls.

    Attributes
    ----------
    delta : float
        Seed offset from the equilibrium along the stable direction.
    curve_tol : float
        Half-width of the band treated as lying on the wall.
    ds : float
        Target spacing of stored samples (arc length).
    """

    delta: float = 1e-7
    curve_tol: float = 1e-4
    rel_tol: float = 1e-11
    abs_tol: float = 1e-12
    max_steps: int = 500_000
    origin_eps: float = 1e-9
    ds: float = 0.004
    center_delta: float = 1e-4


class Regime(str, Enum):
    SADDLE_INTERIOR = "saddle-interior"
    SADDLE_ORIGIN = "saddle-origin"
    CENTER_DEGENERATE = "center-degenerate"


class Region(str, Enum):
    IN_E = "E"
    IN_B = "B"
    ON_M = "M"


@dataclass(frozen=True, eq=False)
class SeparatrixCurve:
    """Sampled increasing graph ``v = gamma(u)`` on ``[0, u_M]``."""

    u_samples: np.ndarray
    v_samples: np.ndarray
    endpoint: State
    regime: Regime
    a: float
    params: StructParams
    _interp: PchipInterpolator = field(repr=False, default=None)

    def __post_init__(self):
        for name in ("u_samples", "v_samples"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "_interp", PchipInterpolator(self.u_samples, self.v_samples, extrapolate=False))

    @property
    def u_M(self):
        return self.endpoint.u

    @property
    def v_M(self):
        return self.endpoint.v

    def __call__(self, u):
        """``gamma(u)``; NaN outside ``[0, u_M]``."""
        return self._interp(np.asarray(u, dtype=float))

    def u_d(self):
        """Abscissa where the wall meets the anti-diagonal ``u + v = 1``."""
        g = lambda x: float(self(x)) + x - 1.0
        hi = min(self.u_M, 1.0)
        if g(hi) < 0:
            raise TraceError("wall does not reach the anti-diagonal")
        return brentq(g, 0.0, hi, xtol=1e-14)

    def distance(self, pts):
        """Euclidean distance from each row of ``pts`` to the sampled polyline."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        a = np.column_stack([self.u_samples[:-1], self.v_samples[:-1]])
        b = np.column_stack([self.u_samples[1:], self.v_samples[1:]])
        d = b - a
        L2 = np.maximum((d * d).sum(axis=1), 1e-300)
        out = np.empty(len(pts))
        for i, x in enumerate(pts):
            t = np.clip(((x - a) * d).sum(axis=1) / L2, 0.0, 1.0)
            proj = a + t[:, None] * d
            out[i] = np.sqrt(((proj - x) ** 2).sum(axis=1)).min()
        return out


def _sim_opts(opts: SepOptions, max_step=math.inf, t_max=math.inf):
    return SimOptions(
        t_max=t_max,
        rel_tol=opts.rel_tol,
        abs_tol=opts.abs_tol,
        event_tol=opts.abs_tol,
        max_steps=opts.max_steps,
        max_step=max_step,
    )


def _densify(ts, us, vs, a, p, opts):
    """Insert samples wherever consecutive points are farther apart than ``ds``."""
    out_u = [us[0]]
    out_v = [vs[0]]
    strat = Constant(a)
    for k in range(len(ts) - 1):
        gap = math.hypot(us[k + 1] - us[k], vs[k + 1] - vs[k])
        if gap > opts.ds:
            dt = ts[k + 1] - ts[k]
            nsub = int(math.ceil(gap / opts.ds))
            sub = run_kernel(
                (us[k], vs[k]),
                strat,
                p,
                _sim_opts(opts, max_step=dt / nsub, t_max=dt),
                direction=-1.0,
                stop_v0=False,
                sink=False,
            )
            out_u.extend(sub[1][1:-1])
            out_v.extend(sub[2][1:-1])
        out_u.append(us[k + 1])
        out_v.append(vs[k + 1])
    return np.array(out_u), np.array(out_v)


def _shoot(seed, a, p, opts, *, to_origin):
    ts, us, vs, _, status, _, _, _ = run_kernel(
        seed,
        Constant(a),
        p,
        _sim_opts(opts),
        direction=-1.0,
        stop_v0=True,
        sink=False,
        box=not to_origin,
        origin_eps=opts.origin_eps if to_origin else 0.0,
    )
    want = K.ORIGIN if to_origin else K.BOX
    if status != want:
        target = "the origin" if to_origin else "the boundary of the unit square"
        raise TraceError(f"backward branch did not reach {target} (status {status})")
    return _densify(ts, us, vs, a, p, opts)


def _as_graph(u, v, tol):
    keep_u = [u[0]]
    keep_v = [v[0]]
    for x, y in zip(u[1:], v[1:]):
        if x > keep_u[-1]:
            if y < keep_v[-1] - tol:
                raise TraceError("traced wall is not increasing")
            keep_u.append(x)
            keep_v.append(max(y, keep_v[-1]))
    return np.array(keep_u), np.array(keep_v)


def trace_gamma(a, p: StructParams, opts: SepOptions = SepOptions()):
    """Trace the wall ``gamma_a`` for constant ``a > 0``.

    Returns
    -------
    SeparatrixCurve

    Raises
    ------
    TraceError
        If a branch fails to reach its endpoint within the step budget.
    """
    if not (a > 0) or not (p.rho > 0):
        raise InvalidParamsError("trace_gamma needs a > 0 and rho > 0")
    return _trace_cached(float(a), p.c, p.rho, opts)


@functools.lru_cache(maxsize=256)
def _trace_cached(a, c, rho, opts):
    p = StructParams(c, rho)
    ac = a * c
    if abs(ac - 1.0) <= 1e-12:
        regime = Regime.CENTER_DEGENERATE
    elif ac < 1.0:
        regime = Regime.SADDLE_INTERIOR
    else:
        regime = Regime.SADDLE_ORIGIN

    if regime is Regime.SADDLE_INTERIOR:
        s = saddle_point(a, p)
        J = jacobian((s.u, s.v), a, p)
        lam = eig2(J)[0].real  # negative eigenvalue
        e = np.array([J[0, 1], lam - J[0, 0]])
        if abs(e).max() < 1e-14:
            e = np.array([lam - J[1, 1], J[1, 0]])
        e /= np.linalg.norm(e)
        if e[0] < 0:
            e = -e
        lo_u, lo_v = _shoot((s.u - opts.delta * e[0], s.v - opts.delta * e[1]), a, p, opts, to_origin=True)
        hi_u, hi_v = _shoot((s.u + opts.delta * e[0], s.v + opts.delta * e[1]), a, p, opts, to_origin=False)
        u = np.concatenate([[0.0], lo_u[::-1], [s.u], hi_u])
        v = np.concatenate([[0.0], lo_v[::-1], [s.v], hi_v])
    else:
        e = np.array([rho - 1.0 + ac, a])
        e /= np.linalg.norm(e)
        # near ac = 1 the drift along the manifold is quadratic and a tiny seed
        # costs ~1/delta time units; backward flow attracts transversally at rate
        # rho, so a larger seed converges onto the same curve
        delta = opts.delta if abs(ac - 1.0) > 1e-2 else max(opts.delta, opts.center_delta)
        hi_u, hi_v = _shoot((delta * e[0], delta * e[1]), a, p, opts, to_origin=False)
        u = np.concatenate([[0.0], hi_u])
        v = np.concatenate([[0.0], hi_v])

    u, v = _as_graph(u, v, opts.curve_tol)
    end = State(min(u[-1], 1.0), min(v[-1], 1.0))
    if max(end.u, end.v) < 1.0 - 1e-6:
        raise TraceError("wall endpoint is not on the boundary of the unit square")
    # clipping onto the square can collapse the last samples onto the endpoint
    keep = np.concatenate([u[:-1] < end.u, [True]])
    u, v = u[keep], v[keep]
    u[-1], v[-1] = end.u, end.v
    return SeparatrixCurve(u, v, end, regime, a, p)


def limit_constants(p: StructParams):
    """``(u_s0, v_s0)``, the coefficient of ``u**rho`` in ``gamma_0`` and ``u_M0``."""
    if not (p.rho > 0 and p.c > 0):
        raise InvalidParamsError("gamma0 needs rho > 0 and c > 0")
    s0 = limit_saddle(p)
    coef = s0.v / s0.u**p.rho
    uM = min(1.0, s0.u / s0.v ** (1.0 / p.rho))
    return s0.u, s0.v, coef, uM


def gamma0(u, p: StructParams):
    """Wall in the limit ``a -> 0``: ``(v_s0 / u_s0**rho) * u**rho``."""
    _, _, coef, _ = limit_constants(p)
    return coef * np.asarray(u, dtype=float) ** p.rho


def u_M0(p: StructParams):
    """Abscissa where ``gamma_0`` leaves the unit square (capped at 1)."""
    return limit_constants(p)[3]


def classify_point(s0, a, p: StructParams, opts: SepOptions = SepOptions(), curve=None):
    """Locate ``s0`` relative to the wall: extinction basin, sink basin or wall band."""
    u, v = float(s0[0]), float(s0[1])
    if not (-1e-15 <= u <= 1 + 1e-15 and -1e-15 <= v <= 1 + 1e-15):
        raise InvalidInputError("classify_point needs s0 in the unit square")
    if curve is None:
        curve = trace_gamma(a, p, opts)
    if u == 0.0:
        return Region.ON_M if v <= opts.curve_tol else Region.IN_B
    if u > curve.u_M:
        return Region.IN_E
    g = float(curve(u))
    if v < g - opts.curve_tol:
        return Region.IN_E
    if v > g + opts.curve_tol:
        return Region.IN_B
    return Region.ON_M


def a0_limit_equilibrium(s0, p: StructParams):
    """Rest point on ``u + v = 1`` reached from ``s0`` when ``a = 0``.

    Solves ``(v0 / u0**rho) * x**rho + x - 1 = 0`` on ``(0, 1)``.
    """
    u0, v0 = float(s0[0]), float(s0[1])
    if not (u0 > 0 and v0 > 0):
        raise InvalidInputError("a0_limit_equilibrium needs u0 > 0 and v0 > 0")
    if p.rho == 0.0:
        # v is frozen; u relaxes to 1 - v0
        return State(1.0 - v0, v0) if v0 < 1 else State(0.0, v0)
    mu = v0 / u0**p.rho
    g = lambda x: mu * x**p.rho + x - 1.0
    ub = brentq(g, 0.0, 1.0, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return State(ub, 1.0 - ub)
