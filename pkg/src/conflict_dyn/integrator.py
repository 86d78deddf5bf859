"""Adaptive simulation to extinction, sink convergence or horizon.

The stepper is an explicit Dormand-Prince 5(4) pair run on ``(ln u, v)``;
see :mod:`conflict_dyn._kernels`.  Strategy discontinuities are hit exactly
and the stage sequence restarts there.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .errors import BudgetError, DegenerateStateError, InvalidInputError, InvalidParamsError
from .model import (
    Constant,
    SingularFeedback,
    State,
    StructParams,
    eval_strategy,
    jacobian,
)

__all__ = [
    "SimOptions",
    "Trajectory",
    "Extinction",
    "ConvergedToSink",
    "Undecided",
    "DegenerateStart",
    "Outcome",
    "AdjointPath",
    "simulate",
    "outcome_of",
    "stopping_time",
    "integrate_adjoint",
]


@dataclass(frozen=True)
class SimOptions:
    """Integration controls.

    Attributes
    ----------
    t_max : float
        Time horizon.
    rel_tol, abs_tol : float
        Local error tolerances of the embedded pair.
    sink_eps : float
        Radius around ``(0, 1)`` that counts as converged.
    event_tol : float
        Root tolerance (in time and in ``v``) for the extinction crossing.
    max_steps : int
        Step budget, rejected steps included.
    max_step : float
        Upper bound on the step size.
    """

    t_max: float = 1000.0
    rel_tol: float = 1e-10
    abs_tol: float = 1e-10
    sink_eps: float = 1e-6
    event_tol: float = 1e-10
    max_steps: int = 2_000_000
    max_step: float = math.inf

    def __post_init__(self):
        for name in ("t_max", "rel_tol", "abs_tol", "sink_eps", "event_tol", "max_step"):
            x = getattr(self, name)
            if not (x > 0):
                raise InvalidParamsError(f"{name} must be positive, got {x!r}")
        if self.max_steps <= 0:
            raise InvalidParamsError("max_steps must be positive")
        if self.event_tol > self.abs_tol:
            raise InvalidParamsError("event_tol must not exceed abs_tol")


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Integrated path: times, states and applied control values."""

    times: np.ndarray
    u: np.ndarray
    v: np.ndarray
    controls: np.ndarray

    def __post_init__(self):
        for name in ("times", "u", "v", "controls"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self):
        return self.times.shape[0]

    @property
    def states(self):
        """``(N, 2)`` array of ``(u, v)`` rows."""
        return np.column_stack([self.u, self.v])

    def state_at(self, k):
        return State(self.u[k], self.v[k])

    @property
    def final(self):
        return State(self.u[-1], self.v[-1])


@dataclass(frozen=True)
class Extinction:
    """The second population vanishes at ``T_s`` with ``u_final > 0`` left."""

    T_s: float
    u_final: float
    label = "extinction"


@dataclass(frozen=True)
class ConvergedToSink:
    """The path entered the ``sink_eps`` ball around ``(0, 1)`` at ``t_enter``."""

    t_enter: float
    label = "converged-to-sink"


@dataclass(frozen=True)
class Undecided:
    """Neither event happened before ``t_max``."""

    t_max: float
    label = "undecided"


@dataclass(frozen=True)
class DegenerateStart:
    """The initial state has ``v < 0`` or ``u < 0``."""

    label = "degenerate-start"


Outcome = (Extinction, ConvergedToSink, Undecided, DegenerateStart)


def _strategy_arrays(strat):
    if isinstance(strat, SingularFeedback):
        return 1, np.empty(0), np.array([strat.M]), strat.m, strat.M
    if not hasattr(strat, "to_piecewise"):
        raise TypeError(f"unknown strategy {strat!r}")
    b, vals = strat.to_piecewise()
    return 0, np.ascontiguousarray(b, dtype=float), np.ascontiguousarray(vals, dtype=float), 0.0, 0.0


def run_kernel(
    s0,
    strat,
    p: StructParams,
    opts: SimOptions,
    *,
    direction=1.0,
    stop_v0=True,
    sink=True,
    linear_event=None,
    box=False,
    origin_eps=0.0,
    record=True,
):
    """Low-level access to the compiled integrator.

    Returns ``(times, u, v, a, status, t_end, u_end, v_end)``.
    """
    u0, v0 = float(s0[0]), float(s0[1])
    mode, breaks, values, m, M = _strategy_arrays(strat)
    uzero = u0 == 0.0
    w0 = -math.inf if uzero else math.log(u0)
    if mode == 1 and p.c <= 0.0:
        raise DegenerateStateError("singular feedback needs c > 0")
    ev_on = linear_event is not None
    ev = linear_event if ev_on else (0.0, 0.0, 0.0)
    ts, ws, vs, as_, n, status, t_end, w_end, v_end = K.integrate(
        w0 if not uzero else 0.0,
        v0,
        uzero,
        p.c,
        p.rho,
        mode,
        breaks,
        values,
        m,
        M,
        float(direction),
        float(opts.t_max),
        float(opts.rel_tol),
        float(opts.abs_tol),
        float(opts.max_step),
        int(opts.max_steps),
        bool(stop_v0),
        float(opts.sink_eps) if sink else 0.0,
        float(opts.event_tol),
        ev_on,
        float(ev[0]),
        float(ev[1]),
        float(ev[2]),
        bool(box),
        float(origin_eps),
        bool(record),
    )
    if uzero:
        us = np.zeros(n)
        u_end = 0.0
    else:
        us = np.exp(ws[:n])
        u_end = math.exp(w_end)
    return ts[:n].copy(), us, vs[:n].copy(), as_[:n].copy(), status, t_end, u_end, v_end


def _initial_outcome(u0, v0):
    if u0 < 0.0 or v0 < 0.0:
        return DegenerateStart()
    if v0 == 0.0 and u0 > 0.0:
        return Extinction(0.0, u0)
    return None


def simulate(s0, strat, p: StructParams, opts: SimOptions = SimOptions()):
    """Integrate from ``s0`` under ``strat`` until extinction, sink or ``t_max``.

    Parameters
    ----------
    s0 : State or pair
        Initial state; may lie outside the unit square.
    strat : Strategy
        Any strategy variant.
    p : StructParams
    opts : SimOptions

    Returns
    -------
    (Trajectory, Outcome)

    Raises
    ------
    BudgetError
        If ``opts.max_steps`` is exhausted; carries the partial trajectory.
    DegenerateStateError
        If a feedback strategy is evaluated at ``u <= 0``.
    """
    u0, v0 = float(s0[0]), float(s0[1])
    if not (math.isfinite(u0) and math.isfinite(v0)):
        raise InvalidInputError("initial state must be finite")
    early = _initial_outcome(u0, v0)
    if early is not None:
        a0 = 0.0 if isinstance(early, DegenerateStart) else _safe_eval(strat, (u0, v0), p)
        traj = Trajectory(np.array([0.0]), np.array([u0]), np.array([v0]), np.array([a0]))
        return traj, early
    ts, us, vs, as_, status, t_end, u_end, v_end = run_kernel((u0, v0), strat, p, opts)
    traj = Trajectory(ts, us, vs, as_)
    if status == K.EXTINCTION:
        return traj, Extinction(t_end, u_end)
    if status == K.SINK:
        return traj, ConvergedToSink(t_end)
    if status == K.TMAX:
        return traj, Undecided(opts.t_max)
    if status == K.DEGENERATE:
        raise DegenerateStateError("singular feedback evaluated at u <= 0")
    raise BudgetError(f"step budget of {opts.max_steps} exhausted at t={t_end:.6g}", traj)


def _safe_eval(strat, s, p):
    try:
        return eval_strategy(strat, 0.0, s, p)
    except DegenerateStateError:
        return float("nan")


def outcome_of(s0, strat, p: StructParams, opts: SimOptions = SimOptions()):
    """Outcome only; skips recording the path (faster for sweeps)."""
    u0, v0 = float(s0[0]), float(s0[1])
    early = _initial_outcome(u0, v0)
    if early is not None:
        return early
    _, _, _, _, status, t_end, u_end, _ = run_kernel((u0, v0), strat, p, opts, record=False)
    if status == K.EXTINCTION:
        return Extinction(t_end, u_end)
    if status == K.SINK:
        return ConvergedToSink(t_end)
    if status == K.TMAX:
        return Undecided(opts.t_max)
    if status == K.DEGENERATE:
        raise DegenerateStateError("singular feedback evaluated at u <= 0")
    raise BudgetError(f"step budget of {opts.max_steps} exhausted at t={t_end:.6g}")


def stopping_time(s0, strat, p: StructParams, opts: SimOptions = SimOptions()):
    """``T_s`` on extinction, ``math.inf`` otherwise."""
    out = outcome_of(s0, strat, p, opts)
    return out.T_s if isinstance(out, Extinction) else math.inf


@dataclass(frozen=True, eq=False)
class AdjointPath:
    """Costate samples aligned with a trajectory's time stamps."""

    times: np.ndarray
    p_u: np.ndarray
    p_v: np.ndarray

    def __post_init__(self):
        for name in ("times", "p_u", "p_v"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def _interval_controls(traj: Trajectory, strat, p):
    """Control on each stored interval (left-open at breakpoints)."""
    t = traj.times
    if isinstance(strat, SingularFeedback):
        return None
    mids = 0.5 * (t[:-1] + t[1:])
    return np.array([eval_strategy(strat, tm, (0.0, 0.0), p) for tm in mids])


def integrate_adjoint(traj: Trajectory, strat, p: StructParams, terminal_p, opts=None, substeps=4):
    """Integrate ``p' = -J(x, a)^T p`` backward along a stored path.

    Within each stored interval the state is rebuilt by cubic Hermite
    interpolation from the endpoint values and slopes, and the costate is
    advanced with ``substeps`` classical RK4 steps.

    Parameters
    ----------
    traj : Trajectory
        Path produced by :func:`simulate`.
    strat : Strategy
        Strategy that produced ``traj``.
    terminal_p : pair
        ``(p_u(T), p_v(T))``.

    Returns
    -------
    AdjointPath
    """
    n = len(traj)
    if n == 0:
        raise InvalidInputError("empty trajectory")
    t = traj.times
    U, V = traj.u, traj.v
    pu = np.empty(n)
    pv = np.empty(n)
    pu[-1], pv[-1] = float(terminal_p[0]), float(terminal_p[1])
    ctrl = _interval_controls(traj, strat, p)
    c, rho = p.c, p.rho

    def control(k, x):
        if ctrl is not None:
            return ctrl[k]
        a = K.singular_value(x[0], x[1], c, rho)
        return min(max(a, strat.m), strat.M)

    def field(x, a):
        s = 1.0 - x[0] - x[1]
        return np.array([x[0] * s - a * c * x[0], rho * x[1] * s - a * x[0]])

    for k in range(n - 2, -1, -1):
        t0, t1 = t[k], t[k + 1]
        dt = t1 - t0
        x0 = np.array([U[k], V[k]])
        x1 = np.array([U[k + 1], V[k + 1]])
        f0 = field(x0, control(k, x0))
        f1 = field(x1, control(k, x1))

        def state(theta):
            h00 = 2 * theta**3 - 3 * theta**2 + 1
            h10 = theta**3 - 2 * theta**2 + theta
            h01 = -2 * theta**3 + 3 * theta**2
            h11 = theta**3 - theta**2
            return h00 * x0 + h10 * dt * f0 + h01 * x1 + h11 * dt * f1

        def rhs(theta, lam):
            x = state(theta)
            a = control(k, x)
            return -jacobian(x, a, p).T @ lam

        lam = np.array([pu[k + 1], pv[k + 1]])
        # integrate in theta from 1 down to 0; d lam/d theta = dt * rhs
        hs = -1.0 / substeps
        th = 1.0
        for _ in range(substeps):
            k1 = dt * rhs(th, lam)
            k2 = dt * rhs(th + 0.5 * hs, lam + 0.5 * hs * k1)
            k3 = dt * rhs(th + 0.5 * hs, lam + 0.5 * hs * k2)
            k4 = dt * rhs(th + hs, lam + hs * k3)
            lam = lam + hs / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            th += hs
        pu[k], pv[k] = lam
    return AdjointPath(t.copy(), pu, pv)
