"""Constructive winning strategies: constant sweeps and one-switch controls."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .errors import PreconditionError, RegimeError, SynthesisError
from .integrator import Extinction, SimOptions, Trajectory, outcome_of, run_kernel, simulate
from .model import Constant, Heaviside, State, StructParams
from .separatrix import Region, SepOptions, a0_limit_equilibrium, classify_point, gamma0
from .victory import victory_boundary

__all__ = [
    "SynthOptions",
    "SynthResult",
    "DEFAULT_A_GRID",
    "in_P",
    "in_Q",
    "synth_heaviside",
    "find_constant_winner",
]

DEFAULT_A_GRID = tuple(np.logspace(-3.0, 3.0, 25))


@dataclass(frozen=True)
class SynthOptions:
    """Controls for the constructions.

    Attributes
    ----------
    sim : SimOptions
        Options for the verifying simulations; ``t_max`` is raised to
        ``horizon_per_a / a`` for small tail values.
    sep : SepOptions
        Options for the wall tracing used by the tail/head search.
    attempts : int
        Cap on the geometric search.
    factor : float
        Ratio of the geometric search.
    """

    sim: SimOptions = SimOptions(t_max=1e5, rel_tol=1e-9, abs_tol=1e-10, event_tol=1e-10)
    sep: SepOptions = SepOptions()
    attempts: int = 12
    factor: float = 4.0
    horizon_per_a: float = 200.0


@dataclass(frozen=True, eq=False)
class SynthResult:
    """A strategy together with its verifying simulation."""

    strategy: object
    verified: bool
    T_s: float
    witness: Trajectory


def _check_unit(s0):
    u, v = float(s0[0]), float(s0[1])
    return u, v


def in_P(s0, p: StructParams):
    """Band between ``gamma_0`` and the shifted line, right of ``u_s0`` (``rho < 1``)."""
    if not p.rho < 1.0:
        raise RegimeError("in_P is defined for rho < 1")
    u, v = _check_unit(s0)
    vb = victory_boundary(p)
    if not (vb.u_s0 <= u <= 1.0):
        return False
    return float(gamma0(u, p)) <= v < u / p.c + (1.0 - p.rho) / (1.0 + p.rho * p.c)


def in_Q(s0, p: StructParams):
    """Band between ``u/c`` and ``zeta``, right of ``u_inf`` (``rho > 1``)."""
    if not p.rho > 1.0:
        raise RegimeError("in_Q is defined for rho > 1")
    u, v = _check_unit(s0)
    vb = victory_boundary(p)
    if not (vb.u_inf <= u <= 1.0):
        return False
    return u / p.c <= v < u**p.rho / vb.zeta_scale


def _verify(s0, strat, p, sim):
    traj, out = simulate(s0, strat, p, sim)
    if isinstance(out, Extinction):
        return SynthResult(strat, True, out.T_s, traj)
    return SynthResult(strat, False, math.inf, traj)


def _sim_for(a_tail, opts: SynthOptions):
    t_max = max(opts.sim.t_max, opts.horizon_per_a / a_tail) if a_tail > 0 else opts.sim.t_max
    return SimOptions(
        t_max=t_max,
        rel_tol=opts.sim.rel_tol,
        abs_tol=opts.sim.abs_tol,
        sink_eps=opts.sim.sink_eps,
        event_tol=opts.sim.event_tol,
        max_steps=opts.sim.max_steps,
        max_step=opts.sim.max_step,
    )


def _run_to_event(s0, a, p, event, opts):
    ts, us, vs, _, status, t_end, u_end, v_end = run_kernel(
        s0, Constant(a), p, opts.sim, linear_event=event, stop_v0=True
    )
    return status, t_end, (u_end, v_end)


def synth_heaviside(s0, p: StructParams, M_floor=2.0, opts: SynthOptions = SynthOptions()):
    """One-switch winning strategy for starts that constant controls cannot win.

    For ``rho < 1`` a large value is applied until ``u`` drops to ``u_s0``,
    then a small value whose extinction basin contains the reached state.
    For ``rho > 1`` no attack is made until ``v`` falls below ``u/c`` with a
    margin, then a large value finishes the second population.

    Parameters
    ----------
    s0 : pair
        Start; must lie in ``P`` (``rho < 1``) or ``Q`` (``rho > 1``).
    M_floor : float
        Lower bound (> 1) for the large value; the small value is below
        ``1 / M_floor``.

    Returns
    -------
    SynthResult

    Raises
    ------
    PreconditionError
        If ``s0`` is outside the required set.
    SynthesisError
        If the switching event is not reached or no tail value wins.
    """
    if not M_floor > 1.0:
        raise PreconditionError("M_floor must exceed 1")
    c, rho = p.c, p.rho
    u0, v0 = float(s0[0]), float(s0[1])
    if rho == 1.0:
        raise RegimeError("no one-switch construction is needed for rho = 1")
    if rho < 1.0:
        if not in_P(s0, p):
            raise PreconditionError("start is not in P")
        return _synth_lt1(u0, v0, p, M_floor, opts)
    if not in_Q(s0, p):
        raise PreconditionError("start is not in Q")
    return _synth_gt1(u0, v0, p, M_floor, opts)


def _synth_lt1(u0, v0, p, M_floor, opts):
    c, rho = p.c, p.rho
    vb = victory_boundary(p)
    us0 = vb.u_s0
    vs0 = 1.0 / (1.0 + rho * c)
    xi = 0.5 * (vs0 - v0 - (us0 - u0) / c) / (u0 - us0)
    a_hi = max(2.0 / c, (1.0 + rho * c) / (4.0 * c), (rho + 1.0 / c + xi) * 2.0 / (us0 * c * xi), M_floor)
    status, T, xT = _run_to_event((u0, v0), a_hi, p, (1.0, 0.0, -us0), opts)
    diag = {"xi": xi, "a_before": a_hi}
    if status == K.EXTINCTION:
        # the head value already wins on its own
        strat = Heaviside(a_hi, a_hi, T)
        return _verify((u0, v0), strat, p, opts.sim)
    if status != K.EVENT:
        raise SynthesisError("u never reached u_s0 under the head value", diag)
    diag.update(t_switch=T, state_at_switch=xT)
    a_lo = 1.0 / (2.0 * M_floor)
    tried = []
    for _ in range(opts.attempts):
        tried.append(a_lo)
        if classify_point(xT, a_lo, p, opts.sep) is Region.IN_E:
            res = _verify((u0, v0), Heaviside(a_hi, a_lo, T), p, _sim_for(a_lo, opts))
            if res.verified:
                return res
        a_lo /= opts.factor
    diag["tail_values_tried"] = tried
    raise SynthesisError("no tail value places the switch state in the extinction basin", diag)


def _synth_gt1(u0, v0, p, M_floor, opts):
    c = p.c
    limit = a0_limit_equilibrium((u0, v0), p)
    margin = 0.5 * (limit.u / c - limit.v)
    diag = {"margin": margin}
    if not margin > 0:
        raise SynthesisError("a = 0 flow does not cross below u/c", diag)
    # event: v - u/c + margin = 0, i.e. the path is strictly inside {v < u/c}
    status, T, xT = _run_to_event((u0, v0), 0.0, p, (-1.0 / c, 1.0, margin), opts)
    if status != K.EVENT:
        raise SynthesisError("v never fell below u/c under a = 0", diag)
    diag.update(t_switch=T, state_at_switch=xT)
    a_hi = M_floor
    tried = []
    for _ in range(opts.attempts):
        tried.append(a_hi)
        if classify_point(xT, a_hi, p, opts.sep) is Region.IN_E:
            res = _verify((u0, v0), Heaviside(0.0, a_hi, T), p, opts.sim)
            if res.verified:
                return res
        a_hi *= opts.factor
    diag["head_values_tried"] = tried
    raise SynthesisError("no large value places the switch state in the extinction basin", diag)


def find_constant_winner(s0, p: StructParams, a_grid=DEFAULT_A_GRID, sim: SimOptions | None = None):
    """First grid value whose constant strategy reaches extinction.

    Returns
    -------
    (a, SynthResult) or None
    """
    sim = sim if sim is not None else SynthOptions().sim
    for a in a_grid:
        a = float(a)
        if isinstance(outcome_of(s0, Constant(a), p, sim), Extinction):
            return a, _verify(s0, Constant(a), p, sim)
    return None
