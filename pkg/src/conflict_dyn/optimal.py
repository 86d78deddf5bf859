"""Time-minimal strategies with bounded aggressiveness.

The problem ``min T`` subject to the dynamics, ``m <= a(t) <= M`` and
``v(T) = 0`` is transcribed with piecewise-constant controls on a uniform
grid with free final time (optionally refined to one free duration per
arc), integrated with fixed-step RK4 and
differentiated by the exact discrete adjoint.  The terminal constraint is
handled with an augmented Lagrangian and the box-constrained subproblems
by L-BFGS-B.  The result is replayed with the adaptive integrator, and the
continuous costate is recovered to check the maximum principle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.optimize import minimize

from . import _kernels as K
from .errors import DegenerateStateError, InfeasibleError, SynthesisError, PreconditionError
from .integrator import (
    AdjointPath,
    Extinction,
    SimOptions,
    Trajectory,
    integrate_adjoint,
    simulate,
)
from .model import Constant, Sampled, SingularFeedback, StructParams, singular_control
from .synth import in_P, in_Q, synth_heaviside

__all__ = [
    "OptOptions",
    "ArcLabel",
    "Arc",
    "OptimalResult",
    "PontryaginReport",
    "singular_arc_value",
    "singular_surface",
    "minimize_time",
    "verify_pontryagin",
    "hamiltonian",
    "transcription_objective",
]


@dataclass(frozen=True)
class OptOptions:
    """Transcription and solver settings.

    Attributes
    ----------
    n_nodes : int
        Number of control intervals of the final solve.
    coarse_nodes : int or None
        If set, solve on this grid first and warm-start ``n_nodes``.
    substeps : int
        RK4 steps per control interval.
    rounds : int
        Augmented-Lagrangian outer rounds; the penalty weight grows by
        ``weight_growth`` per round.
    tol_arc : float
        Fraction of ``M - m`` used to label nodes.
    refine_junctions : bool
        Re-solve with one free duration per detected arc.
    horizon_growth : float
        Phase durations are capped at this multiple of the warm-start horizon.
    kkt_tol, constraint_tol : float
        First-order and terminal-constraint tolerances for ``converged``.
    """

    n_nodes: int = 128
    coarse_nodes: int | None = 64
    substeps: int = 8
    rounds: int = 3
    weight0: float = 1e3
    weight_growth: float = 10.0
    maxiter: int = 2000
    T_min: float = 1e-6
    T_max: float = 1e3
    tol_arc: float = 0.02
    h_tol: float = 1e-2
    phi_rtol: float = 0.05
    adjoint_substeps: int = 4
    refine_junctions: bool = True
    horizon_growth: float = 4.0
    min_phase_nodes: int = 4
    kkt_tol: float = 1e-4
    constraint_tol: float = 1e-8
    sim: SimOptions = SimOptions(t_max=1e3)
    constant_grid: tuple = tuple(np.logspace(-3.0, 3.0, 25))


class ArcLabel(str, Enum):
    MIN = "min"
    MAX = "max"
    SINGULAR = "singular"


@dataclass(frozen=True)
class Arc:
    t_start: float
    t_end: float
    label: ArcLabel


@dataclass(frozen=True, eq=False)
class OptimalResult:
    """Outcome of :func:`minimize_time`.

    Attributes
    ----------
    strategy : Sampled
        Node values on the control intervals.
    T : float
        Replayed stopping time of ``strategy``.
    T_transcription : float
        Final time of the discretised problem.
    node_labels : tuple of ArcLabel
    node_singular : ndarray
        Singular control at the midpoint state of each node.
    node_durations : ndarray
        Length of each control interval.
    initial_times : dict
        Stopping times of the multi-start initialisers.
    grid_times : dict
        Transcription final time per solve stage (``"uniform-64"``, ...).
    """

    strategy: Sampled
    T: float
    T_transcription: float
    trajectory: Trajectory
    adjoint: AdjointPath
    hamiltonian_residual: float
    arcs: tuple
    node_labels: tuple
    node_singular: np.ndarray
    node_phi: np.ndarray
    node_durations: np.ndarray
    converged: bool
    initial_times: dict
    grid_times: dict
    params: StructParams
    m: float
    M: float

    @property
    def controls(self):
        return np.asarray(self.strategy.values)

    @property
    def n_nodes(self):
        return len(self.strategy.values)

    def longest_singular_window(self, tol):
        """Longest run, as a fraction of ``T``, with ``|a_i - a_s(x_i)| < tol``."""
        ok = np.abs(self.controls - self.node_singular) < tol
        best = run = 0.0
        for flag, d in zip(ok, self.node_durations):
            run = run + d if flag else 0.0
            best = max(best, run)
        return best / float(np.sum(self.node_durations))


@dataclass(frozen=True)
class PontryaginReport:
    max_abs_H: float
    h_ok: bool
    sign_consistency: float
    terminal_v: float
    terminal_u: float
    valid: bool
    note: str = ""


def singular_arc_value(s, p: StructParams):
    """Control that keeps the switching function at zero.

    Raises
    ------
    DegenerateStateError
        If ``u <= 0``.
    """
    return singular_control(s, p)


def singular_surface(s, p: StructParams):
    """Residual of the linear relation satisfied on singular arcs."""
    u, v = s
    c, rho = p.c, p.rho
    return u * (2 * c + 1 - rho * c) + c * v * (1 - rho * c - 2 * rho) + c * (rho - 1)


# ---------------------------------------------------------------------------
# transcription
#
# The horizon is split into phases; phase ``k`` has free duration ``d[k]``
# and ``counts[k]`` equal control intervals.  One phase is the classical
# free-final-time grid; several phases let arc junctions move continuously.


def _durations(d, counts):
    return np.repeat(np.asarray(d) / np.asarray(counts), counts)


def transcription_objective(x, s0, p, K_sub, counts, lam, weight):
    """Augmented objective ``T + lam v_N + weight/2 v_N^2`` and its gradient.

    ``x`` stacks the node values and the phase durations.
    """
    counts = np.asarray(counts)
    n = int(counts.sum())
    a = np.ascontiguousarray(x[:n])
    d = x[n:]
    dur = _durations(d, counts)
    xs = K.rk4_forward(s0[0], s0[1], a, dur, K_sub, p.c, p.rho)
    vN = xs[-1, 1]
    J = float(d.sum()) + lam * vN + 0.5 * weight * vN * vN
    if not np.isfinite(J):
        # overflow on an oversized trial step; steer the line search back
        g = np.zeros_like(x)
        g[n:] = 1.0
        return 1e30, g
    ga, gdur = K.rk4_adjoint(xs, a, dur, K_sub, p.c, p.rho, 0.0, lam + weight * vN)
    g = np.empty_like(x)
    g[:n] = ga
    edges = np.concatenate([[0], np.cumsum(counts)])
    for k in range(len(counts)):
        g[n + k] = 1.0 + gdur[edges[k] : edges[k + 1]].sum() / counts[k]
    return J, g


def _end_state(a, d, counts, s0, p, K_sub):
    xs = K.rk4_forward(s0[0], s0[1], np.ascontiguousarray(a), _durations(d, counts), K_sub, p.c, p.rho)
    return xs[-1]


def _fit_T(a, T0, s0, p, K_sub):
    """Rescale a one-phase horizon so that the discrete final ``v`` vanishes."""
    counts = np.array([len(a)])
    f = lambda T: _end_state(a, [T], counts, s0, p, K_sub)[1]
    T1, T2 = T0, T0 * 1.01
    f1, f2 = f(T1), f(T2)
    for _ in range(60):
        if abs(f2) < 1e-14 or f2 == f1:
            break
        T3 = T2 - f2 * (T2 - T1) / (f2 - f1)
        if not (T3 > 0):
            T3 = 0.5 * T2
        T1, f1 = T2, f2
        T2, f2 = T3, f(T3)
    return T2


def _solve(a0, d0, counts, s0, p, m, M, opts, lam=0.0, w=None):
    """Augmented-Lagrangian rounds of L-BFGS-B.

    Warm solves pass the multiplier and weight of the previous solve so the
    penalty cannot be traded against a shorter infeasible horizon.

    Returns
    -------
    a, d, kkt_ok, lam, w
    """
    counts = np.asarray(counts)
    n = int(counts.sum())
    K_sub = opts.substeps
    x = np.concatenate([np.clip(a0, m, M), np.asarray(d0, dtype=float)])
    lo = np.concatenate([np.full(n, m), np.full(len(counts), opts.T_min)])
    d_cap = min(opts.T_max, opts.horizon_growth * float(np.sum(d0)))
    hi = np.concatenate([np.full(n, M), np.full(len(counts), d_cap)])
    w = opts.weight0 if w is None else w
    for _ in range(opts.rounds):
        res = minimize(
            transcription_objective,
            x,
            args=(s0, p, K_sub, counts, lam, w),
            jac=True,
            method="L-BFGS-B",
            bounds=list(zip(lo, hi)),
            options={"maxiter": opts.maxiter, "ftol": 1e-15, "gtol": 1e-11, "maxcor": 30},
        )
        x = res.x
        vN = _end_state(x[:n], x[n:], counts, s0, p, K_sub)[1]
        lam += w * vN
        w *= opts.weight_growth
    # first-order check on the Lagrangian with the final multiplier
    _, g = transcription_objective(x, s0, p, K_sub, counts, lam, 0.0)
    pg = np.max(np.abs(np.clip(x - g, lo, hi) - x))
    vN = _end_state(x[:n], x[n:], counts, s0, p, K_sub)[1]
    ok = pg < opts.kkt_tol and abs(vN) < opts.constraint_tol
    return x[:n].copy(), x[n:].copy(), ok, lam, w / opts.weight_growth


def _sample_on(node_t0, node_a, T_old, t_new):
    """Evaluate a piecewise-constant control at new times."""
    k = np.searchsorted(node_t0, t_new, side="right") - 1
    return np.asarray(node_a)[np.clip(k, 0, len(node_a) - 1)]


def _feedback_nodes(traj: Trajectory, T, n, p, m, M):
    mids = (np.arange(n) + 0.5) * T / n
    u = np.interp(mids, traj.times, traj.u)
    v = np.interp(mids, traj.times, traj.v)
    a = (1.0 - u - v) * (u * (2 * p.c + 1 - p.rho * p.c) + p.rho * p.c) / (2 * p.c * u * (p.c + 1))
    return np.clip(a, m, M)


def _initialisers(s0, p, m, M, n, opts):
    """Multi-start set: best constant, one-switch construction, singular feedback."""
    starts = {}
    grid = [a for a in opts.constant_grid if m <= a <= M] + [m, M]
    grid = sorted(set(a for a in grid if a > 0))
    best = None
    for a in grid:
        tr, out = simulate(s0, Constant(a), p, opts.sim)
        if isinstance(out, Extinction) and (best is None or out.T_s < best[1]):
            best = (a, out.T_s)
    if best is not None:
        starts["constant"] = (np.full(n, best[0]), best[1])
    try:
        if (p.rho < 1 and in_P(s0, p)) or (p.rho > 1 and in_Q(s0, p)):
            res = synth_heaviside(s0, p, M_floor=max(M, 1.0 + 1e-9))
            st = res.strategy
            if res.verified and m <= st.a_before <= M and m <= st.a_after <= M:
                mids = (np.arange(n) + 0.5) * res.T_s / n
                starts["heaviside"] = (np.where(mids < st.t_switch, st.a_before, st.a_after), res.T_s)
    except (SynthesisError, PreconditionError, RegimeError):
        pass
    if s0[0] > 0 and p.c > 0:
        try:
            tr, out = simulate(s0, SingularFeedback(m, M), p, opts.sim)
            if isinstance(out, Extinction):
                starts["singular-feedback"] = (_feedback_nodes(tr, out.T_s, n, p, m, M), out.T_s)
        except DegenerateStateError:
            pass
    return starts


def _replay(a, dur, s0, p, opts):
    grid = np.concatenate([[0.0], np.cumsum(dur)[:-1]])
    strat = Sampled(tuple(float(t) for t in grid), tuple(float(x) for x in a))
    T = float(np.sum(dur))
    sim = SimOptions(
        t_max=max(opts.sim.t_max, 10 * T),
        rel_tol=opts.sim.rel_tol,
        abs_tol=opts.sim.abs_tol,
        sink_eps=opts.sim.sink_eps,
        event_tol=opts.sim.event_tol,
        max_steps=opts.sim.max_steps,
        max_step=min(opts.sim.max_step, T / (4 * len(dur))),
    )
    traj, out = simulate(s0, strat, p, sim)
    return strat, traj, out


def _phase_layout(labels, dur, n_total, min_nodes):
    """Group node labels into arcs and distribute ``n_total`` nodes over them."""
    arcs = []
    start = 0
    for i in range(1, len(labels) + 1):
        if i == len(labels) or labels[i] != labels[start]:
            arcs.append([start, i])
            start = i
    # fold isolated transition nodes into the preceding arc
    merged = []
    for s, e in arcs:
        if merged and e - s < 2:
            merged[-1][1] = e
        else:
            merged.append([s, e])
    if len(merged) > 1 and merged[0][1] - merged[0][0] < 2:
        merged[1][0] = 0
        merged.pop(0)
    t_edges = np.concatenate([[0.0], np.cumsum(dur)])
    d = np.array([t_edges[e] - t_edges[s] for s, e in merged])
    share = np.maximum(min_nodes, np.round(n_total * d / d.sum()).astype(int))
    while share.sum() > n_total and share.max() > min_nodes:
        share[np.argmax(share)] -= 1
    while share.sum() < n_total:
        share[np.argmax(d / share)] += 1
    return d, share


def minimize_time(s0, p: StructParams, m, M, opts: OptOptions = OptOptions()):
    """Time-minimal winning strategy with values in ``[m, M]``.

    Solves a uniform transcription from every initialiser (coarse grid,
    then ``opts.n_nodes``), keeps the best replayed result and, if
    ``opts.refine_junctions`` is set, re-solves with arc junctions as free
    variables.

    Parameters
    ----------
    s0 : pair
        Start with ``u > 0``, ``v > 0``.
    m, M : float
        Control bounds, ``0 <= m <= M``, ``M > 0``.

    Returns
    -------
    OptimalResult

    Raises
    ------
    InfeasibleError
        If no initialiser reaches extinction within ``opts.sim.t_max``.
    """
    if not (M >= m >= 0 and M > 0):
        raise PreconditionError("need 0 <= m <= M and M > 0")
    s0 = (float(s0[0]), float(s0[1]))
    n_fine = opts.n_nodes
    n0 = opts.coarse_nodes if opts.coarse_nodes else n_fine
    starts = _initialisers(s0, p, m, M, n0, opts)
    if not starts:
        raise InfeasibleError("no admissible strategy reached v = 0 within the horizon")
    init_times = {k: T for k, (_, T) in starts.items()}

    grid_T = {}
    candidates = []
    for name, (a0, T0) in starts.items():
        T0 = _fit_T(a0, T0, s0, p, opts.substeps)
        a, d, ok, lam, w = _solve(a0, [T0], [n0], s0, p, m, M, opts)
        T_coarse = float(d[0])
        if n_fine != n0:
            t_new = (np.arange(n_fine) + 0.5) * d[0] / n_fine
            a = _sample_on(np.arange(n0) * d[0] / n0, a, d[0], t_new)
            a, d, ok, lam, w = _solve(a, d, [n_fine], s0, p, m, M, opts, lam, w)
        dur = _durations(d, [n_fine])
        strat, traj, out = _replay(a, dur, s0, p, opts)
        if isinstance(out, Extinction):
            candidates.append((out.T_s, name, a, dur, ok, strat, traj, T_coarse, lam, w))
    if not candidates:
        raise InfeasibleError("optimised strategies failed to reach v = 0 on replay")
    # replays that tie to round-off prefer a converged solve
    T_best = min(c[0] for c in candidates)
    candidates.sort(key=lambda c: (not (c[4] and c[0] <= T_best * (1 + 1e-9)), c[0]))
    T_s, name, a, dur, ok, strat, traj, T_coarse, lam, w = candidates[0]
    grid_T[f"uniform-{n0}"] = T_coarse
    grid_T[f"uniform-{n_fine}"] = float(dur.sum())

    if opts.refine_junctions:
        a_s = _node_singular(traj, a, dur, p)
        labels = _label_nodes(a, a_s, m, M, opts.tol_arc)
        d_ph, counts = _phase_layout(labels, dur, n_fine, opts.min_phase_nodes)
        if len(counts) > 1:
            edges = np.concatenate([[0.0], np.cumsum(d_ph)])
            t_mid = np.concatenate(
                [edges[k] + (np.arange(c) + 0.5) * d_ph[k] / c for k, c in enumerate(counts)]
            )
            t0_old = np.concatenate([[0.0], np.cumsum(dur)[:-1]])
            a_r = _sample_on(t0_old, a, None, t_mid)
            a_r, d_r, ok_r, _, _ = _solve(a_r, d_ph, counts, s0, p, m, M, opts, lam, w)
            dur_r = _durations(d_r, counts)
            strat_r, traj_r, out_r = _replay(a_r, dur_r, s0, p, opts)
            if isinstance(out_r, Extinction) and out_r.T_s <= T_s:
                T_s, a, dur, ok, strat, traj = out_r.T_s, a_r, dur_r, ok_r, strat_r, traj_r
                grid_T["junctions"] = float(dur.sum())

    converged = ok and T_s <= min(init_times.values()) * (1 + 1e-9)
    return _postprocess(s0, p, m, M, a, dur, T_s, strat, traj, converged, init_times, grid_T, opts)


def _node_singular(traj, a, dur, p):
    c = p.c
    t0 = np.concatenate([[0.0], np.cumsum(dur)[:-1]])
    mids = t0 + 0.5 * np.asarray(dur)
    um = np.interp(mids, traj.times, traj.u)
    vm = np.interp(mids, traj.times, traj.v)
    return (1.0 - um - vm) * (um * (2 * c + 1 - p.rho * c) + p.rho * c) / (2 * c * um * (c + 1))


def _postprocess(s0, p, m, M, a, dur, T_s, strat, traj, converged, init_times, grid_T, opts):
    c = p.c
    # terminal costate with p_0 = -1: p_u(T) = 0, p_v(T) v'(T) = 1
    uT = traj.u[-1]
    vdot = p.rho * traj.v[-1] * (1 - uT - traj.v[-1]) - a[-1] * uT
    if vdot == 0.0:
        raise DegenerateStateError("v' vanishes at the final time")
    adj = integrate_adjoint(traj, strat, p, (0.0, 1.0 / vdot), substeps=opts.adjoint_substeps)
    H = hamiltonian(traj, adj, p)
    a_s = _node_singular(traj, a, dur, p)
    t0 = np.concatenate([[0.0], np.cumsum(dur)[:-1]])
    mids = t0 + 0.5 * dur
    phi = c * np.interp(mids, adj.times, adj.p_u) + np.interp(mids, adj.times, adj.p_v)
    labels = _label_nodes(a, a_s, m, M, opts.tol_arc)
    arcs = _merge_arcs(labels, dur)
    return OptimalResult(
        strategy=strat,
        T=T_s,
        T_transcription=float(np.sum(dur)),
        trajectory=traj,
        adjoint=adj,
        hamiltonian_residual=float(np.max(np.abs(H))),
        arcs=arcs,
        node_labels=tuple(labels),
        node_singular=a_s,
        node_phi=phi,
        node_durations=np.asarray(dur, dtype=float),
        converged=converged,
        initial_times=init_times,
        grid_times=grid_T,
        params=p,
        m=m,
        M=M,
    )


def hamiltonian(traj, adj, p):
    """``H = p . f - 1`` at every recorded sample (normalised ``p_0 = -1``)."""
    u, v, a = traj.u, traj.v, traj.controls
    s = 1.0 - u - v
    fu = u * s - a * p.c * u
    fv = p.rho * v * s - a * u
    return adj.p_u * fu + adj.p_v * fv - 1.0


def _label_nodes(a, a_s, m, M, tol_arc):
    """Nearest of ``m``, ``M`` and ``a_s`` within ``tol_arc (M - m)``.

    When ``a_s`` itself lies close to a bound the nearest candidate wins,
    so a node sitting on the singular value is not absorbed by the bound.
    """
    band = tol_arc * (M - m)
    out = []
    for ai, si in zip(a, a_s):
        if M == m:
            out.append(ArcLabel.MAX)
            continue
        d = {ArcLabel.SINGULAR: abs(ai - si), ArcLabel.MIN: ai - m, ArcLabel.MAX: M - ai}
        best = min(d, key=d.get)
        if d[best] >= band and best is ArcLabel.SINGULAR:
            # off every candidate: fall back to the nearer bound
            best = ArcLabel.MIN if ai - m < M - ai else ArcLabel.MAX
        out.append(best)
    return out


def _merge_arcs(labels, dur):
    edges = np.concatenate([[0.0], np.cumsum(dur)])
    n = len(labels)
    arcs = []
    start = 0
    for i in range(1, n + 1):
        if i == n or labels[i] != labels[start]:
            arcs.append(Arc(float(edges[start]), float(edges[i]), labels[start]))
            start = i
    return tuple(arcs)


def verify_pontryagin(res: OptimalResult, p: StructParams, m, M, h_tol=1e-2, phi_rtol=0.05):
    """Check the maximum-principle conditions along an optimised path.

    Reports the maximum ``|H|``, the fraction of nodes whose label agrees
    with the sign of ``phi = c p_u + p_v`` and the terminal state.
    """
    pu, pv = res.adjoint.p_u, res.adjoint.p_v
    if not (np.any(pu != 0) or np.any(pv != 0)):
        return PontryaginReport(
            math.nan, False, 0.0, res.trajectory.v[-1], res.trajectory.u[-1], False, "zero costate"
        )
    phi = res.node_phi
    scale = max(np.max(np.abs(phi)), 1e-300)
    agree = 0
    for lab, f in zip(res.node_labels, phi):
        if abs(f) <= phi_rtol * scale:
            expect = ArcLabel.SINGULAR
        else:
            expect = ArcLabel.MIN if f > 0 else ArcLabel.MAX
        if lab == expect or (M == m):
            agree += 1
    H = res.hamiltonian_residual
    vT, uT = res.trajectory.v[-1], res.trajectory.u[-1]
    valid = uT > 0 and abs(vT) <= 1e-8
    return PontryaginReport(H, H < h_tol, agree / len(phi), vT, uT, valid)
