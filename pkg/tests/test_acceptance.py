"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v``; the lines are printed even
without ``-s``.
"""
import math
import time

import numpy as np
import pytest

from conflict_dyn import (
    Constant,
    ConvergedToSink,
    EqClass,
    Extinction,
    OptOptions,
    PiecewiseConstant,
    Region,
    SepOptions,
    SimOptions,
    StructParams,
    SynthesisError,
    a0_limit_equilibrium,
    above_bound_excluded,
    basin_grid,
    classify_point,
    constrained_bound,
    eps_upper,
    find_constant_winner,
    find_equilibria,
    in_P,
    in_Q,
    in_victory_set,
    minimize_time,
    outcome_of,
    simulate,
    synth_heaviside,
    trace_gamma,
    victory_boundary,
    witness_point,
)
from conflict_dyn.synth import DEFAULT_A_GRID

REGIMES = [(0.8, 0.5, 2.0), (0.8, 3.0, 2.0), (2.0, 0.5, 1.0)]


@pytest.fixture
def report(capsys):
    def emit(n, name, ok, detail, t0, budget=None):
        dt = time.perf_counter() - t0
        if budget is not None and dt >= budget:
            ok = False
            detail += f"; runtime {dt:.1f}s over {budget:g}s"
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {n:>2} {name}: {detail} [{dt:.2f}s]")
        assert ok, detail

    return emit


def _random_piecewise(rng, lo, hi, count, t_span=20.0, log=True):
    out = []
    for _ in range(count):
        k = int(rng.integers(1, 6))
        br = tuple(np.sort(rng.uniform(0.0, t_span, k - 1)))
        vals = 10 ** rng.uniform(np.log10(lo), np.log10(hi), k) if log else rng.uniform(lo, hi, k)
        vals = tuple(float(x) for x in vals)
        out.append(PiecewiseConstant(br, vals) if k > 1 else Constant(vals[0]))
    return out


def test_c01_equilibrium_regimes(report):
    t0 = time.perf_counter()
    expected = [
        {EqClass.SOURCE, EqClass.SINK, EqClass.SADDLE},
        {EqClass.SADDLE, EqClass.SINK},
        {EqClass.DEGENERATE, EqClass.SINK},
    ]
    errs, ok = [], True
    for (a, c, rho), want in zip(REGIMES, expected):
        eqs = find_equilibria(a, StructParams(c, rho))
        ok &= sorted(e.klass.value for e in eqs) == sorted(k.value for k in want)
        for e in eqs:
            lam = sorted(z.real for z in e.eigenvalues)
            if tuple(e.location) == (0.0, 0.0):
                errs.append(np.max(np.abs(np.subtract(lam, sorted([rho, 1 - a * c])))))
            elif tuple(e.location) == (0.0, 1.0):
                errs.append(np.max(np.abs(np.subtract(lam, sorted([-a * c, -rho])))))
    err = max(errs)
    ok &= len(errs) == 6 and err <= 1e-12
    report(1, "equilibrium regimes", ok, f"classes match, max eigenvalue error {err:.1e}", t0, 1.0)


def test_c02_rho1_closed_form(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(20):
        c = rng.uniform(0.2, 5.0)
        a = rng.uniform(0.1, 10.0)
        u0 = rng.uniform(0.05, 1.0)
        v0 = rng.uniform(0.01, 0.99) * u0 / c
        _, out = simulate((u0, v0), Constant(a), StructParams(c, 1.0))
        tau = math.log(1.0 / (1.0 - c * v0 / u0)) / c
        T = out.T_s if isinstance(out, Extinction) else math.inf
        worst = max(worst, abs(T - tau / a) / (tau / a))
    report(2, "rho=1 closed form", worst <= 1e-4, f"max relative error {worst:.1e} over 20 draws", t0, 5.0)


def test_c03_no_attack_integral_and_limit(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    drift = dist = 0.0
    for _ in range(10):
        s0 = (rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95))
        p = StructParams(rng.uniform(0.2, 5.0), rng.uniform(0.2, 5.0))
        traj, _ = simulate(s0, Constant(0.0), p, SimOptions(t_max=50.0))
        I = traj.v / traj.u**p.rho
        drift = max(drift, np.max(np.abs(I / I[0] - 1.0)))
        lim = a0_limit_equilibrium(s0, p)
        dist = max(dist, math.hypot(traj.u[-1] - lim.u, traj.v[-1] - lim.v))
    ok = drift < 1e-6 and dist <= 1e-4
    report(3, "a=0 prime integral and limit", ok, f"drift {drift:.1e}, limit distance {dist:.1e}", t0, 5.0)


def test_c04_separatrix_basin_agreement(report):
    t0 = time.perf_counter()
    g = np.linspace(0.0, 1.0, 61)
    rates = []
    for a, c, rho in REGIMES:
        p = StructParams(c, rho)
        cur = trace_gamma(a, p)
        band = 2 * SepOptions().curve_tol
        agree = n = 0
        for u in g:
            for v in g:
                if u <= cur.u_M and abs(v - float(cur(u))) <= band:
                    continue
                n += 1
                reg = classify_point((u, v), a, p, curve=cur)
                won = isinstance(outcome_of((u, v), Constant(a), p), Extinction)
                agree += (reg is Region.IN_E) == won
        rates.append(agree / n)
    ok = min(rates) >= 0.99
    detail = "agreement " + ", ".join(f"{r:.4f}" for r in rates)
    report(4, "separatrix vs basin", ok, detail, t0, 120.0)


@pytest.mark.slow
def test_c05_victory_set_formulas(report):
    t0 = time.perf_counter()
    g = np.linspace(0.0, 1.0, 41)
    h = g[1] - g[0]
    sim = SimOptions(t_max=200.0)
    lines, total = [], 0
    for c, rho in [(4.0, 0.5), (4.0, 1.0), (2.0, 1.0), (4.0, 2.0)]:
        p = StructParams(c, rho)
        vb = victory_boundary(p)
        strats = _random_piecewise(np.random.default_rng(5), 1e-3, 1e3, 50)
        bad = 0
        for u in g:
            for v in g:
                if abs(v - float(vb.value(u))) <= 2 * h:
                    continue
                if in_victory_set((u, v), p):
                    if find_constant_winner((u, v), p, sim=sim) is not None:
                        continue
                    try:
                        bad += not synth_heaviside((u, v), p).verified
                    except Exception:
                        bad += 1
                else:
                    trials = [Constant(float(a)) for a in DEFAULT_A_GRID] + strats
                    bad += any(isinstance(outcome_of((u, v), s, p, sim), Extinction) for s in trials)
        lines.append(f"c={c:g},rho={rho:g}:{bad}")
        total += bad
    report(5, "victory-set formulas", total == 0, "violations " + " ".join(lines), t0, 600.0)


def test_c06_constants_insufficient(report):
    t0 = time.perf_counter()
    g = np.linspace(0.0, 1.0, 41)
    found = {}
    for rho in (0.5, 2.0):
        p = StructParams(4.0, rho)
        member = in_P if rho < 1 else in_Q
        for u in g[1:]:
            for v in g[1:]:
                if rho in found or not member((u, v), p):
                    continue
                if find_constant_winner((u, v), p) is not None:
                    continue
                try:
                    res = synth_heaviside((u, v), p)
                except SynthesisError:
                    # corner points of the band are rest points of the a = 0 flow
                    continue
                if res.verified and isinstance(simulate((u, v), res.strategy, p)[1], Extinction):
                    found[rho] = (u, v)
    ok = set(found) == {0.5, 2.0}
    detail = ", ".join(f"rho={r:g} at ({s[0]:.3f}, {s[1]:.3f})" for r, s in sorted(found.items()))
    report(6, "constants insufficient", ok, detail or "no grid point found", t0)


@pytest.mark.slow
def test_c07_constrained_bounds(report):
    t0 = time.perf_counter()
    m, M = 0.05, 5.0
    gaps, survived, witness_ok = [], True, True
    for rho in (0.5, 2.0):
        p = StructParams(4.0, rho)
        b = constrained_bound(p, m, M, 0.5 * eps_upper(M, p.c))
        gaps.append(max(b.junction_gaps()))
        rng = np.random.default_rng(int(rho * 10))
        sim = SimOptions(t_max=100.0)
        checked = 0
        while checked < 30:
            s0 = (rng.uniform(0.02, 1.0), rng.uniform(0.0, 1.0))
            if not above_bound_excluded(s0, b):
                continue
            checked += 1
            for strat in _random_piecewise(rng, m, M, 100, log=False):
                if isinstance(outcome_of(s0, strat, p, sim), Extinction):
                    survived = False
        w = witness_point(b)
        witness_ok &= in_victory_set(w, p) and above_bound_excluded(w, b)
    gap = max(gaps)
    ok = gap < 1e-12 and survived and witness_ok
    detail = f"junction gap {gap:.1e}, 30x100 survive={survived}, witness={witness_ok}"
    report(7, "constrained bounds", ok, detail, t0, 600.0)


def test_c08_singular_arc_optimum(report):
    t0 = time.perf_counter()
    s0, p, m, M = (0.5, 0.1875), StructParams(4.0, 0.5), 0.0, 10.0
    res = minimize_time(s0, p, m, M)
    opts = OptOptions()
    _, out = simulate(s0, res.strategy, p, opts.sim)
    window = res.longest_singular_window(0.05 * (M - m))
    replay = abs(out.T_s - res.T)
    ok = (
        res.converged
        and window >= 0.2
        and res.hamiltonian_residual < 1e-2
        and replay <= 10 * opts.sim.event_tol
        and res.T <= min(res.initial_times.values())
    )
    detail = (
        f"T={res.T:.6f}, singular window {window:.3f}, |H| {res.hamiltonian_residual:.1e}, "
        f"replay gap {replay:.1e}, best start {min(res.initial_times.values()):.4f}"
    )
    report(8, "time-optimal singular arc", ok, detail, t0, 300.0)


def test_c09_monotone_in_c(report):
    t0 = time.perf_counter()
    lo = basin_grid(0.8, StructParams(0.5, 2.0), 61, 61)
    hi = basin_grid(0.8, StructParams(2.0, 2.0), 61, 61)
    viol = np.mean((hi.cells == "E") & (lo.cells != "E"))
    report(9, "basin shrinks as c grows", viol <= 0.02, f"nesting violations {viol:.4f} of cells", t0, 120.0)


def test_c10_outside_square_flip(report):
    t0 = time.perf_counter()
    s0 = (1.4045, 1.1)
    got = {rho: outcome_of(s0, Constant(0.2), StructParams(0.1, rho)) for rho in (3.0, 7.0)}
    ok = isinstance(got[3.0], ConvergedToSink) and isinstance(got[7.0], Extinction)
    detail = ", ".join(f"rho={r:g} -> {o.label}" for r, o in got.items())
    report(10, "outcome flip between rho=3 and rho=7", ok, detail + " (want converged-to-sink, extinction)", t0)
