import dataclasses

import numpy as np
import pytest
from scipy.optimize import brentq

from conflict_dyn import (
    ArcLabel,
    Constant,
    InfeasibleError,
    OptOptions,
    PreconditionError,
    StructParams,
    minimize_time,
    simulate,
    singular_arc_value,
    singular_surface,
    stopping_time,
    transcription_objective,
    verify_pontryagin,
)
from conflict_dyn.integrator import AdjointPath

P5 = StructParams(4.0, 0.5)
S5 = (0.5, 0.1875)


@pytest.fixture(scope="module")
def singular_case():
    return minimize_time(S5, P5, 0.0, 10.0)


@pytest.mark.parametrize(
    "s,p,expected",
    [((0.5, 0.25), StructParams(2.0, 1.0), 0.25 * (0.5 * 3 + 2) / (2 * 2 * 0.5 * 3)), ((0.4, 0.6), P5, 0.0)],
)
def test_singular_arc_value(s, p, expected):
    assert singular_arc_value(s, p) == pytest.approx(expected, abs=1e-15)


def test_singular_arc_example_value():
    assert singular_arc_value(S5, P5) == pytest.approx(0.0859375, abs=1e-15)


# ---------------------------------------------------------------------------
# switching function calculus, checked by finite differences


def _f(x, a, p):
    u, v = x
    s = 1 - u - v
    return np.array([u * s - a * p.c * u, p.rho * v * s - a * u])


def _H(x, q, a, p):
    return q @ _f(x, a, p) - 1.0


def _grad_x_H(x, q, a, p, h=1e-6):
    g = np.zeros(2)
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        g[k] = (_H(x + e, q, a, p) - _H(x - e, q, a, p)) / (2 * h)
    return g


def _rhs(z, a, p):
    x, q = z[:2], z[2:]
    return np.concatenate([_f(x, a, p), -_grad_x_H(x, q, a, p)])


def _dphi(z, a, p):
    # d(phi)/dt with phi = c q_u + q_v
    return p.c * _rhs(z, a, p)[2] + _rhs(z, a, p)[3]


def _costate_on_switching_line(x, p):
    # phi = 0 and H = 0 determine q
    fu, fv = _f(x, 0.0, p)
    qu = 1.0 / (fu - p.c * fv)
    return np.array([qu, -p.c * qu])


@pytest.mark.parametrize("u", [0.3, 0.5, 0.6])
def test_singular_surface_and_control(u):
    p = P5
    v = brentq(lambda v: singular_surface((u, v), p), 1e-9, 1 - u - 1e-9)
    x = np.array([u, v])
    z = np.concatenate([x, _costate_on_switching_line(x, p)])
    a_s = singular_arc_value((u, v), p)
    assert abs(_dphi(z, a_s, p)) < 1e-7
    # second derivative vanishes only for a = a_s
    h = 1e-4

    def d2(a):
        zp = z + h * _rhs(z, a, p)
        zm = z - h * _rhs(z, a, p)
        return (_dphi(zp, a, p) - _dphi(zm, a, p)) / (2 * h)

    assert abs(d2(a_s)) < 1e-5
    assert abs(d2(a_s + 0.5)) > 1e-3


def test_off_surface_switching_derivative_is_nonzero():
    x = np.array([0.5, 0.1])
    assert abs(singular_surface(x, P5)) > 1e-2
    z = np.concatenate([x, _costate_on_switching_line(x, P5)])
    assert abs(_dphi(z, 1.0, P5)) > 1e-3


# ---------------------------------------------------------------------------
# transcription


@pytest.mark.parametrize("counts", [[6], [3, 4, 2]])
def test_transcription_gradient(counts):
    rng = np.random.default_rng(1)
    n = sum(counts)
    x = np.concatenate([rng.uniform(0.1, 3.0, n), rng.uniform(0.2, 0.6, len(counts))])
    args = (S5, P5, 4, np.array(counts), 0.7, 50.0)
    _, g = transcription_objective(x, *args)
    fd = np.empty_like(x)
    for k in range(len(x)):
        e = np.zeros_like(x)
        e[k] = 1e-6
        fd[k] = (transcription_objective(x + e, *args)[0] - transcription_objective(x - e, *args)[0]) / 2e-6
    np.testing.assert_allclose(g, fd, rtol=1e-6, atol=1e-8)


# ---------------------------------------------------------------------------
# solver


def test_rho1_optimum_is_full_attack():
    p = StructParams(2.0, 1.0)
    res = minimize_time((0.5, 0.2), p, 0.0, 10.0)
    T_max = stopping_time((0.5, 0.2), Constant(10.0), p)
    assert res.T == pytest.approx(T_max, rel=0.02)
    assert res.converged
    rep = verify_pontryagin(res, p, 0.0, 10.0)
    assert rep.valid and rep.h_ok and rep.sign_consistency >= 0.95
    assert all(lab is ArcLabel.MAX for lab in res.node_labels)


def test_fixed_control_band():
    p = StructParams(2.0, 1.0)
    res = minimize_time((0.5, 0.2), p, 1.0, 1.0)
    assert res.T == pytest.approx(np.log(5) / 2, rel=1e-6)
    assert np.all(res.controls == 1.0)


def test_infeasible_start():
    with pytest.raises(InfeasibleError):
        minimize_time((0.5, 0.3), StructParams(2.0, 1.0), 0.0, 10.0)


@pytest.mark.parametrize("m,M", [(2.0, 1.0), (0.0, 0.0), (-1.0, 1.0)])
def test_bad_bounds(m, M):
    with pytest.raises(PreconditionError):
        minimize_time(S5, P5, m, M)


def test_controls_respect_bounds(singular_case):
    assert singular_case.controls.min() >= 0.0 and singular_case.controls.max() <= 10.0


def test_singular_case(singular_case):
    assert singular_case.converged
    assert singular_case.longest_singular_window(0.5) >= 0.2
    assert singular_case.hamiltonian_residual < 1e-2
    assert singular_case.T <= min(singular_case.initial_times.values())
    _, out = simulate(S5, singular_case.strategy, P5, OptOptions().sim)
    assert abs(out.T_s - singular_case.T) <= 10 * OptOptions().sim.event_tol
    assert abs(singular_case.T - singular_case.T_transcription) / singular_case.T < 1e-3
    labels = [arc.label for arc in singular_case.arcs]
    assert ArcLabel.SINGULAR in labels


def test_singular_case_pontryagin(singular_case):
    rep = verify_pontryagin(singular_case, P5, 0.0, 10.0)
    assert rep.valid and rep.h_ok
    assert rep.sign_consistency >= 0.95


def test_grid_refinement_changes_little(singular_case):
    g = singular_case.grid_times
    assert abs(g["uniform-64"] - g["uniform-128"]) / g["uniform-128"] < 0.01


def test_hamiltonian_shrinks_with_grid():
    H = []
    for n in (64, 128):
        opts = OptOptions(n_nodes=n, coarse_nodes=None, refine_junctions=False)
        H.append(minimize_time(S5, P5, 0.0, 10.0, opts).hamiltonian_residual)
    assert H[1] < H[0]


def test_zero_costate_is_invalid(singular_case):
    t = singular_case.adjoint.times
    zero = AdjointPath(t, np.zeros_like(t), np.zeros_like(t))
    rep = verify_pontryagin(dataclasses.replace(singular_case, adjoint=zero), P5, 0.0, 10.0)
    assert not rep.valid and rep.note == "zero costate"
