import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conflict_dyn import (
    Constant,
    DegenerateStateError,
    Heaviside,
    InvalidParamsError,
    PiecewiseConstant,
    RawParams,
    Sampled,
    SingularFeedback,
    State,
    StructParams,
    control_direction,
    drift,
    eval_strategy,
    jacobian,
    rescale_raw,
    singular_control,
    vector_field,
)

unit = st.floats(0.0, 1.0, allow_nan=False)
pos = st.floats(0.01, 10.0, allow_nan=False)


@pytest.mark.parametrize("s", [(0.0, 0.0), (0.0, 1.0)])
@pytest.mark.parametrize("a,c,rho", [(0.8, 0.5, 2.0), (3.0, 0.1, 0.5), (0.0, 4.0, 7.0)])
def test_trivial_equilibria(s, a, c, rho):
    assert vector_field(s, a, StructParams(c, rho)) == (0.0, 0.0)


def test_interior_saddle_is_rest_point():
    du, dv = vector_field((0.3, 0.3), 0.8, StructParams(0.5, 2.0))
    assert abs(du) < 1e-15 and abs(dv) < 1e-15


def test_vector_field_formula():
    du, dv = vector_field((0.2, 0.5), 1.5, StructParams(2.0, 0.7))
    assert du == pytest.approx(0.2 * 0.3 - 1.5 * 2.0 * 0.2, abs=1e-15)
    assert dv == pytest.approx(0.7 * 0.5 * 0.3 - 1.5 * 0.2, abs=1e-15)


@pytest.mark.parametrize(
    "s,a,c,rho,expected",
    [
        ((0.0, 1.0), 0.8, 0.5, 2.0, [-2.0, -0.4]),
        ((0.0, 0.0), 0.8, 0.5, 2.0, [0.6, 2.0]),
        ((0.0, 0.0), 2.0, 1.0, 0.5, [-1.0, 0.5]),
    ],
)
def test_jacobian_eigenvalues(s, a, c, rho, expected):
    lam = np.sort(np.linalg.eigvals(jacobian(s, a, StructParams(c, rho))).real)
    np.testing.assert_allclose(lam, expected, atol=1e-14)


def test_jacobian_entries():
    J = jacobian((0.2, 0.3), 0.5, StructParams(2.0, 1.5))
    np.testing.assert_allclose(J, [[1 - 0.4 - 0.3 - 1.0, -0.2], [-0.45 - 0.5, 1.5 * (1 - 0.2 - 0.6)]], atol=1e-15)


@settings(max_examples=100, deadline=None)
@given(u=unit, v=unit, a=pos, c=pos, rho=pos)
def test_jacobian_matches_finite_differences(u, v, a, c, rho):
    p = StructParams(c, rho)
    h = 1e-6
    J = jacobian((u, v), a, p)
    for j, e in enumerate([(h, 0.0), (0.0, h)]):
        fp = np.array(vector_field((u + e[0], v + e[1]), a, p))
        fm = np.array(vector_field((u - e[0], v - e[1]), a, p))
        np.testing.assert_allclose((fp - fm) / (2 * h), J[:, j], atol=1e-6)


@settings(max_examples=100, deadline=None)
@given(u=unit, v=unit, c=pos, rho=pos)
def test_field_is_affine_in_control(u, v, c, rho):
    p = StructParams(c, rho)
    F = np.array(drift((u, v), p))
    G = np.array(control_direction((u, v), p))
    for a in (0.0, 1.0, 2.0):
        np.testing.assert_allclose(vector_field((u, v), a, p), F + a * G, atol=1e-14)


@settings(max_examples=100, deadline=None)
@given(u=unit, a=st.floats(0.0, 10.0), c=pos, rho=pos)
def test_top_edge_points_inward(u, a, c, rho):
    _, dv = vector_field((u, 1.0), a, StructParams(c, rho))
    assert -dv == pytest.approx(u * (rho + a), abs=1e-12)
    assert -dv >= -1e-15


@settings(max_examples=100, deadline=None)
@given(v=unit, a=st.floats(0.0, 10.0), c=pos, rho=pos)
def test_right_edge_points_inward(v, a, c, rho):
    du, _ = vector_field((1.0, v), a, StructParams(c, rho))
    assert -du == pytest.approx(v + a * c, abs=1e-12)


def test_heaviside_right_continuous():
    h = Heaviside(5.0, 0.1, 2.0)
    p = StructParams(1.0, 1.0)
    assert eval_strategy(h, 1.9, (0.5, 0.5), p) == 5.0
    assert eval_strategy(h, 2.0, (0.5, 0.5), p) == 0.1


@settings(max_examples=100, deadline=None)
@given(a1=st.floats(0, 50), a2=st.floats(0, 50), ts=st.floats(0.01, 10), t=st.floats(0, 20))
def test_heaviside_equals_piecewise(a1, a2, ts, t):
    h = Heaviside(a1, a2, ts)
    pc = h.as_piecewise_constant()
    p = StructParams(1.0, 1.0)
    assert eval_strategy(h, t, (0.5, 0.5), p) == eval_strategy(pc, t, (0.5, 0.5), p)
    assert eval_strategy(h, ts, (0.5, 0.5), p) == eval_strategy(pc, ts, (0.5, 0.5), p)


def test_piecewise_and_sampled():
    p = StructParams(1.0, 1.0)
    pc = PiecewiseConstant((1.0, 2.0), (3.0, 4.0, 5.0))
    assert [eval_strategy(pc, t, (0.5, 0.5), p) for t in (0.0, 1.0, 1.5, 2.0, 9.0)] == [3.0, 4.0, 4.0, 5.0, 5.0]
    sm = Sampled((0.0, 0.5, 1.5), (1.0, 2.0, 7.0))
    assert [eval_strategy(sm, t, (0.5, 0.5), p) for t in (0.0, 0.49, 0.5, 1.6, 50.0)] == [1.0, 1.0, 2.0, 7.0, 7.0]


def test_singular_feedback_value():
    p = StructParams(4.0, 0.5)
    assert eval_strategy(SingularFeedback(0.0, 10.0), 0.0, (0.5, 0.1875), p) == pytest.approx(0.0859375, abs=1e-15)
    assert singular_control((0.5, 0.1875), p) == pytest.approx(0.0859375, abs=1e-15)


def test_singular_feedback_clamps():
    p = StructParams(4.0, 0.5)
    assert eval_strategy(SingularFeedback(0.2, 10.0), 0.0, (0.5, 0.1875), p) == 0.2
    assert eval_strategy(SingularFeedback(0.0, 0.05), 0.0, (0.5, 0.1875), p) == 0.05


def test_singular_feedback_needs_positive_u():
    with pytest.raises(DegenerateStateError):
        eval_strategy(SingularFeedback(0.0, 1.0), 0.0, (0.0, 0.5), StructParams(1.0, 1.0))


@pytest.mark.parametrize(
    "bad",
    [
        lambda: Constant(-1.0),
        lambda: Constant(math.inf),
        lambda: PiecewiseConstant((2.0, 1.0), (1.0, 1.0, 1.0)),
        lambda: PiecewiseConstant((1.0,), (1.0,)),
        lambda: Sampled((0.5, 1.0), (1.0, 1.0)),
        lambda: StructParams(-1.0, 1.0),
        lambda: StructParams(1.0, math.nan),
    ],
)
def test_invalid_construction(bad):
    with pytest.raises(InvalidParamsError):
        bad()


@pytest.mark.parametrize(
    "raw,expected",
    [
        (RawParams(1, 1, 1, 0.8, 0.5, 0.5, 0.5, 0.5), (1.0, 1.0, 0.8, 1.0, 1.0)),
        (RawParams(2, 1, 100, 4, 0.5, 0.25, 0.5, 0.25), (2.0, 0.5, 1.0, 2.0, 100.0)),
    ],
)
def test_rescale_raw(raw, expected):
    p, a, ts, ds = rescale_raw(raw)
    assert (p.c, p.rho, a, ts, ds) == pytest.approx(expected, abs=1e-15)


def test_rescale_raw_zero_denominator():
    with pytest.raises(InvalidParamsError):
        rescale_raw(RawParams(1, 1, 1, 1, 1, 0, 1, 0))


def test_state_is_iterable():
    u, v = State(0.25, 0.5)
    assert (u, v) == (0.25, 0.5)
