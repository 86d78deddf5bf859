import numpy as np
import pytest

from conflict_dyn import (
    Constant,
    Extinction,
    Heaviside,
    PreconditionError,
    RegimeError,
    StructParams,
    SynthesisError,
    SynthOptions,
    find_constant_winner,
    gamma0,
    in_P,
    in_Q,
    in_victory_set,
    simulate,
    synth_heaviside,
    vector_field,
)

P_LT = StructParams(4.0, 0.5)
P_GT = StructParams(4.0, 2.0)


@pytest.mark.parametrize(
    "s0,expected",
    [((0.8, 0.30), False), ((0.8, 0.38), False), ((0.8, 0.366), True), ((0.6, 0.33), False)],
)
def test_in_P(s0, expected):
    assert in_P(s0, P_LT) is expected


@pytest.mark.parametrize("s0,expected", [((0.9, 0.25), True), ((0.9, 0.2), False), ((0.9, 0.26), False), ((0.7, 0.2), False)])
def test_in_Q(s0, expected):
    assert in_Q(s0, P_GT) is expected


def test_membership_regime_errors():
    with pytest.raises(RegimeError):
        in_P((0.8, 0.366), P_GT)
    with pytest.raises(RegimeError):
        in_Q((0.9, 0.25), P_LT)


@pytest.mark.parametrize(
    "s0,p",
    [((0.9, 0.25), P_GT), ((1.0, 0.25), P_GT), ((0.8, 0.366), P_LT), ((0.95, 0.4), P_LT)],
)
def test_heaviside_wins_where_constants_fail(s0, p):
    assert find_constant_winner(s0, p) is None
    res = synth_heaviside(s0, p)
    assert isinstance(res.strategy, Heaviside)
    assert res.verified
    assert abs(res.witness.v[-1]) <= 1e-10 and res.witness.u[-1] > 0


def test_rho_gt1_shape():
    res = synth_heaviside((0.9, 0.25), P_GT)
    st = res.strategy
    assert st.a_before == 0.0 and st.a_after >= 2.0
    assert res.T_s == pytest.approx(2.5767243352818836, rel=1e-7)


def test_rho_lt1_shape():
    res = synth_heaviside((0.95, 0.4), P_LT)
    st = res.strategy
    assert st.a_before > 2.0 and st.a_after < 0.5
    # the switch happens when u reaches u_s0
    k = np.searchsorted(res.witness.times, st.t_switch)
    assert res.witness.u[k] == pytest.approx(2 / 3, abs=1e-8)


def test_replay_is_deterministic():
    res = synth_heaviside((0.9, 0.25), P_GT)
    _, out = simulate((0.9, 0.25), res.strategy, P_GT, SynthOptions().sim)
    assert abs(out.T_s - res.T_s) < 1e-9


def test_head_phase_slope_inequality():
    s0 = (0.95, 0.4)
    res = synth_heaviside(s0, P_LT)
    c, rho = P_LT.c, P_LT.rho
    us0, vs0 = rho * c / (1 + rho * c), 1 / (1 + rho * c)
    xi = 0.5 * (vs0 - s0[1] - (us0 - s0[0]) / c) / (s0[0] - us0)
    w = res.witness
    head = w.times < res.strategy.t_switch
    a_hi = res.strategy.a_before
    for u, v in zip(w.u[head], w.v[head]):
        du, dv = vector_field((u, v), a_hi, P_LT)
        assert dv / du > 1 / c - xi


def test_below_limit_wall_is_not_in_P():
    s0 = (0.8, 0.30)
    assert 0.30 < float(gamma0(0.8, P_LT))
    with pytest.raises(PreconditionError):
        synth_heaviside(s0, P_LT)
    assert find_constant_winner(s0, P_LT) is not None


def test_bad_floor():
    with pytest.raises(PreconditionError):
        synth_heaviside((0.9, 0.25), P_GT, M_floor=1.0)


def test_search_budget_reported():
    with pytest.raises(SynthesisError) as exc:
        synth_heaviside((0.9, 0.25), P_GT, opts=SynthOptions(attempts=1, factor=1.0), M_floor=1.01)
    assert "head_values_tried" in exc.value.diagnostics


@pytest.mark.parametrize(
    "s0,grid,expected",
    [((0.5, 0.2), (0.5,), 0.5), ((0.5, 0.3), (0.1, 1.0, 10.0), None)],
)
def test_constant_winner_rho1(s0, grid, expected):
    found = find_constant_winner(s0, StructParams(2.0, 1.0), grid)
    if expected is None:
        assert found is None
    else:
        a, res = found
        assert a == expected and res.verified and isinstance(res.strategy, Constant)


@pytest.mark.parametrize("p", [P_LT, P_GT])
def test_heaviside_sufficiency(p):
    rng = np.random.default_rng(0)
    n = 0
    while n < 50:
        s0 = (rng.uniform(0, 1), rng.uniform(0, 1))
        if s0[0] == 0 or not in_victory_set(s0, p):
            continue
        n += 1
        if find_constant_winner(s0, p) is not None:
            continue
        member = in_P(s0, p) if p.rho < 1 else in_Q(s0, p)
        assert member
        res = synth_heaviside(s0, p)
        assert res.verified and isinstance(simulate(s0, res.strategy, p, SynthOptions().sim)[1], Extinction)
