"""State, parameters, strategies and the controlled vector field.

The rescaled system is

    u' = u (1 - u - v) - a c u
    v' = rho v (1 - u - v) - a u

where ``a >= 0`` is the aggressiveness of the first population, ``c`` the
ratio of endured to inflicted damage and ``rho`` the relative fitness of
the second population.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import DegenerateStateError, InvalidInputError, InvalidParamsError

__all__ = [
    "StructParams",
    "State",
    "RawParams",
    "Constant",
    "Heaviside",
    "PiecewiseConstant",
    "Sampled",
    "SingularFeedback",
    "Strategy",
    "vector_field",
    "drift",
    "control_direction",
    "jacobian",
    "singular_control",
    "eval_strategy",
    "rescale_raw",
]


def _finite_nonneg(name, x):
    if not math.isfinite(x) or x < 0:
        raise InvalidParamsError(f"{name} must be finite and >= 0, got {x!r}")


@dataclass(frozen=True)
class StructParams:
    """Structural constants of the model.

    Attributes
    ----------
    c : float
        Damage endured by the attacker per unit inflicted.
    rho : float
        Fitness ratio of the second population to the first.
    """

    c: float
    rho: float

    def __post_init__(self):
        object.__setattr__(self, "c", float(self.c))
        object.__setattr__(self, "rho", float(self.rho))
        _finite_nonneg("c", self.c)
        _finite_nonneg("rho", self.rho)


@dataclass(frozen=True)
class State:
    """A point ``(u, v)`` of the phase plane. Not clamped to the unit square."""

    u: float
    v: float

    def __post_init__(self):
        object.__setattr__(self, "u", float(self.u))
        object.__setattr__(self, "v", float(self.v))
        if not (math.isfinite(self.u) and math.isfinite(self.v)):
            raise InvalidInputError(f"state must be finite, got ({self.u}, {self.v})")

    def __iter__(self):
        yield self.u
        yield self.v

    def as_array(self):
        return np.array([self.u, self.v])


@dataclass(frozen=True)
class RawParams:
    """Dimensional constants before rescaling."""

    r_u: float
    r_v: float
    k: float
    a_raw: float
    c_u: float
    c_v: float
    zeta_u: float
    zeta_v: float

    def __post_init__(self):
        for name in ("r_u", "r_v", "k", "a_raw", "c_u", "c_v", "zeta_u", "zeta_v"):
            _finite_nonneg(name, float(getattr(self, name)))


# ---------------------------------------------------------------------------
# strategies


def _check_value(name, x):
    x = float(x)
    if not math.isfinite(x) or x < 0:
        raise InvalidParamsError(f"{name} must be finite and >= 0, got {x!r}")
    return x


@dataclass(frozen=True)
class Constant:
    """``a(t) = a`` for all t."""

    a: float

    def __post_init__(self):
        object.__setattr__(self, "a", _check_value("a", self.a))

    def to_piecewise(self):
        return np.empty(0), np.array([self.a])


@dataclass(frozen=True)
class Heaviside:
    """``a_before`` for ``t < t_switch`` and ``a_after`` from ``t_switch`` on."""

    a_before: float
    a_after: float
    t_switch: float

    def __post_init__(self):
        object.__setattr__(self, "a_before", _check_value("a_before", self.a_before))
        object.__setattr__(self, "a_after", _check_value("a_after", self.a_after))
        t = float(self.t_switch)
        if not math.isfinite(t):
            raise InvalidParamsError("t_switch must be finite")
        object.__setattr__(self, "t_switch", t)

    def to_piecewise(self):
        if self.t_switch <= 0.0:
            return np.empty(0), np.array([self.a_after])
        return np.array([self.t_switch]), np.array([self.a_before, self.a_after])

    def as_piecewise_constant(self):
        b, vals = self.to_piecewise()
        return PiecewiseConstant(tuple(b), tuple(vals))


@dataclass(frozen=True)
class PiecewiseConstant:
    """Right-continuous step function.

    ``values[0]`` holds on ``[0, breakpoints[0])``, ``values[k]`` on
    ``[breakpoints[k-1], breakpoints[k])`` and ``values[-1]`` afterwards, so
    ``len(values) == len(breakpoints) + 1``.
    """

    breakpoints: tuple
    values: tuple

    def __post_init__(self):
        b = tuple(float(x) for x in self.breakpoints)
        vals = tuple(_check_value("value", x) for x in self.values)
        if len(vals) != len(b) + 1:
            raise InvalidParamsError("need len(values) == len(breakpoints) + 1")
        if any(not math.isfinite(x) for x in b):
            raise InvalidParamsError("breakpoints must be finite")
        if any(y <= x for x, y in zip(b, b[1:])):
            raise InvalidParamsError("breakpoints must be strictly increasing")
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "values", vals)

    def to_piecewise(self):
        b = np.asarray(self.breakpoints, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        # breakpoints at or before t=0 only select the starting value
        k = int(np.searchsorted(b, 0.0, side="right"))
        return b[k:].copy(), vals[k:].copy()


@dataclass(frozen=True)
class Sampled:
    """Values on a time grid, held constant to the right of each node.

    The last value persists beyond ``grid[-1]``.
    """

    grid: tuple
    values: tuple

    def __post_init__(self):
        g = tuple(float(x) for x in self.grid)
        vals = tuple(_check_value("value", x) for x in self.values)
        if len(g) == 0 or len(g) != len(vals):
            raise InvalidParamsError("grid and values must be non-empty and of equal length")
        if g[0] != 0.0:
            raise InvalidParamsError("grid must start at t=0")
        if any(y <= x for x, y in zip(g, g[1:])):
            raise InvalidParamsError("grid must be strictly increasing")
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "values", vals)

    def to_piecewise(self):
        return np.asarray(self.grid[1:], dtype=float), np.asarray(self.values, dtype=float)


@dataclass(frozen=True)
class SingularFeedback:
    """State feedback ``clip(a_s(u, v), m, M)`` on the singular-arc law."""

    m: float
    M: float

    def __post_init__(self):
        m = _check_value("m", self.m)
        M = _check_value("M", self.M)
        if M < m:
            raise InvalidParamsError("need m <= M")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "M", M)


Strategy = Union[Constant, Heaviside, PiecewiseConstant, Sampled, SingularFeedback]


# ---------------------------------------------------------------------------
# field


def vector_field(s, a, p: StructParams):
    """Right-hand side ``(du, dv)`` at state ``s`` under control ``a``."""
    u, v = s
    w = 1.0 - u - v
    return u * w - a * p.c * u, p.rho * v * w - a * u


def drift(s, p: StructParams):
    """Control-free part ``F`` of ``f = F + a G``."""
    u, v = s
    w = 1.0 - u - v
    return u * w, p.rho * v * w


def control_direction(s, p: StructParams):
    """Control direction ``G = (-c u, -u)``."""
    u, _ = s
    return -p.c * u, -u


def jacobian(s, a, p: StructParams):
    """State Jacobian of :func:`vector_field` as a 2x2 array."""
    u, v = s
    c, rho = p.c, p.rho
    return np.array(
        [
            [1.0 - 2.0 * u - v - a * c, -u],
            [-rho * v - a, rho * (1.0 - u - 2.0 * v)],
        ]
    )


def singular_control(s, p: StructParams):
    """Control value that keeps the switching function identically zero.

    Raises
    ------
    DegenerateStateError
        If ``u <= 0`` or ``c == 0``.
    """
    u, v = s
    c, rho = p.c, p.rho
    if u <= 0.0:
        raise DegenerateStateError(f"singular control undefined for u={u} <= 0")
    if c <= 0.0:
        raise DegenerateStateError("singular control undefined for c=0")
    return (1.0 - u - v) * (u * (2.0 * c + 1.0 - rho * c) + rho * c) / (2.0 * c * u * (c + 1.0))


def eval_strategy(strat, t, s, p: StructParams):
    """Evaluate ``a(t)`` (or ``a(x)`` for feedback) with right-continuity at jumps."""
    if t < 0:
        raise InvalidInputError("t must be >= 0")
    if isinstance(strat, Constant):
        return strat.a
    if isinstance(strat, Heaviside):
        return strat.a_after if t >= strat.t_switch else strat.a_before
    if isinstance(strat, PiecewiseConstant):
        k = int(np.searchsorted(strat.breakpoints, t, side="right"))
        return strat.values[k]
    if isinstance(strat, Sampled):
        k = int(np.searchsorted(strat.grid, t, side="right")) - 1
        return strat.values[max(k, 0)]
    if isinstance(strat, SingularFeedback):
        a = singular_control(s, p)
        return min(max(a, strat.m), strat.M)
    raise TypeError(f"unknown strategy {strat!r}")


def rescale_raw(raw: RawParams):
    """Map dimensional constants to ``(StructParams, a, time_scale, density_scale)``."""
    den = raw.c_v + raw.zeta_v
    if den <= 0.0:
        raise InvalidParamsError("c_v + zeta_v must be > 0")
    if raw.r_u <= 0.0:
        raise InvalidParamsError("r_u must be > 0")
    if raw.k <= 0.0:
        raise InvalidParamsError("k must be > 0")
    a = raw.a_raw * den / raw.r_u
    c = (raw.c_u + raw.zeta_u) / den
    rho = raw.r_v / raw.r_u
    return StructParams(c=c, rho=rho), a, raw.r_u, raw.k
