"""Equilibria of the constant-control system and their linear type."""
from __future__ import annotations

import cmath
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import InvalidParamsError
from .model import State, StructParams, jacobian

__all__ = [
    "EqClass",
    "EquilibriumInfo",
    "eig2",
    "classify_eigs",
    "find_equilibria",
    "saddle_point",
    "limit_saddle",
    "nullcline_sigma",
    "line_eigenvalues",
]

ZERO_EIG_RTOL = 1e-10


class EqClass(str, Enum):
    SOURCE = "source"
    SINK = "sink"
    SADDLE = "saddle"
    DEGENERATE = "degenerate"
    LINE = "line-of-equilibria"


@dataclass(frozen=True)
class EquilibriumInfo:
    """An equilibrium with its Jacobian eigenvalues and type.

    For a line of equilibria ``location`` is a representative point and
    ``line`` holds the two endpoints of the segment.
    """

    location: State
    eigenvalues: tuple
    klass: EqClass
    line: tuple | None = None


def eig2(J):
    """Eigenvalues of a 2x2 matrix from the quadratic formula, ordered by real part."""
    tr = J[0, 0] + J[1, 1]
    det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
    disc = 0.25 * tr * tr - det
    if disc >= 0:
        r = np.sqrt(disc)
        # avoid cancellation for the smaller root
        big = 0.5 * tr + (r if tr >= 0 else -r)
        small = det / big if big != 0 else 0.5 * tr - r
        lams = sorted([complex(big), complex(small)], key=lambda z: z.real)
    else:
        r = cmath.sqrt(disc)
        lams = [0.5 * tr - r, 0.5 * tr + r]
    return tuple(lams)


def classify_eigs(lams, zero_rtol=ZERO_EIG_RTOL):
    """Sink / source / saddle / degenerate from eigenvalue real parts."""
    tr = abs(sum(l.real for l in lams))
    thr = zero_rtol * (1.0 + tr)
    re = [l.real for l in lams]
    if any(abs(x) < thr for x in re):
        return EqClass.DEGENERATE
    if all(x < 0 for x in re):
        return EqClass.SINK
    if all(x > 0 for x in re):
        return EqClass.SOURCE
    return EqClass.SADDLE


def _info(u, v, a, p, zero_rtol):
    lams = eig2(jacobian((u, v), a, p))
    return EquilibriumInfo(State(u, v), lams, classify_eigs(lams, zero_rtol))


def saddle_point(a, p: StructParams):
    """Interior saddle for ``0 < ac < 1``; ``(0, 0)`` when ``ac >= 1``."""
    if a <= 0 or p.rho <= 0:
        raise InvalidParamsError("saddle_point needs a > 0 and rho > 0")
    ac = a * p.c
    if ac >= 1.0:
        return State(0.0, 0.0)
    rc = p.rho * p.c
    vs = (1.0 - ac) / (1.0 + rc)
    return State(vs * rc, vs)


def limit_saddle(p: StructParams):
    """Limit of the saddle as ``a -> 0``."""
    rc = p.rho * p.c
    return State(rc / (1.0 + rc), 1.0 / (1.0 + rc))


def find_equilibria(a, p: StructParams, zero_rtol=ZERO_EIG_RTOL):
    """All equilibria in the closed positive quadrant for constant ``a``.

    Returns a list of :class:`EquilibriumInfo`. Isolated points come first.
    """
    if a < 0:
        raise InvalidParamsError("a must be >= 0")
    c, rho = p.c, p.rho
    ac = a * c
    out = []
    if a == 0.0:
        out.append(_info(0.0, 0.0, a, p, zero_rtol))
        # u + v = 1 consists of equilibria; representative at the midpoint
        um, vm = 0.5, 0.5
        lam = -um - rho * vm
        out.append(
            EquilibriumInfo(
                State(um, vm),
                (complex(min(0.0, lam)), complex(max(0.0, lam))),
                EqClass.LINE,
                line=(State(0.0, 1.0), State(1.0, 0.0)),
            )
        )
        return out
    if rho == 0.0:
        out.append(
            EquilibriumInfo(
                State(0.0, 0.5),
                tuple(sorted([0j, complex(1.0 - ac - 0.5)], key=lambda z: z.real)),
                EqClass.LINE,
                line=(State(0.0, 0.0), State(0.0, 1.0)),
            )
        )
        return out
    out.append(_info(0.0, 0.0, a, p, zero_rtol))
    out.append(_info(0.0, 1.0, a, p, zero_rtol))
    if ac < 1.0:
        s = saddle_point(a, p)
        out.append(_info(s.u, s.v, a, p, zero_rtol))
    return out


def line_eigenvalues(point, a, p: StructParams):
    """Eigenvalues at a point of a line of equilibria (``a = 0`` or ``rho = 0``)."""
    u, v = point
    if a == 0.0:
        return (0.0, -u - p.rho * v)
    if p.rho == 0.0:
        return (0.0, 1.0 - a * p.c - v)
    raise InvalidParamsError("no line of equilibria for a > 0 and rho > 0")


def nullcline_sigma(v, a, p: StructParams):
    """The ``v' = 0`` curve written as ``u = sigma(v)``."""
    if a <= 0:
        raise InvalidParamsError("nullcline_sigma needs a > 0")
    return 1.0 - (p.rho * v * v + a) / (p.rho * v + a)
