"""Closed-form victory sets and bounds for box-constrained strategies.

The victory set is the set of starts from which *some* admissible strategy
drives ``v`` to zero.  Its upper boundary is a piecewise curve in ``u``
whose pieces depend on whether ``rho`` is below, equal to or above one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import InvalidParamsError, RangeError, RegimeError
from .model import StructParams

__all__ = [
    "RhoRegime",
    "PieceTag",
    "Piece",
    "VictoryBoundary",
    "victory_boundary",
    "in_victory_set",
    "rho1_mu_flow",
    "rho1_extinction_time",
    "ConstrainedBound",
    "constrained_bound",
    "eps_upper",
    "above_bound_excluded",
    "witness_point",
]


class RhoRegime(str, Enum):
    RHO_EQ1 = "rho=1"
    RHO_LT1 = "rho<1"
    RHO_GT1 = "rho>1"


class PieceTag(str, Enum):
    LINE_UC = "line-u/c"
    GAMMA0 = "gamma0"
    SHIFTED_LINE = "shifted-line"
    ZETA = "zeta"
    TOP = "top"


@dataclass(frozen=True)
class Piece:
    """Boundary piece on ``[lo, hi]``; ``closed_lo`` marks whether ``lo`` belongs to it."""

    lo: float
    hi: float
    tag: PieceTag
    closed_lo: bool = True


def regime_of(p: StructParams):
    if p.rho == 1.0:
        return RhoRegime.RHO_EQ1
    return RhoRegime.RHO_LT1 if p.rho < 1.0 else RhoRegime.RHO_GT1


@dataclass(frozen=True)
class VictoryBoundary:
    """Piecewise upper boundary of the victory set on ``[0, 1]``.

    Attributes
    ----------
    u_s0 : float
        Limit saddle abscissa ``rho c / (1 + rho c)``.
    u_inf : float
        ``c / (c + 1)``, where the line ``v = u/c`` meets ``u + v = 1``.
    zeta_scale : float
        ``zeta(u) = u**rho / zeta_scale`` (``rho > 1``).
    """

    params: StructParams
    regime: RhoRegime
    pieces: tuple
    u_s0: float
    u_inf: float
    zeta_scale: float

    def piece_at(self, u):
        for pc in self.pieces:
            if (pc.lo < u or (pc.closed_lo and pc.lo == u)) and u <= pc.hi:
                return pc
        return self.pieces[0] if u <= self.pieces[0].lo else self.pieces[-1]

    def value(self, u, tag=None):
        """Boundary height at ``u``; ``1.0`` on Top pieces."""
        c, rho = self.params.c, self.params.rho
        tag = self.piece_at(u).tag if tag is None else tag
        if tag is PieceTag.LINE_UC:
            return u / c
        if tag is PieceTag.GAMMA0:
            return u**rho / (rho * c * self.u_s0 ** (rho - 1.0))
        if tag is PieceTag.SHIFTED_LINE:
            return u / c + (1.0 - rho) / (1.0 + rho * c)
        if tag is PieceTag.ZETA:
            return u**rho / self.zeta_scale
        return 1.0

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        return np.vectorize(self.value, otypes=[float])(u)

    def contains(self, s0):
        u, v = float(s0[0]), float(s0[1])
        pc = self.piece_at(u)
        if pc.tag is PieceTag.TOP:
            return v <= 1.0
        return v < self.value(u, pc.tag)

    def polyline(self, n=2001):
        """Dense samples of the boundary graph, capped at ``v = 1``."""
        u = np.linspace(0.0, 1.0, n)
        return u, np.minimum(self(u), 1.0)


def victory_boundary(p: StructParams):
    """Boundary of the victory set for unconstrained strategies."""
    c, rho = p.c, p.rho
    if not (c > 0 and rho > 0):
        raise InvalidParamsError("victory_boundary needs c > 0 and rho > 0")
    reg = regime_of(p)
    rc = rho * c
    u_s0 = rc / (1.0 + rc)
    u_inf = c / (c + 1.0)
    zscale = c * u_inf ** (rho - 1.0)
    if reg is RhoRegime.RHO_EQ1:
        if c < 1.0:
            pieces = (Piece(0.0, c, PieceTag.LINE_UC), Piece(c, 1.0, PieceTag.TOP, closed_lo=False))
        else:
            pieces = (Piece(0.0, 1.0, PieceTag.LINE_UC),)
    elif reg is RhoRegime.RHO_LT1:
        top = rc * (c + 1.0) / (1.0 + rc)
        pieces = [Piece(0.0, u_s0, PieceTag.GAMMA0)]
        if top >= 1.0:
            pieces.append(Piece(u_s0, 1.0, PieceTag.SHIFTED_LINE, closed_lo=False))
        else:
            pieces.append(Piece(u_s0, top, PieceTag.SHIFTED_LINE, closed_lo=False))
            pieces.append(Piece(top, 1.0, PieceTag.TOP, closed_lo=False))
        pieces = tuple(pieces)
    else:
        top = c / (c + 1.0) ** ((rho - 1.0) / rho)
        pieces = [Piece(0.0, u_inf, PieceTag.LINE_UC)]
        if top >= 1.0:
            pieces.append(Piece(u_inf, 1.0, PieceTag.ZETA, closed_lo=False))
        else:
            pieces.append(Piece(u_inf, top, PieceTag.ZETA, closed_lo=False))
            pieces.append(Piece(top, 1.0, PieceTag.TOP, closed_lo=False))
        pieces = tuple(pieces)
    return VictoryBoundary(p, reg, pieces, u_s0, u_inf, zscale)


def in_victory_set(s0, p: StructParams):
    """Whether some admissible strategy wins from ``s0`` (closed form)."""
    return victory_boundary(p).contains(s0)


def rho1_mu_flow(mu0, c, tau):
    """Ratio ``v/u`` at rescaled time ``tau = a t`` when ``rho = 1``."""
    return (math.exp(c * tau) * (c * mu0 - 1.0) + 1.0) / c


def rho1_extinction_time(s0, c, a):
    """Exact stopping time for ``rho = 1`` and constant ``a``; ``inf`` if none."""
    u0, v0 = float(s0[0]), float(s0[1])
    mu0 = v0 / u0
    if c * mu0 >= 1.0:
        return math.inf
    return math.log(1.0 / (1.0 - c * mu0)) / c / a


# ---------------------------------------------------------------------------
# box-constrained strategies


def eps_upper(M, c):
    """Supremum of admissible ``eps``."""
    return min(M * (c + 1.0) / (M + 1.0), 1.0)


@dataclass(frozen=True)
class ConstrainedBound:
    """Exclusion curve for strategies valued in ``[m, M]``.

    Any start with ``v >= bound(u)`` cannot be won by such strategies.
    """

    params: StructParams
    regime: RhoRegime
    m: float
    M: float
    eps: float
    constants: dict
    breaks: tuple

    def value(self, u):
        c, rho = self.params.c, self.params.rho
        k = self.constants
        if self.regime is RhoRegime.RHO_LT1:
            usm, us0, u1 = self.breaks
            if u < usm:
                return usm ** (1.0 - rho) * u**rho / (rho * c)
            if u < us0:
                return u / (rho * c)
            if u < u1:
                return u / c + (1.0 - rho) / (1.0 + rho * c)
            return k["h"] * u + k["p"]
        u2, u3 = self.breaks
        if u < u2:
            return k["k"] * u
        if u < u3:
            return u / c + k["q"]
        return (1.0 - u3) * u**rho / u3**rho

    def __call__(self, u):
        return np.vectorize(self.value, otypes=[float])(np.asarray(u, dtype=float))

    def junction_gaps(self):
        """Absolute jumps at each interior junction (zero for a continuous bound)."""
        c, rho = self.params.c, self.params.rho
        k = self.constants
        if self.regime is RhoRegime.RHO_LT1:
            usm, us0, u1 = self.breaks
            gaps = []
            if usm > 0:
                gaps.append(abs(usm ** (1.0 - rho) * usm**rho / (rho * c) - usm / (rho * c)))
            if us0 > usm:
                gaps.append(abs(us0 / (rho * c) - (us0 / c + (1.0 - rho) / (1.0 + rho * c))))
            gaps.append(abs(u1 / c + (1.0 - rho) / (1.0 + rho * c) - (k["h"] * u1 + k["p"])))
            return gaps
        u2, u3 = self.breaks
        return [
            abs(k["k"] * u2 - (u2 / c + k["q"])),
            abs(u3 / c + k["q"] - (1.0 - u3)),
        ]


def constrained_bound(p: StructParams, m, M, eps):
    """Build the exclusion bound for ``[m, M]``-valued strategies.

    Raises
    ------
    RegimeError
        If ``rho == 1``.
    RangeError
        If ``eps`` is outside ``(0, min(M (c+1) / (M+1), 1))``.
    """
    c, rho = p.c, p.rho
    if not (M >= m >= 0 and M > 0):
        raise InvalidParamsError("need M >= m >= 0 and M > 0")
    if not (c > 0 and rho > 0):
        raise InvalidParamsError("need c > 0 and rho > 0")
    if rho == 1.0:
        raise RegimeError("the constrained bound is defined for rho != 1")
    if not (0.0 < eps < eps_upper(M, c)):
        raise RangeError(f"eps={eps} outside (0, {eps_upper(M, c)})")
    rc = rho * c
    if rho < 1.0:
        usm = (1.0 - m * c) * rc / (1.0 + rc) if m * c < 1.0 else 0.0
        us0 = rc / (1.0 + rc)
        den = M * (1.0 + rc) * (c + 1.0 - eps) ** 2 + eps * (rc + rho + eps - eps * rho)
        h = (1.0 - eps**2 * (1.0 - rho) / den) / c
        u1 = c * (rc + rho + eps - eps * rho) / ((1.0 + rc) * (c + 1.0 - eps))
        pp = (c + 1.0 - h * c * (rc + rho + eps - eps * rho)) / ((1.0 + rc) * (c + 1.0 - eps))
        return ConstrainedBound(p, RhoRegime.RHO_LT1, m, M, eps, {"h": h, "p": pp}, (usm, us0, u1))
    k = (c + 1.0 - eps) * M / ((rho - 1.0) * eps * c + (c + 1.0 - eps) * M * c)
    q = (k * c - 1.0) * (1.0 - eps) / (c * (k - k * eps + 1.0))
    u2 = (1.0 - eps) / (k - k * eps + 1.0)
    u3 = (c + 1.0 - eps) / ((c + 1.0) * (k - k * eps + 1.0))
    return ConstrainedBound(p, RhoRegime.RHO_GT1, m, M, eps, {"k": k, "q": q}, (u2, u3))


def above_bound_excluded(s0, bound: ConstrainedBound):
    """True when ``v >= bound(u)``: no ``[m, M]`` strategy wins from ``s0``."""
    return float(s0[1]) >= bound.value(float(s0[0]))


def witness_point(bound: ConstrainedBound, frac=0.5):
    """A start in the victory set that the bound excludes.

    ``frac`` positions the abscissa inside its admissible open interval.
    """
    c, rho = bound.params.c, bound.params.rho
    if bound.regime is RhoRegime.RHO_LT1:
        u1 = bound.breaks[2]
        hi = min(rho * c * (c + 1.0) / (1.0 + rho * c), 1.0)
        if not u1 < hi:
            raise RangeError("empty abscissa interval for the witness; decrease eps")
        ub = u1 + frac * (hi - u1)
        k = bound.constants
        vb = 0.5 * (k["h"] * ub + k["p"]) + 0.5 * (ub / c + (1.0 - rho) / (1.0 + rho * c))
        return ub, vb
    u2 = bound.breaks[0]
    hi = min(u2, c / (c + 1.0))
    ub = frac * hi
    vb = 0.5 * (1.0 / c + bound.constants["k"]) * ub
    return ub, vb
