"""Small synthetic systems and function corpora used by the tests and checks."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mapcore import AffineBand, Branch, CurveBand, PiecewiseMap

__all__ = [
    "IdentitySystem",
    "Period2System",
    "crescent_map",
    "single_branch_map",
    "norm_corpus",
]


@dataclass(frozen=True)
class IdentitySystem:
    """T = identity on ``[-L, L] x [-gamma L, gamma L]``."""

    L: float = 1.0
    gamma: float = 0.5

    @property
    def omega(self):
        return (-self.L, self.L, -self.gamma * self.L, self.gamma * self.L)

    def transform(self, x, y):
        x = np.asarray(x, dtype=float)
        return x.copy(), np.asarray(y, dtype=float).copy(), np.zeros(x.shape, dtype=np.int64)


@dataclass(frozen=True)
class Period2System:
    """Swaps the two halves of Omega, applying the doubling map on each.

    On a half, with local coordinates ``(s, t)`` in ``[0, 1)^2``, the map is
    ``(2s mod 1, 2t mod 1)`` and the result is placed in the other half.
    Lebesgue measure is invariant, ``T^2`` is mixing on each half, and
    the peripheral spectrum is ``{1, -1}``.  With dyadic grids and an even
    stratification the Ulam matrix is exact.
    """

    L: float = 1.0
    gamma: float = 0.5

    @property
    def omega(self):
        return (-self.L, self.L, -self.gamma * self.L, self.gamma * self.L)

    def transform(self, x, y):
        L, gL = self.L, self.gamma * self.L
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        left = x < 0
        s = np.where(left, x + L, x) / L
        t = (y + gL) / (2 * gL)
        s2 = np.mod(2 * s, 1.0)
        t2 = np.mod(2 * t, 1.0)
        X = np.where(left, s2 * L, s2 * L - L)
        Y = t2 * 2 * gL - gL
        return X, Y, np.where(left, 0, 1).astype(np.int64)


def crescent_map(halo: float = 0.05) -> PiecewiseMap:
    """One crescent-shaped band: horizontal segments leave its halo."""
    lower = lambda u: 0.6 - 1.2 * np.asarray(u, dtype=float) ** 2  # noqa: E731
    upper = lambda u: 0.7 - 1.2 * np.asarray(u, dtype=float) ** 2  # noqa: E731
    br = Branch(id=0, band=CurveBand(lower, upper), phi=lambda u, v: 0.5 * np.asarray(u, dtype=float), halo=halo)
    return PiecewiseMap(half_width=1.0, branches=(br,), name="crescent")


def single_branch_map(A: float, L: float = 1.0) -> PiecewiseMap:
    """``phi(u, v) = A u`` on the whole square (its range is not the square)."""
    A = float(A)
    br = Branch(
        id=0,
        band=AffineBand(cu=1.0, cv=0.0, lo=-L, hi=L),
        phi=lambda u, v: A * np.asarray(u, dtype=float),
        grad=lambda u, v: (np.full(np.shape(u), A), np.zeros(np.shape(u))),
        halo=0.1 * L,
        solve_u=lambda v, t: np.asarray(t, dtype=float) / A,
    )
    return PiecewiseMap(half_width=L, branches=(br,), name=f"single-branch:{A:g}")


def norm_corpus(L: float = 1.0, gamma: float = 0.5) -> list:
    """Twenty bounded test functions ``(name, f(x, y))`` on Omega."""
    gL = gamma * L
    out = []

    def add(name, f):
        out.append((name, f))

    add("zero", lambda x, y: 0.0 * x)
    add("one", lambda x, y: 1.0 + 0.0 * x)
    add("minus_two", lambda x, y: -2.0 + 0.0 * x)
    add("half_plane_x", lambda x, y: (x > 0).astype(float))
    add("half_plane_y", lambda x, y: (y > 0).astype(float))
    add("quadrant", lambda x, y: ((x > 0.1 * L) & (y < 0)).astype(float))
    add("strip", lambda x, y: (np.abs(x - 0.2 * L) < 0.15 * L).astype(float))
    add("disk", lambda x, y: ((x / L) ** 2 + (y / gL) ** 2 < 0.3).astype(float))
    add("diagonal", lambda x, y: (x / L + y / gL > 0.2).astype(float))
    add("checker", lambda x, y: np.where((np.floor(2 * x / L) + np.floor(2 * y / gL)) % 2 == 0, 1.0, -1.0))
    add("ramp_x", lambda x, y: x / L)
    add("ramp_y", lambda x, y: y / gL)
    add("ramp_xy", lambda x, y: 0.5 * x / L - 1.5 * y / gL)
    add("bump", lambda x, y: np.exp(-((x / L) ** 2 + (y / gL) ** 2) / 0.1))
    add("bump_offset", lambda x, y: np.exp(-(((x / L) - 0.4) ** 2 + ((y / gL) + 0.2) ** 2) / 0.02))
    add("saddle", lambda x, y: (x / L) * (y / gL))
    add("wave", lambda x, y: np.sin(3 * math.pi * x / L))
    add("wave_y", lambda x, y: np.cos(2 * math.pi * y / gL))
    add("cheb2", lambda x, y: 2 * (x / L) ** 2 - 1)
    add("ring", lambda x, y: (np.abs(np.hypot(x / L, y / gL) - 0.5) < 0.1).astype(float))
    return out
