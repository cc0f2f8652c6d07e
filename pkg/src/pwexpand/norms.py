"""Oscillation seminorms and the quasi-Hoelder norms on Omega.

For ``g`` on Omega and ``0 < eps < eps0``::

    N(g, alpha, L)  = sup_eps eps^-alpha * integral over Omega of Osc(g, B_eps(p) & Omega)
    |g|_{alpha, L}  = N + 16 (1 + gamma) eps0^(1 - alpha) L |g|_inf + |g|_1

and for ``f`` on the plane, ``|f|_alpha = |f|_1 + sup_eps eps^-alpha *
integral over R^2 of Osc(f, B_eps(p))``.

Functions are piecewise constant on a uniform grid, so ``Osc`` over a ball
is the max minus the min of the cells whose centres lie in the closed ball.
The supremum over eps is a maximum over the fixed ladder
``r_min * 2^(i/4) < eps0`` with ``r_min`` one cell width; the ladder for a
larger ``eps0`` contains the ladder for a smaller one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.ndimage import maximum_filter1d, minimum_filter1d

from .errors import DomainError, ResolutionError
from .ulam import Grid

__all__ = [
    "LADDER_RATIO",
    "GridFunction",
    "LineFunction",
    "NormProfile",
    "InequalityCheck",
    "eps_ladder",
    "default_eps0",
    "oscillation",
    "osc_integral",
    "osc_seminorm",
    "valpha_norm",
    "plane_norm",
    "extend_grid",
    "embedding_check",
    "restriction_check",
    "restriction_factor",
    "trace_norm",
    "lift",
    "c_fh_bound",
    "grid_tolerance",
]

LADDER_RATIO = 2.0 ** 0.25
_TIE = 1e-9


@dataclass(frozen=True)
class GridFunction:
    """Cell values of a function on a rectangular grid (flat, x fastest)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if v.size != self.grid.n:
            raise DomainError(f"expected {self.grid.n} values, got {v.size}")
        if not np.all(np.isfinite(v)):
            raise DomainError("grid function values must be finite")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: Grid, f, sub: int = 1) -> "GridFunction":
        if sub == 1:
            X, Y = grid.centers()
            return cls(grid, np.asarray(f(X, Y), dtype=float) * np.ones_like(X))
        return cls(grid, grid.project(f, sub))

    @property
    def image(self) -> np.ndarray:
        return self.values.reshape(self.grid.ny, self.grid.nx)

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    @property
    def l1_norm(self) -> float:
        return float(np.sum(np.abs(self.values)) * self.grid.cell_area)

    def __mul__(self, c: float) -> "GridFunction":
        return GridFunction(self.grid, self.values * float(c))

    __rmul__ = __mul__

    def __add__(self, other: "GridFunction") -> "GridFunction":
        if other.grid != self.grid:
            raise DomainError("grid functions live on different grids")
        return GridFunction(self.grid, self.values + other.values)


@dataclass(frozen=True)
class LineFunction:
    """Cell values of a function on ``[-L, L]`` cut into ``n`` equal cells."""

    L: float
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if v.size < 2 or not np.all(np.isfinite(v)):
            raise DomainError("need at least two finite values")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, L: float, n: int, f) -> "LineFunction":
        x = -L + (np.arange(n) + 0.5) * (2 * L / n)
        return cls(L, np.asarray(f(x), dtype=float) * np.ones(n))

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def h(self) -> float:
        return 2 * self.L / self.n

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    @property
    def l1_norm(self) -> float:
        return float(np.sum(np.abs(self.values)) * self.h)


@dataclass(frozen=True)
class NormProfile:
    epsilon0: float
    alpha: float
    osc_seminorm: float
    valpha_norm: float
    sup_norm: float
    l1_norm: float
    gamma: float
    L: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class InequalityCheck:
    lhs: float
    rhs: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.lhs <= self.rhs + self.tolerance

    def to_dict(self) -> dict:
        return {"lhs": self.lhs, "rhs": self.rhs, "tolerance": self.tolerance, "pass": self.passed}


# ---------------------------------------------------------------------------
# radii


def default_eps0(gamma: float, eps1: float) -> float:
    return 0.9 * gamma * eps1


def eps_ladder(r_min: float, eps0: float, eps_count: int = 4) -> np.ndarray:
    """Radii ``r_min * 2^(i/4)`` strictly below ``eps0``."""
    if not r_min > 0:
        raise DomainError("r_min must be positive")
    n = int(math.floor(math.log(eps0 / r_min) / math.log(LADDER_RATIO) - 1e-12)) + 1 if eps0 > r_min else 0
    radii = r_min * LADDER_RATIO ** np.arange(max(n, 0))
    radii = radii[radii < eps0]
    if radii.size < eps_count:
        raise ResolutionError(
            f"eps0={eps0:g} leaves {radii.size} radii above the cell width {r_min:g}; need {eps_count}"
        )
    return radii


def _cell_width(grid: Grid) -> float:
    return max(grid.hx, grid.hy)


# ---------------------------------------------------------------------------
# ball extrema on a grid


def _row_widths(eps: float, hx: float, hy: float) -> list:
    """``(dj, w)``: cells at row offset dj and column offset <= w have centres in the ball."""
    R = int(math.floor(eps / hy * (1 + _TIE)))
    out = []
    for dj in range(0, R + 1):
        rem = eps * eps * (1 + _TIE) ** 2 - (dj * hy) ** 2
        if rem < 0:
            break
        out.append((dj, int(math.floor(math.sqrt(rem) / hx * (1 + _TIE)))))
    return out


def _ball_extreme(img: np.ndarray, eps: float, hx: float, hy: float, fill: float, kind: str) -> np.ndarray:
    """Max (or min) of ``img`` over each cell's ball; outside cells count as ``fill``."""
    f1 = maximum_filter1d if kind == "max" else minimum_filter1d
    pick = np.maximum if kind == "max" else np.minimum
    widths = _row_widths(eps, hx, hy)
    R = widths[-1][0]
    ny = img.shape[0]
    out = None
    # rows sharing a width form the offset bands [a, b] and [-b, -a]
    groups = []
    for dj, w in widths:
        if groups and groups[-1][2] == w:
            groups[-1][1] = dj
        else:
            groups.append([dj, dj, w])
    for a, b, w in groups:
        Mx = f1(img, size=2 * w + 1, axis=1, mode="constant", cval=fill)
        Mp = np.full((ny + 2 * R, img.shape[1]), fill)
        Mp[R : R + ny] = Mx
        s = b - a + 1
        # run[t] = extreme of Mp[t : t + s]
        run = f1(Mp, size=s, axis=0, mode="constant", cval=fill)
        run = run[s // 2 :] if s > 1 else run
        j = np.arange(ny)
        part = pick(run[j + R + a], run[j + R - b])
        out = part if out is None else pick(out, part)
    return out


def _osc_image(img: np.ndarray, eps: float, hx: float, hy: float, clip: bool) -> np.ndarray:
    if clip:
        hi = _ball_extreme(img, eps, hx, hy, -np.inf, "max")
        lo = _ball_extreme(img, eps, hx, hy, np.inf, "min")
    else:
        hi = _ball_extreme(img, eps, hx, hy, 0.0, "max")
        lo = _ball_extreme(img, eps, hx, hy, 0.0, "min")
    return hi - lo


def oscillation(f: GridFunction, region) -> float:
    """Max minus min of the cell values in ``region`` (mask or index array)."""
    r = np.asarray(region).ravel()
    v = f.values[r] if r.dtype == bool else f.values[r.astype(np.int64)]
    if v.size == 0:
        raise DomainError("empty region")
    return float(v.max() - v.min())


def osc_integral(f: GridFunction, eps: float, clip: bool = True) -> float:
    """Integral of ``Osc(f, B_eps(p) & Omega)`` over Omega (``clip``) or over the plane."""
    g = f.grid
    if clip:
        return float(np.sum(_osc_image(f.image, eps, g.hx, g.hy, True)) * g.cell_area)
    img, _ = _zero_pad(f.image, eps, g)
    return float(np.sum(_osc_image(img, eps, g.hx, g.hy, False)) * g.cell_area)


def _zero_pad(img: np.ndarray, eps: float, grid: Grid):
    px = int(math.ceil(eps / grid.hx)) + 1
    py = int(math.ceil(eps / grid.hy)) + 1
    return np.pad(img, ((py, py), (px, px))), (px, py)


def _sup_over_ladder(f: GridFunction, alpha: float, radii: np.ndarray, clip: bool) -> float:
    if np.all(f.values == f.values[0]) and (clip or f.values[0] == 0):
        return 0.0
    best = 0.0
    for eps in radii:
        best = max(best, osc_integral(f, float(eps), clip) / eps**alpha)
    return best


def _check_alpha(alpha):
    if not 0 < alpha <= 1:
        raise DomainError("alpha must lie in (0, 1]")


def osc_seminorm(f: GridFunction, alpha: float, eps0: float, eps_count: int = 4, r_min: Optional[float] = None) -> float:
    """``N(g, alpha, L)`` with the sup taken over the radius ladder."""
    _check_alpha(alpha)
    radii = eps_ladder(r_min or _cell_width(f.grid), eps0, eps_count)
    return _sup_over_ladder(f, alpha, radii, True)


def _l_gamma(grid: Grid) -> tuple[float, float]:
    L = (grid.omega[1] - grid.omega[0]) / 2
    return L, (grid.omega[3] - grid.omega[2]) / (2 * L)


def valpha_norm(
    f: GridFunction,
    alpha: float,
    eps0: float,
    eps_count: int = 4,
    L: Optional[float] = None,
    gamma: Optional[float] = None,
    r_min: Optional[float] = None,
) -> NormProfile:
    """Three-term norm on Omega; ``L`` and ``gamma`` default to the grid's shape."""
    L0, g0 = _l_gamma(f.grid)
    L = L0 if L is None else L
    gamma = g0 if gamma is None else gamma
    N = osc_seminorm(f, alpha, eps0, eps_count, r_min)
    sup, l1 = f.sup_norm, f.l1_norm
    total = N + 16.0 * (1.0 + gamma) * eps0 ** (1.0 - alpha) * L * sup + l1
    return NormProfile(eps0, alpha, N, total, sup, l1, gamma, L)


def plane_norm(f: GridFunction, alpha: float, eps0: float, eps_count: int = 4, r_min: Optional[float] = None) -> float:
    """``|f|_1 + |f|_alpha`` for ``f`` extended by zero outside its grid."""
    _check_alpha(alpha)
    radii = eps_ladder(r_min or _cell_width(f.grid), eps0, eps_count)
    return f.l1_norm + _sup_over_ladder(f, alpha, radii, False)


# ---------------------------------------------------------------------------
# embedding inequalities


def grid_tolerance(grid: Grid, sup: float) -> float:
    """Mass of a strip two cell widths wide along the boundary of the grid rectangle."""
    x0, x1, y0, y1 = grid.omega
    perimeter = 2 * ((x1 - x0) + (y1 - y0))
    return 2.0 * _cell_width(grid) * perimeter * sup


def embedding_check(g: GridFunction, alpha: float, eps0: float, eps_count: int = 4) -> InequalityCheck:
    """``|g extended by 0|_alpha <= |g|_{alpha, L}``."""
    lhs = plane_norm(g, alpha, eps0, eps_count)
    rhs = valpha_norm(g, alpha, eps0, eps_count).valpha_norm
    return InequalityCheck(lhs, rhs, grid_tolerance(g.grid, g.sup_norm))


def extend_grid(grid: Grid, margin_x: int, margin_y: int) -> tuple[Grid, tuple]:
    """Grid with the same cells, ``margin`` cells wider on every side, and the slice of the original."""
    big = Grid(
        grid.nx + 2 * margin_x,
        grid.ny + 2 * margin_y,
        (
            grid.omega[0] - margin_x * grid.hx,
            grid.omega[1] + margin_x * grid.hx,
            grid.omega[2] - margin_y * grid.hy,
            grid.omega[3] + margin_y * grid.hy,
        ),
    )
    return big, (slice(margin_y, margin_y + grid.ny), slice(margin_x, margin_x + grid.nx))


def restriction_factor(alpha: float, eps0: float, L: float, gamma: float) -> float:
    return 1.0 + 16.0 * (1.0 + gamma) * L * max(1.0, eps0**alpha) / (math.pi * eps0 ** (1.0 + alpha))


def restriction_check(
    f: GridFunction, omega_grid: Grid, window: tuple, alpha: float, eps0: float, eps_count: int = 4
) -> InequalityCheck:
    """``|f 1_Omega|_{alpha, L} <= factor * |f|_alpha``.

    ``f`` lives on a grid containing Omega; ``window`` is the (row, column)
    slice of Omega inside it (see :func:`extend_grid`).
    """
    L, gamma = _l_gamma(omega_grid)
    g = GridFunction(omega_grid, f.image[window])
    lhs = valpha_norm(g, alpha, eps0, eps_count, L, gamma).valpha_norm
    rhs = restriction_factor(alpha, eps0, L, gamma) * plane_norm(f, alpha, eps0, eps_count)
    return InequalityCheck(lhs, rhs, grid_tolerance(omega_grid, f.sup_norm))


# ---------------------------------------------------------------------------
# trace observables


def _line_osc_integral(H: LineFunction, eps: float) -> float:
    w = int(math.floor(eps / H.h * (1 + _TIE)))
    hi = maximum_filter1d(H.values, 2 * w + 1, mode="constant", cval=-np.inf)
    lo = minimum_filter1d(H.values, 2 * w + 1, mode="constant", cval=np.inf)
    return float(np.sum(hi - lo) * H.h)


def _trace_terms(H: LineFunction, alpha: float, eps0: float, gamma: float, eps_count: int, r_min: Optional[float]):
    _check_alpha(alpha)
    if np.all(H.values == H.values[0]):
        osc = 0.0
    else:
        radii = eps_ladder(r_min or H.h, eps0, eps_count)
        osc = max(_line_osc_integral(H, float(e)) / e**alpha for e in radii)
    return (
        2.0 * gamma * osc,
        16.0 * (1.0 + gamma) * eps0 ** (1.0 - alpha) * H.sup_norm,
        2.0 * gamma * H.l1_norm,
    )


def trace_norm(
    H: LineFunction, alpha: float, eps0: float, gamma: float, eps_count: int = 4, r_min: Optional[float] = None
) -> float:
    """Norm on Omega of ``Tr H (x, y) = H(x)``, computed in one dimension."""
    return H.L * sum(_trace_terms(H, alpha, eps0, gamma, eps_count, r_min))


def lift(H: LineFunction, grid: Grid) -> GridFunction:
    """``Tr H`` as a grid function (columns must match)."""
    if grid.nx != H.n:
        raise DomainError("grid columns must match the line cells")
    return GridFunction(grid, np.tile(H.values, grid.ny))


def c_fh_bound(
    F_l1_mu: float,
    H: LineFunction,
    alpha: float,
    eps0: float,
    gamma: float,
    C: float = 1.0,
    eps_count: int = 4,
    r_min: Optional[float] = None,
) -> float:
    """``C L |Tr F|_{L1(mu)} (2 gamma osc + 16 (1 + gamma) eps0^(1-alpha) |H|_inf + 2 gamma |H|_1)``.

    ``C`` is not known in closed form and must be supplied.
    """
    if F_l1_mu < 0 or C < 0:
        raise DomainError("inputs must be non-negative")
    return C * F_l1_mu * trace_norm(H, alpha, eps0, gamma, eps_count, r_min)
