"""Piecewise maps on the square [-L, L]^2 and the induced system on Omega.

A :class:`PiecewiseMap` describes the recursion ``X[t+2] = phi(X[t], X[t+1])``
through a list of branches, each an open band of the square with its own
smooth formula.  :func:`induce` compresses the second coordinate by
``gamma = 1/sqrt(A)`` and yields the planar map

    T(x, y) = (y / gamma, gamma * phi_k(x, y / gamma))

on ``Omega = [-L, L] x [-gamma L, gamma L]``.  Boundary points of the bands
form the negligible set on which nothing is defined; they are reported as
errors rather than assigned to a neighbouring branch.

All array-valued methods are vectorized over numpy arrays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence, Union

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError, InvalidExpansionError, NoPreimageError, NullSetError

__all__ = [
    "Point2",
    "CurveBand",
    "AffineBand",
    "Branch",
    "PiecewiseMap",
    "InducedSystem",
    "Orbit",
    "branch_of",
    "phi",
    "induce",
    "apply_T",
    "invert_branch",
    "orbit",
    "x_series",
]

IMAGE_TOL = 1e-12
FD_REL_STEP = 1e-6
_SUPPORT_SCAN = 20001


class Point2(NamedTuple):
    x: float
    y: float


def _as_point(p) -> Point2:
    x, y = float(p[0]), float(p[1])
    if not (math.isfinite(x) and math.isfinite(y)):
        raise DomainError(f"non-finite point {p!r}")
    return Point2(x, y)


# ---------------------------------------------------------------------------
# bands


@dataclass(frozen=True)
class CurveBand:
    """Open set ``{(u, v) : lower(u) < v < upper(u)}`` inside the open square.

    ``lower`` and ``upper`` must accept numpy arrays.
    """

    lower: Callable[[np.ndarray], np.ndarray]
    upper: Callable[[np.ndarray], np.ndarray]

    def contains(self, u, v, L: float):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        return (np.abs(u) < L) & (np.abs(v) < L) & (self.lower(u) < v) & (v < self.upper(u))

    def vertical_interval(self, u, L: float):
        u = np.asarray(u, dtype=float)
        return np.maximum(self.lower(u), -L), np.minimum(self.upper(u), L)


@dataclass(frozen=True)
class AffineBand:
    """Open set ``{(u, v) : lo < cu*u + cv*v < hi}`` inside the open square."""

    cu: float
    cv: float
    lo: float
    hi: float

    def contains(self, u, v, L: float):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        w = self.cu * u + self.cv * v
        return (np.abs(u) < L) & (np.abs(v) < L) & (self.lo < w) & (w < self.hi)

    def vertical_interval(self, u, L: float):
        u = np.asarray(u, dtype=float)
        if self.cv == 0.0:
            a, b = sorted((self.lo / self.cu, self.hi / self.cu))
            inside = (u >= a) & (u <= b)
            lo = np.where(inside, -L, np.inf)
            hi = np.where(inside, L, -np.inf)
            return lo, hi
        a = (self.lo - self.cu * u) / self.cv
        b = (self.hi - self.cu * u) / self.cv
        return np.maximum(np.minimum(a, b), -L), np.minimum(np.maximum(a, b), L)


Band = Union[CurveBand, AffineBand]


# ---------------------------------------------------------------------------
# branches and maps


@dataclass(frozen=True, eq=False)
class Branch:
    """One smooth piece ``phi_k`` of the map, defined on the band ``O_k``.

    ``phi(u, v)`` and the optional ``grad(u, v) -> (d/du, d/dv)`` must be
    vectorized and valid on the ``halo``-neighbourhood of the closed band.
    ``solve_u(v, target)`` optionally returns ``u`` with ``phi(u, v) = target``.
    """

    id: int
    band: Band
    phi: Callable[[np.ndarray, np.ndarray], np.ndarray]
    grad: Optional[Callable] = None
    halo: float = 0.1
    solve_u: Optional[Callable] = None

    def __post_init__(self):
        if not self.halo > 0:
            raise DomainError("branch halo must be positive")

    def gradient(self, u, v, L: float = 1.0):
        """Analytic gradient, or central differences with step ``1e-6 * L``."""
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        if self.grad is not None:
            du, dv = self.grad(u, v)
            return np.broadcast_to(du, u.shape).astype(float), np.broadcast_to(dv, u.shape).astype(float)
        h = FD_REL_STEP * L
        du = (self.phi(u + h, v) - self.phi(u - h, v)) / (2 * h)
        dv = (self.phi(u, v + h) - self.phi(u, v - h)) / (2 * h)
        return du, dv

    def support(self, L: float) -> tuple[float, float]:
        """u-range on which the closed band meets the square (scanned, widened by one step)."""
        cached = self.__dict__.get("_support")
        if cached is not None and cached[0] == L:
            return cached[1]
        us = np.linspace(-L, L, _SUPPORT_SCAN)
        lo, hi = self.band.vertical_interval(us, L)
        ok = np.flatnonzero(lo <= hi)
        if ok.size == 0:
            span = (math.nan, math.nan)
        else:
            step = us[1] - us[0]
            span = (max(-L, us[ok[0]] - step), min(L, us[ok[-1]] + step))
        object.__setattr__(self, "_support", (L, span))
        return span

    def solve(self, v, target, L: float):
        """Solve ``phi(u, v) = target`` for u in the halo, elementwise."""
        v = np.asarray(v, dtype=float)
        target = np.asarray(target, dtype=float)
        if self.solve_u is not None:
            return np.asarray(self.solve_u(v, target), dtype=float)
        a, b = -L - self.halo, L + self.halo
        out = np.full(np.broadcast(v, target).shape, np.nan)
        for idx in np.ndindex(out.shape):
            vi = float(np.broadcast_to(v, out.shape)[idx])
            ti = float(np.broadcast_to(target, out.shape)[idx])

            def resid(u):
                return float(self.phi(np.float64(u), np.float64(vi))) - ti

            fa, fb = resid(a), resid(b)
            if fa == 0.0:
                out[idx] = a
            elif fb == 0.0:
                out[idx] = b
            elif fa * fb < 0:
                out[idx] = brentq(resid, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
        return out


@dataclass(frozen=True, eq=False)
class PiecewiseMap:
    """A map ``phi`` on ``[-L, L]^2`` given by disjoint open bands.

    The optional ``locate_fn``/``phi_fn``/``solve_fn``/``step_fn`` are fast
    paths used by the built-in models; without them every query scans the
    branch list.

    ``locate_fn(u, v) -> positions`` (index into ``branches``, -1 for none),
    ``phi_fn(u, v, pos)``, ``solve_fn(pos, v, target)`` and the scalar
    ``step_fn(u, v) -> (pos, value)`` and the vectorized
    ``fused_fn(u, v) -> (pos, value)`` must agree with the branch data.
    """

    half_width: float
    branches: tuple
    alpha: float = 1.0
    Y: int = 1
    name: str = "custom"
    declared_A: Optional[float] = None
    declared_M: Optional[float] = None
    params: dict = field(default_factory=dict)
    locate_fn: Optional[Callable] = None
    phi_fn: Optional[Callable] = None
    solve_fn: Optional[Callable] = None
    step_fn: Optional[Callable] = None
    fused_fn: Optional[Callable] = None

    def __post_init__(self):
        if not self.half_width > 0:
            raise DomainError("half_width must be positive")
        if not 0 < self.alpha <= 1:
            raise DomainError("alpha must lie in (0, 1]")
        if int(self.Y) < 1:
            raise DomainError("Y must be a positive integer")
        object.__setattr__(self, "branches", tuple(self.branches))
        if not self.branches:
            raise DomainError("a map needs at least one branch")
        ids = [b.id for b in self.branches]
        if len(set(ids)) != len(ids):
            raise DomainError("branch ids must be unique")
        object.__setattr__(self, "_pos", {k: i for i, k in enumerate(ids)})

    @property
    def L(self) -> float:
        return self.half_width

    @property
    def eps1(self) -> float:
        return min(b.halo for b in self.branches)

    def position(self, branch_id: int) -> int:
        try:
            return self._pos[branch_id]
        except KeyError:
            raise DomainError(f"unknown branch id {branch_id}") from None

    def branch(self, branch_id: int) -> Branch:
        return self.branches[self.position(branch_id)]

    # -- vectorized queries -------------------------------------------------

    def locate(self, u, v) -> np.ndarray:
        """Branch positions of the points, -1 where no band contains them."""
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        if self.locate_fn is not None:
            return self.locate_fn(u, v)
        u, v = np.broadcast_arrays(u, v)
        out = np.full(u.shape, -1, dtype=np.int64)
        for i, br in enumerate(self.branches):
            hit = br.band.contains(u, v, self.L) & (out < 0)
            out[hit] = i
        return out

    def membership_counts(self, u, v) -> np.ndarray:
        """Number of bands containing each point (always scans every branch)."""
        u, v = np.broadcast_arrays(np.asarray(u, dtype=float), np.asarray(v, dtype=float))
        cnt = np.zeros(u.shape, dtype=np.int64)
        for br in self.branches:
            cnt += br.band.contains(u, v, self.L)
        return cnt

    def evaluate(self, u, v, pos) -> np.ndarray:
        """phi at each point using the branch at the given position (pos >= 0)."""
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        pos = np.asarray(pos, dtype=np.int64)
        if self.phi_fn is not None:
            return self.phi_fn(u, v, pos)
        u, v, pos = np.broadcast_arrays(u, v, pos)
        out = np.full(u.shape, np.nan)
        for p in np.unique(pos[pos >= 0]):
            sel = pos == p
            out[sel] = self.branches[p].phi(u[sel], v[sel])
        return out

    def map_points(self, u, v):
        """``(pos, phi)`` for arrays of points; ``phi`` is nan where pos is -1."""
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        if self.fused_fn is not None:
            return self.fused_fn(u, v)
        pos = self.locate(u, v)
        ok = pos >= 0
        val = self.evaluate(u, v, np.where(ok, pos, 0))
        return pos, np.where(ok, val, np.nan)

    def solve(self, pos, v, target) -> np.ndarray:
        """u with ``phi_pos(u, v) = target`` (nan where the branch has no solution)."""
        pos = np.asarray(pos, dtype=np.int64)
        v = np.asarray(v, dtype=float)
        target = np.asarray(target, dtype=float)
        if self.solve_fn is not None:
            return self.solve_fn(pos, v, target)
        pos, v, target = np.broadcast_arrays(pos, v, target)
        out = np.full(pos.shape, np.nan)
        for p in np.unique(pos):
            sel = pos == p
            out[sel] = self.branches[p].solve(v[sel], target[sel], self.L)
        return out

    def step(self, u: float, v: float) -> tuple[int, float]:
        """Scalar ``(position, phi(u, v))``; position -1 and nan in the null set."""
        if self.step_fn is not None:
            return self.step_fn(u, v)
        pos = int(self.locate(np.array([u]), np.array([v]))[0])
        if pos < 0:
            return -1, math.nan
        return pos, float(self.branches[pos].phi(np.array([u]), np.array([v]))[0])


def _check_square(m: PiecewiseMap, p: Point2):
    if abs(p.x) > m.L or abs(p.y) > m.L:
        raise DomainError(f"{tuple(p)} lies outside [-{m.L}, {m.L}]^2")


def branch_of(m: PiecewiseMap, p) -> Optional[int]:
    """Id of the branch whose open band contains ``p``; None on band boundaries."""
    p = _as_point(p)
    _check_square(m, p)
    pos = int(m.locate(np.array([p.x]), np.array([p.y]))[0])
    return None if pos < 0 else m.branches[pos].id


def phi(m: PiecewiseMap, p) -> float:
    p = _as_point(p)
    _check_square(m, p)
    pos, value = m.step(p.x, p.y)
    if pos < 0:
        raise NullSetError(f"{tuple(p)} lies on a branch boundary")
    return value


# ---------------------------------------------------------------------------
# induced system


@dataclass(frozen=True, eq=False)
class InducedSystem:
    """The compressed planar map T on Omega = [-L, L] x [-gamma L, gamma L]."""

    map: PiecewiseMap
    gamma: float
    A: float

    @property
    def L(self) -> float:
        return self.map.L

    @property
    def omega(self) -> tuple[float, float, float, float]:
        L, g = self.map.L, self.gamma
        return (-L, L, -g * L, g * L)

    def in_omega(self, x, y, tol: float = 0.0):
        L, g = self.map.L, self.gamma
        return (np.abs(x) <= L + tol) & (np.abs(y) <= g * L + tol)

    def transform(self, x, y):
        """Vectorized ``T``: returns ``(X, Y, pos)`` with nan where undefined."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        g = self.gamma
        v = y * (1.0 / g)
        pos, val = self.map.map_points(x, v)
        val *= g
        v[pos < 0] = np.nan
        return v, val, pos

    def inverse(self, pos, X, Y):
        """Vectorized inverse of the branches at ``pos``: returns ``(x, y)``."""
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        x = self.map.solve(pos, X, Y / self.gamma)
        return x, self.gamma * X


def induce(m: PiecewiseMap, A: float) -> InducedSystem:
    """Induced system with compression factor ``1/sqrt(A)``."""
    A = float(A)
    if not A > 1:
        raise InvalidExpansionError(f"expansion bound A={A} must exceed 1")
    return InducedSystem(map=m, gamma=1.0 / math.sqrt(A), A=A)


def _check_omega(sys: InducedSystem, p: Point2, tol: float = 0.0):
    if not sys.in_omega(p.x, p.y, tol):
        raise DomainError(f"{tuple(p)} lies outside Omega")


def apply_T(sys: InducedSystem, p) -> tuple[Point2, int]:
    p = _as_point(p)
    _check_omega(sys, p)
    v = p.y / sys.gamma
    pos, value = sys.map.step(p.x, v)
    if pos < 0:
        raise NullSetError(f"pre-image of {tuple(p)} lies on a branch boundary")
    X, Y = v, sys.gamma * value
    L, gL = sys.L, sys.gamma * sys.L
    if abs(X) > L + IMAGE_TOL or abs(Y) > gL + IMAGE_TOL:
        raise DomainError(f"image {(X, Y)} leaves Omega")
    X = min(max(X, -L), L)
    Y = min(max(Y, -gL), gL)
    return Point2(X, Y), sys.map.branches[pos].id


def invert_branch(sys: InducedSystem, k: int, q) -> Point2:
    """Pre-image of ``q`` under ``T_k``; verified by a forward round trip."""
    q = _as_point(q)
    pos = sys.map.position(k)
    x, y = sys.inverse(np.array([pos]), np.array([q.x]), np.array([q.y]))
    x, y = float(x[0]), float(y[0])
    if not math.isfinite(x):
        raise NoPreimageError(f"no pre-image of {tuple(q)} in branch {k}")
    u, v = x, y / sys.gamma
    if not bool(sys.map.branches[pos].band.contains(u, v, sys.L)):
        raise NoPreimageError(f"pre-image of {tuple(q)} falls outside branch {k}")
    back = sys.gamma * float(sys.map.branches[pos].phi(np.array([u]), np.array([v]))[0])
    scale = max(1.0, sys.gamma * sys.L)
    if abs(back - q.y) > 1e-10 * scale or abs(v - q.x) > 1e-10 * max(1.0, sys.L):
        raise NoPreimageError(f"round trip failed for {tuple(q)} in branch {k}")
    return Point2(x, y)


# ---------------------------------------------------------------------------
# orbits


@dataclass(frozen=True)
class Orbit:
    points: np.ndarray  # (n, 2) in Omega coordinates
    branches: np.ndarray  # branch id applied at each returned point (-1 if none)
    terminated: bool

    def __len__(self) -> int:
        return len(self.points)


def _iterate_unscaled(m: PiecewiseMap, u: float, v: float, count: int):
    """Run ``(u, v) -> (v, phi(u, v))``; stops early in the null set."""
    us = np.empty(count)
    pos_out = np.full(count, -1, dtype=np.int64)
    step = m.step
    n = 0
    terminated = False
    while n < count:
        us[n] = u
        pos, w = step(u, v)
        if pos < 0:
            terminated = True
            n += 1
            break
        pos_out[n] = pos
        u, v = v, w
        n += 1
    return us[:n], pos_out[:n], (u, v), terminated


def orbit(sys: InducedSystem, seed, n: int, burn_in: int = 0) -> Orbit:
    """``n`` iterates of T after discarding ``burn_in``.

    The iteration runs on the unscaled pair ``(X[t], X[t+1])`` and reports
    ``Z[t] = (X[t], gamma X[t+1])``, so it is exactly conjugate to
    :func:`x_series`.  If an iterate has no image the orbit stops there and
    ``terminated`` is set; that iterate is the last point returned and its
    branch id is -1.
    """
    p = _as_point(seed)
    _check_omega(sys, p)
    if n < 0 or burn_in < 0:
        raise DomainError("n and burn_in must be non-negative")
    count = burn_in + n
    if count == 0:
        return Orbit(points=np.empty((0, 2)), branches=np.empty(0, dtype=np.int64), terminated=False)
    us, pos, (u_f, v_f), terminated = _iterate_unscaled(sys.map, p.x, p.y / sys.gamma, count)
    nxt = v_f if terminated else u_f
    ys = sys.gamma * np.append(us[1:], nxt)
    ids = np.array([sys.map.branches[i].id if i >= 0 else -1 for i in pos], dtype=np.int64)
    pts = np.column_stack([us, ys])[burn_in:]
    return Orbit(points=pts, branches=ids[burn_in:], terminated=terminated)


def x_series(m: PiecewiseMap, x0: float, x1: float, n: int) -> np.ndarray:
    """``X[0..n-1]`` of the recursion; shorter than ``n`` if it hits the null set."""
    p = _as_point((x0, x1))
    _check_square(m, p)
    if n <= 0:
        return np.empty(0)
    us, _, (_, v_f), terminated = _iterate_unscaled(m, p.x, p.y, n)
    if terminated:
        return np.append(us, v_f)[:n]
    return us
