"""The two worked examples: a quadratic-band map and a piecewise affine map.

Nonlinear example
    ``f_k(u) = -71/2 u^2 - 214 u + k - 1/2`` for ``-179 <= k <= 250``,
    bands ``f_k(u) < v < f_{k+1}(u)`` and ``phi_k(u, v) = 2v - 2 f_k(u) - 1``
    on ``[-1, 1]^2``; declared constants ``A = 144``, ``M = 2``, ``Y = 3``.

Linear example
    bands ``(2n-1)L < a v + b u < (2n+1)L`` with ``phi_n = a v + b u - 2nL``;
    declared ``A = |b|``, ``M = |a|``.  Its induced map preserves Lebesgue
    measure, which is what makes the recursion usable as a generator of
    uniform numbers on ``[-L, L]``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np

from .errors import BoundaryError, ConsistencyError, DomainError
from .mapcore import AffineBand, Branch, CurveBand, InducedSystem, PiecewiseMap, induce

log = logging.getLogger(__name__)

__all__ = [
    "NONLINEAR_K_MIN",
    "NONLINEAR_K_MAX",
    "f_k",
    "nonlinear_example",
    "nonlinear_system",
    "psi_k",
    "zone_of",
    "zone_limits",
    "pf_nonlinear",
    "P1Witness",
    "check_p1_not_invariant",
    "BranchImage",
    "branch_image_zones",
    "linear_n_range",
    "linear_example",
    "linear_system",
    "branch_multiplicity",
    "LinearPRNG",
    "prng_stream",
]

# ---------------------------------------------------------------------------
# nonlinear example

NONLINEAR_K_MIN = -179
NONLINEAR_K_MAX = 250
_C2 = 35.5  # 71/2
_C1 = 214.0
_ROUND_MAGIC = 1.5 * 2.0**52


def f_k(u, k):
    u = np.asarray(u, dtype=float)
    return -_C2 * u * u - _C1 * u + k - 0.5


def _nl_solve(k, v, target):
    # phi_k(u, v) = target  <=>  f_k(u) = (2v - 1 - target)/2
    r = (2.0 * v - 1.0 - target) / 2.0
    disc = _C1 * _C1 - 142.0 * (r - k + 0.5)
    with np.errstate(invalid="ignore"):
        return np.where(disc >= 0, (-_C1 + np.sqrt(np.maximum(disc, 0.0))) / 71.0, np.nan)


def _nl_branch(k: int) -> Branch:
    def lower(u, k=k):
        return f_k(u, k)

    def upper(u, k=k):
        return f_k(u, k + 1)

    def phi(u, v, k=k):
        return 2.0 * np.asarray(v, dtype=float) - 2.0 * f_k(u, k) - 1.0

    def grad(u, v):
        u = np.asarray(u, dtype=float)
        return 2.0 * (71.0 * u + 214.0), np.full(np.shape(u), 2.0)

    def solve_u(v, target, k=k):
        return _nl_solve(k, v, target)

    return Branch(id=k, band=CurveBand(lower, upper), phi=phi, grad=grad, halo=1.0, solve_u=solve_u)


def _nl_locate(u, v):
    u, v = np.broadcast_arrays(np.asarray(u, dtype=float), np.asarray(v, dtype=float))
    t = v + _C2 * u * u + _C1 * u + 0.5
    k = np.floor(t)
    ok = (np.abs(u) < 1.0) & (np.abs(v) < 1.0) & (t != k)
    ok &= (k >= NONLINEAR_K_MIN) & (k <= NONLINEAR_K_MAX)
    return np.where(ok, k - NONLINEAR_K_MIN, -1).astype(np.int64)


def _nl_phi(u, v, pos):
    k = np.asarray(pos) + NONLINEAR_K_MIN
    return 2.0 * (v + _C2 * u * u + _C1 * u + 0.5 - k) - 1.0


def _nl_fused(u, v):
    u, v = np.broadcast_arrays(np.asarray(u, dtype=float), np.asarray(v, dtype=float))
    t = _C2 * u
    t += _C1
    t *= u
    t += v
    t += 0.5
    k = np.floor(t)
    val = t - k
    val *= 2.0
    val -= 1.0
    ok = val != -1.0
    ok &= np.maximum(np.abs(u), np.abs(v)) < 1.0
    ok &= (k >= NONLINEAR_K_MIN) & (k <= NONLINEAR_K_MAX)
    pos = k.astype(np.int64)
    pos -= NONLINEAR_K_MIN
    bad = ~ok
    pos[bad] = -1
    val[bad] = np.nan
    return pos, val


def _nl_solve_pos(pos, v, target):
    return _nl_solve(np.asarray(pos) + NONLINEAR_K_MIN, v, target)


def _nl_step(u: float, v: float):
    if not (-1.0 < u < 1.0 and -1.0 < v < 1.0):
        return -1, math.nan
    t = v + _C2 * u * u + _C1 * u + 0.5
    k = math.floor(t)
    if t == k or k < NONLINEAR_K_MIN or k > NONLINEAR_K_MAX:
        return -1, math.nan
    return k - NONLINEAR_K_MIN, 2.0 * (t - k) - 1.0


def nonlinear_example() -> PiecewiseMap:
    """The 430-branch quadratic example on ``[-1, 1]^2``."""
    branches = tuple(_nl_branch(k) for k in range(NONLINEAR_K_MIN, NONLINEAR_K_MAX + 1))
    return PiecewiseMap(
        half_width=1.0,
        branches=branches,
        alpha=1.0,
        Y=3,
        name="nonlinear-example",
        declared_A=144.0,
        declared_M=2.0,
        params={"model": "nonlinear"},
        locate_fn=_nl_locate,
        phi_fn=_nl_phi,
        solve_fn=_nl_solve_pos,
        step_fn=_nl_step,
        fused_fn=_nl_fused,
    )


def nonlinear_system() -> InducedSystem:
    return induce(nonlinear_example(), 144.0)


def psi_k(x, y, k):
    """``214^2 - 71(2x - 12y) + 142k``; equals ``(71 x_k + 214)^2`` at the k-th pre-image."""
    return _C1 * _C1 - 71.0 * (2.0 * np.asarray(x, dtype=float) - 12.0 * np.asarray(y, dtype=float)) + 142.0 * np.asarray(k)


_ZONE_LIMITS = {1: (-179, 248), 2: (-178, 249), 3: (-177, 250)}


def zone_limits(zone: int) -> tuple[int, int]:
    return _ZONE_LIMITS[zone]


def zone_of(x, y, tol: float = 1e-12):
    """Zone 1, 2 or 3 of a point of the open Omega of the nonlinear example.

    With ``z = x - 6y``: zone 1 is above the line ``y = (2x+1)/12`` (``z < -1/2``),
    zone 3 is below ``y = (2x-1)/12`` (``z > 1/2``), zone 2 lies between.
    Raises :class:`BoundaryError` within ``tol`` of either line.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    z = x - 6.0 * y
    if np.any(np.abs(np.abs(z) - 0.5) <= tol):
        raise BoundaryError("point on a zone boundary line")
    zone = np.where(z < -0.5, 1, np.where(z > 0.5, 3, 2))
    return zone if zone.ndim else int(zone)


def pf_nonlinear(h: Callable, x, y=None):
    """Transfer operator of the nonlinear example applied to ``h`` at points of Omega.

    ``Ph(x, y) = sum_k h(T_k^{-1}(x, y)) / (2 sqrt(psi_k(x, y)))`` with the
    zone-dependent range of k.  ``h`` must be vectorized over ``(x, y)``.
    Accepts a point, or coordinate arrays ``x`` and ``y``.
    """
    if y is None:
        x, y = x[0], x[1]
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    scalar = x.ndim == 0 and y.ndim == 0
    x, y = np.atleast_1d(x), np.atleast_1d(y)
    x, y = np.broadcast_arrays(x, y)
    if np.any(np.abs(x) >= 1.0) or np.any(np.abs(y) >= 1.0 / 12.0):
        raise DomainError("pf_nonlinear needs points in the open Omega")
    zone = np.atleast_1d(zone_of(x, y))
    ks = np.arange(NONLINEAR_K_MIN, NONLINEAR_K_MAX + 1, dtype=float)
    lo = np.choose(zone - 1, [-179, -178, -177])
    hi = np.choose(zone - 1, [248, 249, 250])
    flat_x, flat_y = x.ravel(), y.ravel()
    out = np.empty(flat_x.size)
    chunk = max(1, 200_000 // ks.size)
    for s in range(0, flat_x.size, chunk):
        xs = flat_x[s : s + chunk, None]
        ys = flat_y[s : s + chunk, None]
        psi = psi_k(xs, ys, ks[None, :])
        root = np.sqrt(psi)
        pre_x = (root - _C1) / 71.0
        pre_y = np.broadcast_to(xs / 12.0, pre_x.shape)
        mask = (ks[None, :] >= lo.ravel()[s : s + chunk, None]) & (ks[None, :] <= hi.ravel()[s : s + chunk, None])
        hv = np.asarray(h(np.where(mask, pre_x, 0.0), pre_y), dtype=float)
        hv = np.broadcast_to(hv, pre_x.shape)
        out[s : s + chunk] = np.sum(np.where(mask, hv / (2.0 * root), 0.0), axis=1)
    out = out.reshape(x.shape)
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class BranchImage:
    """Sampled image of one branch of the nonlinear example, by zone."""

    k: int
    forward: dict  # zone -> number of sampled images of U_k landing there
    coverage: dict  # zone -> fraction of sampled zone points with a pre-image in U_k

    @property
    def covered(self) -> tuple:
        return tuple(z for z in (1, 2, 3) if self.coverage[z] > 0.99)

    @property
    def expected(self) -> tuple:
        return tuple(z for z in (1, 2, 3) if _ZONE_LIMITS[z][0] <= self.k <= _ZONE_LIMITS[z][1])


def branch_image_zones(ks: Sequence[int] = (-179, -178, -177, 248, 249, 250), samples: int = 10_000, seed: int = 0) -> list:
    """Classify ``T_k(U_k)`` by zone, both ways, for the listed branches.

    Forward: ``samples`` points of ``U_k`` are mapped and their zones
    counted.  Backward: ``samples`` points of each zone are pulled back
    through ``T_k`` and the fraction landing in ``U_k`` is recorded.
    """
    sys = nonlinear_system()
    m, g = sys.map, sys.gamma
    rng = np.random.default_rng(seed)
    out = []
    for k in ks:
        pos = m.position(int(k))
        br = m.branches[pos]
        a, b = br.support(1.0)
        us, vs = [], []
        n = 0
        while n < samples:
            u = rng.uniform(a, b, 2 * samples)
            lo, hi = br.band.vertical_interval(u, 1.0)
            v = lo + (hi - lo) * rng.random(u.size)
            # weight by the band height: keep with probability height / 2
            keep = (hi > lo) & (rng.random(u.size) * 2.0 < hi - lo)
            us.append(u[keep])
            vs.append(v[keep])
            n += int(keep.sum())
        u, v = np.concatenate(us)[:samples], np.concatenate(vs)[:samples]
        X, Y = v, g * br.phi(u, v)
        z = X - 6.0 * Y
        zones = np.where(z < -0.5, 1, np.where(z > 0.5, 3, 2))
        forward = {zn: int(np.sum(zones == zn)) for zn in (1, 2, 3)}
        coverage = {}
        for zn in (1, 2, 3):
            # uniform points of the zone by rejection from Omega
            Xs = rng.uniform(-1.0, 1.0, 8 * samples)
            Ys = rng.uniform(-g, g, 8 * samples)
            zz = Xs - 6.0 * Ys
            sel = (zz < -0.5) if zn == 1 else (zz > 0.5) if zn == 3 else (np.abs(zz) < 0.5)
            Xs, Ys = Xs[sel][:samples], Ys[sel][:samples]
            with np.errstate(invalid="ignore"):
                x, y = sys.inverse(np.full(Xs.size, pos), Xs, Ys)
            ok = np.isfinite(x) & br.band.contains(np.nan_to_num(x, nan=2.0), y / g, 1.0)
            coverage[zn] = float(np.mean(ok))
        out.append(BranchImage(int(k), forward, coverage))
    return out


@dataclass(frozen=True)
class P1Witness:
    """Values of ``P1`` at points with increasing ``z = x - 6y``."""

    z: np.ndarray
    points: np.ndarray
    zones: np.ndarray
    values: np.ndarray  # P1 from pf_nonlinear at the points
    displayed_values: np.ndarray  # sum over -177..250 of 1/(2 sqrt(psi_k)) at the same z

    @property
    def p1(self):
        return tuple(self.points[0])

    @property
    def p2(self):
        return tuple(self.points[-1])

    @property
    def strictly_increasing(self) -> bool:
        return bool(np.all(np.diff(self.values) > 0) and np.all(np.diff(self.displayed_values) > 0))

    @property
    def spread(self) -> float:
        return float(min(np.ptp(self.values), np.ptp(self.displayed_values)))


def check_p1_not_invariant(z_values: Sequence[float] = (-1.4, -1.0, -0.6)) -> P1Witness:
    """Witness that the constant density is not fixed by the transfer operator.

    Each ``z`` is realised by the point ``(2z/3, -z/18)`` of Omega.  Both the
    operator value ``P1`` and the fixed-range sum over ``k = -177..250`` are
    returned; each must increase strictly with z.
    """
    z = np.asarray(sorted(z_values), dtype=float)
    if z.size < 2 or np.any(np.abs(z) >= 1.5):
        raise DomainError("need at least two z values in (-3/2, 3/2)")
    px, py = 2.0 * z / 3.0, -z / 18.0
    ones = lambda a, b: np.ones(np.broadcast(a, b).shape)  # noqa: E731
    values = np.atleast_1d(pf_nonlinear(ones, px, py))
    ks = np.arange(-177, 251, dtype=float)
    displayed = np.sum(1.0 / (2.0 * np.sqrt(_C1 * _C1 - 142.0 * z[:, None] + 142.0 * ks[None, :])), axis=1)
    return P1Witness(
        z=z,
        points=np.column_stack([px, py]),
        zones=np.atleast_1d(zone_of(px, py)),
        values=values,
        displayed_values=displayed,
    )


# ---------------------------------------------------------------------------
# linear example


def _check_linear_params(a, b, L):
    if int(a) != a or int(b) != b:
        raise DomainError("a and b must be integers")
    if b == 0:
        raise DomainError("b must be non-zero")
    if not L > 0 or abs(2 * L - round(2 * L)) > 1e-12:
        raise DomainError("L must be a positive integer or half-integer")
    return int(a), int(b), float(L)


def linear_n_range(a: int, b: int) -> range:
    """Indices n of the bands of the linear example.

    Covers every n whose band ``(2n-1)L < av+bu < (2n+1)L`` meets the open
    square, together with every n whose line ``av+bu = (2n-1)L`` crosses it.
    """
    s = abs(a) + abs(b)
    crossing = (math.ceil((-s + 1) / 2), math.floor((s + 1) / 2))
    nonempty = (math.floor((-s - 1) / 2) + 1, math.ceil((s + 1) / 2) - 1)
    return range(min(crossing[0], nonempty[0]), max(crossing[1], nonempty[1]) + 1)


def linear_example(a: int, b: int, L: float = 1.0) -> PiecewiseMap:
    a, b, L = _check_linear_params(a, b, L)
    ns = linear_n_range(a, b)
    n0 = ns.start
    fa, fb = float(a), float(b)

    def make(n):
        c = 2.0 * n * L

        def phi(u, v):
            return fa * np.asarray(v, dtype=float) + fb * np.asarray(u, dtype=float) - c

        def grad(u, v):
            shape = np.shape(u)
            return np.full(shape, fb), np.full(shape, fa)

        def solve_u(v, target):
            return (np.asarray(target, dtype=float) - fa * np.asarray(v, dtype=float) + c) / fb

        band = AffineBand(cu=fb, cv=fa, lo=(2 * n - 1) * L, hi=(2 * n + 1) * L)
        return Branch(id=n, band=band, phi=phi, grad=grad, halo=0.1 * L, solve_u=solve_u)

    two_l = 2.0 * L

    def locate(u, v):
        u, v = np.broadcast_arrays(np.asarray(u, dtype=float), np.asarray(v, dtype=float))
        w = fa * v + fb * u
        n = np.rint(w / two_l)
        ok = (np.abs(u) < L) & (np.abs(v) < L) & (np.abs(w - two_l * n) < L)
        ok &= (n >= ns.start) & (n < ns.stop)
        return np.where(ok, n - n0, -1).astype(np.int64)

    inv_2l = 1.0 / two_l

    def fused(u, v):
        u, v = np.broadcast_arrays(np.asarray(u, dtype=float), np.asarray(v, dtype=float))
        w = fb * u
        w += fa * v
        n = w * inv_2l
        # round half to even by the 1.5 * 2^52 trick; exact for |n| < 2^51
        n += _ROUND_MAGIC
        n -= _ROUND_MAGIC
        val = n * two_l
        np.subtract(w, val, out=val)
        ok = np.abs(val) < L
        ok &= np.maximum(np.abs(u), np.abs(v)) < L
        pos = n.astype(np.int64)
        pos -= n0
        bad = ~ok
        pos[bad] = -1
        val[bad] = np.nan
        return pos, val

    def phi_all(u, v, pos):
        return fa * v + fb * u - two_l * (np.asarray(pos) + n0)

    def solve_all(pos, v, target):
        return (target - fa * v + two_l * (np.asarray(pos) + n0)) / fb

    def step(u, v):
        if not (-L < u < L and -L < v < L):
            return -1, math.nan
        w = fa * v + fb * u
        n = round(w / two_l)
        x = w - two_l * n
        if not -L < x < L or n < ns.start or n >= ns.stop:
            return -1, math.nan
        return n - n0, x

    return PiecewiseMap(
        half_width=L,
        branches=tuple(make(n) for n in ns),
        alpha=1.0,
        Y=3,
        name=f"linear-example:{a},{b},{L:g}",
        declared_A=float(abs(b)),
        declared_M=float(abs(a)),
        params={"model": "linear", "a": a, "b": b, "L": L},
        locate_fn=locate,
        phi_fn=phi_all,
        solve_fn=solve_all,
        step_fn=step,
        fused_fn=fused,
    )


def linear_system(a: int, b: int, L: float = 1.0) -> InducedSystem:
    return induce(linear_example(a, b, L), abs(b))


def branch_multiplicity(a: int, b: int, L: float = 1.0, samples: int = 10_000, seed: int = 0) -> int:
    """Number of branches n whose image ``T_n(Omega_{n,a})`` contains a point.

    Sampled at ``samples`` uniform interior points of Omega; the count must
    be the same at every sample.
    """
    sys = linear_system(a, b, L)
    m = sys.map
    rng = np.random.default_rng(seed)
    gL = sys.gamma * sys.L
    X = rng.uniform(-sys.L, sys.L, samples)
    Y = rng.uniform(-gL, gL, samples)
    counts = np.zeros(samples, dtype=np.int64)
    for pos, br in enumerate(m.branches):
        x, y = sys.inverse(np.full(samples, pos), X, Y)
        counts += br.band.contains(x, y / sys.gamma, sys.L)
    values = np.unique(counts)
    if values.size != 1:
        raise ConsistencyError(f"branch multiplicity varies across samples: {values.tolist()}")
    return int(values[0])


class LinearPRNG:
    """Stateful stream ``X[t+2] = a X[t+1] + b X[t] - 2nL`` on ``]-L, L[``.

    Iterating yields ``X[2], X[3], ...``.  Values landing exactly on ``+-L``
    (a band boundary hit caused by rounding) are moved one ulp toward zero.
    """

    def __init__(self, a: int, b: int, L: float, seed: tuple[float, float]):
        self.a, self.b, self.L = _check_linear_params(a, b, L)
        x0, x1 = float(seed[0]), float(seed[1])
        if not (-self.L < x0 < self.L and -self.L < x1 < self.L):
            raise DomainError("seed components must lie in ]-L, L[")
        self._prev, self._cur = x0, x1
        self.perturbations = 0

    def clone(self, seed: tuple[float, float] | None = None) -> "LinearPRNG":
        out = LinearPRNG(self.a, self.b, self.L, seed if seed is not None else (self._prev, self._cur))
        return out

    def __iter__(self) -> Iterator[float]:
        return self

    def __next__(self) -> float:
        return float(self.take(1)[0])

    def take(self, n: int) -> np.ndarray:
        a, b, L = float(self.a), float(self.b), self.L
        two_l = 2.0 * L
        prev, cur = self._prev, self._cur
        out = np.empty(n)
        for t in range(n):
            w = a * cur + b * prev
            x = w - two_l * round(w / two_l)
            if not -L < x < L:
                x = math.nextafter(x, 0.0)
                self.perturbations += 1
                log.info("prng: boundary hit at step %d, perturbed to %r", t, x)
            out[t] = x
            prev, cur = cur, x
        self._prev, self._cur = prev, cur
        return out


def prng_stream(a: int, b: int, L: float, seed: tuple[float, float], n: int) -> np.ndarray:
    """``X[2] .. X[n+1]`` of the linear recursion started at ``seed``."""
    return LinearPRNG(a, b, L, seed).take(n)
