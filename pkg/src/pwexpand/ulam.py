"""Ulam discretization of the transfer operator on Omega.

Omega is cut into ``nx * ny`` equal rectangles.  Row ``i`` of the matrix
holds the fractions of stratified random points of cell ``i`` that ``T``
sends to each cell, so ``P[i, j] ~ m(B_i & T^-1 B_j) / m(B_i)``.

Densities are vectors of cell values (per unit area).  Because all cells
have the same area, pushing a density forward is ``h' = P.T @ h``; in
row-vector form ``h'^T = h^T P``.  Every function here uses that action.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property, reduce
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sla
from scipy.sparse.csgraph import breadth_first_order, connected_components

from .errors import ConvergenceError, DegenerateCellError, DomainError, GridSizeError, NumericError

log = logging.getLogger(__name__)

__all__ = [
    "MAX_CELLS",
    "Grid",
    "UlamOperator",
    "SpectralReport",
    "MixingComponent",
    "Density1D",
    "build_grid",
    "assemble",
    "stationary_density",
    "stationary_residual",
    "peripheral_spectrum",
    "mixing_components",
    "marginal_x",
    "marginal_y_rescaled",
    "marginal_consistency",
    "push_forward",
    "l1_distance",
]

MAX_CELLS = 1 << 20
BLOCK_POINTS = 1 << 18
DENSE_LIMIT = 2500


@dataclass(frozen=True)
class Grid:
    nx: int
    ny: int
    omega: tuple  # (x0, x1, y0, y1)

    @property
    def n(self) -> int:
        return self.nx * self.ny

    @property
    def hx(self) -> float:
        return (self.omega[1] - self.omega[0]) / self.nx

    @property
    def hy(self) -> float:
        return (self.omega[3] - self.omega[2]) / self.ny

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    @property
    def area(self) -> float:
        return (self.omega[1] - self.omega[0]) * (self.omega[3] - self.omega[2])

    @property
    def x_edges(self) -> np.ndarray:
        return np.linspace(self.omega[0], self.omega[1], self.nx + 1)

    @property
    def y_edges(self) -> np.ndarray:
        return np.linspace(self.omega[2], self.omega[3], self.ny + 1)

    @property
    def x_centers(self) -> np.ndarray:
        return self.omega[0] + (np.arange(self.nx) + 0.5) * self.hx

    @property
    def y_centers(self) -> np.ndarray:
        return self.omega[2] + (np.arange(self.ny) + 0.5) * self.hy

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell centres in flat (row-major, x fastest) order."""
        X, Y = np.meshgrid(self.x_centers, self.y_centers)
        return X.ravel(), Y.ravel()

    def cell_index(self, x, y) -> np.ndarray:
        """Flat index of the cell containing each point (edges clamp inward)."""
        tx = np.asarray(x, dtype=float) - self.omega[0]
        tx *= 1.0 / self.hx
        ty = np.asarray(y, dtype=float) - self.omega[2]
        ty *= 1.0 / self.hy
        # truncation equals floor here: after clipping at 0 the values are >= 0
        np.clip(tx, 0.0, self.nx - 1, out=tx)
        np.clip(ty, 0.0, self.ny - 1, out=ty)
        idx = ty.astype(np.int64)
        idx *= self.nx
        idx += tx.astype(np.int64)
        return idx

    def as_image(self, values) -> np.ndarray:
        """Reshape a flat cell vector to ``(ny, nx)``."""
        return np.asarray(values).reshape(self.ny, self.nx)

    def project(self, func, sub: int = 4) -> np.ndarray:
        """Cell averages of ``func(x, y)`` by the ``sub x sub`` midpoint rule."""
        off = (np.arange(sub) + 0.5) / sub
        xs = self.omega[0] + (np.arange(self.nx)[:, None] + off[None, :]).ravel() * self.hx
        ys = self.omega[2] + (np.arange(self.ny)[:, None] + off[None, :]).ravel() * self.hy
        X, Y = np.meshgrid(xs, ys)
        vals = np.asarray(func(X, Y), dtype=float) * np.ones_like(X)
        return vals.reshape(self.ny, sub, self.nx, sub).mean(axis=(1, 3)).ravel()

    def integrate(self, values) -> float:
        return float(np.sum(values) * self.cell_area)


def build_grid(sys, nx: int, ny: int, max_cells: int = MAX_CELLS) -> Grid:
    """Uniform grid on ``sys.omega``."""
    if int(nx) != nx or int(ny) != ny or nx < 2 or ny < 2:
        raise DomainError("nx and ny must be integers >= 2")
    if nx * ny > max_cells:
        raise GridSizeError(f"{nx}x{ny} exceeds the limit of {max_cells} cells")
    return Grid(int(nx), int(ny), tuple(float(c) for c in sys.omega))


# ---------------------------------------------------------------------------
# assembly


def _strata(spc: int) -> tuple[int, int]:
    """Sub-grid ``(mx, my)`` with ``mx * my = spc`` as square as possible."""
    mx = int(math.isqrt(spc))
    while spc % mx:
        mx -= 1
    return spc // mx, mx


@dataclass(frozen=True, eq=False)
class UlamOperator:
    grid: Grid
    matrix: sp.csr_matrix  # row-stochastic
    samples_per_cell: int
    rng_seed: int
    dead: np.ndarray = field(repr=False)  # per-row count of points without image

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def dead_fraction(self) -> float:
        return float(self.dead.sum()) / (self.n * self.samples_per_cell)

    @cached_property
    def action(self) -> sp.csr_matrix:
        """``P.T`` in CSR form: the density action."""
        return self.matrix.T.tocsr()

    def apply(self, h) -> np.ndarray:
        return self.action @ np.asarray(h, dtype=float)

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=1)).ravel()

    def triplets(self):
        c = self.matrix.tocoo()
        return c.row, c.col, c.data


def assemble(sys, grid: Grid, samples_per_cell: int = 256, seed: int = 0) -> UlamOperator:
    """Stratified Monte-Carlo Ulam matrix.

    Each cell is split into ``mx * my = samples_per_cell`` sub-cells with one
    uniform point each.  Cells are handled in blocks; the block starting at
    cell ``c`` draws from ``default_rng([seed, c])``, so the result depends
    only on ``seed`` and ``samples_per_cell``.  Points without an image, or
    whose image leaves Omega, are dropped and each row is renormalised by
    its defined count.
    """
    spc = int(samples_per_cell)
    if spc < 16:
        raise DomainError("samples_per_cell must be at least 16")
    mx, my = _strata(spc)
    N, nx = grid.n, grid.nx
    x0, _, y0, _ = grid.omega
    hx, hy = grid.hx, grid.hy
    tol = 1e-12 * max(grid.omega[1] - x0, grid.omega[3] - y0)
    lo_x, hi_x, lo_y, hi_y = x0 - tol, grid.omega[1] + tol, y0 - tol, grid.omega[3] + tol
    sub_x = np.tile(np.arange(mx, dtype=float), my)
    sub_y = np.repeat(np.arange(my, dtype=float), mx)
    cells_per_block = max(1, BLOCK_POINTS // spc)
    chunk = min(spc, BLOCK_POINTS)

    rows, cols, vals = [], [], []
    dead = np.zeros(N, dtype=np.int64)
    for c0 in range(0, N, cells_per_block):
        cells = np.arange(c0, min(N, c0 + cells_per_block))
        nc = cells.size
        rng = np.random.default_rng([seed, c0])
        acc = {}
        for s0 in range(0, spc, chunk):
            k = min(chunk, spc - s0)
            ox = (cells % nx).astype(float)[:, None]
            oy = (cells // nx).astype(float)[:, None]
            x = x0 + (ox + (sub_x[s0 : s0 + k] + rng.random((nc, k))) / mx) * hx
            y = y0 + (oy + (sub_y[s0 : s0 + k] + rng.random((nc, k))) / my) * hy
            X, Y, pos = sys.transform(x.ravel(), y.ravel())
            ok = pos >= 0
            # images leaving Omega (a model violating its range) count as undefined
            ok &= (X >= lo_x) & (X <= hi_x) & (Y >= lo_y) & (Y <= hi_y)
            local = np.repeat(np.arange(nc), k)
            if not ok.all():
                dead[c0 : c0 + nc] += np.bincount(local[~ok], minlength=nc)
                local, X, Y = local[ok], X[ok], Y[ok]
            key = local * N + grid.cell_index(X, Y)
            if nc * N <= 4 * key.size:
                cnt = np.bincount(key, minlength=nc * N)
                nz = np.flatnonzero(cnt)
                u_key, u_cnt = nz, cnt[nz]
            else:
                u_key, u_cnt = np.unique(key, return_counts=True)
            if nc == 1 and spc > chunk:
                for kk, cc in zip(u_key.tolist(), u_cnt.tolist()):
                    acc[kk] = acc.get(kk, 0) + cc
            else:
                rows.append(c0 + u_key // N)
                cols.append(u_key % N)
                vals.append(u_cnt)
        if acc:
            keys = np.fromiter(acc.keys(), dtype=np.int64, count=len(acc))
            rows.append(c0 + keys // N)
            cols.append(keys % N)
            vals.append(np.fromiter(acc.values(), dtype=np.int64, count=len(acc)))

    alive = spc - dead
    if np.any(alive == 0):
        bad = np.flatnonzero(alive == 0)
        raise DegenerateCellError(f"{bad.size} cells have no defined image (first: {int(bad[0])})")
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    v = np.concatenate(vals).astype(float) / alive[r]
    P = sp.csr_matrix((v, (r, c)), shape=(N, N))
    P.sum_duplicates()
    frac = dead.sum() / (N * spc)
    if frac > 1e-3:
        log.warning("%.3g of the sample points had no image", frac)
    return UlamOperator(grid=grid, matrix=P, samples_per_cell=spc, rng_seed=int(seed), dead=dead)


# ---------------------------------------------------------------------------
# densities


def _normalize(h: np.ndarray, grid: Grid) -> np.ndarray:
    total = h.sum() * grid.cell_area
    if not total > 0:
        raise NumericError("density has no mass")
    return h / total


def l1_distance(h1, h2, grid: Grid) -> float:
    return float(np.sum(np.abs(np.asarray(h1) - np.asarray(h2))) * grid.cell_area)


def stationary_residual(op: UlamOperator, h) -> float:
    """``|h P - h|_1`` over Omega."""
    return l1_distance(op.apply(h), h, op.grid)


def push_forward(op: UlamOperator, h, k: int = 1) -> np.ndarray:
    """``k`` applications of the density action."""
    if k < 0:
        raise DomainError("k must be non-negative")
    out = np.array(h, dtype=float, copy=True)
    A = op.action
    for _ in range(k):
        out = A @ out
    return out


def stationary_density(op: UlamOperator, tol: float = 1e-10, max_iter: int = 20_000, block: int = 64) -> np.ndarray:
    """Invariant density by restarted Cesaro averaging.

    Starting from the uniform density, average ``block`` successive
    push-forwards, restart from that average, and stop once the L1
    stationarity residual is below ``tol``.  Averaging damps the non-real
    peripheral eigenvalues that plain power iteration would cycle on.
    """
    g = op.grid
    A = op.action
    h = np.full(g.n, 1.0 / g.area)
    it = 0
    res = stationary_residual(op, h)
    while res >= tol:
        if it >= max_iter:
            raise ConvergenceError(f"no stationary density after {it} iterations", res)
        acc = np.zeros_like(h)
        cur = h
        for _ in range(block):
            acc += cur
            cur = A @ cur
        it += block
        h = _normalize(acc, g)
        res = stationary_residual(op, h)
    return _normalize(np.maximum(h, 0.0), g)


# ---------------------------------------------------------------------------
# spectrum and mixing components


@dataclass(frozen=True)
class MixingComponent:
    """One recurrent class of the transition graph on the support of h*.

    ``classes[l]`` are the cells of ``W_{j,l}``; the map sends class ``l``
    into class ``l + 1 (mod period)``.
    """

    index: int
    period: int
    classes: tuple

    @property
    def cells(self) -> np.ndarray:
        return np.concatenate(self.classes)


@dataclass(frozen=True)
class SpectralReport:
    peripheral: np.ndarray
    eigenvalues: np.ndarray
    h_star: np.ndarray
    components: tuple
    gap: float
    residual: float  # |h* P - h*|_1

    @property
    def r(self) -> int:
        return int(self.peripheral.size)

    def to_dict(self) -> dict:
        return {
            "r": self.r,
            "peripheral": [[float(z.real), float(z.imag)] for z in self.peripheral],
            "eigenvalues": [[float(z.real), float(z.imag)] for z in self.eigenvalues],
            "gap": self.gap,
            "stationarity_residual": self.residual,
            "components": [
                {"index": c.index, "period": c.period, "class_sizes": [int(len(k)) for k in c.classes]}
                for c in self.components
            ],
        }


def _eigenvalues(op: UlamOperator, count: int) -> np.ndarray:
    n = op.n
    if n <= DENSE_LIMIT:
        w = np.linalg.eigvals(op.action.toarray())
    else:
        k = min(n - 2, max(count, 8))
        v0 = np.full(n, 1.0 / math.sqrt(n))
        try:
            w = sla.eigs(op.action, k=k, which="LM", v0=v0, tol=1e-10, maxiter=50 * n, return_eigenvectors=False)
        except sla.ArpackError as exc:
            raise NumericError(f"eigensolver failed: {exc}") from exc
    return w[np.argsort(-np.abs(w), kind="stable")]


def mixing_components(op: UlamOperator, h_star, support_tol: float = 1e-9) -> tuple:
    """Recurrent classes and their cyclic sub-classes on ``supp h*``.

    The cyclic classes come from BFS depths: the period is the gcd of
    ``depth[i] + 1 - depth[j]`` over edges ``i -> j`` of the class.
    """
    h = np.asarray(h_star)
    S = np.flatnonzero(h > support_tol * h.max())
    sub = op.matrix[S][:, S].tocsr()
    sub.eliminate_zeros()
    ncomp, labels = connected_components(sub, directed=True, connection="strong")
    # a class is closed when no edge leaves it
    coo = sub.tocoo()
    leaving = labels[coo.row] != labels[coo.col]
    open_ = np.zeros(ncomp, dtype=bool)
    open_[labels[coo.row[leaving]]] = True
    out = []
    for comp in np.flatnonzero(~open_):
        members = np.flatnonzero(labels == comp)
        g = sub[members][:, members].tocsr()
        order, pred = breadth_first_order(g, 0, directed=True, return_predecessors=True)
        depth = np.full(members.size, -1, dtype=np.int64)
        depth[0] = 0
        for node in order[1:]:
            depth[node] = depth[pred[node]] + 1
        gc = g.tocoo()
        diffs = np.abs(depth[gc.row] + 1 - depth[gc.col])
        period = int(reduce(math.gcd, np.unique(diffs).tolist(), 0)) or 1
        classes = tuple(S[members[depth % period == l]] for l in range(period))
        out.append(MixingComponent(index=len(out), period=period, classes=classes))
    return tuple(out)


def peripheral_spectrum(
    op: UlamOperator, delta: float = 0.05, max_count: int = 12, h_star: Optional[np.ndarray] = None
) -> SpectralReport:
    """Eigenvalues of modulus ``>= 1 - delta`` and the gap below them."""
    if not 0 < delta < 0.5:
        raise DomainError("delta must lie in (0, 0.5)")
    w = _eigenvalues(op, max_count + 4)
    peri = w[np.abs(w) >= 1.0 - delta][:max_count]
    rest = w[np.abs(w) < 1.0 - delta]
    gap = float(np.abs(rest[0])) if rest.size else math.nan
    if not np.any(np.abs(peri - 1.0) < 1e-6):
        raise NumericError("eigenvalue 1 missing from the computed spectrum")
    h = stationary_density(op) if h_star is None else np.asarray(h_star, dtype=float)
    return SpectralReport(
        peripheral=peri,
        eigenvalues=w,
        h_star=h,
        components=mixing_components(op, h),
        gap=gap,
        residual=stationary_residual(op, h),
    )


# ---------------------------------------------------------------------------
# marginals


@dataclass(frozen=True)
class Density1D:
    edges: np.ndarray
    values: np.ndarray

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    def integral(self) -> float:
        return float(np.sum(self.values * self.widths))

    def l1_distance(self, other: "Density1D") -> float:
        """Exact L1 distance between two step functions on the same interval."""
        e = np.union1d(self.edges, other.edges)
        mid = 0.5 * (e[1:] + e[:-1])
        a = self.values[np.clip(np.searchsorted(self.edges, mid) - 1, 0, self.values.size - 1)]
        b = other.values[np.clip(np.searchsorted(other.edges, mid) - 1, 0, other.values.size - 1)]
        return float(np.sum(np.abs(a - b) * np.diff(e)))


def marginal_x(h, grid: Grid) -> Density1D:
    """``x -> integral of h(x, y) dy``: the density of X_t."""
    img = grid.as_image(h)
    return Density1D(grid.x_edges, img.sum(axis=0) * grid.hy)


def marginal_y_rescaled(h, grid: Grid, gamma: float) -> Density1D:
    """``x -> gamma * integral of h(u, gamma x) du``: the density of X_{t+1}."""
    img = grid.as_image(h)
    g_y = img.sum(axis=1) * grid.hx
    return Density1D(grid.y_edges / gamma, gamma * g_y)


def marginal_consistency(h, grid: Grid, gamma: Optional[float] = None) -> float:
    """L1 distance between the two marginal expressions of X.

    ``gamma`` defaults to the aspect ratio of Omega.
    """
    if gamma is None:
        gamma = (grid.omega[3] - grid.omega[2]) / (grid.omega[1] - grid.omega[0])
    return marginal_x(h, grid).l1_distance(marginal_y_rescaled(h, grid, gamma))
