"""Covariances ``Cov(F(X_k), H(X_0))`` under the invariant law, two ways.

* orbit route: time averages along one long orbit, with a block bootstrap
  for the standard error;
* operator route: push the signed density ``(Tr H) h*`` forward through the
  Ulam matrix and integrate against ``Tr F``.

Observables act on the X coordinate only: ``Tr F (x, y) = F(x)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DomainError, InsufficientDataError, SamplingError
from .mapcore import x_series
from .ulam import Grid, UlamOperator

__all__ = [
    "Observable",
    "observable",
    "CovarianceSeries",
    "DecayFit",
    "EnvelopeReport",
    "sample_stationary",
    "covariance_orbit",
    "covariance_operator",
    "fit_decay",
    "envelope_check",
]


@dataclass(frozen=True)
class Observable:
    name: str
    func: Callable[[np.ndarray], np.ndarray]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.asarray(self.func(x), dtype=float) * np.ones_like(x)

    def cell_average(self, grid: Grid, sub: int = 8) -> np.ndarray:
        """Average of ``Tr F`` over each cell (midpoint rule in x)."""
        off = (np.arange(sub) + 0.5) / sub
        xs = grid.omega[0] + (np.arange(grid.nx)[:, None] + off[None, :]) * grid.hx
        col = self(xs).mean(axis=1)
        return np.tile(col, grid.ny)


def observable(name: str, L: float = 1.0) -> Observable:
    """Built-in observables on ``[-L, L]``.

    ``id``, ``const``, ``cheb1`` (``x/L``), ``cheb2`` (``2 (x/L)^2 - 1``) and
    ``dyadic:j:i``, the indicator of the i-th of the ``2^j`` equal
    sub-intervals.
    """
    if name in ("id", "x"):
        return Observable("id", lambda x: x)
    if name in ("const", "one"):
        return Observable("const", lambda x: np.ones_like(x))
    if name == "cheb1":
        return Observable(name, lambda x: x / L)
    if name == "cheb2":
        return Observable(name, lambda x: 2.0 * (x / L) ** 2 - 1.0)
    if name.startswith("dyadic:"):
        try:
            _, j, i = name.split(":")
            j, i = int(j), int(i)
        except ValueError:
            raise DomainError(f"bad dyadic observable {name!r}; use dyadic:j:i") from None
        if j < 0 or not 0 <= i < 2**j:
            raise DomainError(f"dyadic index out of range in {name!r}")
        w = 2.0 * L / 2**j
        a, b = -L + i * w, -L + (i + 1) * w
        return Observable(name, lambda x: ((x >= a) & (x < b)).astype(float))
    raise DomainError(f"unknown observable {name!r}")


@dataclass(frozen=True)
class CovarianceSeries:
    ks: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    method: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("ks", "values", "stderr"):
            object.__setattr__(self, name, np.asarray(getattr(self, name)))
        if not (self.ks.shape == self.values.shape == self.stderr.shape):
            raise DomainError("ks, values and stderr must have the same length")

    def at(self, k: int) -> float:
        idx = np.flatnonzero(self.ks == k)
        if idx.size == 0:
            raise KeyError(k)
        return float(self.values[idx[0]])

    def rows(self):
        return list(zip(self.ks.tolist(), self.values.tolist(), self.stderr.tolist()))


# ---------------------------------------------------------------------------
# sampling and the orbit route


def sample_stationary(sys, h_star, grid: Grid, n: int, seed: int = 0) -> np.ndarray:
    """``n`` points from the piecewise constant density ``h_star``."""
    h = np.asarray(h_star, dtype=float)
    if h.size != grid.n or not np.all(np.isfinite(h)) or np.any(h < 0) or not h.sum() > 0:
        raise SamplingError("density must be finite, non-negative and non-zero")
    rng = np.random.default_rng(seed)
    cells = rng.choice(grid.n, size=n, p=h / h.sum())
    x = grid.omega[0] + (cells % grid.nx + rng.random(n)) * grid.hx
    y = grid.omega[2] + (cells // grid.nx + rng.random(n)) * grid.hy
    return np.column_stack([x, y])


def _block_sums(a: np.ndarray, block: int) -> np.ndarray:
    nb = a.size // block
    return a[: nb * block].reshape(nb, block).sum(axis=1)


def covariance_orbit(
    sys,
    F: Observable,
    H: Observable,
    kmax: int,
    orbit_len: Optional[int] = None,
    seed: int = 0,
    burn_in: int = 1000,
    block: Optional[int] = None,
    n_boot: int = 200,
    start=None,
) -> CovarianceSeries:
    """Time-average covariances for lags ``0..kmax`` along one orbit.

    With ``T`` products per lag, the estimate is
    ``mean(F(X[t+k]) H(X[t])) - mean(F(X[t])) mean(H(X[t]))`` over
    ``t < T``.  Standard errors come from resampling non-overlapping blocks
    (default length ``max(10 kmax, sqrt(T))``).  The start point is uniform
    on Omega unless given.
    """
    if kmax < 0:
        raise DomainError("kmax must be non-negative")
    orbit_len = 200 * max(kmax, 1) if orbit_len is None else int(orbit_len)
    if orbit_len < 200 * max(kmax, 1):
        raise DomainError("orbit_len must be at least 200 * kmax")
    rng = np.random.default_rng(seed)
    if start is None:
        x0, _, y0, _ = sys.omega
        start = (rng.uniform(x0, -x0), rng.uniform(y0, -y0))
    need = burn_in + orbit_len + kmax
    xs = x_series(sys.map, start[0], start[1] / sys.gamma, need)
    if xs.size < need:
        raise InsufficientDataError(f"orbit stopped after {xs.size} of {need} steps")
    xs = xs[burn_in:]
    T = orbit_len
    fx, hx = F(xs), H(xs)
    block = max(10 * max(kmax, 1), int(math.isqrt(T))) if block is None else int(block)
    nb = T // block
    if nb < 2:
        raise InsufficientDataError("orbit too short for two bootstrap blocks")
    sf, sh = _block_sums(fx[:T], block), _block_sums(hx[:T], block)
    used = nb * block
    counts = rng.multinomial(nb, np.full(nb, 1.0 / nb), size=n_boot)
    mean_f, mean_h = fx[:T].mean(), hx[:T].mean()
    bf, bh = counts @ sf / used, counts @ sh / used
    ks = np.arange(kmax + 1)
    vals, errs = np.empty(ks.size), np.empty(ks.size)
    for k in ks:
        prod = fx[k : k + T] * hx[:T]
        vals[k] = prod.mean() - mean_f * mean_h
        boot = counts @ _block_sums(prod, block) / used - bf * bh
        errs[k] = boot.std(ddof=1)
    return CovarianceSeries(ks, vals, errs, "orbit", {"orbit_len": T, "block": block, "burn_in": burn_in, "seed": seed})


# ---------------------------------------------------------------------------
# operator route


def covariance_operator(op: UlamOperator, h_star, F: Observable, H: Observable, kmax: int) -> CovarianceSeries:
    """Covariances from the Ulam matrix.

    ``rho_0 = (Tr H) h*`` is pushed forward ``k`` times and integrated
    against ``Tr F``; ``mu(Tr F) mu(Tr H)`` is subtracted.  The reported
    error is a conservative round-off bound, not a statistical one.
    """
    g = op.grid
    h = np.asarray(h_star, dtype=float)
    fa, ha = F.cell_average(g), H.cell_average(g)
    area = g.cell_area
    mu_f, mu_h = float(fa @ h) * area, float(ha @ h) * area
    rho = ha * h
    ks = np.arange(kmax + 1)
    vals, errs = np.empty(ks.size), np.empty(ks.size)
    A = op.action
    # each push-forward may add round-off of order eps times the initial scale
    scale = 8.0 * np.finfo(float).eps * (np.max(np.abs(fa)) * float(np.abs(rho).sum()) * area + abs(mu_f * mu_h))
    for k in ks:
        vals[k] = float(fa @ rho) * area - mu_f * mu_h
        errs[k] = scale * (k + 1)
        rho = A @ rho
    return CovarianceSeries(ks, vals, errs, "operator", {"cells": g.n, "samples_per_cell": op.samples_per_cell})


# ---------------------------------------------------------------------------
# decay fits


@dataclass(frozen=True)
class DecayFit:
    """``|Cov_k| ~ C_hat rho_hat^k`` fitted over ``window`` (inclusive lags)."""

    C_hat: float
    rho_hat: float
    window: tuple
    residual: float
    lags: tuple = ()

    def predict(self, k):
        k = np.asarray(k)
        if np.any(k < self.window[0]) or np.any(k > self.window[1]):
            raise DomainError(f"lag outside the fitted window {self.window}")
        return self.C_hat * self.rho_hat**k

    def to_dict(self) -> dict:
        return {
            "C_hat": self.C_hat,
            "rho_hat": self.rho_hat,
            "window": list(self.window),
            "residual": self.residual,
            "lags": list(self.lags),
        }


def fit_decay(series: CovarianceSeries, floor: float = 0.0, window: Optional[Sequence[int]] = None, min_lags: int = 4) -> DecayFit:
    """Least squares fit of ``log|Cov_k|`` against k.

    Only lags with ``|Cov_k|`` above ``max(floor, 3 stderr_k)`` inside the
    optional ``window`` enter the fit.
    """
    ks = series.ks.astype(float)
    v = np.abs(series.values)
    thr = np.maximum(floor, 3.0 * series.stderr)
    use = (v > thr) & (v > 0)
    if window is not None:
        use &= (series.ks >= window[0]) & (series.ks <= window[1])
    if use.sum() < min_lags:
        raise InsufficientDataError(f"only {int(use.sum())} lags above the noise floor; need {min_lags}")
    k, y = ks[use], np.log(v[use])
    slope, icpt = np.polyfit(k, y, 1)
    resid = float(np.sqrt(np.mean((icpt + slope * k - y) ** 2)))
    lags = tuple(int(q) for q in series.ks[use])
    return DecayFit(C_hat=float(math.exp(icpt)), rho_hat=float(math.exp(slope)), window=(lags[0], lags[-1]), residual=resid, lags=lags)


@dataclass(frozen=True)
class EnvelopeReport:
    C_empirical: float
    rho: float
    window: tuple
    cfh: Optional[float]
    holds_with_cfh: Optional[bool]

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def envelope_check(series: CovarianceSeries, fit, cfh: Optional[float] = None) -> EnvelopeReport:
    """Smallest C with ``|Cov_k| <= C rho^k`` on the fit window.

    ``fit`` is a :class:`DecayFit` or a bare rate ``rho``; with a bare rate
    every lag of the series is used.  When ``cfh`` is given, also report
    whether that constant suffices.
    """
    if isinstance(fit, DecayFit):
        rho, window = fit.rho_hat, fit.window
    else:
        rho, window = float(fit), (int(series.ks.min()), int(series.ks.max()))
    if not rho > 0:
        raise DomainError("rho must be positive")
    sel = (series.ks >= window[0]) & (series.ks <= window[1])
    k = series.ks[sel].astype(float)
    ratios = np.abs(series.values[sel]) / rho**k
    C = float(ratios.max()) if ratios.size else 0.0
    holds = None if cfh is None else bool(np.all(np.abs(series.values[sel]) <= cfh * rho**k))
    return EnvelopeReport(C_empirical=C, rho=rho, window=window, cfh=cfh, holds_with_cfh=holds)
