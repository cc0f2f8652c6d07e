"""Expansion constants and sampled checks of the standing hypotheses.

The constants follow from a lower bound ``A`` on ``|d phi_k / du|`` and an
upper bound ``M`` on ``|d phi_k / dv|``:

    s     = ((2A + M^2 - M sqrt(M^2 + 4A)) / 2) ** -1/2
    gamma = 1 / sqrt(A)
    eta   = s^alpha + 8 s Y / (pi (1 - s))

Every check samples; none of them is a proof.  Checks never raise on
failure, they return a :class:`CheckResult` with the evidence.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .errors import DomainError, HypothesisViolation, NumericError
from .mapcore import InducedSystem, PiecewiseMap, induce

__all__ = [
    "ExpansionConstants",
    "CheckResult",
    "HypothesisReport",
    "DerivativeBounds",
    "AdmissibilityResult",
    "LINEAR_S",
    "expansion_constants",
    "derivative_bounds",
    "holder_ratio",
    "check_linear_admissibility",
    "check_partition",
    "check_range",
    "check_geometry",
    "check_expansion_empirical",
    "hypothesis_report",
]

DECLARED_TOL = 1e-9
EXPANSION_RTOL = 1e-9


@dataclass(frozen=True)
class ExpansionConstants:
    A: float
    M: float
    s: float
    gamma: float
    eta: float
    Y: int
    alpha: float

    @property
    def s_ok(self) -> bool:
        return self.s < 1.0

    @property
    def eta_ok(self) -> bool:
        return self.eta < 1.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(s_ok=self.s_ok, eta_ok=self.eta_ok)
        return d


def expansion_constants(A: float, M: float, alpha: float = 1.0, Y: int = 1) -> ExpansionConstants:
    A, M, alpha = float(A), float(M), float(alpha)
    if not A > 1:
        raise HypothesisViolation(f"A={A} must exceed 1")
    if M < 0:
        raise DomainError("M must be non-negative")
    if not 0 < alpha <= 1:
        raise DomainError("alpha must lie in (0, 1]")
    if int(Y) != Y or Y < 1:
        raise DomainError("Y must be a positive integer")
    if not M < A - 1:
        raise HypothesisViolation(f"M={M} must be below A-1={A - 1}")
    inv_s2 = (2.0 * A + M * M - M * math.sqrt(M * M + 4.0 * A)) / 2.0
    s = inv_s2 ** -0.5
    eta = s**alpha + 8.0 * s * Y / (math.pi * (1.0 - s)) if s < 1 else math.inf
    return ExpansionConstants(A=A, M=M, s=s, gamma=1.0 / math.sqrt(A), eta=eta, Y=int(Y), alpha=alpha)


@dataclass
class CheckResult:
    name: str
    passed: bool
    evidence: dict = field(default_factory=dict)
    samples: int = 0

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed), "samples": int(self.samples), "evidence": _jsonable(self.evidence)}


@dataclass
class HypothesisReport:
    model: str
    constants: Optional[ExpansionConstants]
    checks: list

    @property
    def passed(self) -> bool:
        return bool(self.checks) and all(c.passed for c in self.checks)

    def check(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "passed": self.passed,
            "constants": None if self.constants is None else self.constants.to_dict(),
            "checks": [c.to_dict() for c in self.checks],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), indent=2, **kw)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    return x


# ---------------------------------------------------------------------------
# sampling helpers


def _closure_points(br, L: float, n: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Points of the closed band (within the square), roughly uniform in u."""
    lo_u, hi_u = br.support(L)
    if not math.isfinite(lo_u):
        return np.empty(0), np.empty(0)
    u = rng.uniform(lo_u, hi_u, 4 * n)
    lo, hi = br.band.vertical_interval(u, L)
    keep = lo <= hi
    u, lo, hi = u[keep][:n], lo[keep][:n], hi[keep][:n]
    v = lo + rng.random(u.size) * (hi - lo)
    return u, v


def _halo_points(br, L: float, n: int, rng):
    """Closure points displaced by a uniform vector of the open halo disk."""
    u, v = _closure_points(br, L, n, rng)
    r = br.halo * np.sqrt(rng.random(u.size)) * (1.0 - 1e-12)
    t = rng.uniform(0.0, 2.0 * math.pi, u.size)
    return u + r * np.cos(t), v + r * np.sin(t)


# ---------------------------------------------------------------------------
# derivative bounds


@dataclass(frozen=True)
class DerivativeBounds:
    """Sampled ``inf |d phi/du|`` and ``sup |d phi/dv|`` over the halos."""

    A: float
    M: float
    samples: int
    declared_A: Optional[float] = None
    declared_M: Optional[float] = None

    def __iter__(self):
        return iter((self.A, self.M))

    @property
    def consistent(self) -> bool:
        ok = True
        if self.declared_A is not None:
            ok &= self.A >= self.declared_A - DECLARED_TOL
        if self.declared_M is not None:
            ok &= self.M <= self.declared_M + DECLARED_TOL
        return bool(ok)


def derivative_bounds(m: PiecewiseMap, samples: int = 10_000, seed: int = 0) -> DerivativeBounds:
    """Bounds from ``samples`` halo points per branch."""
    if samples < 1000:
        raise DomainError("derivative_bounds needs at least 1000 samples per branch")
    rng = np.random.default_rng(seed)
    a_min, m_max, total = math.inf, 0.0, 0
    for br in m.branches:
        u, v = _halo_points(br, m.L, samples, rng)
        if u.size == 0:
            continue
        du, dv = br.gradient(u, v, m.L)
        if not (np.all(np.isfinite(du)) and np.all(np.isfinite(dv))):
            raise NumericError(f"non-finite gradient on branch {br.id}")
        a_min = min(a_min, float(np.min(np.abs(du))))
        m_max = max(m_max, float(np.max(np.abs(dv))))
        total += u.size
    if total == 0:
        raise NumericError("no branch has a non-empty band")
    return DerivativeBounds(A=a_min, M=m_max, samples=total, declared_A=m.declared_A, declared_M=m.declared_M)


def holder_ratio(m: PiecewiseMap, pairs: int = 2000, seed: int = 0) -> float:
    """Largest sampled ``|grad phi(p) - grad phi(q)| / |p - q|^alpha`` within a branch halo.

    Reported only; no bound is asserted.
    """
    rng = np.random.default_rng(seed)
    per = max(2, pairs // len(m.branches))
    worst = 0.0
    for br in m.branches:
        u, v = _halo_points(br, m.L, per, rng)
        if u.size < 2:
            continue
        r = br.halo * 0.5 * rng.random(u.size)
        t = rng.uniform(0.0, 2.0 * math.pi, u.size)
        u2, v2 = u + r * np.cos(t), v + r * np.sin(t)
        g1 = np.column_stack(br.gradient(u, v, m.L))
        g2 = np.column_stack(br.gradient(u2, v2, m.L))
        d = np.hypot(u - u2, v - v2)
        ok = d > 0
        if np.any(ok):
            worst = max(worst, float(np.max(np.linalg.norm(g1 - g2, axis=1)[ok] / d[ok] ** m.alpha)))
    return worst


# ---------------------------------------------------------------------------
# linear admissibility

LINEAR_S = (
    1.0
    + 48.0 / math.pi
    + 288.0 / math.pi**2
    + (4.0 / math.pi) * (1.0 + 12.0 / math.pi) * math.sqrt(6.0 * math.pi + 36.0)
)


@dataclass(frozen=True)
class AdmissibilityResult:
    S: float
    bound: float
    passed: bool

    def to_dict(self) -> dict:
        return {"S": self.S, "bound": self.bound, "pass": self.passed}


def check_linear_admissibility(a: int, b: int) -> AdmissibilityResult:
    """``|a| < (|b| - S) / sqrt(S)`` for the piecewise affine example."""
    if b == 0:
        raise DomainError("b must be non-zero")
    bound = (abs(b) - LINEAR_S) / math.sqrt(LINEAR_S)
    return AdmissibilityResult(S=LINEAR_S, bound=bound, passed=bool(abs(a) < bound))


# ---------------------------------------------------------------------------
# partition, range, geometry


def check_partition(m: PiecewiseMap, samples: int = 100_000, seed: int = 0, null_tol: float = 1e-3) -> CheckResult:
    """No point in two bands; the uncovered fraction is below ``null_tol``."""
    rng = np.random.default_rng(seed)
    u = rng.uniform(-m.L, m.L, samples)
    v = rng.uniform(-m.L, m.L, samples)
    counts = m.membership_counts(u, v)
    overlap = int(np.sum(counts > 1))
    uncovered = float(np.mean(counts == 0))
    fast = m.locate(u, v)
    agree = bool(np.all((fast >= 0) == (counts == 1)))
    passed = overlap == 0 and uncovered < null_tol and agree
    return CheckResult(
        "partition",
        passed,
        {"overlaps": overlap, "uncovered_fraction": uncovered, "null_tol": null_tol, "locate_agrees": agree},
        samples,
    )


def check_range(m: PiecewiseMap, samples: int = 100_000, seed: int = 1) -> CheckResult:
    rng = np.random.default_rng(seed)
    u = rng.uniform(-m.L, m.L, samples)
    v = rng.uniform(-m.L, m.L, samples)
    pos, val = m.map_points(u, v)
    ok = pos >= 0
    worst = float(np.max(np.abs(val[ok]))) if np.any(ok) else 0.0
    return CheckResult("range", worst <= m.L, {"max_abs_phi": worst, "L": m.L}, int(ok.sum()))


_GEOM_COLUMNS = 96
_GEOM_STEPS = 16


def _band_columns(br, L: float):
    lo_u, hi_u = br.support(L)
    us = np.linspace(lo_u, hi_u, _GEOM_COLUMNS)
    lo, hi = br.band.vertical_interval(us, L)
    keep = lo <= hi
    us, lo, hi = us[keep], lo[keep], hi[keep]
    du = us[1] - us[0] if us.size > 1 else 0.0
    jump = 0.0
    if us.size > 1:
        jump = float(max(np.max(np.abs(np.diff(lo))), np.max(np.abs(np.diff(hi)))))
    return us, lo, hi, math.hypot(du / 2.0, jump)


def _dist_to_columns(u, v, us, lo, hi):
    du = u[:, None] - us[None, :]
    dv = np.maximum(lo[None, :] - v[:, None], 0.0) + np.maximum(v[:, None] - hi[None, :], 0.0)
    return np.sqrt(np.min(du * du + dv * dv, axis=1))


def check_geometry(m: PiecewiseMap, samples: int = 64, seed: int = 0) -> CheckResult:
    """Horizontal segments between halo points stay in the halo.

    The distance to a band is measured against vertical slices of the band
    on a u-grid over its support; intermediate points get a slack equal to
    the worst error of that discretization.
    """
    rng = np.random.default_rng(seed)
    failures, total, worst = [], 0, -math.inf
    for br in m.branches:
        if not math.isfinite(br.support(m.L)[0]):
            continue
        us, lo, hi, slack = _band_columns(br, m.L)
        if us.size == 0:
            continue
        eps = br.halo
        u1, v1 = _halo_points(br, m.L, samples, rng)
        d1 = _dist_to_columns(u1, v1, us, lo, hi)
        u1, v1 = u1[d1 < eps], v1[d1 < eps]
        u2 = rng.uniform(us[0] - eps, us[-1] + eps, u1.size)
        d2 = _dist_to_columns(u2, v1, us, lo, hi)
        keep = d2 < eps
        u1, u2, v1 = u1[keep], u2[keep], v1[keep]
        if u1.size == 0:
            continue
        t = np.linspace(0.0, 1.0, _GEOM_STEPS + 2)[1:-1]
        uu = (u1[:, None] + t[None, :] * (u2 - u1)[:, None]).ravel()
        vv = np.repeat(v1, t.size)
        d = _dist_to_columns(uu, vv, us, lo, hi).reshape(u1.size, t.size)
        excess = np.max(d, axis=1) - (eps + slack)
        worst = max(worst, float(np.max(excess)))
        total += u1.size
        bad = np.flatnonzero(excess > 0)
        if bad.size and len(failures) < 5:
            i = int(bad[0])
            failures.append({"branch": br.id, "u1": u1[i], "u2": u2[i], "v": v1[i]})
    return CheckResult(
        "geometry",
        not failures and total > 0,
        {"pairs": total, "counterexamples": failures, "max_excess": worst},
        total,
    )


# ---------------------------------------------------------------------------
# expansion


def check_expansion_empirical(
    sys: InducedSystem, constants: ExpansionConstants, trials: int = 10_000, seed: int = 0
) -> CheckResult:
    """Sampled ``|T_k p - T_k p'| >= |p - p'| / s`` for pairs in one branch halo.

    ``p`` is drawn from a band, ``p'`` at unscaled distance below the halo
    radius, so the segment between them lies in the halo.  The comparison
    carries a relative slack of ``1e-9`` because the affine example attains
    equality.  Also reported: the largest inverse ratio
    ``|p - p'| / |T p - T p'|`` and the exponent ``e`` with ``ratio = s^e``.
    """
    if trials < 1000:
        raise DomainError("check_expansion_empirical needs at least 1000 trials")
    m = sys.map
    g = sys.gamma
    rng = np.random.default_rng(seed)
    live = [br for br in m.branches if math.isfinite(br.support(m.L)[0])]
    pick = rng.integers(0, len(live), trials)
    fwd_min, inv_max, bad, total = math.inf, 0.0, 0, 0
    for j in np.unique(pick):
        br = live[int(j)]
        n = int(np.sum(pick == j))
        u, v = _closure_points(br, m.L, n, rng)
        if u.size == 0:
            continue
        r = br.halo * rng.random(u.size) * (1.0 - 1e-12)
        r = np.maximum(r, 1e-9 * m.L)
        t = rng.uniform(0.0, 2.0 * math.pi, u.size)
        u2, v2 = u + r * np.cos(t), v + r * np.sin(t)
        # Omega coordinates and images under the extended branch
        x1, y1, x2, y2 = u, g * v, u2, g * v2
        X1, Y1 = v, g * br.phi(u, v)
        X2, Y2 = v2, g * br.phi(u2, v2)
        d = np.hypot(x1 - x2, y1 - y2)
        dT = np.hypot(X1 - X2, Y1 - Y2)
        ratio = dT / d
        bad += int(np.sum(ratio < (1.0 - EXPANSION_RTOL) / constants.s))
        fwd_min = min(fwd_min, float(np.min(ratio)))
        inv_max = max(inv_max, float(np.max(d / dT)))
        total += u.size
    exponent = math.log(inv_max) / math.log(constants.s) if 0 < inv_max else math.inf
    evidence = {
        "min_forward_ratio": fwd_min,
        "one_over_s": 1.0 / constants.s,
        "counterexamples": bad,
        "max_inverse_ratio": inv_max,
        "inverse_within_s": inv_max <= constants.s * (1.0 + EXPANSION_RTOL),
        "inverse_within_s_squared": inv_max <= constants.s**2,
        "empirical_exponent": exponent,
    }
    return CheckResult("expansion", bad == 0 and total > 0, evidence, total)


# ---------------------------------------------------------------------------
# aggregate


def hypothesis_report(
    m: PiecewiseMap,
    samples: int = 10_000,
    trials: int = 10_000,
    partition_samples: int = 20_000,
    geometry_samples: int = 32,
    seed: int = 0,
    A: Optional[float] = None,
) -> HypothesisReport:
    """Run every check on ``m``.

    ``A``/``M`` are the declared bounds of the model when it has them (they
    must agree with the samples), otherwise the sampled ones.
    """
    checks = [check_partition(m, partition_samples, seed), check_range(m, partition_samples, seed + 1)]

    bounds = derivative_bounds(m, samples, seed)
    A_use = float(A) if A is not None else (m.declared_A if m.declared_A is not None else bounds.A)
    M_use = m.declared_M if m.declared_M is not None else bounds.M
    checks.append(
        CheckResult(
            "derivative bounds",
            bounds.consistent and bounds.A >= A_use - DECLARED_TOL and A_use > 1,
            {
                "A_sampled": bounds.A,
                "M_sampled": bounds.M,
                "A_used": A_use,
                "M_used": M_use,
                "holder_ratio": holder_ratio(m, seed=seed),
            },
            bounds.samples,
        )
    )
    checks.append(CheckResult("M < A-1", M_use < A_use - 1, {"M": M_use, "A_minus_1": A_use - 1}))

    constants = None
    if A_use > 1 and M_use < A_use - 1:
        constants = expansion_constants(A_use, M_use, m.alpha, m.Y)
        checks.append(CheckResult("s < 1", constants.s_ok, {"s": constants.s}))
        checks.append(CheckResult("eta < 1", constants.eta_ok, {"eta": constants.eta}))

    checks.append(check_geometry(m, geometry_samples, seed))

    if constants is not None and constants.s_ok:
        sys = induce(m, A_use)
        checks.append(check_expansion_empirical(sys, constants, trials, seed))

    if m.params.get("model") == "linear":
        adm = check_linear_admissibility(m.params["a"], m.params["b"])
        checks.append(CheckResult("linear admissibility", adm.passed, adm.to_dict()))

    return HypothesisReport(model=m.name, constants=constants, checks=checks)
