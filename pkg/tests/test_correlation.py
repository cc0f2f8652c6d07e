import math

import numpy as np
import pytest
from scipy.stats import chisquare

from pwexpand import DomainError, InsufficientDataError, SamplingError
from pwexpand.correlation import (
    CovarianceSeries,
    DecayFit,
    Observable,
    covariance_operator,
    covariance_orbit,
    envelope_check,
    fit_decay,
    observable,
    sample_stationary,
)
from pwexpand.ulam import build_grid

ID = observable("id")
CONST = observable("const")


def synthetic(values, stderr=None):
    values = np.asarray(values, dtype=float)
    ks = np.arange(values.size)
    return CovarianceSeries(ks, values, np.zeros_like(values) if stderr is None else stderr, "synthetic")


# -- observables ------------------------------------------------------------


def test_builtin_observables():
    x = np.array([-1.0, -0.5, 0.0, 0.5, 0.999])
    assert np.array_equal(ID(x), x)
    assert np.array_equal(CONST(x), np.ones(5))
    assert np.allclose(observable("cheb2", 2.0)(2 * x), 2 * x**2 - 1)
    assert np.array_equal(observable("dyadic:2:1")(x), [0, 1, 0, 0, 0])
    for bad in ("nope", "dyadic:1", "dyadic:2:4", "dyadic:-1:0"):
        with pytest.raises(DomainError):
            observable(bad)


def test_series_shape_validation():
    with pytest.raises(DomainError):
        CovarianceSeries(np.arange(3), np.zeros(2), np.zeros(3), "x")
    s = synthetic([1.0, 0.5])
    assert s.at(1) == 0.5 and s.rows() == [(0, 1.0, 0.0), (1, 0.5, 0.0)]
    with pytest.raises(KeyError):
        s.at(5)


# -- sampling ----------------------------------------------------------------


def test_sample_constant_density_uniform_cells(linear_sys):
    g = build_grid(linear_sys, 16, 8)
    pts = sample_stationary(linear_sys, np.full(g.n, 1.0 / g.area), g, 100_000, seed=1)
    counts = np.bincount(g.cell_index(pts[:, 0], pts[:, 1]), minlength=g.n)
    assert chisquare(counts).pvalue > 0.001


def test_sample_single_cell(linear_sys):
    g = build_grid(linear_sys, 16, 8)
    h = np.zeros(g.n)
    h[37] = 1.0 / g.cell_area
    pts = sample_stationary(linear_sys, h, g, 5000)
    assert np.all(g.cell_index(pts[:, 0], pts[:, 1]) == 37)


def test_sample_degenerate_density(linear_sys):
    g = build_grid(linear_sys, 4, 4)
    with pytest.raises(SamplingError):
        sample_stationary(linear_sys, np.zeros(g.n), g, 10)
    with pytest.raises(SamplingError):
        sample_stationary(linear_sys, -np.ones(g.n), g, 10)


def test_linear_stationary_samples_uniform_in_x(linear_fine):
    pts = sample_stationary(linear_fine.sys, linear_fine.h, linear_fine.grid, 100_000, seed=0)
    counts, _ = np.histogram(pts[:, 0], bins=32, range=(-1, 1))
    assert chisquare(counts).pvalue > 0.001


# -- orbit route ---------------------------------------------------------------


def test_orbit_variance_linear(linear_sys):
    s = covariance_orbit(linear_sys, ID, ID, 5, orbit_len=400_000, seed=3)
    assert s.method == "orbit" and s.values[0] >= 0
    assert abs(s.values[0] - 1 / 3) < 3 * s.stderr[0]


def test_orbit_constant_observable(linear_sys):
    s = covariance_orbit(linear_sys, CONST, ID, 5, orbit_len=100_000, seed=3)
    assert np.all(np.abs(s.values) <= 3 * s.stderr + 1e-15)


def test_orbit_symmetry_at_zero(nonlinear_sys):
    F, H = observable("cheb2"), ID
    a = covariance_orbit(nonlinear_sys, F, H, 0, orbit_len=100_000, seed=5)
    b = covariance_orbit(nonlinear_sys, H, F, 0, orbit_len=100_000, seed=5)
    assert abs(a.values[0] - b.values[0]) <= 1e-12


def test_burn_in_shift(linear_sys, nonlinear_sys):
    for sys in (linear_sys, nonlinear_sys):
        a = covariance_orbit(sys, ID, ID, 10, orbit_len=200_000, seed=6, burn_in=1000)
        b = covariance_orbit(sys, ID, ID, 10, orbit_len=200_000, seed=6, burn_in=2000)
        assert np.all(np.abs(a.values - b.values) < 3 * np.hypot(a.stderr, b.stderr))


def test_orbit_validation(linear_sys, nonlinear_sys):
    with pytest.raises(DomainError):
        covariance_orbit(linear_sys, ID, ID, 10, orbit_len=1000)
    with pytest.raises(DomainError):
        covariance_orbit(linear_sys, ID, ID, -1)
    # (0, 0.5) lies on a parabola of the nonlinear map
    with pytest.raises(InsufficientDataError):
        covariance_orbit(nonlinear_sys, ID, ID, 2, orbit_len=1000, start=(0.0, 0.5 / 12))


# -- operator route --------------------------------------------------------------


def test_operator_k0_is_direct_integral(linear_coarse_256):
    run = linear_coarse_256
    F, H = observable("cheb2"), observable("dyadic:2:3")
    s = covariance_operator(run.op, run.h, F, H, 4)
    g = run.grid
    fa, ha = F.cell_average(g), H.cell_average(g)
    direct = g.integrate(fa * ha * run.h) - g.integrate(fa * run.h) * g.integrate(ha * run.h)
    assert abs(s.values[0] - direct) < 1e-10


def test_operator_constant_observable(nonlinear_coarse_256):
    run = nonlinear_coarse_256
    s = covariance_operator(run.op, run.h, CONST, observable("cheb2"), 10)
    assert np.all(np.abs(s.values) < 1e-10)


def test_operator_symmetry_and_bilinearity(nonlinear_coarse_256):
    run = nonlinear_coarse_256
    F1, F2, H = ID, observable("cheb2"), observable("dyadic:1:0")
    a = covariance_operator(run.op, run.h, F1, H, 0).values[0]
    b = covariance_operator(run.op, run.h, H, F1, 0).values[0]
    assert abs(a - b) < 1e-15
    combo = Observable("combo", lambda x: 2.5 * F1(x) - 0.75 * F2(x))
    lhs = covariance_operator(run.op, run.h, combo, H, 8).values
    rhs = 2.5 * covariance_operator(run.op, run.h, F1, H, 8).values - 0.75 * covariance_operator(
        run.op, run.h, F2, H, 8
    ).values
    assert np.allclose(lhs, rhs, rtol=0, atol=1e-14)


@pytest.mark.parametrize("which", ["linear", "nonlinear"])
@pytest.mark.parametrize("pair", [("id", "id"), ("cheb2", "id"), ("dyadic:1:1", "cheb2")])
def test_orbit_and_operator_agree(which, pair, linear_coarse_256, nonlinear_coarse_256):
    run = linear_coarse_256 if which == "linear" else nonlinear_coarse_256
    F, H = observable(pair[0]), observable(pair[1])
    orb = covariance_orbit(run.sys, F, H, 10, orbit_len=2_000_000, seed=1)
    opr = covariance_operator(run.op, run.h, F, H, 10)
    z = np.abs(orb.values - opr.values) / np.hypot(orb.stderr, opr.stderr)
    assert np.all(z < 3), z


# -- decay fits -----------------------------------------------------------------


def test_fit_planted_exponentials():
    k = np.arange(15)
    f = fit_decay(synthetic(2 * 0.5**k))
    assert abs(f.C_hat - 2) < 1e-9 and abs(f.rho_hat - 0.5) < 1e-9
    assert f.window == (0, 14) and f.residual < 1e-12
    g = fit_decay(synthetic(2 * (-0.6) ** k))
    assert abs(g.C_hat - 2) < 1e-9 and abs(g.rho_hat - 0.6) < 1e-9


def test_fit_noisy_within_three_stderr():
    rng = np.random.default_rng(12)
    k = np.arange(12)
    sigma = 0.02
    clean = 2 * 0.5**k
    fit = fit_decay(synthetic(clean * (1 + sigma * rng.standard_normal(k.size)), sigma * clean))
    slope_se = sigma / math.sqrt(np.sum((k - k.mean()) ** 2))
    assert abs(math.log(fit.rho_hat) - math.log(0.5)) < 3 * slope_se


def test_fit_uses_only_lags_above_floor():
    k = np.arange(20)
    vals = np.where(k < 8, 0.7**k, 1e-17)
    f = fit_decay(synthetic(vals), floor=1e-12)
    assert f.lags == tuple(range(8)) and f.rho_hat == pytest.approx(0.7, rel=1e-9)
    f2 = fit_decay(synthetic(0.7**k), window=(3, 9))
    assert f2.window == (3, 9)
    with pytest.raises(DomainError):
        f2.predict(12)
    assert f2.predict(5) == pytest.approx(0.7**5, rel=1e-9)


def test_fit_insufficient_data():
    with pytest.raises(InsufficientDataError):
        fit_decay(synthetic([1.0, 0.5, 0.25, 0.0, 0.0]))
    with pytest.raises(InsufficientDataError):
        fit_decay(synthetic(0.5 ** np.arange(10)), floor=0.2)


def test_fit_linear_operator_route_matches_gap(linear_coarse_256, linear_spectrum_256):
    run = linear_coarse_256
    s = covariance_operator(run.op, run.h, ID, ID, 20)
    fit = fit_decay(s)
    assert fit.rho_hat < 1
    assert 0.5 < fit.rho_hat / linear_spectrum_256.gap < 2
    assert isinstance(fit, DecayFit) and fit.to_dict()["rho_hat"] == fit.rho_hat


# -- envelope ---------------------------------------------------------------------


def test_envelope_holds_by_construction():
    rng = np.random.default_rng(1)
    k = np.arange(12)
    s = synthetic(3 * 0.4**k * (1 + 0.05 * rng.standard_normal(12)), 0.05 * 3 * 0.4**k)
    fit = fit_decay(s)
    rep = envelope_check(s, fit, cfh=fit.C_hat * 1.5)
    assert rep.C_empirical > 0
    assert envelope_check(s, fit, cfh=rep.C_empirical * (1 + 1e-12)).holds_with_cfh
    assert not envelope_check(s, fit, cfh=rep.C_empirical * 0.9).holds_with_cfh


def test_envelope_zero_series():
    rep = envelope_check(synthetic(np.zeros(6)), 0.5)
    assert rep.C_empirical == 0.0 and rep.holds_with_cfh is None
    assert envelope_check(synthetic(np.zeros(6)), 0.5, cfh=0.0).holds_with_cfh
    with pytest.raises(DomainError):
        envelope_check(synthetic(np.zeros(6)), 0.0)


def test_envelope_linear_example_finite(linear_coarse_256):
    run = linear_coarse_256
    s = covariance_operator(run.op, run.h, ID, ID, 20)
    rep = envelope_check(s, fit_decay(s))
    assert math.isfinite(rep.C_empirical) and rep.C_empirical > 0
    assert rep.to_dict()["rho"] == rep.rho
