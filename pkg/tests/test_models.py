import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pwexpand import AffineBand, BoundaryError, ConsistencyError, DomainError
from pwexpand.hypothesis import derivative_bounds
from pwexpand.models import (
    NONLINEAR_K_MAX,
    NONLINEAR_K_MIN,
    LinearPRNG,
    branch_image_zones,
    branch_multiplicity,
    check_p1_not_invariant,
    f_k,
    linear_example,
    linear_n_range,
    linear_system,
    nonlinear_example,
    pf_nonlinear,
    prng_stream,
    psi_k,
    zone_limits,
    zone_of,
)

import oracles

NL = nonlinear_example()


# -- nonlinear example ------------------------------------------------------


@given(st.floats(-1.5, 1.5), st.integers(NONLINEAR_K_MIN, NONLINEAR_K_MAX - 1))
def test_consecutive_parabolas_differ_by_one(u, k):
    assert f_k(u, k + 1) - f_k(u, k) == pytest.approx(1.0, abs=1e-12)


def test_branch_count_and_ids():
    assert len(NL.branches) == 430
    assert NL.branches[0].id == -179 and NL.branches[-1].id == 250
    assert NL.declared_A == 144 and NL.declared_M == 2 and NL.Y == 3


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    for k in (-179, -3, 0, 17, 250):
        br = NL.branch(k)
        u = rng.uniform(-1.9, 1.9, 200)
        v = rng.uniform(-1.9, 1.9, 200)
        du, dv = br.gradient(u, v)
        h = 1e-6
        fd_u = (br.phi(u + h, v) - br.phi(u - h, v)) / (2 * h)
        fd_v = (br.phi(u, v + h) - br.phi(u, v - h)) / (2 * h)
        assert np.allclose(du, 2 * (71 * u + 214), rtol=0, atol=1e-12)
        assert np.allclose(fd_u, du, rtol=1e-6)
        assert np.allclose(fd_v, dv, rtol=1e-6)


def test_derivative_bounds_on_halo():
    b = derivative_bounds(NL, samples=2000)
    assert b.M == 2.0
    assert b.A > 144.0
    assert b.consistent


def test_zone_geometry():
    d = 1e-3
    assert zone_of(0.0, 1 / 12 - d) == 2  # z = -1/2 + 6d
    assert zone_of(-0.5, 1 / 12 - d) == 1  # z = -1 + 6d
    assert zone_of(0.9, -1 / 12 + d) == 3
    # above the line y = (2x + 1)/12 means z < -1/2
    x = 0.2
    assert zone_of(x, (2 * x + 1) / 12 + d) == 1
    assert zone_of(x, (2 * x - 1) / 12 - d) == 3
    with pytest.raises(BoundaryError):
        zone_of(x, (2 * x + 1) / 12)
    assert zone_limits(1) == (-179, 248) and zone_limits(3) == (-177, 250)


@given(st.floats(-1, 1), st.floats(-1 / 12, 1 / 12), st.integers(-179, 250))
def test_psi_reduces_to_z(x, y, k):
    z = x - 6 * y
    assert psi_k(x, y, k) == pytest.approx(214**2 - 142 * z + 142 * k, rel=1e-12, abs=1e-8)


def test_psi_positive_on_every_range():
    # minimum over the admissible k of 214^2 - 71 * 3 - 142 * 179
    assert 214**2 - 71 * 3 - 142 * 179 > 0
    x, y = np.meshgrid(np.linspace(-0.999, 0.999, 41), np.linspace(-0.083, 0.083, 11))
    assert np.all(psi_k(x, y, NONLINEAR_K_MIN) > 0)


def test_pf_constant_input_finite():
    one = lambda a, b: np.ones(np.broadcast(a, b).shape)  # noqa: E731
    vals = pf_nonlinear(one, np.linspace(-0.9, 0.9, 7), np.full(7, 0.0123))
    assert np.all(np.isfinite(vals)) and np.all(vals > 0)


def test_pf_matches_bruteforce_enumeration():
    rng = np.random.default_rng(5)
    h = lambda x, y: 1.0 + 0.5 * np.cos(3 * x) + 4 * y  # noqa: E731
    xs = rng.uniform(-0.99, 0.99, 40)
    ys = rng.uniform(-1 / 12, 1 / 12, 40) * 0.99
    ours = pf_nonlinear(h, xs, ys)
    ref = [oracles.pf_nonlinear_bruteforce(h, x, y) for x, y in zip(xs, ys)]
    assert np.allclose(ours, ref, rtol=1e-12)


def test_pf_scalar_and_point_forms():
    one = lambda a, b: np.ones(np.broadcast(a, b).shape)  # noqa: E731
    assert pf_nonlinear(one, (0.1, 0.01)) == pytest.approx(pf_nonlinear(one, 0.1, 0.01))
    with pytest.raises(DomainError):
        pf_nonlinear(one, 0.1, 0.5)


def test_p1_witness_values():
    w = check_p1_not_invariant()
    assert np.allclose(w.values, oracles.P1_VALUES, rtol=0, atol=1e-12)
    assert w.strictly_increasing
    assert w.spread > 1e-6
    assert abs(w.values[0] - w.values[-1]) > 1e-9
    assert np.all(w.zones == 1)
    assert np.allclose(w.points[:, 0] - 6 * w.points[:, 1], w.z)


def test_p1_not_constant_in_zone_three():
    z = np.linspace(0.55, 1.45, 10)
    one = lambda a, b: np.ones(np.broadcast(a, b).shape)  # noqa: E731
    vals = pf_nonlinear(one, 2 * z / 3, -z / 18)
    assert np.all(zone_of(2 * z / 3, -z / 18) == 3)
    assert vals.max() - vals.min() > 1e-6


def test_p1_x_marginal_is_exactly_uniform():
    # the x-marginal of Ph is the rescaled y-marginal of h; for h = 1 it is uniform
    one = lambda a, b: np.ones(np.broadcast(a, b).shape)  # noqa: E731
    xs = np.linspace(-0.95, 0.95, 9)
    ys = (np.arange(400) + 0.5) / 400 / 6 - 1 / 12 + 1e-7
    X, Y = np.meshgrid(xs, ys)
    m = pf_nonlinear(one, X.ravel(), Y.ravel()).reshape(X.shape).mean(axis=0)
    assert np.ptp(m) < 1e-8


def test_special_branch_images():
    # image zones of the edge branches agree with the zone limits of the transfer operator
    for b in branch_image_zones():
        assert sum(b.forward.values()) == 10_000
        assert b.covered == b.expected
        assert all(b.coverage[z] == 0.0 for z in (1, 2, 3) if z not in b.expected)
        assert all(b.forward[z] == 0 for z in (1, 2, 3) if z not in b.expected)
    full = {b.k: b.covered for b in branch_image_zones(ks=(-177, 0, 248), samples=2000)}
    assert all(v == (1, 2, 3) for v in full.values())


def test_witness_rejects_bad_z():
    with pytest.raises(DomainError):
        check_p1_not_invariant([1.6, 0.0])


# -- linear example ---------------------------------------------------------


def test_linear_n_range():
    r = linear_n_range(5, 200)
    assert (r.start, r.stop - 1, len(r)) == (-102, 103, 206)
    assert len(linear_example(5, 200).branches) == 206


def test_linear_branch_images_inside():
    m = linear_example(5, 200)
    rng = np.random.default_rng(1)
    u, v = rng.uniform(-1, 1, (2, 200_000))
    pos, val = m.map_points(u, v)
    assert np.all(np.abs(val[pos >= 0]) < 1.0)


def test_linear_parameter_validation():
    with pytest.raises(DomainError):
        linear_example(5, 0)
    with pytest.raises(DomainError):
        linear_example(5.5, 200)
    with pytest.raises(DomainError):
        linear_example(5, 200, 0.3)
    assert linear_example(5, 200, 1.5).L == 1.5


def test_branch_multiplicity():
    assert branch_multiplicity(5, 200, samples=10_000) == 200
    assert branch_multiplicity(1, 3, samples=2000) == 3


def test_multiplicity_oracle_agrees():
    sys = linear_system(5, 200)
    rng = np.random.default_rng(2)
    for _ in range(50):
        X = rng.uniform(-1, 1)
        Y = rng.uniform(-1, 1) * sys.gamma
        assert oracles.linear_multiplicity(5, 200, 1.0, X, Y, sys.gamma) == 200


def test_constant_density_fixed_by_linear_transfer():
    # each point has |b| pre-images, each with Jacobian |b|
    sys = linear_system(5, 200)
    rng = np.random.default_rng(3)
    X = rng.uniform(-1, 1, 1000)
    Y = rng.uniform(-1, 1, 1000) * sys.gamma
    total = np.zeros(1000)
    for pos, br in enumerate(sys.map.branches):
        x, y = sys.inverse(np.full(1000, pos), X, Y)
        total += br.band.contains(x, y / sys.gamma, 1.0) / 200.0
    assert np.allclose(total, 1.0)


def test_multiplicity_inconsistent_raises(monkeypatch):
    import dataclasses

    import pwexpand.models as mod

    real = mod.linear_system

    def missing_branch(a, b, L=1.0):
        s = real(a, b, L)
        brs = list(s.map.branches)
        i = s.map.position(100)  # pre-images only for about half of the points
        brs[i] = dataclasses.replace(brs[i], band=AffineBand(1.0, 0.0, 5.0, 6.0))
        m = dataclasses.replace(s.map, branches=tuple(brs))
        return dataclasses.replace(s, map=m)

    monkeypatch.setattr(mod, "linear_system", missing_branch)
    with pytest.raises(ConsistencyError):
        branch_multiplicity(5, 200, samples=20_000)


# -- PRNG -------------------------------------------------------------------


def test_prng_determinism_and_clone():
    a = prng_stream(5, 200, 1.0, (0.1234, 0.5678), 1000)
    b = prng_stream(5, 200, 1.0, (0.1234, 0.5678), 1000)
    assert np.array_equal(a, b)
    g = LinearPRNG(5, 200, 1.0, (0.1234, 0.5678))
    first = g.take(10)
    c = g.clone()
    assert np.array_equal(g.take(20), c.take(20))
    assert np.array_equal(first, a[:10])
    assert next(LinearPRNG(5, 200, 1.0, (0.1234, 0.5678))) == a[0]


def test_prng_matches_recursion():
    xs = prng_stream(5, 200, 1.0, (0.125, 0.375), 300)
    exact = oracles.linear_recursion_exact(5, 200, 1, 0.125, 0.375, 302)
    assert xs.tolist() == [float(v) for v in exact[2:]]


def test_prng_boundary_hit_is_perturbed():
    # 5 * 0.2 + 200 * 0.1 = 21 lands on the edge x = 1
    g = LinearPRNG(5, 200, 1.0, (0.1, 0.2))
    xs = g.take(50)
    assert g.perturbations >= 1
    assert np.all(np.abs(xs) < 1.0)


def test_prng_rejects_bad_seed():
    with pytest.raises(DomainError):
        LinearPRNG(5, 200, 1.0, (1.0, 0.0))


def test_prng_uniform_and_uncorrelated_small():
    from scipy.stats import chisquare

    n = 200_000
    xs = prng_stream(5, 200, 1.0, (0.1234, 0.5678), n)
    counts, _ = np.histogram(xs, bins=64, range=(-1, 1))
    assert chisquare(counts).pvalue > 0.001
    x = xs - xs.mean()
    for k in range(1, 11):
        r = np.dot(x[:-k], x[k:]) / np.dot(x, x)
        assert abs(r) < 5 / math.sqrt(n)
