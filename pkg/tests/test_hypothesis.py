import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pwexpand import DomainError, HypothesisViolation, induce, linear_example, linear_system, nonlinear_example, nonlinear_system
from pwexpand.fixtures import crescent_map, single_branch_map
from pwexpand.hypothesis import (
    LINEAR_S,
    check_expansion_empirical,
    check_geometry,
    check_linear_admissibility,
    check_partition,
    check_range,
    derivative_bounds,
    expansion_constants,
    hypothesis_report,
)

import oracles


def test_nonlinear_constants():
    c = expansion_constants(144, 2, 1.0, 3)
    assert c.gamma == pytest.approx(1 / 12, rel=1e-15)
    assert c.s == pytest.approx(oracles.NL_S, rel=1e-12)
    assert c.s <= 0.1
    assert c.eta == pytest.approx(oracles.NL_ETA, rel=1e-12)
    assert c.eta_ok and c.s_ok


def test_constants_match_high_precision():
    for A, M, Y in ((144, 2, 3), (200, 5, 3), (10, 1.5, 1), (1e4, 30, 2)):
        s, eta = oracles.expansion_constants(A, M, Y)
        c = expansion_constants(A, M, 1.0, Y)
        assert abs(c.s - s) < 1e-12 and abs(c.eta - eta) < 1e-12


def test_a4_m0():
    c = expansion_constants(4, 0, 1.0, 1)
    assert c.s == 0.5
    assert c.eta == pytest.approx(0.5 + 8 / math.pi, rel=1e-14)
    assert not c.eta_ok


@given(st.floats(1.5, 1e6), st.floats(0, 1.0))
def test_defining_quadratic_identity(A, frac):
    M = frac * (A - 1) * 0.999
    c = expansion_constants(A, M)
    assert ((2 * A + M * M - M * math.sqrt(M * M + 4 * A)) / 2) * c.s**2 == pytest.approx(1.0, abs=1e-12)


def test_s_decreases_in_A():
    s = [expansion_constants(A, 3.0).s for A in np.linspace(5, 500, 60)]
    assert np.all(np.diff(s) < 0)


def test_expansion_constants_invalid():
    with pytest.raises(HypothesisViolation):
        expansion_constants(1.0, 0.0)
    with pytest.raises(HypothesisViolation):
        expansion_constants(10, 9.5)
    with pytest.raises(DomainError):
        expansion_constants(10, -1.0)


# -- derivative bounds ----------------------------------------------------------


def test_bounds_linear():
    b = derivative_bounds(linear_example(5, 200))
    assert (b.A, b.M) == (200.0, 5.0)


def test_bounds_single_branch():
    A, M = derivative_bounds(single_branch_map(7.0))
    assert (A, M) == (7.0, 0.0)


def test_bounds_need_samples():
    with pytest.raises(DomainError):
        derivative_bounds(nonlinear_example(), samples=10)


# -- admissibility -----------------------------------------------------------


def test_linear_S():
    assert LINEAR_S == pytest.approx(oracles.S_VALUE, rel=1e-14)
    assert abs(LINEAR_S - 90.9079) < 1e-3


def test_admissibility_examples():
    r = check_linear_admissibility(5, 200)
    assert r.passed and r.bound == pytest.approx(oracles.LINEAR_BOUND_200, rel=1e-12)
    assert not check_linear_admissibility(12, 200).passed
    assert not check_linear_admissibility(50, 60).passed


@given(st.integers(-40, 40), st.integers(-40, 40), st.integers(92, 5000))
def test_admissibility_monotone_in_a(a1, a2, b):
    small, big = sorted((abs(a1), abs(a2)))
    if check_linear_admissibility(big, b).passed:
        assert check_linear_admissibility(small, b).passed


# -- partition, range, geometry --------------------------------------------------


@pytest.mark.parametrize("m", [nonlinear_example(), linear_example(5, 200)], ids=["nonlinear", "linear"])
def test_partition_and_range(m):
    assert check_partition(m, 200_000).passed
    assert check_range(m, 200_000).passed


def test_geometry_builtins_pass():
    assert check_geometry(linear_example(5, 200)).passed
    assert check_geometry(nonlinear_example(), samples=16).passed


def test_geometry_crescent_fails():
    r = check_geometry(crescent_map(), samples=400)
    assert not r.passed
    assert r.evidence["counterexamples"]


# -- expansion ------------------------------------------------------------------


@pytest.mark.parametrize(
    "sys,A,M",
    [(nonlinear_system(), 144, 2), (linear_system(5, 200), 200, 5)],
    ids=["nonlinear", "linear"],
)
def test_expansion_no_counterexamples(sys, A, M):
    c = expansion_constants(A, M, 1.0, 3)
    r = check_expansion_empirical(sys, c, trials=10_000)
    assert r.passed and r.evidence["counterexamples"] == 0
    assert r.evidence["min_forward_ratio"] >= (1 - 1e-9) / c.s


def test_expansion_single_branch_closed_form():
    # T(x, y) = (y / gamma, gamma A x) has both singular values sqrt(A)
    A = 9.0
    sys = induce(single_branch_map(A), A)
    c = expansion_constants(A, 0.0)
    r = check_expansion_empirical(sys, c, trials=2000)
    assert r.evidence["min_forward_ratio"] == pytest.approx(math.sqrt(A), rel=1e-9)
    assert r.passed


def test_expansion_inverse_exponent_reported():
    sys = linear_system(5, 200)
    c = expansion_constants(200, 5, 1.0, 3)
    ev = check_expansion_empirical(sys, c, trials=5000).evidence
    assert ev["inverse_within_s"]
    assert ev["empirical_exponent"] == pytest.approx(1.0, abs=0.05)


# -- full report ----------------------------------------------------------------


def test_report_nonlinear_passes():
    rep = hypothesis_report(nonlinear_example())
    assert rep.passed
    k = rep.constants
    assert (k.A, k.M, k.gamma) == (144.0, 2.0, 1 / 12)
    d = json.loads(rep.to_json())
    assert d["passed"] and len(d["checks"]) == len(rep.checks)


def test_report_linear():
    assert hypothesis_report(linear_example(5, 200)).passed
    bad = hypothesis_report(linear_example(12, 200))
    assert not bad.passed and not bad.check("linear admissibility").passed


def test_report_linear_50_60_fails():
    rep = hypothesis_report(linear_example(50, 60))
    assert not rep.passed
    assert not rep.check("M < A-1").passed or not rep.check("linear admissibility").passed
