import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from radial_sle.finite_diff import FiniteDiffScheme, StepSizeError
from radial_sle.nullvec import (
    DegenerateSampleError,
    ResidualReport,
    check_ward,
    commutator_check_generators,
    commutator_check_nullvec,
    drift_from_psi,
    estimate_h,
    estimate_omega,
    fd_order_check,
    random_chamber_points,
)
from radial_sle.params import derive_params
from radial_sle.screening import HalfPlaneMaster, fermionic_ground


def _fermionic(kappa):
    return lambda th: fermionic_ground(th, kappa)


def _non_solution(th):
    return math.exp(math.sin(th[0]) + 0.3 * math.cos(th[1] - th[2]) + 0.1 * th[2])


@settings(max_examples=15)
@given(st.floats(1.5, 8.0), st.integers(2, 4), st.integers(0, 2**31))
def test_fermionic_ground_eigenvalue(kappa, n, seed):
    samples = random_chamber_points(n, 3, np.random.default_rng(seed), min_gap=0.4)
    h, spread = estimate_h(_fermionic(kappa), samples, kappa)
    assert_allclose(h, (1 - n * n) / (2 * kappa), atol=1e-6)
    assert spread < 1e-6


def test_report_records_per_index_ratios():
    rep = ResidualReport(kappa=3.0, family="ground")
    samples = random_chamber_points(3, 4, np.random.default_rng(0))
    estimate_h(_fermionic(3.0), samples, 3.0, report=rep)
    estimate_omega(_fermionic(3.0), samples, report=rep)
    d = json.loads(rep.to_json())
    assert len(d["per_index"]) == 12
    assert abs(d["omega_estimate"]) < 1e-9
    assert abs(d["omega_shift_estimate"]) < 1e-9
    assert d["h_imag_max"] < 1e-12


def test_omega_of_exponential_profile():
    # psi(theta + s) = exp(0.4 s) psi(theta) by construction
    psi = lambda th: math.exp(0.2 * th.sum()) * fermionic_ground(th, 3.0)
    samples = random_chamber_points(2, 3, np.random.default_rng(1))
    om, spread = estimate_omega(psi, samples)
    assert_allclose(om, 0.4, atol=1e-10)


def test_estimators_need_three_samples():
    with pytest.raises(ValueError):
        estimate_h(_fermionic(3.0), [np.array([0.0, 1.0])] * 2, 3.0)


def test_vanishing_psi_is_reported():
    samples = random_chamber_points(2, 3, np.random.default_rng(1))
    with pytest.raises(DegenerateSampleError):
        estimate_h(lambda th: 0.0, samples, 3.0)


def test_probe_leaving_chamber_is_reported():
    with pytest.raises(StepSizeError):
        estimate_h(_fermionic(3.0), [np.array([0.0, 1e-3, 2.0])] * 3, 3.0)


def test_fd_order_ratios():
    th = np.array([0.3, 2.0, 4.1])
    h = (1 - 9) / 6.0
    _, _, r4 = fd_order_check(_fermionic(3.0), th, 3.0, h, order=4)
    _, _, r2 = fd_order_check(_fermionic(3.0), th, 3.0, h, order=2)
    assert_allclose(r4, 16.0, rtol=0.05)
    assert_allclose(r2, 4.0, rtol=0.05)


@pytest.mark.parametrize("n,m", [(2, 0), (3, 0), (2, 1), (3, 1)])
def test_ward_identities_half_plane(n, m):
    hp = HalfPlaneMaster(n, m, derive_params(3.5))
    z = np.array([-1.0, 0.3, 1.4])[:n]
    res = check_ward(hp, z, 0.2 + 1.3j, 0.2 - 1.3j, hp.dimensions())
    assert res.max() < 1e-5


def test_ward_negative_control():
    hp = HalfPlaneMaster(3, 1, derive_params(3.5))
    lam_z, lam_u, lam_us = hp.dimensions()
    res = check_ward(hp, np.array([-1.0, 0.3, 1.4]), 0.2 + 1.3j, 0.2 - 1.3j, (lam_z, lam_u + 1.0, lam_us))
    assert res.max() > 1e-2


@pytest.mark.parametrize("pair", [(0, 1), (0, 2), (1, 2)])
def test_nullvec_commutator_is_operator_identity(pair):
    th = np.array([0.3, 2.0, 4.1])
    assert commutator_check_nullvec(_fermionic(3.0), th, pair, 3.0) < 1e-4
    assert commutator_check_nullvec(_non_solution, th, pair, 3.0) < 1e-4


def test_generator_commutator_with_ground_drift():
    th = np.array([0.3, 2.0, 4.1])
    for kappa in (2.0, 3.0, 6.0):
        drift = drift_from_psi(_fermionic(kappa), kappa)
        assert commutator_check_generators(drift, _non_solution, th, kappa) < 1e-3


def test_generator_commutator_fails_without_drift():
    th = np.array([0.3, 2.0, 4.1])
    zero = lambda x: np.zeros(3)
    assert commutator_check_generators(zero, _non_solution, th, 3.0) > 1e-2


def test_coarse_scheme_degrades_gracefully():
    th = [np.array([0.3, 2.0, 4.1])] * 3
    coarse = FiniteDiffScheme(step=0.05, order=2, richardson_levels=1)
    h, _ = estimate_h(_fermionic(3.0), th, 3.0, scheme=coarse)
    assert abs(h - (1 - 9) / 6.0) > 1e-8
    assert abs(h - (1 - 9) / 6.0) < 1e-2


def test_zero_drift_commutes_at_kappa_six():
    # the commutator identity has no drift-free failure at kappa = 6, which is
    # why the negative control above uses kappa = 3
    th = np.array([0.3, 2.0, 4.1])
    zero = lambda x: np.zeros(3)
    assert commutator_check_generators(zero, _non_solution, th, 6.0) < 1e-4


def test_ward_needs_the_marked_pair_factor():
    hp = HalfPlaneMaster(3, 1, derive_params(3.5))
    su2 = hp.sigma_u**2
    bare = lambda z, u, us: hp(z, u, us) / (u - us) ** su2
    res = check_ward(bare, np.array([-1.0, 0.3, 1.4]), 0.2 + 1.3j, 0.2 - 1.3j, hp.dimensions())
    assert res.translation < 1e-8
    assert_allclose(res.dilation, su2, rtol=1e-8)
