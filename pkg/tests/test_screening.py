import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from radial_sle.contour import ClearanceError
from radial_sle.nullvec import estimate_h, estimate_omega, random_chamber_points
from radial_sle.screening import (
    ConfigurationError,
    HalfPlaneMaster,
    PartitionEvaluator,
    ScreeningSpec,
    eval_chordal_L,
    eval_excited_K,
    eval_ground_J,
    fermionic_ground,
    h_theory,
    make_spec,
)
from radial_sle.targets import lookup


def _samples(n, seed=3, count=3, gap=0.6):
    return random_chamber_points(n, count, np.random.default_rng(seed), min_gap=gap)


@pytest.mark.parametrize(
    "family,n,m,kappa,kw",
    [
        ("ground", 3, 1, 2.5, {}),
        pytest.param("ground", 4, 2, 3.0, {}, marks=pytest.mark.slow),
        ("excited", 2, 1, 3.0, {}),
        ("spin", 2, 1, 3.5, {"eta": 0.5}),
        ("chordal", 4, 1, 5.0, {}),
    ],
)
def test_family_satisfies_null_vector_equations(family, n, m, kappa, kw):
    spec = make_spec(family, n, m, kappa, **kw)
    h, spread = estimate_h(PartitionEvaluator(spec), _samples(n), kappa)
    assert_allclose(h, h_theory(spec), atol=1e-4)
    assert spread < 1e-4


def test_h_theory_agrees_with_target_table():
    for family, n, m, kw in [("ground", 3, 1, {}), ("excited", 4, 1, {}), ("spin", 3, 1, {"eta": 0.3}), ("chordal", 6, 2, {})]:
        spec = make_spec(family, n, m, 3.3, **kw)
        assert_allclose(h_theory(spec), lookup("h", family).value(n, m, 3.3, spec.eta))


def test_fermionic_closed_form_matches_evaluator():
    spec = make_spec("ground", 3, 0, 2.7)
    th = np.array([0.1, 1.9, 4.0])
    assert_allclose(PartitionEvaluator(spec)(th), fermionic_ground(th, 2.7), rtol=1e-14)


def test_spin_at_zero_eta_is_ground():
    th = np.array([0.2, 1.5, 3.9])
    g = eval_ground_J(make_spec("ground", 3, 1, 3.0), th)
    s = PartitionEvaluator(make_spec("spin", 3, 1, 3.0, eta=0.0))(th)
    assert_allclose(s, g, rtol=1e-13)


@given(st.floats(-2.0, 2.0), st.floats(1.0, 8.0))
def test_single_spin_curve_rotation_constant(eta, kappa):
    # n = 1, m = 0: psi = exp(eta a^2 theta / 2), so omega = eta / kappa exactly
    psi = PartitionEvaluator(make_spec("spin", 1, 0, kappa, eta=eta))
    om, spread = estimate_omega(psi, [np.array([t]) for t in (0.3, 1.7, 4.1)])
    assert_allclose(om, eta / kappa, atol=1e-9)
    assert spread < 1e-9


@settings(max_examples=10)
@given(st.floats(-0.3, 3.5))
def test_ground_family_is_rotation_invariant(s):
    psi = PartitionEvaluator(make_spec("ground", 2, 1, 3.5))
    th = np.array([0.4, 2.6])
    assert_allclose(psi(th + s), psi(th), rtol=1e-9)


def test_excited_radius_invariance():
    spec = make_spec("excited", 2, 1, 4.0)
    th = np.array([0.0, 2.0])
    k1 = PartitionEvaluator(ScreeningSpec(**{**spec.__dict__, "omega_radius": 0.3}))(th)
    k2 = PartitionEvaluator(ScreeningSpec(**{**spec.__dict__, "omega_radius": 0.6}))(th)
    assert_allclose(k1, k2, rtol=1e-7)


def test_excited_radius_must_clear_screening_contours():
    spec = make_spec("excited", 2, 1, 3.0, omega_radius=0.999)
    with pytest.raises(ClearanceError):
        eval_excited_K(spec, np.array([0.0, 2.0]))


def test_excited_needs_even_n():
    with pytest.raises(ValueError, match="even"):
        make_spec("excited", 3, 1, 3.0)


def test_too_many_links_rejected():
    with pytest.warns(UserWarning):
        with pytest.raises(ValueError):
            make_spec("ground", 3, 2, 3.0)


def test_chordal_two_point_closed_form():
    # n = 2, k = 1: no screening, psi = sin(d/2)^(a (2b - a))
    kappa = 3.0
    spec = make_spec("chordal", 2, 0, kappa)
    a, b = spec.params.a, spec.params.b
    th = np.array([0.5, 2.0])
    assert_allclose(eval_chordal_L(spec, th), math.sin(0.75) ** (a * (2 * b - a)), rtol=1e-14)
    h, _ = estimate_h(PartitionEvaluator(spec), _samples(2), kappa)
    assert_allclose(h, (6 - kappa) * (kappa - 2) / (8 * kappa), atol=1e-7)


def test_chordal_distinguished_point_must_be_free():
    with pytest.raises(ConfigurationError):
        make_spec("chordal", 4, 1, 3.0, pattern="chordal:4:(3-4)|rays:1,2")


def test_outside_chamber_rejected():
    psi = PartitionEvaluator(make_spec("ground", 2, 1, 3.0))
    with pytest.raises(ConfigurationError):
        psi(np.array([2.0, 1.0]))


def test_spec_json_roundtrip():
    spec = make_spec("spin", 4, 1, 2.5, eta=0.25)
    back = ScreeningSpec.from_json(spec.to_json())
    assert back == spec
    assert json.loads(back.to_json()) == json.loads(spec.to_json())


def test_refinement_error_is_small():
    psi = PartitionEvaluator(make_spec("ground", 2, 1, 3.5))
    v, err = psi.evaluate_with_error(np.array([0.3, 2.2]))
    assert err < 1e-9 * abs(v)


def test_half_plane_master_without_screening_is_a_product():
    hp = HalfPlaneMaster(2, 0, make_spec("ground", 2, 0, 3.0).params)
    z, u, us = np.array([-0.5, 0.7]), 0.2 + 1.0j, 0.2 - 1.0j
    a, su = hp.params.a, hp.sigma_u
    direct = (
        (z[1] - z[0]) ** (a * a)
        * np.prod((u - z) ** (a * su))
        * np.prod((us - z) ** (a * su))
        * (u - us) ** (su * su)
    )
    assert_allclose(hp(z, u, us), direct, rtol=1e-13)
