import json
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy import stats

from radial_sle.loewner import (
    SCHEMA_ID,
    SEED_ENV,
    SimConfig,
    SimConfigError,
    brownian_increments,
    drift_equivalence_check,
    evolve_covering_map,
    resolve_seed,
    rho_from_sigma,
    run_driving,
    run_ensemble,
    run_simulation,
    strong_order,
)
from radial_sle.screening import make_spec


def _slit_radius(t):
    # radial slit [r, 1]: conformal radius 4r / (1 + r)^2 = exp(-t)
    c = math.exp(-t)
    return ((4 - 2 * c) - math.sqrt((4 - 2 * c) ** 2 - 4 * c * c)) / (2 * c)


def test_single_curve_increments_are_brownian():
    cfg = SimConfig(kappa=2.0, n=1, theta0=(0.0,), dt=1e-4, T=1.0, seed=11, n_tips=2)
    times, th, _, halt = run_driving(cfg, brownian_increments(cfg, 11))
    d = np.diff(th[:, 0])
    N = d.size
    assert halt == "horizon" and N == 10_000
    z = d.mean() / math.sqrt(2.0 * 1e-4 / N)
    assert abs(z) < stats.norm.ppf(0.995)
    chi = (N - 1) * d.var(ddof=1) / (2.0 * 1e-4)
    assert stats.chi2.ppf(0.005, N - 1) < chi < stats.chi2.ppf(0.995, N - 1)


@pytest.mark.parametrize("nu", [(1.0,), (1.0, 1.0), (1.0, 0.5), (0.3, 1.0, 2.0)])
def test_capacity_slope(nu):
    n = len(nu)
    theta0 = tuple(2 * math.pi * np.arange(n) / n)
    cfg = SimConfig(kappa=2.5, n=n, theta0=theta0, nu=nu, dt=1e-3, T=0.2, seed=5, n_tips=2)
    res = run_simulation(cfg)
    assert res.halt_reason == "horizon"
    assert_allclose(res.capacity_slope(), -sum(nu), rtol=5e-3)


def test_kappa_zero_single_curve_is_a_radial_slit():
    cfg = SimConfig(kappa=0.0, n=1, theta0=(0.7,), drift_mode="kappa_zero", dt=1e-3, T=0.5, seed=1)
    res = run_simulation(cfg)
    tips = res.tips[1:, 0]
    assert np.all(np.isfinite(tips))
    assert np.abs(np.angle(tips * np.exp(-0.7j))).max() < 1e-3
    assert_allclose(abs(tips[-1]), _slit_radius(0.5), atol=1e-3)
    assert_allclose(np.abs(tips), [_slit_radius(t) for t in res.tip_times[1:]], atol=1e-3)


def test_same_seed_is_byte_identical(tmp_path):
    cfg = SimConfig(kappa=3.0, n=2, theta0=(0.0, 3.0), dt=1e-3, T=0.05, seed=42, n_tips=5)
    a, b = run_simulation(cfg), run_simulation(cfg)
    pa = a.write(str(tmp_path / "a"))
    pb = b.write(str(tmp_path / "b"))
    for x, y in zip(pa, pb):
        assert open(x, "rb").read() == open(y, "rb").read()
    c = run_simulation(replace(cfg, seed=43))
    assert c.traces_csv() != a.traces_csv()


def test_seed_resolution_order(monkeypatch):
    monkeypatch.setenv(SEED_ENV, "99")
    assert resolve_seed(5) == 5
    assert resolve_seed(None) == 99
    monkeypatch.delenv(SEED_ENV)
    assert isinstance(resolve_seed(None), int)


def test_ensemble_is_independent_of_worker_count():
    cfg = SimConfig(kappa=3.0, n=2, theta0=(0.0, 3.0), dt=1e-3, T=0.02, seed=8, n_tips=3)
    serial = run_ensemble(cfg, 3, jobs=1)
    parallel = run_ensemble(cfg, 3, jobs=2)
    assert [r.traces_csv() for r in serial] == [r.traces_csv() for r in parallel]
    assert len({r.seed for r in serial}) == 3


@settings(max_examples=20)
@given(st.floats(-3.0, 3.0), st.integers(0, 1000))
def test_driving_is_rotation_equivariant(c, seed):
    cfg = SimConfig(kappa=3.0, n=3, theta0=(0.2, 2.0, 4.0), dt=1e-3, T=0.02)
    dW = brownian_increments(cfg, seed)
    _, a, _, _ = run_driving(cfg, dW)
    _, b, _, _ = run_driving(replace(cfg, theta0=tuple(np.array(cfg.theta0) + c)), dW)
    assert_allclose(b - c, a, atol=1e-10)


def test_reflection_symmetry():
    cfg = SimConfig(kappa=4.0, n=2, theta0=(-1.5, 1.5), dt=1e-3, T=0.05)
    dW = brownian_increments(cfg, 3)
    _, a, _, _ = run_driving(cfg, dW)
    _, b, _, _ = run_driving(cfg, -dW[:, ::-1])
    assert_allclose(b, -a[:, ::-1], atol=1e-12)


def test_antipodal_pair_capacity_and_origin_scaling():
    cfg = SimConfig(kappa=0.5, n=2, theta0=(0.0, math.pi), dt=1e-3, T=0.1, seed=2, n_tips=4)
    res = run_simulation(cfg)
    assert_allclose(res.capacity_slope(), -2.0, rtol=1e-6)
    # near the origin g_t(z) ~ exp(t sum nu) z, so Im w drops by T sum nu
    h, lost = evolve_covering_map([1j * 6.0], res.times, res.driving_paths, cfg.nu)
    assert not lost[0]
    assert_allclose(h[0].imag, 6.0 - 0.2, atol=1e-4)


def test_rational_and_sle_kappa_rho_agree():
    kappa, sigma = 3.0, 0.4
    base = SimConfig(
        kappa=kappa, n=1, theta0=(0.0,), dt=1e-3, T=0.05, seed=4,
        marked=(2.5,), marked_charges=(sigma,), drift_mode="rational",
    )
    dW = brownian_increments(base, 4)
    _, a, qa, _ = run_driving(base, dW)
    _, b, qb, _ = run_driving(replace(base, drift_mode="sle_kappa_rho"), dW)
    assert_allclose(a, b, atol=1e-10)
    assert_allclose(qa, qb, atol=1e-12)


def test_numeric_psi_matches_closed_form():
    kappa = 3.0
    base = SimConfig(kappa=kappa, n=2, theta0=(0.0, 2.5), dt=1e-3, T=0.02)
    dW = brownian_increments(base, 6)
    _, a, _, _ = run_driving(base, dW)
    spec = make_spec("ground", 2, 0, kappa)
    _, b, _, _ = run_driving(replace(base, drift_mode="numeric_psi", psi_spec=spec), dW)
    assert_allclose(a, b, atol=1e-8)


def test_collision_halts():
    cfg = SimConfig(kappa=8.0, n=2, theta0=(0.0, 0.02), dt=1e-3, T=1.0, collision_eps=1e-3, seed=0, n_tips=2)
    res = run_simulation(cfg)
    assert res.halt_reason == "collision"
    assert res.times[-1] < 0.01
    assert np.all(np.isfinite(res.driving_paths))


@pytest.mark.parametrize(
    "kw",
    [
        {"kappa": -1.0},
        {"drift_mode": "nope"},
        {"theta0": (0.0,)},
        {"nu": (1.0, -1.0)},
        {"theta0": (0.0, 0.005)},
        {"drift_mode": "kappa_zero"},
        {"drift_mode": "numeric_psi"},
        {"drift_mode": "sle_kappa_rho"},
        {"rho_convention": "other"},
    ],
)
def test_invalid_configs(kw):
    cfg = SimConfig(**{"kappa": 2.0, "n": 2, "theta0": (0.0, 3.0), **kw})
    with pytest.raises(SimConfigError):
        cfg.validate()


def test_diagnostics_schema():
    res = run_simulation(SimConfig(kappa=2.0, n=1, theta0=(0.0,), dt=1e-2, T=0.1, seed=1, n_tips=3))
    d = res.diagnostics()
    assert d["schema_id"] == SCHEMA_ID
    assert d["config"]["seed"] == 1
    json.dumps(d)
    assert res.traces_csv().splitlines()[0] == "t,curve_id,re_tip,im_tip,theta"


def test_strong_order_at_least_half():
    cfg = SimConfig(kappa=3.0, n=2, theta0=(0.0, math.pi), dt=1e-2, T=0.2)
    order, errs = strong_order(cfg, seed=1)
    assert np.all(np.diff(errs) > 0)
    # the noise is additive, so the scheme may converge faster than 1/2
    assert order >= 0.45


@pytest.mark.parametrize("kappa", [1.0, 3.0, 6.0])
def test_drift_equivalence_ratio(kappa):
    eq = drift_equivalence_check(kappa)
    assert eq.ratio_spread < 1e-12
    assert_allclose(eq.ratio, 0.5, atol=1e-12)
    assert_allclose(eq.kappa_zero_ratio, 1.0, atol=1e-12)
    assert eq.additivity_residual < 1e-10
    assert eq.zero_charge_drift == 0.0


def test_rho_conventions():
    assert_allclose(rho_from_sigma([1.0], 2.0), [1.0])
    assert_allclose(rho_from_sigma([1.0], 2.0, "unit"), [2.0])
