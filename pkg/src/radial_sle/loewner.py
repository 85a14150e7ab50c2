"""Multiple radial Loewner chains driven by partition-function drifts.

Angles live in the covering coordinate ``z -> e^{iz}``.  The driving system is

    d theta_j = nu_j kappa d_j log psi dt + sum_{k != j} nu_k cot((theta_j - theta_k)/2) dt
                + sqrt(kappa nu_j) dB_j

and the covering map obeys ``d h / dt = sum_j nu_j cot((h - theta_j)/2)``.
Under this flow ``log g_t'(0)`` grows like ``int sum nu``, so the logarithm of
the conformal radius decreases at rate ``sum nu``.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Literal, Sequence

import numpy as np

from .finite_diff import FiniteDiffScheme
from .nullvec import drift_from_psi
from .params import chamber_gap, derive_params, in_chamber, log_gradient_angular

SCHEMA_ID = "radial-sle-trace/1"
SEED_ENV = "RADIAL_SLE_SEED"

DriftMode = Literal["closed_form_fermionic", "numeric_psi", "rational", "sle_kappa_rho", "kappa_zero"]
DRIFT_MODES = ("closed_form_fermionic", "numeric_psi", "rational", "sle_kappa_rho", "kappa_zero")
RhoConvention = Literal["measured", "unit"]

# rho_j / (kappa a sigma_j) found by drift_equivalence_check; "unit" uses 1
RHO_FACTOR = {"measured": 0.5, "unit": 1.0}


class SimConfigError(ValueError):
    pass


def resolve_seed(seed: int | None) -> int:
    """Explicit seed, else ``$RADIAL_SLE_SEED``, else fresh OS entropy."""
    if seed is not None:
        return int(seed)
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        return int(env)
    return int(np.random.SeedSequence().entropy % 2**64)


def curve_streams(seed: int, n: int) -> list[np.random.Generator]:
    """One independent PCG64 stream per curve, spawned from the master seed."""
    return [np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(seed).spawn(n)]


@dataclass(frozen=True)
class SimConfig:
    kappa: float
    n: int
    theta0: tuple[float, ...]
    drift_mode: str = "closed_form_fermionic"
    nu: tuple[float, ...] | None = None
    dt: float = 1e-3
    T: float = 0.1
    seed: int | None = None
    collision_eps: float = 1e-3
    tip_offset: float = 1e-4
    # numeric_psi: a ScreeningSpec
    psi_spec: object | None = None
    # rational, kappa_zero, sle_kappa_rho: boundary marked points (angles)
    marked: tuple[float, ...] = ()
    marked_charges: tuple[float, ...] = ()
    growth_charge: float | None = None
    sigma_0: float = 0.0
    sigma_inf: float = 0.0
    rho: tuple[float, ...] | None = None
    rho_convention: str = "measured"
    n_tips: int = 50
    capacity_height: float = 20.0

    def __post_init__(self):
        if self.nu is None:
            object.__setattr__(self, "nu", tuple([1.0] * self.n))
        object.__setattr__(self, "theta0", tuple(float(x) for x in self.theta0))

    def validate(self) -> "SimConfig":
        if self.drift_mode not in DRIFT_MODES:
            raise SimConfigError(f"unknown drift_mode {self.drift_mode!r}")
        if self.kappa < 0:
            raise SimConfigError("kappa must be nonnegative")
        if self.drift_mode == "kappa_zero" and self.kappa != 0:
            raise SimConfigError("kappa_zero mode needs kappa = 0")
        if self.drift_mode in ("closed_form_fermionic", "numeric_psi", "rational") and self.kappa == 0:
            raise SimConfigError(f"{self.drift_mode} needs kappa > 0")
        if self.dt <= 0 or self.T <= 0:
            raise SimConfigError("dt and T must be positive")
        if len(self.theta0) != self.n or len(self.nu) != self.n:
            raise SimConfigError("theta0 and nu need one entry per curve")
        if any(v < 0 for v in self.nu):
            raise SimConfigError("rates nu_j must be nonnegative")
        th = np.array(self.theta0)
        if self.n > 1 and not in_chamber(th):
            raise SimConfigError("initial angles are not in the chamber")
        if self.n > 1 and chamber_gap(th) <= 10 * self.collision_eps:
            raise SimConfigError("initial gap must exceed 10 * collision_eps")
        if len(self.marked_charges) not in (0, len(self.marked)):
            raise SimConfigError("marked_charges needs one entry per marked point")
        if self.drift_mode == "numeric_psi" and self.psi_spec is None:
            raise SimConfigError("numeric_psi mode needs psi_spec")
        if self.drift_mode == "sle_kappa_rho" and self.rho is None and not self.marked_charges:
            raise SimConfigError("sle_kappa_rho mode needs rho or marked_charges")
        if self.rho is not None and len(self.rho) != len(self.marked):
            raise SimConfigError("rho needs one entry per marked point")
        if self.rho_convention not in RHO_FACTOR:
            raise SimConfigError(f"rho_convention must be one of {sorted(RHO_FACTOR)}")
        return self

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    def to_dict(self) -> dict:
        d = asdict(self) if self.psi_spec is None else {
            k: getattr(self, k) for k in self.__dataclass_fields__ if k != "psi_spec"
        }
        if self.psi_spec is not None:
            d["psi_spec"] = json.loads(self.psi_spec.to_json())
        return d


@dataclass
class DrivingState:
    t: float
    theta: np.ndarray
    marked: np.ndarray
    rng_streams: list = field(default_factory=list)


def rho_from_sigma(sigma: Sequence[float], kappa: float, convention: str = "measured") -> np.ndarray:
    a = derive_params(kappa).a
    return RHO_FACTOR[convention] * kappa * a * np.asarray(sigma, dtype=float)


def _cot_half(x):
    return 1.0 / np.tan(x / 2.0)


def _interaction(theta: np.ndarray, nu: np.ndarray) -> np.ndarray:
    d = theta[:, None] - theta[None, :]
    np.fill_diagonal(d, 1.0)
    c = _cot_half(d)
    np.fill_diagonal(c, 0.0)
    return c @ nu


def _drift_builder(config: SimConfig) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """``b(theta, marked)``: the partition-function part of the drift, before ``nu_j``."""
    k, mode = config.kappa, config.drift_mode
    if mode == "closed_form_fermionic":
        # kappa d_j log prod sin^(2/kappa) = sum_k cot((theta_j - theta_k)/2)
        return lambda th, q: _interaction(th, np.ones(th.size))
    if mode == "numeric_psi":
        from .screening import PartitionEvaluator

        ev = PartitionEvaluator(config.psi_spec)
        b = drift_from_psi(ev, k, FiniteDiffScheme(step=1e-3, richardson_levels=1))
        return lambda th, q: b(th)
    if mode in ("rational", "kappa_zero"):
        if mode == "rational":
            g = derive_params(k).a if config.growth_charge is None else config.growth_charge
            scale = k
        else:
            # normalized correlation: exponents doubled, growth charge 1
            g = 1.0 if config.growth_charge is None else config.growth_charge
            scale = 2.0
        sig = np.asarray(config.marked_charges, dtype=float)

        def b(th, q):
            ang = np.concatenate([th, q])
            ch = np.concatenate([np.full(th.size, g), sig])
            grad = log_gradient_angular(ang, ch, config.sigma_0, config.sigma_inf)
            return scale * grad[: th.size].real

        return b
    if mode == "sle_kappa_rho":
        rho = (
            np.asarray(config.rho, dtype=float)
            if config.rho is not None
            else rho_from_sigma(config.marked_charges, k, config.rho_convention)
        )
        return lambda th, q: (_cot_half(th[:, None] - q[None, :]) * rho).sum(axis=1)
    raise SimConfigError(mode)


def step_driving(
    state: DrivingState,
    config: SimConfig,
    dW: np.ndarray,
    drift: Callable | None = None,
) -> DrivingState:
    """One Euler-Maruyama step.  ``dW`` holds Brownian increments with variance ``dt``."""
    drift = drift or _drift_builder(config)
    nu = np.asarray(config.nu, dtype=float)
    th, q = state.theta, state.marked
    b = nu * drift(th, q) + _interaction(th, nu)
    noise = np.sqrt(config.kappa * nu) * np.asarray(dW, dtype=float)
    new_th = th + b * config.dt + noise
    new_q = q
    if q.size:
        new_q = q + config.dt * (_cot_half(q[:, None] - th[None, :]) * nu).sum(axis=1)
    return DrivingState(state.t + config.dt, new_th, new_q, state.rng_streams)


def _halt_check(state: DrivingState, config: SimConfig) -> str | None:
    th = state.theta
    if not np.all(np.isfinite(th)) or not np.all(np.isfinite(state.marked)):
        return "blowup"
    if th.size > 1 and (not in_chamber(th) or chamber_gap(th) < config.collision_eps):
        return "collision"
    if state.marked.size:
        d = np.angle(np.exp(1j * (th[:, None] - state.marked[None, :])))
        if np.abs(d).min() < config.collision_eps:
            return "collision"
    return None


def brownian_increments(config: SimConfig, seed: int, n_steps: int | None = None, dt: float | None = None) -> np.ndarray:
    """Increments of shape (steps, n); column j comes from curve j's stream."""
    n_steps = config.n_steps if n_steps is None else n_steps
    dt = config.dt if dt is None else dt
    if config.kappa == 0:
        return np.zeros((n_steps, config.n))
    streams = curve_streams(seed, config.n)
    return np.stack([s.standard_normal(n_steps) for s in streams], axis=1) * math.sqrt(dt)


def run_driving(config: SimConfig, increments: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, str]:
    """Integrate the driving system with given increments.

    Returns (times, theta path, marked path, halt_reason); paths stop at the halt.
    """
    config.validate()
    drift = _drift_builder(config)
    state = DrivingState(0.0, np.array(config.theta0), np.array(config.marked, dtype=float))
    times, thetas, marks = [0.0], [state.theta.copy()], [state.marked.copy()]
    halt = "horizon"
    for i in range(increments.shape[0]):
        try:
            with np.errstate(all="raise"):
                new = step_driving(state, config, increments[i], drift)
        except FloatingPointError:
            halt = "blowup"
            break
        reason = _halt_check(new, config)
        if reason is not None:
            halt = reason
            break
        state = new
        times.append((i + 1) * config.dt)
        thetas.append(state.theta.copy())
        marks.append(state.marked.copy())
    return np.array(times), np.array(thetas), np.array(marks).reshape(len(times), -1), halt


def _interp_driving(times: np.ndarray, thetas: np.ndarray, t: float) -> np.ndarray:
    return np.array([np.interp(t, times, thetas[:, j]) for j in range(thetas.shape[1])])


def evolve_covering_map(
    points,
    times: np.ndarray,
    thetas: np.ndarray,
    nu: Sequence[float],
    tip_offset: float = 1e-4,
) -> tuple[np.ndarray, np.ndarray]:
    """RK4 for ``dh/dt = sum_j nu_j cot((h - theta_j)/2)`` over the driving grid.

    Returns the evolved points and a mask of points swallowed (closer than
    ``tip_offset`` to a driving value) before the end.
    """
    h = np.array(points, dtype=complex).ravel()
    nu = np.asarray(nu, dtype=float)
    alive = np.ones(h.size, dtype=bool)

    def f(z, th):
        return (_cot_half(z[:, None] - th[None, :]) * nu).sum(axis=1)

    for i in range(len(times) - 1):
        t0, dt = times[i], times[i + 1] - times[i]
        th0, th1 = thetas[i], thetas[i + 1]
        thm = 0.5 * (th0 + th1)
        z = h[alive]
        if z.size == 0:
            break
        k1 = f(z, th0)
        k2 = f(z + 0.5 * dt * k1, thm)
        k3 = f(z + 0.5 * dt * k2, thm)
        k4 = f(z + dt * k3, th1)
        z = z + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        dist = np.abs(np.sin((z[:, None] - th1[None, :]) / 2.0)).min(axis=1) * 2.0
        bad = (dist < tip_offset) | ~np.isfinite(z)
        h[alive] = z
        idx = np.flatnonzero(alive)
        alive[idx[bad]] = False
    return h, ~alive


def log_conformal_radius_series(
    times: np.ndarray, thetas: np.ndarray, nu: Sequence[float], height: float = 20.0
) -> np.ndarray:
    """``-log g_t'(0)`` from the covering image of ``i * height``."""
    h, _ = evolve_covering_map_series([1j * height], times, thetas, nu)
    return h[:, 0].imag - height


def evolve_covering_map_series(points, times, thetas, nu) -> tuple[np.ndarray, None]:
    """Like :func:`evolve_covering_map` but returns the whole trajectory (steps+1, points)."""
    z = np.array(points, dtype=complex).ravel()
    nu = np.asarray(nu, dtype=float)
    out = [z.copy()]

    def f(z, th):
        return (_cot_half(z[:, None] - th[None, :]) * nu).sum(axis=1)

    for i in range(len(times) - 1):
        dt = times[i + 1] - times[i]
        th0, th1 = thetas[i], thetas[i + 1]
        thm = 0.5 * (th0 + th1)
        k1 = f(z, th0)
        k2 = f(z + 0.5 * dt * k1, thm)
        k3 = f(z + 0.5 * dt * k2, thm)
        k4 = f(z + dt * k3, th1)
        z = z + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        out.append(z.copy())
    return np.array(out), None


def trace_tips(
    times: np.ndarray,
    thetas: np.ndarray,
    nu: Sequence[float],
    tip_indices: Sequence[int],
    tip_offset: float = 1e-4,
    step_factor: float = 0.1,
) -> np.ndarray:
    """Tips ``exp(i w)`` where ``w`` is the backward flow from ``theta_j(t) + i delta``.

    All requested (time index, curve) pairs are flowed back together; each
    grid interval is split into RK4 substeps no longer than
    ``step_factor * min(Im w)^2`` so the start near the boundary is resolved.
    Failed samples come back as NaN.
    """
    nu = np.asarray(nu, dtype=float)
    n = thetas.shape[1]
    tip_indices = np.asarray(tip_indices, dtype=int)
    K = tip_indices.size
    w = np.full((K, n), np.nan + 0j)
    started = np.zeros(K, dtype=bool)
    nu_max = max(float(nu.max()), 1e-300)

    def f(z, th):
        # backward flow: minus the forward vector field
        return -(_cot_half(z[..., None] - th) * nu).sum(axis=-1)

    for i in range(int(tip_indices.max()) if K else 0, -1, -1):
        new = (tip_indices == i) & ~started
        if np.any(new):
            w[new] = thetas[i][None, :] + 1j * tip_offset
            started |= new
        if i == 0:
            break
        act = started & np.all(np.isfinite(w), axis=1)
        if not np.any(act):
            continue
        z = w[act]
        t_hi, t_lo = times[i], times[i - 1]
        th_hi, th_lo = thetas[i], thetas[i - 1]
        s, span = 0.0, t_hi - t_lo
        while s < span:
            y = np.abs(z.imag).min()
            hs = min(span - s, max(step_factor * y * y / nu_max, 1e-14))

            def drv(u):
                lam = (u - t_lo) / span if span > 0 else 0.0
                return th_lo + lam * (th_hi - th_lo)

            tt = t_hi - s
            k1 = f(z, drv(tt))
            k2 = f(z + 0.5 * hs * k1, drv(tt - 0.5 * hs))
            k3 = f(z + 0.5 * hs * k2, drv(tt - 0.5 * hs))
            k4 = f(z + hs * k3, drv(tt - hs))
            z = z + hs / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            s += hs
            if not np.all(np.isfinite(z)):
                break
        w[act] = z
    with np.errstate(all="ignore"):
        tips = np.exp(1j * w)
    tips[~np.isfinite(tips)] = np.nan
    return tips


@dataclass
class TraceResult:
    times: np.ndarray
    driving_paths: np.ndarray
    tip_times: np.ndarray
    tips: np.ndarray
    log_conformal_radius: np.ndarray
    halt_reason: str
    marked_paths: np.ndarray
    config: dict
    seed: int

    def capacity_slope(self) -> float:
        if self.times.size < 2:
            return float("nan")
        return float(np.polyfit(self.times, self.log_conformal_radius, 1)[0])

    def traces_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["t", "curve_id", "re_tip", "im_tip", "theta"])
        idx = np.searchsorted(self.times, self.tip_times)
        for k, t in enumerate(self.tip_times):
            for j in range(self.tips.shape[1]):
                tip = self.tips[k, j]
                wr.writerow([repr(float(t)), j, repr(float(tip.real)), repr(float(tip.imag)),
                             repr(float(self.driving_paths[idx[k], j]))])
        return buf.getvalue()

    def diagnostics(self) -> dict:
        return {
            "schema_id": SCHEMA_ID,
            "halt_reason": self.halt_reason,
            "seed": self.seed,
            "final_time": float(self.times[-1]),
            "steps": int(self.times.size - 1),
            "capacity_slope": self.capacity_slope(),
            "capacity_times": self.times.tolist(),
            "log_conformal_radius": self.log_conformal_radius.tolist(),
            "config": self.config,
        }

    def write(self, prefix: str) -> tuple[str, str]:
        p_csv, p_json = f"{prefix}_traces.csv", f"{prefix}_diagnostics.json"
        with open(p_csv, "w", newline="") as fh:
            fh.write(self.traces_csv())
        with open(p_json, "w") as fh:
            json.dump(self.diagnostics(), fh, indent=1, sort_keys=True)
        return p_csv, p_json


def run_simulation(config: SimConfig, increments: np.ndarray | None = None) -> TraceResult:
    """Driving SDE, capacity diagnostic and tip traces; deterministic given the seed."""
    config.validate()
    seed = resolve_seed(config.seed)
    if increments is None:
        increments = brownian_increments(config, seed)
    times, thetas, marks, halt = run_driving(config, increments)
    lcr = log_conformal_radius_series(times, thetas, config.nu, config.capacity_height)
    K = max(1, min(config.n_tips, times.size - 1))
    tip_idx = np.unique(np.linspace(0, times.size - 1, K + 1).round().astype(int))
    tips = trace_tips(times, thetas, config.nu, tip_idx, config.tip_offset)
    cfg = config.to_dict()
    cfg["seed"] = seed
    return TraceResult(times, thetas, times[tip_idx], tips, lcr, halt, marks, cfg, seed)


def _run_one(args):
    config, seed = args
    return run_simulation(replace(config, seed=seed))


def run_ensemble(config: SimConfig, count: int, jobs: int = 1) -> list[TraceResult]:
    """``count`` runs with child seeds of the master seed, in seed order."""
    master = resolve_seed(config.seed)
    seeds = [int(s.generate_state(1, np.uint64)[0]) for s in np.random.SeedSequence(master).spawn(count)]
    work = [(config, s) for s in seeds]
    if jobs <= 1:
        return [_run_one(w) for w in work]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(_run_one, work))


def strong_order(config: SimConfig, seed: int, levels: int = 4, paths: int = 40, ref_factor: int = 16) -> tuple[float, np.ndarray]:
    """Strong order of the driving scheme from coupled Brownian paths.

    Every path is simulated on the finest grid (``dt / ref_factor``) as the
    reference; coarser runs reuse the same Brownian path summed in blocks.
    Returns (fitted order, mean endpoint errors per level).
    """
    config.validate()
    n_fine = config.n_steps * ref_factor
    dt_fine = config.dt / ref_factor
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    factors = [ref_factor // 2**l for l in range(levels) if ref_factor // 2**l > 1][::-1]
    errs = np.zeros(len(factors))
    for _ in range(paths):
        dB = rng.standard_normal((n_fine, config.n)) * math.sqrt(dt_fine)
        ref = run_driving(replace(config, dt=dt_fine), dB)
        if ref[3] != "horizon":
            raise RuntimeError("reference path halted; shorten T")
        for li, fct in enumerate(factors):
            coarse = dB.reshape(-1, fct, config.n).sum(axis=1)
            out = run_driving(replace(config, dt=dt_fine * fct), coarse)
            errs[li] += np.abs(out[1][-1] - ref[1][-1]).max()
    errs /= paths
    dts = np.array([dt_fine * f for f in factors])
    order = float(np.polyfit(np.log(dts), np.log(errs), 1)[0])
    return order, errs


@dataclass(frozen=True)
class DriftEquivalence:
    kappa: float
    ratio: float
    ratio_spread: float
    additivity_residual: float
    zero_charge_drift: float
    kappa_zero_ratio: float
    kappa_zero_spread: float
    configurations: int

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def _log_Z_angular(angles: np.ndarray, charges: np.ndarray, scale: float = 1.0) -> complex:
    # complex-step friendly log of prod_{j<k} sin((t_k - t_j)/2)^(s_j s_k)
    out = 0j
    for j in range(angles.size):
        s = np.sin((angles[j + 1 :] - angles[j]) / 2.0)
        out = out + scale * np.sum(charges[j] * charges[j + 1 :] * np.log(s))
    return out


def _growth_drift(theta: float, marked: np.ndarray, charges: np.ndarray, g: float, scale: float) -> float:
    """``scale * d/dtheta log Z`` by a complex step (exact to rounding)."""
    hstep = 1e-30
    q = np.asarray(marked, dtype=float)
    # growth point first, marked points sorted after it in the chamber
    ang = np.concatenate([[theta + 1j * hstep], q])
    ch = np.concatenate([[g], charges])
    return scale * _log_Z_angular(ang, ch).imag / hstep


def drift_equivalence_check(
    kappa: float,
    sigma: float | None = None,
    configurations: int = 20,
    seed: int = 0,
) -> DriftEquivalence:
    """Resolve the proportionality between SLE(kappa, rho) weights and charges.

    At random configurations the drift ``kappa d_theta log Z`` of the growth
    point (charge ``a``) next to one marked point of charge ``sigma`` is divided
    by ``kappa a sigma cot((theta - q)/2)``.  The same is done in the
    kappa = 0 normalization (growth charge 1, doubled exponents) against
    ``sigma cot``.
    """
    p = derive_params(kappa)
    sig = p.a if sigma is None else float(sigma)
    rng = np.random.default_rng(seed)
    ratios, ratios0, add = [], [], 0.0
    for _ in range(configurations):
        theta = rng.uniform(0.0, 0.5)
        q = np.sort(theta + rng.uniform(0.3, 2 * math.pi - 0.3, 2))
        c1 = _cot_half(theta - q[0])
        d1 = _growth_drift(theta, q[:1], np.array([sig]), p.a, kappa)
        ratios.append(d1 / (kappa * p.a * sig * c1))
        d0 = _growth_drift(theta, q[:1], np.array([sig]), 1.0, 2.0)
        ratios0.append(d0 / (sig * c1))
        # superposition of two marked points
        s2 = np.array([sig, -0.7 * sig])
        both = _growth_drift(theta, q, s2, p.a, kappa)
        single = sum(_growth_drift(theta, q[i : i + 1], s2[i : i + 1], p.a, kappa) for i in range(2))
        add = max(add, abs(both - single) / max(abs(both), 1e-300))
        # cross-check the closed-form gradient used by the simulator
        g = kappa * log_gradient_angular(np.concatenate([[theta], q[:1]]), [p.a, sig])[0].real
        if abs(g - d1) > 1e-10 * max(1.0, abs(d1)):
            raise AssertionError("closed-form and complex-step drifts disagree")
    zero = abs(_growth_drift(0.1, np.array([2.0]), np.array([0.0]), p.a, kappa))
    r, r0 = np.array(ratios), np.array(ratios0)
    return DriftEquivalence(
        kappa,
        float(r.mean()),
        float(r.max() - r.min()),
        float(add),
        float(zero),
        float(r0.mean()),
        float(r0.max() - r0.min()),
        configurations,
    )
