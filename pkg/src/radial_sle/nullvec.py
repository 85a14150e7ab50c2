"""Null-vector operators, rotation and Ward identities, commutator identities.

All derivatives are finite differences (:mod:`radial_sle.finite_diff`), so
any callable ``psi(theta) -> complex`` can be checked, closed form or
quadrature based.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .finite_diff import CachedFunction, FiniteDiffScheme, StepSizeError, directional, partial, partial2
from .params import chamber_gap, in_chamber

DEFAULT_SCHEME = FiniteDiffScheme()
# nested differences amplify roundoff by 1/h^4, so commutators use a coarser step
COMMUTATOR_SCHEME = FiniteDiffScheme(step=1e-2)


class DegenerateSampleError(ValueError):
    pass


def _check_probes(theta, scheme: FiniteDiffScheme, levels_out: float = 1.0):
    th = np.asarray(theta, dtype=float)
    if th.size > 1 and chamber_gap(th) <= 2.0 * scheme.reach * levels_out:
        raise StepSizeError(
            f"finite-difference probes of size {scheme.reach:.3g} leave the chamber at {th}"
        )
    return th


def _cot_half(x):
    return 1.0 / np.tan(x / 2.0)


def apply_nullvec_operator(
    psi: Callable, theta, j: int, kappa: float, scheme: FiniteDiffScheme = DEFAULT_SCHEME
) -> complex:
    """``L_j psi`` with ``L_j = kappa/2 d_j^2 + sum_k [cot((t_k - t_j)/2) d_k + (1 - 6/kappa) / (4 sin^2((t_k - t_j)/2))]``."""
    th = _check_probes(theta, scheme)
    f = psi if isinstance(psi, CachedFunction) else CachedFunction(psi)
    n = th.size
    out = 0.5 * kappa * partial2(f, th, j, scheme)
    pot = (1.0 - 6.0 / kappa) / 4.0
    for k in range(n):
        if k == j:
            continue
        d = th[k] - th[j]
        out += _cot_half(d) * partial(f, th, k, scheme)
        out += pot / math.sin(d / 2.0) ** 2 * f(th)
    return out


def apply_nullvec_sum(psi, theta, kappa, scheme=DEFAULT_SCHEME) -> complex:
    f = psi if isinstance(psi, CachedFunction) else CachedFunction(psi)
    th = np.asarray(theta, dtype=float)
    return sum(apply_nullvec_operator(f, th, j, kappa, scheme) for j in range(th.size))


@dataclass
class ResidualReport:
    kappa: float
    family: str = ""
    per_index: list = field(default_factory=list)
    h_estimate: float = float("nan")
    h_spread: float = float("nan")
    h_imag_max: float = 0.0
    omega_estimate: float = float("nan")
    omega_spread: float = float("nan")
    omega_shift_estimate: float = float("nan")
    ward_residuals: tuple = ()
    step: float = DEFAULT_SCHEME.step
    order: int = DEFAULT_SCHEME.order
    richardson_levels: int = DEFAULT_SCHEME.richardson_levels
    samples: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), default=_jsonable)


def _jsonable(x):
    if isinstance(x, complex):
        return [x.real, x.imag]
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    raise TypeError(type(x))


def _nonzero(val: complex, theta) -> complex:
    if abs(val) < 1e-300:
        raise DegenerateSampleError(f"|psi| vanishes at {list(theta)}")
    return val


def estimate_h(
    psi: Callable,
    samples: Sequence,
    kappa: float,
    scheme: FiniteDiffScheme = DEFAULT_SCHEME,
    report: ResidualReport | None = None,
) -> tuple[float, float]:
    """Pooled ``L_j psi / psi`` over all indices and samples: (mean, max - min)."""
    if len(samples) < 3:
        raise ValueError("estimate_h needs at least 3 samples")
    ratios = []
    for th in samples:
        th = np.asarray(th, dtype=float)
        f = CachedFunction(psi)
        p0 = _nonzero(f(th), th)
        for j in range(th.size):
            ratios.append(apply_nullvec_operator(f, th, j, kappa, scheme) / p0)
    r = np.array(ratios)
    h = float(r.real.mean())
    spread = float(r.real.max() - r.real.min())
    if report is not None:
        report.per_index = [[float(v.real), float(v.imag)] for v in r]
        report.h_estimate, report.h_spread = h, spread
        report.h_imag_max = float(np.abs(r.imag).max())
        report.samples = [list(map(float, s)) for s in samples]
    return h, spread


def estimate_omega(
    psi: Callable,
    samples: Sequence,
    scheme: FiniteDiffScheme = DEFAULT_SCHEME,
    report: ResidualReport | None = None,
    shift: float = 1e-2,
) -> tuple[float, float]:
    """Pooled ``sum_j d_j psi / psi`` over samples: (mean, max - min).

    With this convention ``psi(theta + s) = exp(omega s) psi(theta)``.
    """
    if len(samples) < 3:
        raise ValueError("estimate_omega needs at least 3 samples")
    vals, shifts = [], []
    for th in samples:
        th = np.asarray(th, dtype=float)
        f = CachedFunction(psi)
        p0 = _nonzero(f(th), th)
        ones = np.ones(th.size)
        vals.append(directional(f, th, ones, scheme) / p0)
        # independent route: log of a finite rigid rotation
        shifts.append(np.log(f(th + shift) / f(th - shift)).real / (2 * shift))
    v = np.array(vals)
    om = float(v.real.mean())
    spread = float(v.real.max() - v.real.min())
    if report is not None:
        report.omega_estimate, report.omega_spread = om, spread
        report.omega_shift_estimate = float(np.mean(shifts))
    return om, spread


@dataclass(frozen=True)
class WardResiduals:
    translation: float
    dilation: float
    special: float

    def max(self) -> float:
        return max(self.translation, self.dilation, self.special)


def check_ward(
    J: Callable,
    z,
    u: complex,
    ustar: complex,
    dims: tuple[float, float, float],
    scheme: FiniteDiffScheme = DEFAULT_SCHEME,
) -> WardResiduals:
    """Residuals of the three global Ward identities, scaled by ``|J|``.

    ``J(z, u, ustar)`` is holomorphic in every argument; ``dims`` holds the
    conformal dimension at the real points, at ``u`` and at ``u*``.  All
    derivatives are taken along the real direction.
    """
    z = np.asarray(z, dtype=float)
    if z.size > 1 and np.diff(z).min() <= 4 * scheme.reach:
        raise StepSizeError("points too close for the finite-difference step")
    lam_z, lam_u, lam_us = dims
    n = z.size

    def F(x):
        return J(x[:n], u + x[n], ustar + x[n + 1])

    f = CachedFunction(F)
    x0 = np.concatenate([z, [0.0, 0.0]])
    j0 = _nonzero(f(x0), x0)
    grad = np.array([partial(f, x0, i, scheme) for i in range(n + 2)])
    pts = np.concatenate([z.astype(complex), [u, ustar]])
    lam = np.concatenate([np.full(n, lam_z), [lam_u, lam_us]])
    trans = grad.sum()
    dil = np.sum(pts * grad) + lam.sum() * j0
    spec = np.sum(pts**2 * grad) + 2.0 * np.sum(lam * pts) * j0
    s = abs(j0)
    return WardResiduals(float(abs(trans) / s), float(abs(dil) / s), float(abs(spec) / s))


def drift_from_psi(psi: Callable, kappa: float, scheme: FiniteDiffScheme = DEFAULT_SCHEME) -> Callable:
    """``b(theta) = kappa * grad log psi`` by finite differences."""

    def b(theta):
        th = np.asarray(theta, dtype=float)
        f = CachedFunction(psi)
        p0 = f(th)
        g = np.array([partial(f, th, j, scheme) for j in range(th.size)]) / p0
        return kappa * g.real

    return b


def apply_generator(
    F: Callable, drift: Callable, theta, i: int, kappa: float, scheme: FiniteDiffScheme
) -> complex:
    """``M_i F = kappa/2 d_ii F + b_i d_i F + sum_{j != i} cot((t_j - t_i)/2) d_j F``."""
    th = np.asarray(theta, dtype=float)
    f = F if isinstance(F, CachedFunction) else CachedFunction(F)
    b = drift(th)
    out = 0.5 * kappa * partial2(f, th, i, scheme) + b[i] * partial(f, th, i, scheme)
    for j in range(th.size):
        if j != i:
            out += _cot_half(th[j] - th[i]) * partial(f, th, j, scheme)
    return out


def commutator_check_generators(
    drift: Callable,
    F: Callable,
    point,
    kappa: float,
    pair: tuple[int, int] = (0, 1),
    scheme: FiniteDiffScheme = COMMUTATOR_SCHEME,
) -> float:
    """``|([M_i, M_j] - (M_j - M_i) / sin^2((t_j - t_i)/2)) F|`` at ``point``.

    The outer derivatives use a step three times the inner one.
    """
    th = _check_probes(point, scheme, levels_out=4.0)
    i, j = pair
    if i == j:
        return 0.0
    outer = scheme.scaled(3.0)
    Fc = CachedFunction(F)
    dcache: dict[tuple, np.ndarray] = {}

    def drift_c(x):
        key = tuple(np.asarray(x, dtype=float))
        if key not in dcache:
            dcache[key] = np.asarray(drift(np.array(key)))
        return dcache[key]

    def MF(k):
        return CachedFunction(lambda x: apply_generator(Fc, drift_c, x, k, kappa, scheme))

    Mi, Mj = MF(i), MF(j)
    lhs = apply_generator(Mj, drift_c, th, i, kappa, outer) - apply_generator(
        Mi, drift_c, th, j, kappa, outer
    )
    rhs = (Mj(th) - Mi(th)) / math.sin((th[j] - th[i]) / 2.0) ** 2
    return float(abs(lhs - rhs))


def commutator_check_nullvec(
    psi: Callable,
    theta,
    pair: tuple[int, int],
    kappa: float,
    scheme: FiniteDiffScheme = COMMUTATOR_SCHEME,
) -> float:
    """``|[L_j, L_k] psi - (L_k - L_j) psi / sin^2((t_j - t_k)/2)| / |psi|``."""
    th = _check_probes(theta, scheme, levels_out=4.0)
    j, k = pair
    if j == k:
        return 0.0
    outer = scheme.scaled(3.0)
    f = CachedFunction(psi)
    Lj = CachedFunction(lambda x: apply_nullvec_operator(f, x, j, kappa, scheme))
    Lk = CachedFunction(lambda x: apply_nullvec_operator(f, x, k, kappa, scheme))
    lhs = apply_nullvec_operator(Lk, th, j, kappa, outer) - apply_nullvec_operator(
        Lj, th, k, kappa, outer
    )
    rhs = (Lk(th) - Lj(th)) / math.sin((th[j] - th[k]) / 2.0) ** 2
    return float(abs(lhs - rhs) / max(abs(f(th)), 1e-300))


def random_chamber_points(n: int, count: int, rng, min_gap: float = 0.3) -> list[np.ndarray]:
    """Uniform-ish chamber samples with every cyclic gap at least ``min_gap``."""
    if n * min_gap >= 2 * math.pi:
        raise ValueError("min_gap too large for n points")
    out = []
    while len(out) < count:
        th = np.sort(rng.uniform(0.0, 2 * math.pi, n))
        if chamber_gap(th) >= min_gap and in_chamber(th):
            out.append(th)
    return out


def fd_order_check(
    psi: Callable, theta, kappa: float, h_exact: float, step: float = 0.1, order: int = 4
) -> tuple[float, float, float]:
    """Residual ``max_j |L_j psi / psi - h|`` at ``step`` and ``step / 2`` without Richardson.

    Returns (coarse residual, fine residual, ratio); the ratio approaches
    ``2**order`` while truncation error dominates.
    """
    res = []
    for s in (step, step / 2):
        sch = FiniteDiffScheme(step=s, order=order, richardson_levels=1)
        f = CachedFunction(psi)
        th = np.asarray(theta, dtype=float)
        p0 = _nonzero(f(th), th)
        res.append(max(abs(apply_nullvec_operator(f, th, j, kappa, sch) / p0 - h_exact) for j in range(th.size)))
    return float(res[0]), float(res[1]), float(res[0] / max(res[1], 1e-300))
