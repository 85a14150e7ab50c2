"""Calogero-Sutherland side of the null-vector system.

With ``Phi_r(theta) = prod_{j<k} sin((theta_k - theta_j)/2)^(-2r)`` and
``L = sum_j L_j`` the gauge-transformed operator satisfies

    Phi_{-1/kappa} L Phi_{1/kappa} = kappa * H + n (n^2 - 1) / (6 kappa)

with ``H = sum_j d_j^2 / 2 - beta (beta - 2) / 16 * sum_{j<k} 1 / sin^2((theta_j - theta_k)/2)``
and ``beta = 8 / kappa``.  The sign in front of the constant is not assumed:
:func:`conjugation_identity_check` measures it.  Eigenvalues are quoted for
``-H`` by default, which makes ``E = (n/kappa)(-h + (n^2 - 1)/(6 kappa))``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Callable, Literal, Sequence

import numpy as np

from .finite_diff import CachedFunction, FiniteDiffScheme, partial2
from .nullvec import DEFAULT_SCHEME, DegenerateSampleError, apply_nullvec_sum
from .params import in_chamber

Convention = Literal["theorem", "proof"]

# Sign of the constant in the conjugation identity, fixed by
# conjugation_identity_check (see tests/test_calogero.py for the evidence).
RESOLVED_CONSTANT_SIGN = +1


@dataclass(frozen=True)
class CSParams:
    beta: float
    n: int
    kappa: float

    def __post_init__(self):
        if abs(self.beta * self.kappa - 8.0) > 1e-12:
            raise ValueError("beta * kappa must equal 8")

    @classmethod
    def from_kappa(cls, kappa: float, n: int) -> "CSParams":
        return cls(8.0 / kappa, n, kappa)

    @property
    def coupling(self) -> float:
        return self.beta * (self.beta - 2.0) / 16.0

    @property
    def shift(self) -> float:
        n, k = self.n, self.kappa
        return n * (n * n - 1) / (6.0 * k)


def phi_r(theta, r: float) -> float:
    th = np.asarray(theta, dtype=float)
    if th.size > 1 and not in_chamber(th):
        raise ValueError(f"angles {th} are not in the chamber")
    logv = 0.0
    for j in range(th.size):
        s = np.sin((th[j + 1 :] - th[j]) / 2.0)
        if np.any(s == 0):
            raise ValueError("coincident angles")
        logv += float(np.sum(np.log(s)))
    return math.exp(-2.0 * r * logv)


def _inv_sin2_sum(th: np.ndarray) -> float:
    out = 0.0
    for j in range(th.size):
        out += float(np.sum(1.0 / np.sin((th[j + 1 :] - th[j]) / 2.0) ** 2))
    return out


def apply_cs_hamiltonian(
    psi_tilde: Callable,
    theta,
    cs: CSParams,
    scheme: FiniteDiffScheme = DEFAULT_SCHEME,
    convention: Convention = "theorem",
) -> complex:
    """``H psi_tilde`` at ``theta``; ``convention="proof"`` returns ``-H psi_tilde``."""
    th = np.asarray(theta, dtype=float)
    f = psi_tilde if isinstance(psi_tilde, CachedFunction) else CachedFunction(psi_tilde)
    kin = 0.5 * sum(partial2(f, th, j, scheme) for j in range(th.size))
    val = kin - cs.coupling * _inv_sin2_sum(th) * f(th)
    return -val if convention == "proof" else val


def gauge(psi: Callable, r: float) -> Callable:
    """``theta -> Phi_r(theta) * psi(theta)``."""
    return lambda th: phi_r(th, r) * psi(th)


def eigenvalue_theory(h: float, n: int, kappa: float) -> float:
    return (n / kappa) * (-h + (n * n - 1) / (6.0 * kappa))


@dataclass
class CSReport:
    E_measured: float
    E_theory: float
    spread: float
    sign_resolution: int
    convention: str
    n: int
    kappa: float
    family: str = ""
    samples: int = 0

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def cs_eigencheck(
    psi: Callable,
    cs: CSParams,
    samples: Sequence,
    h: float,
    scheme: FiniteDiffScheme = DEFAULT_SCHEME,
    convention: Convention = "proof",
    family: str = "",
) -> CSReport:
    """Measure ``H psi_tilde / psi_tilde`` for ``psi_tilde = Phi_{1/kappa}^{-1} psi``."""
    pt = gauge(psi, -1.0 / cs.kappa)
    vals = []
    for th in samples:
        th = np.asarray(th, dtype=float)
        f = CachedFunction(pt)
        v0 = f(th)
        if abs(v0) < 1e-300:
            raise DegenerateSampleError(f"psi_tilde vanishes at {list(th)}")
        vals.append((apply_cs_hamiltonian(f, th, cs, scheme, convention) / v0).real)
    vals = np.array(vals)
    E_th = eigenvalue_theory(h, cs.n, cs.kappa)
    E_thm = vals.mean() if convention == "theorem" else -vals.mean()
    if convention == "theorem":
        E_th = -E_th
    # kappa * E_thm = n h - sign * shift decides the sign of the constant
    sign = 0 if cs.shift == 0 else int(np.sign(cs.n * h - cs.kappa * E_thm))
    return CSReport(
        float(vals.mean()),
        E_th,
        float(vals.max() - vals.min()),
        sign,
        convention,
        cs.n,
        cs.kappa,
        family,
        len(vals),
    )


@dataclass(frozen=True)
class ConjugationResult:
    residual_plus: float
    residual_minus: float
    resolved_sign: int | None
    tol: float

    @property
    def residual(self) -> float:
        return min(self.residual_plus, self.residual_minus)


def conjugation_identity_check(
    F: Callable,
    theta,
    cs: CSParams,
    scheme: FiniteDiffScheme = DEFAULT_SCHEME,
    tol: float = 1e-4,
) -> ConjugationResult:
    """Compare ``Phi_{-1/k} L Phi_{1/k} F`` against ``kappa H F +/- n(n^2-1)/(6 kappa) F``.

    ``resolved_sign`` is the unique sign whose residual is below ``tol``;
    ``0`` when both pass (the constant vanishes, n = 1) and ``None`` when
    neither does.
    """
    th = np.asarray(theta, dtype=float)
    k = cs.kappa
    lhs = apply_nullvec_sum(gauge(F, 1.0 / k), th, k, scheme) * phi_r(th, -1.0 / k)
    Fc = CachedFunction(F)
    kh = k * apply_cs_hamiltonian(Fc, th, cs, scheme)
    scale = max(1.0, abs(Fc(th)))
    rp = abs(lhs - (kh + cs.shift * Fc(th))) / scale
    rm = abs(lhs - (kh - cs.shift * Fc(th))) / scale
    ok_p, ok_m = rp < tol, rm < tol
    if ok_p and ok_m:
        sign = 0
    elif ok_p:
        sign = +1
    elif ok_m:
        sign = -1
    else:
        sign = None
    return ConjugationResult(float(rp), float(rm), sign, tol)


def slope_regression(h_values: Sequence[float], E_values: Sequence[float]) -> tuple[float, float, float]:
    """Least-squares line ``E = slope * h + c``; returns (slope, intercept, max residual)."""
    h = np.asarray(h_values, dtype=float)
    E = np.asarray(E_values, dtype=float)
    A = np.vstack([h, np.ones_like(h)]).T
    (slope, c), *_ = np.linalg.lstsq(A, E, rcond=None)
    res = float(np.abs(A @ np.array([slope, c]) - E).max())
    return float(slope), float(c), res
