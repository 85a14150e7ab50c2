"""Kappa-derived constants, charge divisors and Coulomb-gas correlation products.

Conventions
-----------
* ``a = sqrt(2/kappa)`` is the charge carried by a growth point.
* ``b = a * (kappa/4 - 1)`` is the background charge.  With this choice
  ``lambda_b(a) = (6 - kappa) / (2 kappa)`` and both screening charges
  ``-2a`` and ``2(a + b)`` have conformal dimension one.
* In the angular chart a pair factor is ``sin((theta_k - theta_j)/2)`` with
  ``j < k``, which is positive on the chamber.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Iterable, Literal, Sequence

import numpy as np

NEUTRALITY_TOL = 1e-12

Geometry = Literal["sphere", "half_plane", "disk", "angular"]


class SingularConfigurationError(ValueError):
    """Two charged points coincide."""


@dataclass(frozen=True)
class KappaParams:
    kappa: float
    a: float
    b: float
    central_charge: float
    fugacity: float

    def dimension(self, sigma: complex) -> complex:
        return conformal_dimension(sigma, self)

    @property
    def screening_charges(self) -> tuple[float, float]:
        return (-2.0 * self.a, 2.0 * (self.a + self.b))


def derive_params(kappa: float) -> KappaParams:
    """All kappa-dependent constants used across the package."""
    kappa = float(kappa)
    if not (kappa > 0 and math.isfinite(kappa)):
        raise ValueError(f"kappa must be a positive finite number, got {kappa!r}")
    a = math.sqrt(2.0 / kappa)
    b = a * (kappa / 4.0 - 1.0)
    c = (3.0 * kappa - 8.0) * (6.0 - kappa) / (2.0 * kappa)
    fugacity = -2.0 * math.cos(4.0 * math.pi / kappa)
    return KappaParams(kappa=kappa, a=a, b=b, central_charge=c, fugacity=fugacity)


def conformal_dimension(sigma: complex, params: KappaParams) -> complex:
    """``lambda_b(sigma) = sigma^2/2 - sigma*b``."""
    return sigma * sigma / 2.0 - sigma * params.b


def classical_dimension(sigma: complex, half_square: bool = False) -> complex:
    """Conformal dimension of the normalized kappa = 0 correlation.

    The default is ``sigma^2 + 2 sigma``; ``half_square=True`` gives the
    alternative normalization ``sigma^2/2 + 2 sigma``.
    """
    if half_square:
        return sigma * sigma / 2.0 + 2.0 * sigma
    return sigma * sigma + 2.0 * sigma


@dataclass(frozen=True)
class Divisor:
    """Charges placed at distinct points.

    Locations are complex numbers (``math.inf`` for the point at infinity) or
    real angles, depending on the geometry they are evaluated in.
    """

    points: tuple[tuple[complex, complex], ...] = ()

    def __post_init__(self):
        pts = tuple((_as_location(z), complex(s)) for z, s in self.points)
        object.__setattr__(self, "points", pts)
        locs = [z for z, _ in pts]
        for i in range(len(locs)):
            for j in range(i + 1, len(locs)):
                if _same_location(locs[i], locs[j]):
                    raise SingularConfigurationError(
                        f"points {i} and {j} coincide at {locs[i]}"
                    )

    @classmethod
    def from_lists(cls, locations: Iterable, charges: Iterable) -> "Divisor":
        return cls(tuple(zip(locations, charges)))

    @property
    def locations(self) -> list[complex]:
        return [z for z, _ in self.points]

    @property
    def charges(self) -> list[complex]:
        return [s for _, s in self.points]

    def total_charge(self) -> complex:
        return sum(self.charges, 0j)

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class DoubleDivisor:
    """Pair of divisors on a domain with an anticonformal involution.

    ``sigma_minus`` uses the representative that carries no charge at boundary
    points, so any boundary charge in it is folded into ``sigma_plus``.
    """

    sigma_plus: Divisor
    sigma_minus: Divisor = field(default_factory=Divisor)
    domain: Literal["half_plane", "disk"] = "half_plane"

    def __post_init__(self):
        plus = {z: s for z, s in self.sigma_plus.points}
        minus = []
        moved = False
        for z, s in self.sigma_minus.points:
            if _on_boundary(z, self.domain) and s != 0:
                moved = True
                hit = next((k for k in plus if _same_location(k, z)), None)
                if hit is None:
                    plus[z] = s
                else:
                    plus[hit] += s
            else:
                minus.append((z, s))
        if moved:
            object.__setattr__(self, "sigma_plus", Divisor(tuple(plus.items())))
            object.__setattr__(self, "sigma_minus", Divisor(tuple(minus)))

    def total_charge(self) -> complex:
        return self.sigma_plus.total_charge() + self.sigma_minus.total_charge()


@dataclass(frozen=True)
class ThetaConfig:
    """Ordered angles ``theta_1 < ... < theta_n < theta_1 + 2 pi``."""

    angles: tuple[float, ...]

    def __post_init__(self):
        angles = tuple(float(t) for t in self.angles)
        object.__setattr__(self, "angles", angles)
        if not in_chamber(angles):
            raise ValueError(f"angles {angles} are not in the chamber")

    def __len__(self) -> int:
        return len(self.angles)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.angles, dtype=float)


def in_chamber(angles: Sequence[float], margin: float = 0.0) -> bool:
    th = np.asarray(angles, dtype=float)
    if th.size <= 1:
        return bool(np.all(np.isfinite(th)))
    gaps = np.diff(th)
    wrap = th[0] + 2.0 * math.pi - th[-1]
    return bool(np.all(gaps > margin) and wrap > margin)


def chamber_gap(angles: Sequence[float]) -> float:
    """Smallest cyclic gap between consecutive angles."""
    th = np.asarray(angles, dtype=float)
    if th.size <= 1:
        return 2.0 * math.pi
    gaps = np.append(np.diff(th), th[0] + 2.0 * math.pi - th[-1])
    return float(gaps.min())


def check_neutrality(
    divisor: Divisor | DoubleDivisor,
    params: KappaParams,
    mode: Literal["kappa_positive", "classical"] = "kappa_positive",
    tol: float = NEUTRALITY_TOL,
) -> tuple[bool, complex]:
    """Return ``(neutral, defect)`` with defect ``sum(sigma) - 2b`` (or ``+2``)."""
    total = divisor.total_charge()
    if mode == "kappa_positive":
        defect = total - 2.0 * params.b
    elif mode == "classical":
        defect = total + 2.0
    else:
        raise ValueError(f"unknown neutrality mode {mode!r}")
    return abs(defect) <= tol, defect


def eval_correlation(
    divisor: Divisor | DoubleDivisor,
    geometry: Geometry = "sphere",
    sigma_0: complex = 0.0,
    sigma_inf: complex = 0.0,
    normalized: bool = False,
) -> complex:
    """Value of the Coulomb-gas correlation in the identity chart.

    ``normalized=True`` doubles every exponent (the kappa = 0 correlation).
    For ``geometry="angular"`` the locations are angles and ``sigma_0``,
    ``sigma_inf`` are the charges at the origin and at infinity; they only
    enter through the spin factor ``exp(i/2 sigma_j (sigma_0 - sigma_inf) theta_j)``.
    """
    scale = 2.0 if normalized else 1.0
    if geometry == "angular":
        if not isinstance(divisor, Divisor):
            raise TypeError("angular geometry takes a plain Divisor of angles")
        return _angular_correlation(divisor, sigma_0, sigma_inf, scale)
    if geometry == "sphere":
        if not isinstance(divisor, Divisor):
            raise TypeError("sphere geometry takes a plain Divisor")
        return _pair_product(divisor.points, divisor.points, scale, upper=True)
    if geometry in ("half_plane", "disk"):
        if isinstance(divisor, Divisor):
            divisor = DoubleDivisor(divisor, Divisor(), domain=geometry)
        return _double_correlation(divisor, geometry, scale)
    raise ValueError(f"unknown geometry {geometry!r}")


def log_gradient_angular(
    angles: Sequence[float],
    charges: Sequence[complex],
    sigma_0: complex = 0.0,
    sigma_inf: complex = 0.0,
) -> np.ndarray:
    """Closed-form ``d/d theta_j log`` of the angular correlation."""
    th = np.asarray(angles, dtype=float)
    sg = np.asarray(charges, dtype=complex)
    diff = th[:, None] - th[None, :]
    np.fill_diagonal(diff, 1.0)
    cot = 1.0 / np.tan(diff / 2.0)
    np.fill_diagonal(cot, 0.0)
    grad = 0.5 * sg * (cot @ sg)
    grad += 0.5j * sg * (sigma_0 - sigma_inf)
    return grad


def _angular_correlation(div: Divisor, sigma_0, sigma_inf, scale) -> complex:
    th = np.array([z.real for z in div.locations])
    sg = np.array(div.charges)
    logv = 0j
    for j in range(len(th)):
        for k in range(j + 1, len(th)):
            s = math.sin((th[k] - th[j]) / 2.0)
            if abs(s) < 1e-14:
                raise SingularConfigurationError(f"angles {j} and {k} coincide modulo 2 pi")
            logv += scale * sg[j] * sg[k] * cmath.log(s)
    logv += scale * 0.5j * (sigma_0 - sigma_inf) * complex(np.sum(sg * th))
    return cmath.exp(logv)


def _pair_product(left, right, scale, upper: bool, conj_right=False, disk=False) -> complex:
    logv = 0j
    for j, (zj, sj) in enumerate(left):
        for k, (zk, sk) in enumerate(right):
            if upper and k <= j:
                continue
            if _is_inf(zj) or _is_inf(zk):
                continue
            e = scale * sj * sk
            if e == 0:
                continue
            if conj_right:
                if disk:
                    base = 1.0 - zj * zk.conjugate()
                elif j == k or _same_location(zj, zk):
                    base = 2.0 * zj.imag
                else:
                    base = zj - zk.conjugate()
            else:
                base = zj - zk
            if base == 0:
                raise SingularConfigurationError(f"singular factor at {zj}, {zk}")
            logv += e * cmath.log(base)
    return cmath.exp(logv)


def _double_correlation(dd: DoubleDivisor, geometry: str, scale: float) -> complex:
    plus = dd.sigma_plus.points
    minus = dd.sigma_minus.points
    disk = geometry == "disk"
    v = _pair_product(plus, plus, scale, upper=True)
    conj_minus = [(z.conjugate(), s) for z, s in minus]
    v *= _pair_product(conj_minus, conj_minus, scale, upper=True)
    # cross terms pair each sigma+ point with every sigma- point
    cross = 0j
    for zj, sj in plus:
        for zk, sk in minus:
            if _is_inf(zj) or _is_inf(zk):
                continue
            e = scale * sj * sk
            if e == 0:
                continue
            if disk:
                base = 1.0 - zj * zk.conjugate()
            elif _same_location(zj, zk):
                base = 2.0 * zj.imag
            else:
                base = zj - zk.conjugate()
            if base == 0:
                raise SingularConfigurationError(f"singular cross factor at {zj}, {zk}")
            cross += e * cmath.log(base)
    return v * cmath.exp(cross)


def _as_location(z) -> complex:
    if z is None:
        return complex(math.inf, 0.0)
    return complex(z)


def _is_inf(z: complex) -> bool:
    return not cmath.isfinite(z)


def _same_location(z: complex, w: complex) -> bool:
    if _is_inf(z) or _is_inf(w):
        return _is_inf(z) and _is_inf(w)
    return z == w


def _on_boundary(z: complex, domain: str) -> bool:
    if _is_inf(z):
        return domain == "half_plane"
    if domain == "half_plane":
        return z.imag == 0.0
    return abs(abs(z) - 1.0) < 1e-15
