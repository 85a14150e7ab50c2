"""Coulomb-gas partition functions built from screening integrals.

Families, in angular coordinates with growth charges ``a`` at the angles:

``ground``   one screening charge ``-2a`` per link, integrated over a
             Pochhammer loop around the link's endpoints.
``spin``     as ``ground`` with spin factors ``exp(eta a^2 theta_i / 2)`` and
             ``exp(-eta a^2 zeta_j)``.
``excited``  as ``ground`` plus one charge ``2(a + b)`` integrated over a
             circle about the origin (n even).
``chordal``  ``n = 2k`` angles, the last one carrying ``2b - a``, ``k - 1``
             screening charges.

``HalfPlaneMaster`` is the ground family in half-plane coordinates with the
origin and infinity marked by ``u`` and ``u*``; it is used for the global
Ward identities.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .contour import (
    BranchedIntegrand,
    ClearanceError,
    Path,
    circle_path,
    horizontal_path,
    is_integer_exponent,
    integrate_paths,
    pochhammer_path,
)
from .linkpatterns import LinkPattern, parse_pattern
from .params import KappaParams, chamber_gap, derive_params, in_chamber

FAMILIES = ("ground", "excited", "spin", "chordal")


class ConfigurationError(ValueError):
    pass


def default_pattern(family: str, n: int, m: int) -> LinkPattern:
    if family == "chordal":
        return LinkPattern("chordal", n, tuple((2 * i + 1, 2 * i + 2) for i in range(m)))
    return LinkPattern("radial", n, tuple((2 * i + 1, 2 * i + 2) for i in range(m)))


@dataclass(frozen=True)
class ScreeningSpec:
    family: str
    n: int
    m: int
    params: KappaParams
    pattern: LinkPattern | None = None
    eta: float = 0.0
    omega_radius: float | None = None
    nq: int = 16
    ratio: float = 0.5
    apex_ratio: float = 0.12
    radius_ratio: float = 0.15
    n_omega: int = 64
    tol: float = 1e-9

    def __post_init__(self):
        fam, n, m = self.family, self.n, self.m
        if fam not in FAMILIES:
            raise ValueError(f"unknown family {fam!r}; expected one of {FAMILIES}")
        if n < 1 or m < 0:
            raise ValueError("need n >= 1 and m >= 0")
        if fam == "excited" and n % 2:
            raise ValueError("the excited family needs an even number of curves")
        if fam == "chordal":
            if n % 2 or m != n // 2 - 1:
                raise ValueError("the chordal family needs n = 2k and m = k - 1")
        elif 2 * m > n:
            if 2 * m <= n + 2:
                warnings.warn("m exceeds n/2: no link pattern of this size exists")
            raise ValueError(f"need 2m <= n for a link pattern, got n={n}, m={m}")
        pat = self.pattern
        if pat is None:
            pat = default_pattern(fam, n, m)
        elif isinstance(pat, str):
            pat = parse_pattern(pat)
        want = "chordal" if fam == "chordal" else "radial"
        if pat.kind != want or pat.n != n or pat.m != m:
            raise ValueError(f"pattern {pat} does not fit family {fam} with n={n}, m={m}")
        if fam == "chordal" and n not in pat.rays:
            raise ConfigurationError("the distinguished point must not be linked")
        object.__setattr__(self, "pattern", pat)

    @property
    def kappa(self) -> float:
        return self.params.kappa

    def charges(self) -> np.ndarray:
        a, b = self.params.a, self.params.b
        s = np.full(self.n, a)
        if self.family == "chordal":
            s[-1] = 2 * b - a
        return s

    def to_json(self) -> str:
        return json.dumps(
            {
                "family": self.family,
                "n": self.n,
                "m": self.m,
                "kappa": self.params.kappa,
                "pattern": self.pattern.to_text(),
                "eta": self.eta,
                "omega_radius": self.omega_radius,
                "nq": self.nq,
                "tol": self.tol,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "ScreeningSpec":
        d = json.loads(text)
        kappa = d.pop("kappa")
        d["pattern"] = parse_pattern(d["pattern"])
        return cls(params=derive_params(kappa), **d)


def make_spec(family: str, n: int, m: int, kappa: float, **kw) -> ScreeningSpec:
    return ScreeningSpec(family, n, m, derive_params(kappa), **kw)


def theta_prefactor_log(theta: np.ndarray, charges: np.ndarray) -> float:
    """``sum_{j<k} s_j s_k log sin((theta_k - theta_j)/2)`` (real on the chamber)."""
    out = 0.0
    for j in range(theta.size):
        d = np.sin((theta[j + 1 :] - theta[j]) / 2.0)
        out += float(np.sum(charges[j] * charges[j + 1 :] * np.log(d)))
    return out


def _lift(theta: np.ndarray, pattern: LinkPattern) -> np.ndarray:
    """Real positions of the angles inside one window shorter than 2 pi.

    The window starts at the first root link so that every link interval
    runs left to right.
    """
    if pattern.kind == "chordal" or pattern.m == 0:
        return theta.copy()
    n = pattern.n
    roots = [l for l in pattern.links if not any(pattern._nested(o, l) for o in pattern.links if o != l)]
    s0 = min(s for s, _ in roots)
    idx = np.arange(1, n + 1)
    return theta + 2 * math.pi * (idx < s0)


def _pair_orientation(pattern: LinkPattern, windows) -> np.ndarray:
    """+1 where zeta_k - zeta_j has positive imaginary part at the base points."""
    m = pattern.m
    orient = np.ones((m, m))
    for j in range(m):
        for k in range(j + 1, m):
            (aj, bj), (ak, bk) = windows[j], windows[k]
            if ak <= aj and bj <= bk:
                orient[j, k] = 1.0  # k encloses j
            elif aj <= ak and bk <= bj:
                orient[j, k] = -1.0
            else:
                orient[j, k] = 1.0 if ak > aj else -1.0
    return orient


@dataclass
class PartitionEvaluator:
    """``psi(theta)`` for one screening family."""

    spec: ScreeningSpec
    level: int = 0

    def __call__(self, theta) -> complex:
        return self.evaluate(theta)

    def _disc(self, level):
        s = self.spec
        return s.nq + 8 * level, s.ratio * 0.7**level, int(s.n_omega * 1.5**level)

    def evaluate(self, theta, level: int | None = None) -> complex:
        lv = self.level if level is None else level
        th = np.asarray(theta, dtype=float)
        s = self.spec
        if th.size != s.n:
            raise ValueError(f"expected {s.n} angles, got {th.size}")
        if not in_chamber(th):
            raise ConfigurationError(f"angles {th} are not in the chamber")
        a = s.params.a
        charges = s.charges()
        logpre = theta_prefactor_log(th, charges)
        if s.family == "spin":
            logpre += s.eta * a * a / 2.0 * float(th.sum())
        paths, integrand = self.build(th, lv)
        if integrand is None:
            return complex(math.exp(logpre))
        val = integrate_paths(integrand, paths)
        return val * math.exp(logpre)

    def evaluate_with_error(self, theta) -> tuple[complex, float]:
        v0 = self.evaluate(theta, self.level)
        v1 = self.evaluate(theta, self.level + 1)
        return v1, abs(v1 - v0)

    def build(self, th: np.ndarray, level: int = 0):
        s = self.spec
        pat = s.pattern
        nq, ratio, n_omega = self._disc(level)
        a = s.params.a
        charges = s.charges()
        x = _lift(th, pat)
        images = np.concatenate([x - 2 * math.pi, x, x + 2 * math.pi])
        windows = [(x[l[0] - 1], x[l[1] - 1]) for l in pat.links]
        mz = pat.m
        excited = s.family == "excited"
        nv = mz + (1 if excited else 0)
        if nv == 0:
            return [], None
        gap = chamber_gap(th)
        paths: list[Path] = []
        top = 0.0
        exps = np.zeros((nv, s.n), dtype=complex)
        exps[:mz, :] = -2 * a * charges[None, :]
        for (x1, x2), (ls, le) in zip(windows, pat.links):
            w = x2 - x1
            r = s.radius_ratio * gap
            h = s.apex_ratio * w
            es, ee = exps[0, ls - 1], exps[0, le - 1]
            if is_integer_exponent(es) or is_integer_exponent(ee):
                # single-valued around that endpoint: the Pochhammer loop
                # integrates to zero, a plain loop is a nontrivial cycle
                centre = x1 if is_integer_exponent(es) else x2
                paths.append(circle_path(centre, r, nq=nq))
                top = max(top, r)
                continue
            paths.append(pochhammer_path(x1, x2, images, apex_height=h, radius=r, nq=nq, ratio=ratio))
            top = max(top, h, r)
        pair = np.zeros((nv, nv), dtype=complex)
        pair[:mz, :mz] = np.triu(np.full((mz, mz), 4 * a * a), 1)
        orient = np.ones((nv, nv))
        orient[:mz, :mz] = _pair_orientation(pat, windows)
        linear = np.zeros(nv, dtype=complex)
        if s.family == "spin":
            linear[:mz] = -s.eta * a * a
        if excited:
            radius = s.omega_radius if s.omega_radius is not None else 0.5 * math.exp(-top)
            Y = -math.log(radius)
            if Y <= top:
                raise ClearanceError(
                    f"omega circle radius {radius:.3g} does not clear the screening contours"
                )
            # a * 2(a + b) = 1 and -2a * 2(a + b) = -2 for every kappa
            exps[mz, :] = 1.0
            pair[:mz, mz] = -2.0
            # periodic trapezoid error decays like exp(-N * clearance)
            npts = max(n_omega, min(4096, int(math.ceil(36.0 / (Y - top)))))
            paths.append(horizontal_path(float(x[0]), Y, npts))
        integrand = BranchedIntegrand(
            "angular", x, exps, pair_exps=pair, pair_orient=orient, linear=linear
        )
        return paths, integrand

    def rotation_constant_theory(self) -> float:
        s = self.spec
        if s.family == "spin":
            return s.eta * (s.n - 2 * s.m) / s.kappa
        return 0.0

    def h_theory(self) -> float:
        return h_theory(self.spec)


def h_theory(spec: ScreeningSpec) -> float:
    """Closed-form null-vector eigenvalue for each family."""
    k, n, m = spec.kappa, spec.n, spec.m
    if spec.family == "ground":
        return (1 - (n - 2 * m) ** 2) / (2 * k)
    if spec.family == "spin":
        return -((n - 2 * m) ** 2) / (2 * k) + (1 + spec.eta**2) / (2 * k)
    if spec.family == "excited":
        return (1 - (n - 2 * m + k / 2) ** 2) / (2 * k)
    if spec.family == "chordal":
        return (6 - k) * (k - 2) / (8 * k)
    raise ValueError(spec.family)


def eval_ground_J(spec: ScreeningSpec, theta) -> complex:
    if spec.family != "ground":
        raise ValueError("spec is not a ground family")
    return PartitionEvaluator(spec)(theta)


def eval_excited_K(spec: ScreeningSpec, theta) -> complex:
    if spec.family != "excited":
        raise ValueError("spec is not an excited family")
    return PartitionEvaluator(spec)(theta)


def eval_spin_J(spec: ScreeningSpec, theta) -> complex:
    if spec.family != "spin":
        raise ValueError("spec is not a spin family")
    return PartitionEvaluator(spec)(theta)


def eval_chordal_L(spec: ScreeningSpec, theta) -> complex:
    if spec.family != "chordal":
        raise ValueError("spec is not a chordal family")
    return PartitionEvaluator(spec)(theta)


def fermionic_ground(theta, kappa: float) -> float:
    """Closed form of the m = 0 ground family."""
    th = np.asarray(theta, dtype=float)
    a2 = 2.0 / kappa
    return math.exp(theta_prefactor_log(th, np.full(th.size, math.sqrt(a2))))


@dataclass
class HalfPlaneMaster:
    """Ground family in the upper half plane with marked points ``u`` and ``u*``.

    ``u`` and ``u*`` both carry ``b - (n - 2m) a / 2`` and are treated as
    independent complex variables, so derivatives in them are holomorphic.
    """

    n: int
    m: int
    params: KappaParams
    links: Sequence[tuple[int, int]] | None = None
    nq: int = 16
    apex_ratio: float = 0.12
    radius_ratio: float = 0.15

    def __post_init__(self):
        if 2 * self.m > self.n:
            raise ValueError("need 2m <= n")
        if self.links is None:
            self.links = [(2 * i + 1, 2 * i + 2) for i in range(self.m)]
        LinkPattern("chordal", self.n, tuple(self.links))

    @property
    def sigma_u(self) -> float:
        p = self.params
        return p.b - (self.n - 2 * self.m) * p.a / 2

    def dimensions(self) -> tuple[float, float, float]:
        """(lambda at z_i, lambda(u), lambda(u*))."""
        p = self.params
        lam_a = p.a**2 / 2 - p.a * p.b
        lam_u = self.sigma_u**2 / 2 - self.sigma_u * p.b
        return lam_a, lam_u, lam_u

    def __call__(self, z, u: complex, ustar: complex) -> complex:
        z = np.asarray(z, dtype=float)
        if np.any(np.diff(z) <= 0):
            raise ConfigurationError("half-plane points must be strictly increasing")
        a, su = self.params.a, self.sigma_u
        logpre = 0j
        for j in range(z.size):
            logpre += a * a * np.sum(np.log(z[j + 1 :] - z[j]))
        logpre += a * su * np.sum(np.log(u - z)) + a * su * np.sum(np.log(ustar - z))
        logpre += su * su * np.log(u - ustar)
        if self.m == 0:
            return complex(np.exp(logpre))
        locs = np.concatenate([z, [u, ustar]])
        nv = self.m
        exps = np.zeros((nv, locs.size), dtype=complex)
        exps[:, : z.size] = -2 * a * a
        exps[:, z.size :] = -2 * a * su
        pair = np.triu(np.full((nv, nv), 4 * a * a + 0j), 1)
        windows = [(z[s - 1], z[e - 1]) for s, e in self.links]
        gap = float(np.diff(z).min()) if z.size > 1 else 1.0
        clear = min(abs(u.imag), abs(ustar.imag))
        paths = []
        for x1, x2 in windows:
            r = min(self.radius_ratio * gap, 0.3 * clear)
            h = min(self.apex_ratio * (x2 - x1), 0.5 * clear)
            paths.append(pochhammer_path(x1, x2, locs, apex_height=h, radius=r, nq=self.nq))
        orient = np.ones((nv, nv))
        pat = LinkPattern("chordal", self.n, tuple(self.links))
        orient[:] = _pair_orientation(pat, windows)
        integrand = BranchedIntegrand("plane", locs, exps, pair_exps=pair, pair_orient=orient)
        return integrate_paths(integrand, paths) * complex(np.exp(logpre))
