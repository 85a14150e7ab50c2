"""Branch-tracked quadrature of multivalued Coulomb-gas integrands.

An integrand in ``m`` variables is a product of

* fixed-point factors ``S(s_f (zeta_j - x_f)) ** e[j, f]``,
* pair factors ``S(zeta_k - zeta_j) ** p[j, k]`` (or with the opposite
  orientation), and
* exponentials ``exp(c_j zeta_j)``,

where ``S(w) = sin(w/2)`` in angular coordinates and ``S(w) = w`` in plane
coordinates.  Every variable runs over a discretized :class:`Path` whose first
node is the base point.  The logarithm of each factor is fixed at the base
point by a canonical formula and then continued node by node, so the value at
every node is the analytic continuation along the path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

Coordinate = Literal["angular", "plane"]

MAX_ARG_STEP = math.pi / 2


class ClearanceError(ValueError):
    """A contour passes through, or too close to, a singular point."""


class BranchTrackingError(RuntimeError):
    """Consecutive nodes are too far apart to continue a logarithm."""


class AccuracyError(RuntimeError):
    def __init__(self, msg, value=None, error=None):
        super().__init__(msg)
        self.value = value
        self.error = error


def log_sin_half(w) -> np.ndarray:
    """Canonical ``log sin(w/2)``.

    For ``Im w >= 0`` this is the continuous branch on the closed upper half
    plane, for ``Im w < 0`` the one on the lower half plane; the two agree on
    ``0 < Re w < 2 pi``.
    """
    w = np.asarray(w, dtype=complex)
    out = np.empty_like(w)
    up = w.imag >= 0
    wu = w[up]
    out[up] = np.log(0.5j) - 0.5j * wu + np.log1p(-np.exp(1j * wu))
    wl = w[~up]
    out[~up] = np.log(-0.5j) + 0.5j * wl + np.log1p(-np.exp(-1j * wl))
    return out


def canonical_log(w, coordinate: Coordinate) -> np.ndarray:
    if coordinate == "angular":
        return log_sin_half(w)
    if coordinate == "plane":
        return np.log(np.asarray(w, dtype=complex))
    raise ValueError(f"unknown coordinate {coordinate!r}")


def continue_log(vals: np.ndarray, axis: int = -1) -> np.ndarray:
    """Unwrap the imaginary part along ``axis`` keeping the first entry fixed."""
    im = np.unwrap(vals.imag, axis=axis)
    if vals.shape[axis] > 1:
        step = np.abs(np.diff(im, axis=axis)).max()
        if step > MAX_ARG_STEP:
            raise BranchTrackingError(f"argument jump {step:.3f} between consecutive nodes")
    return vals.real + 1j * im


@dataclass(frozen=True)
class Path:
    """Ordered quadrature nodes; ``nodes[0]`` is the base point."""

    nodes: np.ndarray
    weights: np.ndarray
    label: str = ""

    def __len__(self) -> int:
        return self.nodes.size

    @property
    def base(self) -> complex:
        return complex(self.nodes[0])


def _gl(nq: int):
    return np.polynomial.legendre.leggauss(nq)


def _seg_dist(a: complex, b: complex, pts: np.ndarray) -> float:
    if pts.size == 0:
        return math.inf
    d = b - a
    t = np.clip(((pts - a) * np.conj(d)).real / max(abs(d) ** 2, 1e-300), 0.0, 1.0)
    return float(np.abs(a + t * d - pts).min())


def _panels(a: complex, b: complex, sing: np.ndarray, ratio: float, max_len: float, depth=0):
    L = abs(b - a)
    if depth < 40 and (L > max_len or L > ratio * _seg_dist(a, b, sing)):
        mid = 0.5 * (a + b)
        return _panels(a, mid, sing, ratio, max_len, depth + 1) + _panels(
            mid, b, sing, ratio, max_len, depth + 1
        )
    return [(a, b)]


def segment_nodes(a, b, sing, nq=16, ratio=0.5, max_len=math.inf):
    """Composite Gauss-Legendre nodes on the segment a -> b, graded toward singularities."""
    x, w = _gl(nq)
    nodes, weights = [], []
    for p0, p1 in _panels(complex(a), complex(b), np.asarray(sing, dtype=complex), ratio, max_len):
        half = 0.5 * (p1 - p0)
        nodes.append(p0 + half * (x + 1.0))
        weights.append(half * w)
    return np.concatenate(nodes), np.concatenate(weights)


def arc_nodes(center, radius, phi0, sweep, narcs=4, nq=16):
    """Gauss-Legendre nodes on an arc parametrized by angle."""
    x, w = _gl(nq)
    nodes, weights = [], []
    dphi = sweep / narcs
    for k in range(narcs):
        phi = phi0 + dphi * (k + 0.5 * (x + 1.0))
        z = center + radius * np.exp(1j * phi)
        nodes.append(z)
        weights.append(1j * radius * np.exp(1j * phi) * 0.5 * dphi * w)
    return np.concatenate(nodes), np.concatenate(weights)


@dataclass(frozen=True)
class ContourSpec:
    """Geometry and discretization of one contour.

    ``kind`` is ``"pochhammer"`` (around ``ends``), ``"circle_about_origin"``
    (angular coordinates: the horizontal segment ``[A, A + 2 pi] + i Y`` with
    ``Y = -log(radius)``), ``"vertical_segment"`` (the same segment given by
    ``A`` and ``Y`` directly) or ``"interval"`` (straight segment, used by the
    reduction oracle).
    """

    kind: str
    ends: tuple[float, float] = (0.0, 1.0)
    apex_height: float | None = None
    radius: float | None = None
    A: float = 0.0
    Y: float | None = None
    nq: int = 16
    ratio: float = 0.5
    npts: int = 64


def pochhammer_path(
    x1: float,
    x2: float,
    singular_points: Sequence[complex] = (),
    apex_height: float | None = None,
    radius: float | None = None,
    nq: int = 16,
    ratio: float = 0.5,
    label: str = "",
) -> Path:
    """Pochhammer loop ``C2 C1 C2^-1 C1^-1`` about the real points x1 < x2.

    Each ``C`` is a lollipop: a straight leg from the apex base point down to
    a circle about the endpoint, the full circle counterclockwise, and the
    leg back.
    """
    if not x2 > x1:
        raise ValueError("need x1 < x2")
    gap = x2 - x1
    sing = np.asarray([s for s in singular_points if s not in (x1, x2)], dtype=complex)
    others = np.abs(np.concatenate([sing - x1, sing - x2])) if sing.size else np.array([math.inf])
    if radius is None:
        radius = 0.15 * min(gap, float(others.min()))
    if apex_height is None:
        apex_height = 0.12 * gap
    if radius >= 0.5 * gap or radius >= float(others.min()):
        raise ClearanceError(f"circle radius {radius} too large for the configuration")
    P = 0.5 * (x1 + x2) + 1j * apex_height
    all_sing = np.concatenate([sing, [x1, x2]])

    pieces_n = [np.array([P])]
    pieces_w = [np.array([0j])]

    def loop(x, sign):
        phi = np.angle(P - x)
        A = x + radius * np.exp(1j * phi)
        clear = _seg_dist(P, A, sing)
        if clear < 0.2 * radius:
            raise ClearanceError(f"Pochhammer leg passes within {clear:.3g} of a singular point")
        ln, lw = segment_nodes(P, A, all_sing, nq, ratio, max_len=0.5 * gap)
        cn, cw = arc_nodes(x, radius, phi, sign * 2 * math.pi, 4, nq)
        bn, bw = segment_nodes(A, P, all_sing, nq, ratio, max_len=0.5 * gap)
        pieces_n.extend([ln, cn, bn])
        pieces_w.extend([lw, cw, bw])

    # this order makes the value (1 - e^{2 pi i p})(1 - e^{2 pi i q}) times the
    # interval integral, with p, q the exponents at x1, x2
    loop(x2, +1)
    loop(x1, +1)
    loop(x2, -1)
    loop(x1, -1)
    return Path(np.concatenate(pieces_n), np.concatenate(pieces_w), label or "pochhammer")


def circle_path(center: complex, radius: float, nq: int = 16, narcs: int = 4, label: str = "") -> Path:
    """Counterclockwise circle starting and ending at its top point."""
    n, w = arc_nodes(center, radius, math.pi / 2, 2 * math.pi, narcs, nq)
    top = center + 1j * radius
    return Path(np.concatenate([[top], n]), np.concatenate([[0j], w]), label or "circle")


def is_integer_exponent(e: complex, tol: float = 1e-12) -> bool:
    return abs(e.imag) < tol and abs(e.real - round(e.real)) < tol


def horizontal_path(A: float, Y: float, npts: int = 64, label: str = "") -> Path:
    """Segment ``[A, A + 2 pi] + iY`` with the periodic trapezoid rule.

    Valid for integrands that are 2 pi periodic along the segment.
    """
    t = A + 2 * math.pi * np.arange(npts) / npts
    nodes = t + 1j * Y
    weights = np.full(npts, 2 * math.pi / npts, dtype=complex)
    return Path(nodes, weights, label or "horizontal")


def interval_path(x1: float, x2: float, nq: int = 16) -> Path:
    n, w = segment_nodes(x1, x2, [], nq)
    return Path(np.concatenate([[x1], n]), np.concatenate([[0j], w]), "interval")


@dataclass
class BranchedIntegrand:
    """Multivalued product integrand in ``m`` variables.

    ``fixed_exps[j, f]`` is the exponent of ``S(fixed_signs[f] * (zeta_j - fixed_locs[f]))``.
    ``pair_exps[j, k]`` (``j < k``) is the exponent of
    ``S(pair_orient[j, k] * (zeta_k - zeta_j))``.
    """

    coordinate: Coordinate
    fixed_locs: np.ndarray
    fixed_exps: np.ndarray
    fixed_signs: np.ndarray | None = None
    pair_exps: np.ndarray | None = None
    pair_orient: np.ndarray | None = None
    linear: np.ndarray | None = None

    def __post_init__(self):
        self.fixed_locs = np.asarray(self.fixed_locs, dtype=complex)
        self.fixed_exps = np.atleast_2d(np.asarray(self.fixed_exps, dtype=complex))
        m, F = self.fixed_exps.shape
        if F != self.fixed_locs.size:
            raise ValueError("fixed exponent table does not match fixed points")
        if self.fixed_signs is None:
            self.fixed_signs = np.ones(F)
        if self.pair_exps is None:
            self.pair_exps = np.zeros((m, m), dtype=complex)
        if self.pair_orient is None:
            self.pair_orient = np.ones((m, m))
        if self.linear is None:
            self.linear = np.zeros(m, dtype=complex)

    @property
    def m(self) -> int:
        return self.fixed_exps.shape[0]

    def single_log(self, j: int, nodes: np.ndarray) -> np.ndarray:
        out = self.linear[j] * nodes
        for f, x in enumerate(self.fixed_locs):
            e = self.fixed_exps[j, f]
            if e == 0:
                continue
            w = self.fixed_signs[f] * (nodes - x)
            out = out + e * continue_log(canonical_log(w, self.coordinate))
        return out

    def pair_log(self, j: int, k: int, nj: np.ndarray, nk: np.ndarray) -> np.ndarray:
        w = self.pair_orient[j, k] * (nk[None, :] - nj[:, None])
        vals = canonical_log(w, self.coordinate)
        # continue along zeta_j with zeta_k at its base, then along zeta_k
        col = continue_log(vals[:, 0])
        vals = vals.copy()
        vals[:, 0] = col
        return continue_log(vals, axis=1)

    def mp_factor_log(self, f: int, diff):
        """mpmath log of fixed factor ``f`` at ``zeta = x_f + diff`` (real diff, from above)."""
        import mpmath

        s = self.fixed_signs[f]
        w = s * diff
        if self.coordinate == "angular":
            if s > 0:
                return mpmath.log(0.5j) - 0.5j * w + mpmath.log(1 - mpmath.exp(1j * w))
            return mpmath.log(-0.5j) + 0.5j * w + mpmath.log(1 - mpmath.exp(-1j * w))
        lg = mpmath.log(mpmath.mpc(w))
        if s < 0 and w < 0:
            lg = mpmath.conj(lg)
        return lg


def integrate_paths(integrand: BranchedIntegrand, paths: Sequence[Path]) -> complex:
    """Iterated integral of ``integrand`` over the product of ``paths``."""
    m = integrand.m
    if len(paths) != m:
        raise ValueError(f"need {m} paths, got {len(paths)}")
    singles = [integrand.single_log(j, p.nodes) for j, p in enumerate(paths)]
    if m == 1:
        L = singles[0]
        shift = L.real.max()
        return complex(np.sum(paths[0].weights * np.exp(L - shift)) * math.exp(shift))
    shape = tuple(len(p) for p in paths)
    total = np.zeros(shape, dtype=complex)
    for j in range(m):
        idx = [None] * m
        idx[j] = slice(None)
        total = total + singles[j][tuple(idx)]
    for j in range(m):
        for k in range(j + 1, m):
            e = integrand.pair_exps[j, k]
            if e == 0:
                continue
            P = integrand.pair_log(j, k, paths[j].nodes, paths[k].nodes)
            idx = [None] * m
            idx[j] = slice(None)
            idx[k] = slice(None)
            total = total + e * P[tuple(idx)]
    shift = total.real.max()
    vals = np.exp(total - shift)
    for j in reversed(range(m)):
        vals = vals @ paths[j].weights
    return complex(vals) * math.exp(shift)


def integrate_contour(
    integrand: BranchedIntegrand,
    contour: ContourSpec,
    singular_points: Sequence[complex] | None = None,
    tol: float = 1e-9,
    max_levels: int = 4,
) -> tuple[complex, float]:
    """Adaptive one-variable contour integral with an error estimate.

    The discretization is refined (more nodes per panel, smaller panels)
    until two successive levels agree to ``tol`` relative to the value.
    """
    if integrand.m != 1:
        raise ValueError("integrate_contour handles one variable; use integrate_paths")
    sing = list(integrand.fixed_locs) if singular_points is None else list(singular_points)
    prev, val, err = None, 0j, math.inf
    nq, ratio = contour.nq, contour.ratio
    for _ in range(max_levels):
        path = build_path(contour, sing, nq=nq, ratio=ratio)
        val = integrate_paths(integrand, [path])
        # cancelling contours (integer exponents) carry a rounding floor set by |f|
        L = integrand.single_log(0, path.nodes).real
        floor = 64 * np.finfo(float).eps * float(np.sum(np.abs(path.weights) * np.exp(L)))
        if prev is not None:
            err = max(abs(val - prev), floor)
            if err <= max(tol * abs(val), floor):
                return val, err
        prev = val
        nq += 8
        ratio *= 0.7
    raise AccuracyError(f"contour quadrature did not converge (estimate {err:.3g})", val, err)


def build_path(contour: ContourSpec, singular_points, nq=None, ratio=None) -> Path:
    nq = contour.nq if nq is None else nq
    ratio = contour.ratio if ratio is None else ratio
    if contour.kind == "pochhammer":
        x1, x2 = contour.ends
        return pochhammer_path(
            x1, x2, singular_points, contour.apex_height, contour.radius, nq=nq, ratio=ratio
        )
    if contour.kind in ("circle_about_origin", "vertical_segment"):
        Y = contour.Y if contour.Y is not None else -math.log(contour.radius)
        sing = np.asarray(singular_points, dtype=complex)
        if sing.size and np.any(np.abs(sing.imag - Y) < 1e-3):
            raise ClearanceError("horizontal contour passes through a singular point")
        return horizontal_path(contour.A, Y, max(contour.npts, 4 * nq))
    if contour.kind == "interval":
        return interval_path(*contour.ends, nq=nq)
    raise ValueError(f"unknown contour kind {contour.kind!r}")


def pochhammer_prefactor(p: complex, q: complex) -> complex:
    return (1 - np.exp(2j * math.pi * p)) * (1 - np.exp(2j * math.pi * q))


def interval_reduction(integrand: BranchedIntegrand, pair: tuple[int, int], dps: int = 30) -> complex:
    """Pochhammer value via ``(1 - e^{2 pi i p})(1 - e^{2 pi i q})`` times the interval integral.

    The interval integral uses tanh-sinh quadrature (mpmath), which tolerates
    the integrable endpoint singularities.  ``pair`` indexes the two fixed
    points that bound the interval.
    """
    import mpmath

    if integrand.m != 1:
        raise ValueError("interval reduction handles one variable")
    i, j = pair
    x1, x2 = integrand.fixed_locs[i].real, integrand.fixed_locs[j].real
    if x1 > x2:
        i, j, x1, x2 = j, i, x2, x1
    p, q = integrand.fixed_exps[0, i], integrand.fixed_exps[0, j]
    if p.real <= -1 or q.real <= -1:
        raise ValueError(f"endpoint exponents {p}, {q} are not integrable; not reducible")
    pref = pochhammer_prefactor(p, q)
    if abs(pref) == 0:
        return 0j
    lin = complex(integrand.linear[0])
    locs = [mpmath.mpf(z.real) for z in integrand.fixed_locs]
    F = len(locs)

    def log_at(end: int, delta, sign):
        # zeta = x_end + sign * delta, evaluated without cancellation in zeta - x_end
        t = locs[end] + sign * delta
        out = mpmath.mpc(lin) * t
        for f in range(F):
            e = integrand.fixed_exps[0, f]
            if e == 0:
                continue
            diff = sign * delta if f == end else t - locs[f]
            out += mpmath.mpc(e) * integrand.mp_factor_log(f, diff)
        return out

    def half(end: int, e: complex, sign: int, length):
        # t - x_end = v ** alpha removes the endpoint power singularity
        alpha = 1 / (1 + mpmath.mpf(e.real))

        def g(v):
            if v == 0:
                return mpmath.mpc(0)
            delta = v**alpha
            return mpmath.exp(log_at(end, delta, sign)) * alpha * v ** (alpha - 1)

        return mpmath.quad(g, [0, length ** (1 / alpha)])

    with mpmath.workdps(dps):
        L = (mpmath.mpf(x2) - mpmath.mpf(x1)) / 2
        val = half(i, p, +1, L) + half(j, q, -1, L)
    return complex(pref * complex(val))


@dataclass(frozen=True)
class BetaCalibration:
    p: complex
    q: complex
    contour: complex
    contour_err: float
    reduction: complex
    reduction_err: float
    closed_form: complex

    @property
    def combined_err(self) -> float:
        return self.contour_err + self.reduction_err

    @property
    def agree(self) -> bool:
        return abs(self.contour - self.reduction) <= self.combined_err


def beta_calibration(p: complex, q: complex, tol: float = 1e-12, dps: int = 30) -> BetaCalibration:
    """Pochhammer integral of ``z^p (1 - z)^q`` about 0 and 1 by both routes.

    The closed form is ``(1 - e^{2 pi i p})(1 - e^{2 pi i q}) B(p + 1, q + 1)``.
    The reduction error is the change between ``dps`` and ``dps - 10`` digits.
    """
    import mpmath

    integrand = BranchedIntegrand("plane", [0.0, 1.0], [[p, q]], fixed_signs=np.array([1.0, -1.0]))
    val, err = integrate_contour(integrand, ContourSpec("pochhammer", ends=(0.0, 1.0)), tol=tol)
    red = interval_reduction(integrand, (0, 1), dps=dps)
    red_lo = interval_reduction(integrand, (0, 1), dps=dps - 10)
    closed = complex(pochhammer_prefactor(p, q) * complex(mpmath.beta(p + 1, q + 1)))
    # floor the contour error at rounding level of the loop sum
    err = max(err, 1e-14 * abs(val))
    return BetaCalibration(p, q, val, err, red, max(abs(red - red_lo), 1e-15 * abs(red)), closed)
