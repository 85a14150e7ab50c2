"""Radial and chordal link patterns, meander gluing and meander matrices.

A radial pattern lives in the punctured disk with boundary points
``1..n`` placed counterclockwise.  Each link is stored as a directed pair
``(s, e)``: the arc joining ``s`` and ``e`` cuts off the counterclockwise
boundary interval from ``s`` to ``e`` (the side without the puncture).  A
set of such links is planar iff the closed intervals are pairwise nested or
disjoint, and a ray (a strand to the puncture) may not start inside any
interval.  This is the canonical form used for isotopy classes.

Chordal patterns live in the disk with a marked boundary point at infinity.
Links are stored as ``(i, j)`` with ``i < j`` and rays run to infinity.

Text form::

    radial:4:(1>2)(3>4)|rays:-
    chordal:5:(1-2)(3-4)|rays:5
"""
from __future__ import annotations

import itertools
import json
import math
import re
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .params import KappaParams

Kind = Literal["radial", "chordal"]


class SingularMeanderError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True, order=True)
class LinkPattern:
    kind: str
    n: int
    links: tuple[tuple[int, int], ...]
    rays: tuple[int, ...] = field(default=())

    def __post_init__(self):
        if self.kind not in ("radial", "chordal"):
            raise ValueError(f"unknown pattern kind {self.kind!r}")
        links = tuple(sorted((int(s), int(e)) for s, e in self.links))
        if self.kind == "chordal":
            links = tuple(sorted((min(s, e), max(s, e)) for s, e in links))
        object.__setattr__(self, "links", links)
        used = [p for l in links for p in l]
        rays = tuple(sorted(set(range(1, self.n + 1)) - set(used)))
        object.__setattr__(self, "rays", rays)
        if len(set(used)) != len(used) or any(not 1 <= p <= self.n for p in used):
            raise ValueError(f"links {links} do not form a partial matching of 1..{self.n}")
        if not self.is_planar():
            raise ValueError(f"pattern {self.to_text()} is not planar")

    @property
    def m(self) -> int:
        return len(self.links)

    def interval(self, link: tuple[int, int]) -> frozenset[int]:
        """Boundary points enclosed by a link, endpoints included."""
        s, e = link
        if self.kind == "chordal":
            return frozenset(range(s, e + 1))
        return frozenset(_ccw_range(s, e, self.n))

    def is_planar(self) -> bool:
        ivs = [self.interval(l) for l in self.links]
        for L1, L2 in itertools.combinations(self.links, 2):
            if not (self._nested(L1, L2) or self._nested(L2, L1) or self._disjoint(L1, L2)):
                return False
        for r in self.rays:
            if any(r in I for I in ivs):
                return False
        return True

    def _offset(self, base: int, x: int) -> int:
        return (x - base) % self.n if self.kind == "radial" else x - base

    def _nested(self, outer, inner) -> bool:
        s, e = outer
        span = self._offset(s, e)
        a, b = self._offset(s, inner[0]), self._offset(s, inner[1])
        return 0 < a < b < span

    def _disjoint(self, L1, L2) -> bool:
        I, J = self.interval(L1), self.interval(L2)
        return not (I & J)

    def partner(self) -> dict[int, int | None]:
        out: dict[int, int | None] = {r: None for r in self.rays}
        for s, e in self.links:
            out[s] = e
            out[e] = s
        return out

    def directed_links(self) -> list[tuple[int, int]]:
        """Links as (start, end) with the enclosed interval running start to end."""
        return list(self.links)

    def ccw_length(self, link: tuple[int, int]) -> float:
        s, e = link
        return 2.0 * math.pi * ((e - s) % self.n) / self.n

    def to_text(self) -> str:
        sep = ">" if self.kind == "radial" else "-"
        body = "".join(f"({s}{sep}{e})" for s, e in self.links)
        rays = ",".join(str(r) for r in self.rays) or "-"
        return f"{self.kind}:{self.n}:{body}|rays:{rays}"

    def __str__(self) -> str:
        return self.to_text()


_TEXT_RE = re.compile(r"^(radial|chordal):(\d+):((?:\(\d+[>-]\d+\))*)\|rays:([\d,]+|-)$")


def parse_pattern(text: str) -> LinkPattern:
    mt = _TEXT_RE.match(text.strip().replace(" ", ""))
    if mt is None:
        raise ValueError(f"cannot parse link pattern {text!r}")
    kind, n, body, rays = mt.groups()
    links = [(int(s), int(e)) for s, e in re.findall(r"\((\d+)[>-](\d+)\)", body)]
    pat = LinkPattern(kind, int(n), tuple(links))
    want = () if rays == "-" else tuple(sorted(int(r) for r in rays.split(",")))
    if pat.rays != want:
        raise ValueError(f"ray list {want} inconsistent with links in {text!r}")
    return pat


def _ccw_range(s: int, e: int, n: int) -> list[int]:
    out = [s]
    k = s
    while k != e:
        k = k % n + 1
        out.append(k)
    return out


def _check_nm(n: int, m: int) -> None:
    if n < 0 or m < 0 or 2 * m > n:
        raise ValueError(f"need 0 <= 2m <= n, got n={n}, m={m}")


def _matchings(points: Sequence[int], m: int):
    """All sets of m disjoint pairs drawn from points (pairs sorted)."""
    if m == 0:
        yield ()
        return
    pts = list(points)
    for idx, first in enumerate(pts):
        if len(pts) - idx < 2 * m:
            return
        for jdx in range(idx + 1, len(pts)):
            rest = pts[idx + 1 : jdx] + pts[jdx + 1 :]
            for tail in _matchings([p for p in rest if p > first], m - 1):
                yield ((first, pts[jdx]),) + tail


def enumerate_radial(n: int, m: int) -> list[LinkPattern]:
    """All radial (n, m) link patterns, sorted by canonical text."""
    _check_nm(n, m)
    out = set()
    for pairs in _matchings(range(1, n + 1), m):
        for flips in itertools.product((False, True), repeat=m):
            links = tuple((e, s) if f else (s, e) for (s, e), f in zip(pairs, flips))
            try:
                out.add(LinkPattern("radial", n, links))
            except ValueError:
                continue
    return sorted(out, key=lambda p: p.to_text())


def enumerate_chordal(n: int, m: int) -> list[LinkPattern]:
    """All chordal (n, m) link patterns with rays not enclosed by links."""
    _check_nm(n, m)
    out = []
    for pairs in _matchings(range(1, n + 1), m):
        try:
            out.append(LinkPattern("chordal", n, pairs))
        except ValueError:
            continue
    return sorted(out, key=lambda p: p.to_text())


def enumerate_patterns(kind: Kind, n: int, m: int) -> list[LinkPattern]:
    if kind == "radial":
        return enumerate_radial(n, m)
    if kind == "chordal":
        return enumerate_chordal(n, m)
    raise ValueError(f"unknown pattern kind {kind!r}")


def chordal_count(n: int, m: int) -> int:
    """Closed form ``C(n, m) - C(n, m-1)`` for the chordal pattern count."""
    return math.comb(n, m) - (math.comb(n, m - 1) if m >= 1 else 0)


@dataclass(frozen=True)
class MeanderLoops:
    n_noncontractible: int
    n_contractible: int
    rays_ok: bool
    n_through: int = 0


def meander_loops(alpha: LinkPattern, beta: LinkPattern) -> MeanderLoops:
    """Glue ``alpha`` against the mirror image of ``beta`` and classify strands.

    In the glued surface the rays of ``alpha`` end at the puncture and those of
    ``beta`` at its mirror.  A closed loop is noncontractible iff its total
    winding about the puncture is nonzero.
    """
    if alpha.kind != beta.kind or alpha.n != beta.n:
        raise ValueError("patterns must share kind and n")
    pa, pb = alpha.partner(), beta.partner()
    step_a = _angle_steps(alpha)
    step_b = _angle_steps(beta)
    n = alpha.n
    seen_a: set[int] = set()
    rays_ok = True
    through = 0

    # open strands: each starts at a ray and alternates between the two patterns
    for rays, first, own in ((alpha.rays, "b", "a"), (beta.rays, "a", "b")):
        for r in rays:
            k, side = r, first
            while True:
                nxt = (pa if side == "a" else pb)[k]
                if nxt is None:
                    if side == own:
                        rays_ok = False
                    elif own == "a":
                        through += 1
                    break
                if side == "a":
                    seen_a.update((k, nxt))
                k = nxt
                side = "b" if side == "a" else "a"

    nonc = cont = 0
    for start in range(1, n + 1):
        if start in seen_a or pa[start] is None:
            continue
        k = start
        wind = 0.0
        while True:
            e = pa[k]
            seen_a.update((k, e))
            wind += step_a[(k, e)]
            k2 = pb[e]
            wind += step_b[(e, k2)]
            k = k2
            if k == start:
                break
        if alpha.kind == "radial" and abs(wind) > math.pi:
            nonc += 1
        else:
            cont += 1
    return MeanderLoops(nonc, cont, rays_ok, through)


def _angle_steps(p: LinkPattern) -> dict[tuple[int, int], float]:
    out = {}
    for s, e in p.links:
        L = p.ccw_length((s, e)) if p.kind == "radial" else 0.0
        out[(s, e)] = L
        out[(e, s)] = -L
    return out


@dataclass(frozen=True)
class MeanderMatrix:
    kappa: float
    n: int
    m: int
    kind: str
    patterns: tuple[LinkPattern, ...]
    entries: np.ndarray
    a_weight: float = 2.0
    b_weight: float = 0.0

    def determinant(self) -> float:
        return float(np.linalg.det(self.entries))

    def condition_number(self) -> float:
        return float(np.linalg.cond(self.entries))

    def is_symmetric(self) -> bool:
        return bool(np.array_equal(self.entries, self.entries.T))

    def to_json(self) -> str:
        return json.dumps(
            {
                "kappa": self.kappa,
                "n": self.n,
                "m": self.m,
                "kind": self.kind,
                "a_weight": self.a_weight,
                "b_weight": self.b_weight,
                "patterns": [p.to_text() for p in self.patterns],
                "entries": self.entries.tolist(),
            }
        )


def meander_matrix(params: KappaParams, n: int, m: int, kind: Kind = "radial") -> MeanderMatrix:
    pats = tuple(enumerate_patterns(kind, n, m))
    a_w, b_w = 2.0, params.fugacity
    M = np.zeros((len(pats), len(pats)))
    for i, al in enumerate(pats):
        for j, be in enumerate(pats[i:], start=i):
            loops = meander_loops(al, be)
            if loops.rays_ok:
                M[i, j] = a_w**loops.n_noncontractible * b_w**loops.n_contractible
            M[j, i] = M[i, j]
    return MeanderMatrix(params.kappa, n, m, kind, pats, M, a_w, b_w)


@dataclass(frozen=True)
class PureCandidate:
    """Experimental candidate values ``M^{-1} J`` (positivity is reported only)."""

    values: np.ndarray
    condition_number: float
    residual: float
    all_positive: bool


def pure_partition_candidate(meander: MeanderMatrix | np.ndarray, J_values: Sequence[complex]) -> PureCandidate:
    M = meander.entries if isinstance(meander, MeanderMatrix) else np.asarray(meander, dtype=float)
    J = np.asarray(J_values, dtype=complex)
    if M.shape != (J.size, J.size):
        raise ValueError(f"meander shape {M.shape} does not match {J.size} values")
    kappa = getattr(meander, "kappa", float("nan"))
    cond = float(np.linalg.cond(M))
    if not np.isfinite(cond) or cond > 1e14:
        raise SingularMeanderError(f"meander matrix is singular at kappa={kappa} (cond={cond:.3g})")
    # the matrix is symmetric, so M^{-1}(alpha, beta) summed over alpha is a plain solve
    Z = np.linalg.solve(M, J)
    res = float(np.linalg.norm(M @ Z - J))
    pos = bool(np.all(np.abs(Z.imag) <= 1e-12 * (1 + np.abs(Z.real))) and np.all(Z.real > 0))
    return PureCandidate(Z, cond, res, pos)
