"""Closed-form targets used by the verification commands.

Each entry carries the formula it evaluates so reports are self-describing.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable


@dataclass(frozen=True)
class Target:
    quantity: str
    family: str
    formula: str
    fn: Callable[..., float]

    def value(self, n: int, m: int, kappa: float, eta: float = 0.0) -> float:
        return float(self.fn(n, m, kappa, eta))


_TABLE = [
    Target("h", "ground", "h = (1 - (n - 2m)^2) / (2 kappa)",
           lambda n, m, k, e: (1 - (n - 2 * m) ** 2) / (2 * k)),
    Target("h", "excited", "h = (1 - (n - 2m + kappa/2)^2) / (2 kappa)",
           lambda n, m, k, e: (1 - (n - 2 * m + k / 2) ** 2) / (2 * k)),
    Target("h", "spin", "h = -(n - 2m)^2 / (2 kappa) + (1 + eta^2) / (2 kappa)",
           lambda n, m, k, e: -((n - 2 * m) ** 2) / (2 * k) + (1 + e * e) / (2 * k)),
    Target("h", "chordal", "h = (6 - kappa)(kappa - 2) / (8 kappa)",
           lambda n, m, k, e: (6 - k) * (k - 2) / (8 * k)),
    # omega is sum_j d_j psi / psi, i.e. psi(theta + s) = exp(omega s) psi(theta)
    Target("omega", "ground", "omega = 0", lambda n, m, k, e: 0.0),
    Target("omega", "excited", "omega = 0", lambda n, m, k, e: 0.0),
    Target("omega", "chordal", "omega = 0", lambda n, m, k, e: 0.0),
    Target("omega", "spin", "omega = eta (n - 2m) / kappa",
           lambda n, m, k, e: e * (n - 2 * m) / k),
    Target("E", "ground", "E = (n/kappa)(-h + (n^2 - 1)/(6 kappa)) for -H",
           lambda n, m, k, e: (n / k) * (-(1 - (n - 2 * m) ** 2) / (2 * k) + (n * n - 1) / (6 * k))),
]

TARGETS: dict[tuple[str, str], Target] = {(t.quantity, t.family): t for t in _TABLE}


def lookup(quantity: str, family: str) -> Target:
    try:
        return TARGETS[(quantity, family)]
    except KeyError:
        raise KeyError(f"no closed-form {quantity} for family {family!r}") from None
