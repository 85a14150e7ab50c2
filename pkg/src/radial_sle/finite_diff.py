"""Central finite differences with Richardson extrapolation."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

# central stencils: offsets and weights for f' (divide by h) and f'' (divide by h^2)
_D1 = {2: ((-1, 1), (-0.5, 0.5)), 4: ((-2, -1, 1, 2), (1 / 12, -2 / 3, 2 / 3, -1 / 12))}
_D2 = {
    2: ((-1, 0, 1), (1.0, -2.0, 1.0)),
    4: ((-2, -1, 0, 1, 2), (-1 / 12, 4 / 3, -5 / 2, 4 / 3, -1 / 12)),
}


class StepSizeError(ValueError):
    """A finite-difference probe leaves the domain."""


@dataclass(frozen=True)
class FiniteDiffScheme:
    step: float = 1e-3
    order: int = 4
    richardson_levels: int = 2

    def __post_init__(self):
        if self.order not in (2, 4):
            raise ValueError("order must be 2 or 4")
        if self.step <= 0:
            raise ValueError("step must be positive")
        if self.richardson_levels < 1:
            raise ValueError("need at least one Richardson level")

    @property
    def reach(self) -> float:
        """Largest probe offset from the centre point."""
        return self.step * (2 if self.order == 4 else 1)

    def scaled(self, factor: float) -> "FiniteDiffScheme":
        return FiniteDiffScheme(self.step * factor, self.order, self.richardson_levels)


class CachedFunction:
    """Memoizes a function of a real vector, keyed on the exact coordinates."""

    def __init__(self, f: Callable):
        self.f = f
        self.cache: dict[tuple, complex] = {}

    def __call__(self, x) -> complex:
        key = tuple(float(v) for v in np.asarray(x, dtype=float))
        if key not in self.cache:
            self.cache[key] = complex(self.f(np.array(key)))
        return self.cache[key]


def _richardson(values: list[complex], order: int) -> complex:
    # values[k] computed with step h / 2^k
    table = list(values)
    p = order
    while len(table) > 1:
        fac = 2.0**p
        table = [(fac * table[k + 1] - table[k]) / (fac - 1) for k in range(len(table) - 1)]
        p += 2
    return table[0]


def _stencil(f, x, direction, h, stencil):
    offs, wts = stencil
    return sum(w * f(x + o * h * direction) for o, w in zip(offs, wts))


def directional(f, x, direction, scheme: FiniteDiffScheme, second: bool = False) -> complex:
    x = np.asarray(x, dtype=float)
    direction = np.asarray(direction, dtype=float)
    st = (_D2 if second else _D1)[scheme.order]
    vals = []
    for k in range(scheme.richardson_levels):
        h = scheme.step / 2**k
        v = _stencil(f, x, direction, h, st)
        vals.append(v / (h * h if second else h))
    return _richardson(vals, scheme.order)


def partial(f, x, j: int, scheme: FiniteDiffScheme) -> complex:
    e = np.zeros(len(x))
    e[j] = 1.0
    return directional(f, x, e, scheme)


def partial2(f, x, j: int, scheme: FiniteDiffScheme) -> complex:
    e = np.zeros(len(x))
    e[j] = 1.0
    return directional(f, x, e, scheme, second=True)


def gradient(f, x, scheme: FiniteDiffScheme) -> np.ndarray:
    return np.array([partial(f, x, j, scheme) for j in range(len(x))])
