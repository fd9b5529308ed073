"""Finite-difference coefficient tables.

Central difference operators of 2nd and 4th order accuracy for derivatives
1..4, plus the 4-node one-sided first derivative used by the material
interface rows. Weights are derived once from exact rationals and rendered to
binary floats at module import, so repeated assembly is bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import StencilOutOfRange, UnsupportedStencil

__all__ = [
    "StencilCoeffs",
    "central",
    "one_sided_first_derivative_4node",
    "apply_stencil",
]


@dataclass(frozen=True)
class StencilCoeffs:
    """A difference operator: sum(weights * f[index+offsets]) / h**h_power."""

    offsets: tuple[int, ...]
    weights: tuple[float, ...]
    h_power: int  # power of the step dividing the weighted sum

    def scale(self, h: float) -> float:
        return float(h) ** self.h_power


def _coeffs(offsets, rationals, h_power) -> StencilCoeffs:
    return StencilCoeffs(
        offsets=tuple(offsets),
        weights=tuple(float(Fraction(*r) if isinstance(r, tuple) else Fraction(r)) for r in rationals),
        h_power=h_power,
    )


# central operator table, keyed by (derivative order, accuracy order)
_CENTRAL: dict[tuple[int, int], StencilCoeffs] = {
    (1, 2): _coeffs((-1, 1), [(-1, 2), (1, 2)], 1),
    (2, 2): _coeffs((-1, 0, 1), [1, -2, 1], 2),
    (3, 2): _coeffs((-2, -1, 1, 2), [(-1, 2), 1, -1, (1, 2)], 3),
    (4, 2): _coeffs((-2, -1, 0, 1, 2), [1, -4, 6, -4, 1], 4),
    (1, 4): _coeffs((-2, -1, 1, 2), [(1, 12), (-8, 12), (8, 12), (-1, 12)], 1),
    (2, 4): _coeffs((-2, -1, 0, 1, 2), [(-1, 12), (16, 12), (-30, 12), (16, 12), (-1, 12)], 2),
}

# one-sided first derivative on nodes {0,1,2,3}:
#   f'(x0) = sum(w_j f_j)/(66 h) - (3h/11) f''(x0) + O(h^4)
_ONE_SIDED = _coeffs((0, 1, 2, 3), [(-85, 66), (108, 66), (-27, 66), (4, 66)], 1)
_ONE_SIDED_CURVATURE = float(Fraction(3, 11))  # multiplies h * f''


def central(derivative: int, accuracy: int) -> StencilCoeffs:
    """Central difference stencil for the given derivative and accuracy order.

    Supported pairs: (1,2), (2,2), (3,2), (4,2), (1,4), (2,4). Anything else
    raises UnsupportedStencil.
    """
    try:
        return _CENTRAL[(derivative, accuracy)]
    except KeyError:
        raise UnsupportedStencil(
            f"no central stencil for derivative={derivative}, accuracy={accuracy}"
        ) from None


def one_sided_first_derivative_4node() -> tuple[StencilCoeffs, float]:
    """4-node one-sided first derivative and its curvature companion.

    Returns (coeffs, curvature_weight). The Taylor identity is

        f'(x0) = apply_stencil(f, coeffs, 0, h) - curvature_weight * h * f''(x0) + O(h^4)

    so a caller that knows f'' (e.g. from the differential equation itself)
    can reach 4th-order accuracy with only 4 nodes on one side.
    """
    return _ONE_SIDED, _ONE_SIDED_CURVATURE


def apply_stencil(row: np.ndarray, coeffs: StencilCoeffs, index: int, h: float) -> complex:
    """Evaluate sum(w_j * row[index + offset_j]) / h**h_power.

    Raises StencilOutOfRange if any offset falls outside the row.
    """
    n = len(row)
    lo = index + coeffs.offsets[0]
    hi = index + coeffs.offsets[-1]
    if lo < 0 or hi >= n:
        raise StencilOutOfRange(
            f"stencil spans [{lo}, {hi}] outside row of length {n}"
        )
    acc = 0.0 + 0.0j
    for off, w in zip(coeffs.offsets, coeffs.weights):
        acc += w * row[index + off]
    return acc / coeffs.scale(h)
