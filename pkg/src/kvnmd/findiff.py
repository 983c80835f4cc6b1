"""Central finite-difference stencils on periodic axes.

The order-2d central stencil has coefficients

    c_{d,k} = (-1)^{k+1} (d!)^2 / (k (d-k)! (d+k)!),   k = +-1..+-d,  c_{d,0} = 0,

and the derivative operator acts as (D f)(z) = sum_k c_{d,k} f(z + k) / h with
indices taken modulo g.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .errors import StencilOverlapError, ValidationError

MAX_ORDER = 64


@lru_cache(maxsize=None)
def _exact_coefficients(d: int) -> tuple:
    # ratio_k = (d!)^2 / ((d-k)! (d+k)!) via ratio_k = ratio_{k-1} (d-k+1)/(d+k)
    out = []
    ratio = Fraction(1)
    for k in range(1, d + 1):
        ratio *= Fraction(d - k + 1, d + k)
        out.append((-1) ** (k + 1) * ratio / k)
    return tuple(out)


@dataclass(frozen=True)
class FdScheme:
    """Antisymmetric central stencil of half-order ``d``.

    Attributes:
        d: Half-order; the scheme is accurate to O(h^{2d}).
        coefficients: Array of length 2d+1 holding c_{d,k} for k = -d..d.
    """

    d: int
    coefficients: np.ndarray

    @property
    def offsets(self) -> np.ndarray:
        return np.arange(-self.d, self.d + 1)

    def coefficient(self, k: int) -> float:
        if abs(k) > self.d:
            return 0.0
        return float(self.coefficients[k + self.d])

    def nonzero(self):
        """(offsets, coefficients) with the zero centre tap removed."""
        mask = self.offsets != 0
        return self.offsets[mask], self.coefficients[mask]

    @property
    def abs_sum(self) -> float:
        return float(np.abs(self.coefficients).sum())


def fd_coefficients(d: int) -> FdScheme:
    """Build the order-2d central scheme from exact rational arithmetic."""
    if int(d) != d or d < 1:
        raise ValidationError(f"stencil half-order d={d} must be a positive integer")
    d = int(d)
    if d > MAX_ORDER:
        raise ValidationError(f"stencil half-order d={d} exceeds supported maximum {MAX_ORDER}")
    pos = np.array([float(c) for c in _exact_coefficients(d)])
    coeffs = np.concatenate([-pos[::-1], [0.0], pos])
    coeffs.flags.writeable = False
    return FdScheme(d, coeffs)


def coefficient_sum_bound(d: int) -> float:
    """Upper bound 2(ln d + 1) on sum_k |c_{d,k}|."""
    return 2.0 * (math.log(d) + 1.0)


def check_stencil_fits(d: int, g: int, label: str = "axis") -> None:
    if 2 * d >= g:
        raise StencilOverlapError(f"{label}: stencil width 2d={2 * d} must be < g={g}")


def derivative_matrix(scheme: FdScheme, g: int, h: float) -> sp.csr_matrix:
    """Circulant g x g matrix with D[z, z+k mod g] = c_k / h."""
    check_stencil_fits(scheme.d, g)
    offs, coeffs = scheme.nonzero()
    rows = np.repeat(np.arange(g), offs.size)
    cols = (rows + np.tile(offs, g)) % g
    vals = np.tile(coeffs, g) / h
    return sp.csr_matrix((vals, (rows, cols)), shape=(g, g))


def derivative_operator(scheme: FdScheme, axis) -> sp.csr_matrix:
    """Derivative matrix on a single :class:`~kvnmd.grid.AxisSpec`."""
    check_stencil_fits(scheme.d, axis.g, f"{axis.kind} axis")
    return derivative_matrix(scheme, axis.g, axis.h)


def stencil_apply(f: np.ndarray, scheme: FdScheme, h: float, axis: int = -1) -> np.ndarray:
    """Apply the periodic stencil along ``axis`` of an array."""
    check_stencil_fits(scheme.d, f.shape[axis])
    out = np.zeros(f.shape, dtype=np.result_type(f, float))
    for k, c in zip(*scheme.nonzero()):
        out += c * np.roll(f, -int(k), axis=axis)
    return out / h


def fd_remainder_bound(scheme: FdScheme, h: float, M: float) -> float:
    """Truncation envelope M (e h / 2)^{2d} with unit constant."""
    if h <= 0:
        raise ValidationError("h must be positive")
    if M < 0:
        raise ValidationError("derivative bound M must be nonnegative")
    return float(M * (math.e * h / 2.0) ** (2 * scheme.d))
