"""Trapezoidal quadrature on circles and Nystrom Fredholm determinants.

Every contour integral here carries the factor 1/(2 pi i): the weights of a
:class:`ContourGrid` are ``(node - center) / n``, so that

    sum(weights * f(nodes))  ~=  (1 / 2 pi i) * \\oint f(z) dz

for a counterclockwise circle.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import LinAlgWarning, lu_factor

from .errors import ConvergenceError, DomainError, NumericalDegeneracyError, UnsupportedError

MIN_NODES = 8
PIVOT_THRESHOLD = 1e-300


@dataclass(frozen=True)
class ContourGrid:
    center: complex
    radius: float
    n: int
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    def integrate(self, f: Callable[[np.ndarray], np.ndarray]) -> complex:
        return complex(np.sum(self.weights * f(self.nodes)))

    def halved(self) -> "ContourGrid":
        return make_circle(self.center, self.radius, max(MIN_NODES, self.n // 2))

    def doubled(self) -> "ContourGrid":
        return make_circle(self.center, self.radius, 2 * self.n)


def make_circle(center: complex, radius: float, n: int) -> ContourGrid:
    """Counterclockwise circle with ``n`` equally spaced nodes."""
    if not radius > 0:
        raise DomainError(f"radius must be positive, got {radius}")
    if n < MIN_NODES:
        raise DomainError(f"need at least {MIN_NODES} nodes, got {n}")
    offsets = radius * np.exp(2j * np.pi * np.arange(n) / n)
    return ContourGrid(complex(center), float(radius), int(n), center + offsets, offsets / n)


@dataclass(frozen=True)
class FredholmEvaluation:
    value: complex
    n_used: int
    error_estimate: float


def nystrom_matrix(kernel, grid: ContourGrid) -> np.ndarray:
    """M[j, k] = kernel(z_j, z_k) * w_k; ``kernel`` must broadcast over arrays."""
    z = grid.nodes
    return kernel(z[:, None], z[None, :]) * grid.weights[None, :]


def det_identity_minus(M: np.ndarray, lam: complex = 1.0) -> complex:
    """det(I - lam M) by LU with partial pivoting."""
    n = M.shape[0]
    if lam == 0 or n == 0:
        return 1.0 + 0.0j
    A = np.eye(n, dtype=np.result_type(M, complex)) - lam * M
    with warnings.catch_warnings():
        # zero pivots are reported below as NumericalDegeneracyError
        warnings.simplefilter("ignore", LinAlgWarning)
        lu, piv = lu_factor(A, check_finite=True)
    diag = np.diag(lu)
    scale = max(1.0, float(np.max(np.abs(A))))
    if np.min(np.abs(diag)) < PIVOT_THRESHOLD * scale:
        raise NumericalDegeneracyError("LU pivot below threshold in det(I - lam M)")
    swaps = np.count_nonzero(piv != np.arange(n))
    sign = -1.0 if swaps % 2 else 1.0
    return complex(sign * np.prod(diag))


def nystrom_fredholm_det(kernel, grid: ContourGrid, lam: complex) -> FredholmEvaluation:
    """det(I - lam K) on a circle, with the half-resolution difference as error estimate."""
    if lam == 0:
        return FredholmEvaluation(1.0 + 0.0j, grid.n, 0.0)
    value = det_identity_minus(nystrom_matrix(kernel, grid), lam)
    coarse = det_identity_minus(nystrom_matrix(kernel, grid.halved()), lam)
    return FredholmEvaluation(value, grid.n, float(abs(value - coarse)))


def fredholm_det_converged(
    kernel,
    center: complex,
    radius: float,
    lam: complex,
    n0: int = 64,
    tol: float = 1e-9,
    n_max: int = 1024,
) -> FredholmEvaluation:
    """Double the node count until the two-resolution difference drops below ``tol``."""
    n = n0
    while True:
        ev = nystrom_fredholm_det(kernel, make_circle(center, radius, n), lam)
        if ev.error_estimate < tol:
            return ev
        if 2 * n > n_max:
            raise ConvergenceError(
                f"Fredholm determinant not converged at n={n}: estimate {ev.error_estimate:.3g}"
            )
        n *= 2


def contour_integral_multi(f, grid: ContourGrid, k: int, return_mass: bool = False):
    """k-fold tensor-product trapezoidal integral over copies of ``grid``.

    ``f`` receives ``k`` broadcastable arrays (one per variable) and returns
    an array of the broadcast shape.  With ``return_mass`` the sum of
    |weight * f| is returned as well; it bounds the rounding error of the sum.
    The first variable is processed in blocks so k = 3 stays within memory.
    """
    if k < 1:
        raise DomainError("k must be at least 1")
    if k > 3:
        raise UnsupportedError("tensor-product contour integrals are limited to k <= 3")
    n = grid.n
    axes = []
    weights = []
    for i in range(k):
        shape = [1] * k
        shape[i] = n
        axes.append(grid.nodes.reshape(shape))
        weights.append(grid.weights.reshape(shape))
    w_rest = np.ones([1] * k, dtype=complex)
    for extra in weights[1:]:
        w_rest = w_rest * extra
    block = max(1, (1 << 22) // max(1, n ** (k - 1)))
    total = 0.0 + 0.0j
    mass = 0.0
    for lo in range(0, n, block):
        first = axes[0][lo : lo + block]
        terms = weights[0][lo : lo + block] * w_rest * f(first, *axes[1:])
        total += complex(np.sum(terms))
        if return_mass:
            mass += float(np.sum(np.abs(terms)))
    return (total, mass) if return_mass else total


def fredholm_series_term(kernel, grid: ContourGrid, k: int) -> complex:
    """(1/k!) * k-fold integral of det[kernel(z_i, z_j)] by direct quadrature.

    This is the coefficient of (-lam)^k in det(I - lam K) and serves as an
    independent check of the LU determinant.  Tuples with a repeated node give
    a determinant with two equal rows, so only strictly increasing index
    tuples are visited; each stands for k! ordered tuples.
    """
    if k == 0:
        return 1.0 + 0.0j
    z, w = grid.nodes, grid.weights
    combos = np.array(list(itertools.combinations(range(grid.n), k)), dtype=np.intp)
    total = 0.0 + 0.0j
    for chunk in np.array_split(combos, max(1, len(combos) // 20000)):
        pts = z[chunk]
        blocks = kernel(pts[:, :, None], pts[:, None, :])
        total += np.sum(np.linalg.det(blocks) * np.prod(w[chunk], axis=1))
    return complex(total)
