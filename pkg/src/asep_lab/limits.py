"""Limit distributions: the Gaussian G, the GUE Tracy-Widom F2, and F1^2.

Ai is evaluated in-house: a Maclaurin series summed in extended precision
(mpmath) for |x| <= 8.5 and the standard asymptotic expansions beyond.  At
|x| = 8.5 the asymptotic series reaches relative accuracy about
exp(-4/3 |x|^{3/2}) ~ 5e-15 at its smallest term, which is why the switch
point sits there and not closer to the origin.

The Airy-kernel determinants are computed by Nystrom discretization on
(s, s + L] with Gauss-Legendre nodes.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Callable, Sequence

import mpmath
import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq
from scipy.linalg import lu_factor, lu_solve

from .contour import FredholmEvaluation
from .errors import DomainError, PrecisionError, RangeError

AIRY_X_MIN = -20.0
AIRY_X_MAX = 30.0
SERIES_RADIUS = 8.5
SERIES_DPS = 45
DIAG_THRESHOLD = 1e-3
DEFAULT_L = 12.0
DEFAULT_NQUAD = 80


class Law(str, Enum):
    G = "g"
    F2 = "f2"
    F1SQ = "f1sq"


# -- Airy function ---------------------------------------------------------------------


@dataclass(frozen=True)
class AiryEvaluator:
    """Ai, Ai' and the tail integral int_x^inf Ai on [AIRY_X_MIN, AIRY_X_MAX]."""

    series_radius: float = SERIES_RADIUS
    dps: int = SERIES_DPS
    tail_nodes: int = 80

    def __call__(self, x: float) -> float:
        return self.pair(x)[0]

    def pair(self, x: float) -> tuple:
        x = _check_x(x)
        if abs(x) <= self.series_radius:
            ai, aip, _ = _series(x, self.dps)
            return ai, aip
        return _asymptotic(x)

    def tail_integral(self, y: float) -> float:
        """int_y^inf Ai(z) dz."""
        y = _check_x(y)
        r = self.series_radius
        if abs(y) <= r:
            return 1.0 / 3.0 - _series(y, self.dps)[2]
        g, w = _gauss_unit(self.tail_nodes)
        if y > r:
            # Ai decays like exp(-2/3 z^1.5); 12 units past y is far below rounding
            a, b = y, y + 12.0
            z = 0.5 * (b - a) * g + 0.5 * (a + b)
            return float(0.5 * (b - a) * np.dot(w, [self(v) for v in z]))
        # y < -r: oscillatory stretch between y and -r, series value at -r
        a, b = y, -r
        z = 0.5 * (b - a) * g + 0.5 * (a + b)
        piece = float(0.5 * (b - a) * np.dot(w, [self(v) for v in z]))
        return piece + self.tail_integral(-r)


def _check_x(x) -> float:
    x = float(x)
    if not (AIRY_X_MIN <= x <= AIRY_X_MAX):
        raise DomainError(f"Airy argument {x} outside [{AIRY_X_MIN}, {AIRY_X_MAX}]")
    return x


@lru_cache(maxsize=None)
def _gauss_unit(n: int):
    return leggauss(n)


@lru_cache(maxsize=None)
def _ai0(dps: int):
    with mpmath.workdps(dps):
        a0 = 1 / (mpmath.cbrt(9) * mpmath.gamma(mpmath.mpf(2) / 3))
        a1 = -1 / (mpmath.cbrt(3) * mpmath.gamma(mpmath.mpf(1) / 3))
    return a0, a1


@lru_cache(maxsize=200_000)
def _series(x: float, dps: int = SERIES_DPS) -> tuple:
    """(Ai(x), Ai'(x), int_0^x Ai) from the Maclaurin series.

    Coefficients obey a_{n+3} = a_n / ((n+3)(n+2)) with a_2 = 0, so the two
    chains n = 0, 3, 6, ... and n = 1, 4, 7, ... are summed separately.
    """
    a0, a1 = _ai0(dps)
    if x == 0.0:
        return float(a0), float(a1), 0.0
    with mpmath.workdps(dps):
        X = mpmath.mpf(x)
        X3 = X**3
        eps = mpmath.mpf(10) ** (-dps + 5)
        ai = aip = integ = mpmath.mpf(0)
        for n0, c0 in ((0, a0), (1, a1 * X)):
            # t_n = a_n x^n
            t = c0
            n = n0
            while True:
                ai += t
                if n > 0:
                    aip += n * t / X
                integ += t * X / (n + 1)
                big = max(abs(ai), abs(t), mpmath.mpf(1e-300))
                if n > 6 and abs(t) < eps * big:
                    break
                t = t * X3 / ((n + 3) * (n + 2))
                n += 3
        return float(ai), float(aip), float(integ)


@lru_cache(maxsize=None)
def _u_coeffs(n: int = 60):
    u = [1.0]
    for k in range(1, n):
        u.append(u[-1] * (6 * k - 5) * (6 * k - 3) * (6 * k - 1) / ((2 * k - 1) * 216 * k))
    v = [1.0] + [-(6 * k + 1) / (6 * k - 1) * u[k] for k in range(1, n)]
    return u, v


def _truncated(coeffs, zeta: float, parity: int | None = None) -> float:
    """sum_k (-1)^k c_k zeta^-k stopped at the smallest term.

    With ``parity`` set, only indices 2k + parity enter, with sign (-1)^k.
    """
    total = 0.0
    prev = math.inf
    idx = range(len(coeffs)) if parity is None else range(parity, len(coeffs), 2)
    for j, i in enumerate(idx):
        term = coeffs[i] / zeta**i
        if abs(term) > prev:
            break
        sign = (-1) ** (i if parity is None else j)
        total += sign * term
        prev = abs(term)
    return total


def _asymptotic(x: float) -> tuple:
    u, v = _u_coeffs()
    if x > 0:
        zeta = 2.0 / 3.0 * x**1.5
        pref = math.exp(-zeta) / (2.0 * math.sqrt(math.pi))
        return pref * x**-0.25 * _truncated(u, zeta), -pref * x**0.25 * _truncated(v, zeta)
    z = -x
    zeta = 2.0 / 3.0 * z**1.5
    c, s = math.cos(zeta - math.pi / 4), math.sin(zeta - math.pi / 4)
    ai = (c * _truncated(u, zeta, 0) + s * _truncated(u, zeta, 1)) / (math.sqrt(math.pi) * z**0.25)
    aip = z**0.25 / math.sqrt(math.pi) * (s * _truncated(v, zeta, 0) - c * _truncated(v, zeta, 1))
    return ai, aip


_DEFAULT_AIRY = AiryEvaluator()


def airy(x: float) -> float:
    """Ai(x) for x in [-20, 30]."""
    return _DEFAULT_AIRY(x)


def airy_prime(x: float) -> float:
    return _DEFAULT_AIRY.pair(x)[1]


def airy_tail_integral(y: float) -> float:
    """int_y^inf Ai(z) dz."""
    return _DEFAULT_AIRY.tail_integral(y)


def airy_arrays(x: np.ndarray) -> tuple:
    x = np.asarray(x, dtype=float)
    out = np.array([_DEFAULT_AIRY.pair(v) for v in x.ravel()]).reshape(x.shape + (2,))
    return out[..., 0], out[..., 1]


# -- Gaussian --------------------------------------------------------------------------


def gaussian_G(s: float) -> float:
    """Standard normal CDF."""
    return 0.5 * math.erfc(-s / math.sqrt(2.0))


# -- Airy kernel -----------------------------------------------------------------------


def airy_kernel_offdiag(x, y, ai_x, aip_x, ai_y, aip_y):
    return (ai_x * aip_y - aip_x * ai_y) / (x - y)


def airy_kernel_diag(x, ai, aip):
    return aip * aip - x * ai * ai


def airy_kernel_near_diag(x, y, ai_m, aip_m):
    """Expansion about the midpoint m; K(m - h, m + h) is even in h.

    K = Ai'(m)^2 - m Ai(m)^2 + h^2 (2 m Ai'^2 - 2 m^2 Ai^2 + Ai Ai') / 3 + O(h^4),
    obtained from int_m^inf (u Ai^2 - Ai'^2) du.
    """
    m = 0.5 * (x + y)
    h = 0.5 * (y - x)
    base = aip_m * aip_m - m * ai_m * ai_m
    c2 = (2.0 * m * aip_m * aip_m - 2.0 * m * m * ai_m * ai_m + ai_m * aip_m) / 3.0
    return base + h * h * c2


def airy_kernel(x: float, y: float) -> float:
    """Scalar K_Airy(x, y); symmetric by construction."""
    if x > y:
        x, y = y, x
    if abs(x - y) < DIAG_THRESHOLD:
        ai, aip = _DEFAULT_AIRY.pair(0.5 * (x + y))
        return airy_kernel_near_diag(x, y, ai, aip)
    ax, apx = _DEFAULT_AIRY.pair(x)
    ay, apy = _DEFAULT_AIRY.pair(y)
    return airy_kernel_offdiag(x, y, ax, apx, ay, apy)


def airy_kernel_matrix(z: np.ndarray) -> np.ndarray:
    """K_Airy at all node pairs; nodes must be distinct."""
    ai, aip = airy_arrays(z)
    X, Y = z[:, None], z[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        K = airy_kernel_offdiag(X, Y, ai[:, None], aip[:, None], ai[None, :], aip[None, :])
    close = np.abs(X - Y) < DIAG_THRESHOLD
    np.fill_diagonal(close, False)
    if close.any():
        for i, j in zip(*np.nonzero(close)):
            K[i, j] = airy_kernel(z[i], z[j])
    K[np.diag_indices_from(K)] = airy_kernel_diag(z, ai, aip)
    return 0.5 * (K + K.T)


@dataclass(frozen=True)
class AiryGrid:
    s: float
    L: float
    nodes: np.ndarray
    weights: np.ndarray


def airy_grid(s: float, n_quad: int, L: float = DEFAULT_L) -> AiryGrid:
    """Gauss-Legendre nodes mapped affinely to (s, s + L]."""
    g, w = _gauss_unit(int(n_quad))
    return AiryGrid(float(s), float(L), s + 0.5 * L * (g + 1.0), 0.5 * L * w)


def _check_s(s: float) -> None:
    if not (-10.0 <= s <= 6.0 + 1e-12):
        raise DomainError(f"s = {s} outside [-10, 6]")


def _lu_det(A: np.ndarray) -> float:
    lu, piv = lu_factor(A)
    sign = -1.0 if np.count_nonzero(piv != np.arange(len(piv))) % 2 else 1.0
    return float(sign * np.prod(np.diag(lu)))


def _f2_value(s: float, n_quad: int, L: float) -> float:
    g = airy_grid(s, n_quad, L)
    r = np.sqrt(g.weights)
    K = airy_kernel_matrix(g.nodes)
    return _lu_det(np.eye(len(r)) - r[:, None] * K * r[None, :])


def _f1sq_direct(s: float, n_quad: int, L: float) -> float:
    g = airy_grid(s, n_quad, L)
    K = airy_kernel_matrix(g.nodes)
    ai, _ = airy_arrays(g.nodes)
    below = 1.0 - np.array([airy_tail_integral(v) for v in g.nodes])
    Kp = K + ai[:, None] * below[None, :]
    return _lu_det(np.eye(len(g.nodes)) - Kp * g.weights[None, :])


def _f1sq_lemma(s: float, n_quad: int, L: float) -> float:
    """det(I - K) (1 - <v, (I - K)^{-1} u>) with u = Ai, v = int_{-inf}^y Ai."""
    g = airy_grid(s, n_quad, L)
    r = np.sqrt(g.weights)
    K = airy_kernel_matrix(g.nodes)
    A = np.eye(len(r)) - r[:, None] * K * r[None, :]
    ai, _ = airy_arrays(g.nodes)
    below = 1.0 - np.array([airy_tail_integral(v) for v in g.nodes])
    lu = lu_factor(A)
    sol = lu_solve(lu, r * ai)
    return _lu_det(A) * (1.0 - float(np.dot(r * below, sol)))


def _two_resolution(fn: Callable[[float, int, float], float], s: float, n_quad: int, L: float) -> FredholmEvaluation:
    value = fn(s, n_quad, L)
    coarse = fn(s, max(8, n_quad // 2), L)
    return FredholmEvaluation(value, n_quad, float(abs(value - coarse)))


def tracy_widom_F2(s: float, n_quad: int = DEFAULT_NQUAD, L: float = DEFAULT_L, tol: float | None = None) -> FredholmEvaluation:
    """F2(s) = det(I - K_Airy) on (s, inf), truncated to (s, s + L].

    The error estimate is the difference against n_quad / 2 nodes; with
    ``tol`` set, an estimate above it raises PrecisionError.
    """
    _check_s(s)
    ev = _two_resolution(_f2_value, s, n_quad, L)
    if tol is not None and ev.error_estimate > tol:
        raise PrecisionError(f"F2({s}) two-resolution gap {ev.error_estimate:.3g} exceeds {tol}")
    return ev


def tracy_widom_F1sq(
    s: float, n_quad: int = DEFAULT_NQUAD, L: float = DEFAULT_L, tol: float | None = None, path: str = "direct"
) -> FredholmEvaluation:
    """F1(s)^2 as the determinant of the rank-one-perturbed Airy kernel.

    ``path="direct"`` discretizes K_Airy(x, y) + Ai(x) int_{-inf}^y Ai and
    takes an LU determinant; ``path="lemma"`` uses the matrix determinant
    lemma on the symmetric F2 matrix instead.
    """
    _check_s(s)
    fn = {"direct": _f1sq_direct, "lemma": _f1sq_lemma}.get(path)
    if fn is None:
        raise DomainError(f"unknown path {path!r}")
    ev = _two_resolution(fn, s, n_quad, L)
    if tol is not None and ev.error_estimate > tol:
        raise PrecisionError(f"F1^2({s}) two-resolution gap {ev.error_estimate:.3g} exceeds {tol}")
    return ev


# -- tables ----------------------------------------------------------------------------


@dataclass
class DistributionTable:
    law: Law
    grid: np.ndarray
    values: np.ndarray
    errors: np.ndarray
    n_quad: int = 0
    L: float = DEFAULT_L
    reflected: bool = False
    _interp: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.law = Law(self.law)
        self.grid = np.asarray(self.grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        self.errors = np.asarray(self.errors, dtype=float)
        if len(self.grid) < 2 or np.any(np.diff(self.grid) <= 0):
            raise DomainError("table grid must be strictly increasing with at least two points")

    @property
    def tolerance(self) -> float:
        return float(np.max(self.errors)) if len(self.errors) else 0.0

    def _pchip(self):
        if self._interp is None:
            # monotone interpolant of the clipped, running-max values
            v = np.maximum.accumulate(np.clip(self.values, 0.0, 1.0))
            self._interp = PchipInterpolator(self.grid, v, extrapolate=False)
        return self._interp

    def value_at(self, s) -> np.ndarray:
        """Interpolated CDF; arguments outside the grid raise RangeError."""
        s = np.asarray(s, dtype=float)
        if np.any(s < self.grid[0]) or np.any(s > self.grid[-1]):
            raise RangeError("s outside table range")
        return self._pchip()(s)

    def cdf_clamped(self, s) -> tuple:
        """(values, clamped flag): points beyond the grid take the endpoint values."""
        s = np.asarray(s, dtype=float)
        lo, hi = self.grid[0], self.grid[-1]
        clamped = bool(np.any(s < lo) or np.any(s > hi))
        return self._pchip()(np.clip(s, lo, hi)), clamped

    def reflect(self) -> "DistributionTable":
        """Table of s -> 1 - F(-s), the form current fluctuations converge to."""
        return DistributionTable(
            self.law, -self.grid[::-1], 1.0 - self.values[::-1], self.errors[::-1], self.n_quad, self.L, not self.reflected
        )

    def is_monotone(self, slack: float = 0.0) -> bool:
        return bool(np.all(np.diff(self.values) >= -slack))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# law={self.law.value} n_quad={self.n_quad} L={self.L!r} reflected={int(self.reflected)}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["s", "F", "err_estimate"])
        for s, v, e in zip(self.grid, self.values, self.errors):
            w.writerow([f"{s:.17g}", f"{v:.17g}", f"{e:.17g}"])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "DistributionTable":
        lines = text.splitlines()
        meta = dict(item.split("=", 1) for item in lines[0].lstrip("# ").split())
        rows = list(csv.DictReader(lines[1:]))
        return cls(
            Law(meta["law"]),
            [float(r["s"]) for r in rows],
            [float(r["F"]) for r in rows],
            [float(r["err_estimate"]) for r in rows],
            int(meta["n_quad"]),
            float(meta["L"]),
            bool(int(meta.get("reflected", "0"))),
        )


def law_cdf(law: Law, s: float, n_quad: int = DEFAULT_NQUAD, L: float = DEFAULT_L) -> FredholmEvaluation:
    law = Law(law)
    if law is Law.G:
        return FredholmEvaluation(gaussian_G(s), 0, 0.0)
    if law is Law.F2:
        return tracy_widom_F2(s, n_quad, L)
    return tracy_widom_F1sq(s, n_quad, L)


def build_table(law, grid: Sequence[float], n_quad: int = DEFAULT_NQUAD, L: float = DEFAULT_L) -> DistributionTable:
    law = Law(law)
    evs = [law_cdf(law, float(s), n_quad, L) for s in grid]
    return DistributionTable(
        law,
        np.asarray(grid, dtype=float),
        np.array([e.value.real if isinstance(e.value, complex) else e.value for e in evs]),
        np.array([e.error_estimate for e in evs]),
        n_quad if law is not Law.G else 0,
        L,
    )


def quantile(table: DistributionTable, prob: float) -> float:
    """Monotone-cubic inverse of the tabulated CDF."""
    if not 0.0 < prob < 1.0:
        raise RangeError("probability must lie in (0, 1)")
    v = np.maximum.accumulate(np.clip(table.values, 0.0, 1.0))
    if not v[0] <= prob <= v[-1]:
        raise RangeError(f"p = {prob} not covered by the table ({v[0]:.3g}, {v[-1]:.3g})")
    f = table._pchip()
    i = int(np.searchsorted(v, prob))
    if v[min(i, len(v) - 1)] == prob:
        return float(table.grid[min(i, len(v) - 1)])
    lo, hi = table.grid[max(i - 1, 0)], table.grid[min(i, len(v) - 1)]
    return float(brentq(lambda s: float(f(s)) - prob, lo, hi, xtol=1e-14, rtol=1e-15))
