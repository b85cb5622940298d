"""Model parameters, combinatorial primitives and the asymptotic scaling constants.

All combinatorial helpers accept either floats or :class:`fractions.Fraction`
and stay exact when every input is rational.
"""

from __future__ import annotations

import bisect
import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational
from typing import Iterable, Optional, Union

from .errors import DomainError

Number = Union[int, float, Fraction]

NORMALIZATION_TOL = 1e-12


def _is_exact(*values) -> bool:
    return all(isinstance(v, Rational) for v in values)


@dataclass(frozen=True)
class ModelParams:
    """Hop rates and Bernoulli density.

    ``p`` is the right-hop rate and ``q`` the left-hop rate; the pair must be
    normalized to ``p + q = 1``.  ``tau`` and ``gamma`` are derived on access.
    """

    p: Number
    q: Number
    rho: Number = 1

    def __post_init__(self):
        p, q, rho = self.p, self.q, self.rho
        if p < 0:
            raise DomainError(f"p must be nonnegative, got {p}")
        if q <= 0:
            raise DomainError(f"q must be positive, got {q}")
        if _is_exact(p, q):
            if p + q != 1:
                raise DomainError(f"p + q must equal 1, got {p + q}")
        elif abs(p + q - 1) > NORMALIZATION_TOL:
            raise DomainError(f"p + q must equal 1, got {p + q}")
        if not 0 < rho <= 1:
            raise DomainError(f"rho must lie in (0, 1], got {rho}")

    @property
    def tau(self) -> Number:
        return self.p / self.q

    @property
    def gamma(self) -> Number:
        return self.q - self.p

    @classmethod
    def from_p(cls, p: Number, rho: Number = 1) -> "ModelParams":
        return cls(p, 1 - p, rho)

    def with_rho(self, rho: Number) -> "ModelParams":
        return ModelParams(self.p, self.q, rho)


def _tau_integer(n: int, tau: Number) -> Number:
    """[n]_tau = 1 + tau + ... + tau^(n-1), the cancelled form of (1-tau^n)/(1-tau)."""
    total = 0 if _is_exact(tau) else 0.0
    power = 1
    for _ in range(n):
        total += power
        power *= tau
    return total


def tau_binomial(N: int, n: int, tau: Number) -> Number:
    """Gaussian binomial coefficient with base ``tau``.

    Each factor (1 - tau^(N-j+1)) / (1 - tau^j) is evaluated as the ratio of
    the finite geometric sums [N-j+1]_tau / [j]_tau, so tau = 1 needs no
    special case and reduces to the ordinary binomial coefficient.
    """
    if n < 0 or n > N:
        raise DomainError(f"tau_binomial needs 0 <= n <= N, got N={N}, n={n}")
    result = Fraction(1) if _is_exact(tau) else 1.0
    for j in range(1, n + 1):
        result *= _tau_integer(N - j + 1, tau)
        result /= _tau_integer(j, tau)
    return result


def c_mk(m: int, k: int, params: ModelParams) -> Number:
    """Coefficient c_{m,k} of the finite-configuration series.

    Zero whenever m > k.
    """
    if m < 1 or k < 1:
        raise DomainError("c_mk needs m >= 1 and k >= 1")
    if m > k:
        return Fraction(0) if _is_exact(params.p, params.q) else 0.0
    tau, q = params.tau, params.q
    if tau == 0:
        raise DomainError("c_mk needs tau != 0 (p > 0)")
    sign = 1 if (m + 1) % 2 == 0 else -1
    value = (
        q ** (k * (k - 1) // 2)
        * sign
        * tau ** (m * (m - 1) // 2)
        * tau_binomial(k - 1, k - m, tau)
    )
    return value / tau ** (k * m)


def sigma_count(U: Iterable[int], V: Iterable[int]) -> int:
    """Number of pairs (u, v) in U x V with u >= v."""
    V = sorted(V)
    return sum(bisect.bisect_right(V, u) for u in U)


class Mode(str, enum.Enum):
    POSITION = "position"
    CURRENT = "current"


class RegimeLabel(str, enum.Enum):
    TW2 = "tw2"
    CRITICAL = "critical"
    GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class ScalingConstants:
    """Centering and scale constants for position or current fluctuations.

    In position mode ``sigma`` and ``c1, c2, c1p, c2p`` are filled; in current
    mode ``v`` and ``a1, a2, a1p, a2p``.  A constant whose radicand is negative
    is ``None`` rather than NaN.
    """

    mode: Mode
    rho: float
    sigma: Optional[float] = None
    c1: Optional[float] = None
    c2: Optional[float] = None
    c1p: Optional[float] = None
    c2p: Optional[float] = None
    v: Optional[float] = None
    a1: Optional[float] = None
    a2: Optional[float] = None
    a1p: Optional[float] = None
    a2p: Optional[float] = None

    def pair(self, regime: "RegimeLabel"):
        """(center, scale, exponent) used for the given regime."""
        if self.mode is Mode.POSITION:
            if regime is RegimeLabel.GAUSSIAN:
                return self.c1p, self.c2p, 0.5
            return self.c1, self.c2, 1.0 / 3.0
        if regime is RegimeLabel.GAUSSIAN:
            return self.a1p, self.a2p, 0.5
        return self.a1, self.a2, 1.0 / 3.0


def scaling_constants(sigma_or_v: float, params: ModelParams, mode="position") -> ScalingConstants:
    mode = Mode(mode)
    rho = float(params.rho)
    if mode is Mode.POSITION:
        sigma = float(sigma_or_v)
        if sigma <= 0:
            raise DomainError(f"sigma must be positive, got {sigma}")
        root = math.sqrt(sigma)
        c1 = -1.0 + 2.0 * root
        # (1 - sqrt(sigma))^(2/3) taken as a real cube root squared so sigma > 1 stays defined
        c2 = sigma ** (-1.0 / 6.0) * abs(1.0 - root) ** (2.0 / 3.0)
        c1p = sigma / rho + rho - 1.0
        radicand = (1.0 - rho) * (sigma - rho * rho)
        c2p = math.sqrt(radicand) / rho if radicand >= 0 else None
        return ScalingConstants(mode, rho, sigma=sigma, c1=c1, c2=c2, c1p=c1p, c2p=c2p)
    v = float(sigma_or_v)
    if v <= -1:
        raise DomainError(f"v must exceed -1, got {v}")
    a1 = (1.0 + v) ** 2 / 4.0
    a2 = 2.0 ** (-4.0 / 3.0) * abs(1.0 - v * v) ** (2.0 / 3.0)
    a1p = rho * v + rho * (1.0 - rho)
    radicand = rho * (1.0 - rho) * (v + 1.0 - 2.0 * rho)
    a2p = math.sqrt(radicand) if radicand >= 0 else None
    return ScalingConstants(mode, rho, v=v, a1=a1, a2=a2, a1p=a1p, a2p=a2p)


def classify_regime(sigma_or_v: float, rho: float, mode="position", tol: float = 0.0) -> RegimeLabel:
    """Regime of a (sigma, rho) or (v, rho) pair.

    ``tol`` widens the critical boundary; the default requires exact equality.
    """
    mode = Mode(mode)
    if mode is Mode.POSITION:
        if sigma_or_v <= 0:
            raise DomainError("sigma must be positive")
        boundary = rho * rho
    else:
        if sigma_or_v <= -1:
            raise DomainError("v must exceed -1")
        boundary = 2 * rho - 1
    if rho >= 1:
        return RegimeLabel.TW2
    gap = sigma_or_v - boundary
    if abs(gap) <= tol:
        return RegimeLabel.CRITICAL
    return RegimeLabel.TW2 if gap < 0 else RegimeLabel.GAUSSIAN
