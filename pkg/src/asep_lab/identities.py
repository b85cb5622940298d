"""Exact-arithmetic checks of the algebraic identities behind the Fredholm formula.

Everything here works on :class:`fractions.Fraction`.  Both sides of each
identity are rational functions of bounded degree in the xi variables, so
equality at enough generic points is a complete check; the tests sample
points at random and compare with ``==``.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

from .errors import DegeneratePointError, DomainError
from .model import tau_binomial

MAX_K = 6


@dataclass(frozen=True)
class RationalPoint:
    xi: tuple
    p: Fraction
    q: Fraction
    rho: Fraction

    def __post_init__(self):
        object.__setattr__(self, "xi", tuple(Fraction(v) for v in self.xi))
        for name in ("p", "q", "rho"):
            object.__setattr__(self, name, Fraction(getattr(self, name)))
        if self.p + self.q != 1:
            raise DomainError("p + q must equal 1")
        if self.q == 0:
            raise DomainError("q must be nonzero")
        if len(set(self.xi)) != len(self.xi):
            raise DegeneratePointError("xi values must be distinct")

    @property
    def tau(self) -> Fraction:
        return self.p / self.q

    @property
    def k(self) -> int:
        return len(self.xi)

    def a(self, i: int) -> Fraction:
        """1 - rho + rho tau^i."""
        return 1 - self.rho + self.rho * self.tau**i

    def with_tau_perturbed(self, delta: Fraction) -> "RationalPoint":
        """Same xi and rho with p shifted by ``delta`` (p + q = 1 kept)."""
        return RationalPoint(self.xi, self.p + delta, self.q - delta, self.rho)


def _pair(point: RationalPoint, a: Fraction, b: Fraction) -> Fraction:
    return point.p + point.q * a * b - a


def _nonzero(value: Fraction, what: str) -> Fraction:
    if value == 0:
        raise DegeneratePointError(f"{what} vanishes at this point")
    return value


def _perm_sign(perm: Sequence[int]) -> int:
    sign = 1
    for i in range(len(perm)):
        for j in range(i + 1, len(perm)):
            if perm[i] > perm[j]:
                sign = -sign
    return sign


def symmetrized_sum(point: RationalPoint, a: Callable[[int], Fraction]) -> Fraction:
    """sum over sigma in S_k of sgn(sigma) prod_{i<j} 1/(p + q x_i' x_j' - x_i')
    * prod_i 1/(x_i' ... x_k' - a(k - i + 1)), with x' = xi permuted by sigma."""
    k = point.k
    if k > MAX_K:
        raise DomainError(f"permutation sums limited to k <= {MAX_K}")
    total = Fraction(0)
    for perm in itertools.permutations(range(k)):
        x = [point.xi[s] for s in perm]
        term = Fraction(_perm_sign(perm))
        for i in range(k):
            for j in range(i + 1, k):
                term /= _nonzero(_pair(point, x[i], x[j]), "p + q xi xi' - xi")
        tail = Fraction(1)
        for i in range(k - 1, -1, -1):
            tail *= x[i]
            term /= _nonzero(tail - a(k - i), "xi_i ... xi_k - a")
        total += term
    return total


def biden_lhs(point: RationalPoint) -> Fraction:
    """Signed permutation sum with a_i = 1 - rho + rho tau^i."""
    return symmetrized_sum(point, point.a)


def generalized_rhs(point: RationalPoint, c: Fraction, b_product: Fraction) -> Fraction:
    """b_1...b_k prod_{i<j}(xi_i - xi_j) / (prod_i (xi_i - c) * prod_{i != j} (p + q xi_i xi_j - xi_i))."""
    xi = point.xi
    k = point.k
    num = Fraction(b_product)
    for i in range(k):
        for j in range(i + 1, k):
            num *= xi[i] - xi[j]
    den = Fraction(1)
    for i in range(k):
        den *= _nonzero(xi[i] - c, "xi - c")
        for j in range(k):
            if i != j:
                den *= _nonzero(_pair(point, xi[i], xi[j]), "p + q xi xi' - xi")
    return num / den


def biden_rhs(point: RationalPoint) -> Fraction:
    k = point.k
    c = 1 - point.rho * (1 - point.tau)
    return generalized_rhs(point, c, point.q ** (k * (k - 1) // 2))


def induction_constants(k: int, c: Fraction, tau: Fraction, q: Fraction) -> tuple:
    """(a_k, b_k) forced by the inductive step: b_k = q^(k-1), a_k = ((1-c) tau^k + c - tau)/(1 - tau)."""
    if tau == 1:
        raise DomainError("induction constants need tau != 1")
    if k < 1:
        raise DomainError("k must be at least 1")
    a_k = ((1 - c) * tau**k + c - tau) / (1 - tau)
    return a_k, q ** (k - 1)


@dataclass(frozen=True)
class InductionCheck:
    a_k: Fraction
    b_k: Fraction
    base_case_ok: bool
    rho_form_ok: bool
    rho: Fraction


def verify_induction_constants(k: int, c, params_or_point) -> InductionCheck:
    """Recompute (a_k, b_k) and check them against the k = 1 case and the rho form.

    The base case requires b_1 = 1, a_1 = c.  Setting rho = (1 - c)/(1 - tau)
    must give a_i = 1 - rho + rho tau^i for every i <= k.
    """
    c = Fraction(c)
    p, q = Fraction(params_or_point.p), Fraction(params_or_point.q)
    tau = p / q
    a_k, b_k = induction_constants(k, c, tau, q)
    a_1, b_1 = induction_constants(1, c, tau, q)
    rho = (1 - c) / (1 - tau)
    rho_ok = all(induction_constants(i, c, tau, q)[0] == 1 - rho + rho * tau**i for i in range(1, k + 1))
    return InductionCheck(a_k, b_k, a_1 == c and b_1 == 1, rho_ok, rho)


def induction_step_residual(point: RationalPoint, c) -> Fraction:
    """(1/b_k) sum_l (xi_l - c) prod_{i != l}(p + q xi_i xi_l - xi_i) / prod_{i != l}(xi_l - xi_i)
    minus (xi_1...xi_k - a_k); zero exactly when the inductive step closes."""
    c = Fraction(c)
    xi = point.xi
    k = point.k
    a_k, b_k = induction_constants(k, c, point.tau, point.q)
    total = Fraction(0)
    for l in range(k):
        num = xi[l] - c
        den = Fraction(1)
        for i in range(k):
            if i != l:
                num *= _pair(point, xi[i], xi[l])
                den *= xi[l] - xi[i]
        total += num / den
    prod = Fraction(1)
    for v in xi:
        prod *= v
    return total / b_k - (prod - a_k)


def bareiss_det(matrix: Sequence[Sequence[Fraction]]) -> Fraction:
    """Exact determinant by fraction-free (Bareiss) elimination with row swaps."""
    A = [[Fraction(v) for v in row] for row in matrix]
    n = len(A)
    if n == 0:
        return Fraction(1)
    sign = 1
    prev = Fraction(1)
    for k in range(n - 1):
        if A[k][k] == 0:
            swap = next((r for r in range(k + 1, n) if A[r][k] != 0), None)
            if swap is None:
                return Fraction(0)
            A[k], A[swap] = A[swap], A[k]
            sign = -sign
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                A[i][j] = (A[i][j] * A[k][k] - A[i][k] * A[k][j]) / prev
            A[i][k] = Fraction(0)
        prev = A[k][k]
    return sign * A[n - 1][n - 1]


def cauchy_det_sides(point: RationalPoint) -> tuple:
    """Both sides of the determinant identity for det(1/(p + q xi_i xi_j - xi_i))."""
    xi, p, q = point.xi, point.p, point.q
    k = point.k
    for v in xi:
        if v == 1 or q * v - p == 0:
            raise DegeneratePointError("xi must avoid 1 and p/q")
    lhs = bareiss_det([[1 / _nonzero(_pair(point, xi[i], xi[j]), "p + q xi xi' - xi") for j in range(k)] for i in range(k)])
    rhs = Fraction((-1) ** k) * (p * q) ** (k * (k - 1) // 2)
    for i in range(k):
        for j in range(k):
            if i != j:
                rhs *= (xi[j] - xi[i]) / _pair(point, xi[i], xi[j])
        rhs /= (1 - xi[i]) * (q * xi[i] - p)
    return lhs, rhs


def verify_cauchy_det_identity(point: RationalPoint) -> bool:
    if point.k > 5:
        raise DomainError("determinant identity check limited to k <= 5")
    lhs, rhs = cauchy_det_sides(point)
    return lhs == rhs


def verify_tau_binomial_sum(m: int, z, K_max: int, tau) -> Fraction:
    """|sum_{k=m}^{K_max} [k-1 choose k-m]_tau z^k - prod_{j=1}^m z/(1 - tau^(m-j) z)|, exactly."""
    z, tau = Fraction(z), Fraction(tau)
    if m < 1:
        raise DomainError("m must be at least 1")
    if not 0 <= tau < 1:
        raise DomainError("tau must lie in [0, 1)")
    if abs(z) >= 1:
        raise DomainError("|z| must be below 1 for the series to converge")
    partial = sum((tau_binomial(k - 1, k - m, tau) * z**k for k in range(m, K_max + 1)), Fraction(0))
    closed = Fraction(1)
    for j in range(1, m + 1):
        closed *= z / (1 - tau ** (m - j) * z)
    return abs(partial - closed)


# -- random admissible points ----------------------------------------------------------


def _rand_fraction(rng: random.Random, max_den: int, lo: Fraction, hi: Fraction) -> Fraction:
    while True:
        den = rng.randint(1, max_den)
        num = rng.randint(-max_den, max_den)
        v = Fraction(num, den)
        if lo < v < hi:
            return v


def random_point(k: int, rng: random.Random, max_den: int = 50, exclude_tau_one: bool = True) -> RationalPoint:
    """One random point; may be degenerate (the caller checks)."""
    while True:
        p = _rand_fraction(rng, max_den, Fraction(0), Fraction(1))
        if not (exclude_tau_one and p == Fraction(1, 2)):
            break
    rho = _rand_fraction(rng, max_den, Fraction(0), Fraction(1))
    xi = []
    while len(xi) < k:
        v = _rand_fraction(rng, max_den, Fraction(-4), Fraction(4))
        if v != 0 and v not in xi:
            xi.append(v)
    return RationalPoint(tuple(xi), p, 1 - p, rho)


def sample_admissible(k: int, rng: random.Random, check: Callable[[RationalPoint], object], max_retries: int = 10):
    """Draw points until ``check`` evaluates without a degenerate denominator.

    Returns (point, result, retries).
    """
    for retries in range(max_retries + 1):
        point = random_point(k, rng)
        try:
            return point, check(point), retries
        except DegeneratePointError:
            continue
    raise DegeneratePointError(f"no admissible point after {max_retries} retries")


def biden_check(point: RationalPoint) -> bool:
    # evaluate the rhs first so its denominators are checked too
    rhs = biden_rhs(point)
    return biden_lhs(point) == rhs
