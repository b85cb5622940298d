"""Exact distribution of the m-th particle: the Fredholm-determinant formula and
the finite-configuration contour series it is derived from.
"""

from __future__ import annotations

import itertools
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .contour import (
    ContourGrid,
    contour_integral_multi,
    det_identity_minus,
    make_circle,
    nystrom_matrix,
)
from .errors import (
    ConsistencyError,
    ConvergenceError,
    DomainError,
    PrecisionError,
    SingularKernelError,
    UnsupportedError,
)
from .model import ModelParams, c_mk, sigma_count

log = logging.getLogger(__name__)

RAW = "raw"
GAMMA_SCALED = "gamma_scaled"

# Direct evaluation loses double-precision conditioning past this time (p + q = 1).
MAX_DIRECT_TIME = 30.0


@dataclass(frozen=True)
class Numerics:
    """Tolerances and node budgets for the contour evaluations."""

    tol: float = 1e-9
    imag_tol: float = 1e-8
    n_xi: int = 64
    n_xi_max: int = 1024
    n_lambda: int = 128
    n_lambda_max: int = 2048
    radius_factor: float = 1.05


DEFAULT_NUMERICS = Numerics()


def epsilon(xi, params: ModelParams):
    """p / xi + q xi - 1."""
    xi = np.asarray(xi) if not np.isscalar(xi) else xi
    if np.any(xi == 0):
        raise DomainError("epsilon is undefined at xi = 0")
    return params.p / xi + params.q * xi - 1


def minimal_radius(params: ModelParams) -> float:
    """Smallest radius for which both kernel denominators stay away from zero outside C_R."""
    p, q, rho, tau = (float(v) for v in (params.p, params.q, params.rho, params.tau))
    pair = (1.0 + math.sqrt(1.0 + 4.0 * p * q)) / (2.0 * q)
    pole = abs(1.0 - rho * (1.0 - tau))
    return max(1.0, pair, pole)


def default_radius(params: ModelParams, factor: float = 1.05) -> float:
    return factor * minimal_radius(params)


@dataclass(frozen=True)
class KernelSpec:
    params: ModelParams
    x: int
    t: float
    time_convention: str = RAW
    R: float = field(default=None)

    def __post_init__(self):
        if self.t < 0:
            raise DomainError("t must be nonnegative")
        if self.time_convention not in (RAW, GAMMA_SCALED):
            raise DomainError(f"unknown time convention {self.time_convention!r}")
        if self.time_convention == GAMMA_SCALED and float(self.params.gamma) == 0:
            raise DomainError("gamma-scaled clock needs p != q")
        if self.R is None:
            object.__setattr__(self, "R", default_radius(self.params))
        p, q, rho, tau = (float(v) for v in (self.params.p, self.params.q, self.params.rho, self.params.tau))
        R = self.R
        if not R > 1:
            raise DomainError(f"contour radius must exceed 1, got {R}")
        if not q * R * R > R + p:
            raise DomainError(f"radius {R} too small: need q R^2 > R + p")
        if not R > abs(1.0 - rho * (1.0 - tau)):
            raise DomainError(f"radius {R} too small: need R > |1 - rho (1 - tau)|")

    @property
    def time(self) -> float:
        """Time entering the exponent: t for the raw clock, t / gamma otherwise."""
        if self.time_convention == GAMMA_SCALED:
            return float(self.t) / float(self.params.gamma)
        return float(self.t)


def _int_power(xi, x: int):
    if x >= 0:
        return xi**x
    return (1.0 / xi) ** (-x)


def kernel_K(xi, xi_p, spec: KernelSpec, bernoulli_factor: bool = True):
    """Kernel of the Fredholm determinant.

    ``bernoulli_factor=False`` drops the last factor rho (xi - tau) / (xi - 1 + rho (1 - tau)),
    giving the step-initial-condition kernel.
    """
    par = spec.params
    p, q, rho, tau = (float(v) for v in (par.p, par.q, par.rho, par.tau))
    xi = np.asarray(xi, dtype=complex)
    xi_p = np.asarray(xi_p, dtype=complex)
    denom = p + q * xi * xi_p - xi
    if np.any(denom == 0):
        raise SingularKernelError("p + q xi xi' - xi vanishes")
    value = q * _int_power(xi, spec.x) * np.exp(epsilon(xi, par) * spec.time) / denom
    if bernoulli_factor:
        pole = xi - 1.0 + rho * (1.0 - tau)
        if np.any(pole == 0):
            raise SingularKernelError("xi - 1 + rho (1 - tau) vanishes")
        value = value * (rho * (xi - tau) / pole)
    return value


def kernel_matrix(spec: KernelSpec, grid: ContourGrid, bernoulli_factor: bool = True) -> np.ndarray:
    return nystrom_matrix(lambda a, b: kernel_K(a, b, spec, bernoulli_factor), grid)


def lambda_radius(params: ModelParams, m: int) -> float:
    """Twice the modulus of the outermost pole lam = tau^(-k), k < m."""
    tau = float(params.tau)
    return 2.0 * max(1.0, tau ** (-(m - 1)))


def lambda_nodes(m: int, n_lambda: int) -> int:
    return max(n_lambda, 16 * m)


def _lambda_integral(M: np.ndarray, m: int, tau: float, grid: ContourGrid) -> complex:
    """(1/2 pi i) \\oint det(I - lam M) / (lam prod_k (1 - lam tau^k)) dlam."""
    lam = grid.nodes
    dets = np.array([det_identity_minus(M, z) for z in lam])
    poles = np.prod(1.0 - lam[:, None] * tau ** np.arange(m)[None, :], axis=1)
    return complex(np.sum(grid.weights * dets / (lam * poles)))


@dataclass(frozen=True)
class ProbabilityEvaluation:
    value: float
    raw: complex
    imag_residual: float
    error_estimate: float
    n_xi: int
    n_lambda: int
    converged: bool


def _check_position_args(m, params):
    if m < 1:
        raise DomainError("m must be at least 1")
    if float(params.p) == 0:
        raise DomainError("the Fredholm formula needs p != 0")


def prob_position_detail(
    m: int,
    x: int,
    t: float,
    params: ModelParams,
    numerics: Numerics = DEFAULT_NUMERICS,
    time_convention: str = RAW,
    R: float | None = None,
    strict: bool = True,
    bernoulli_factor: bool = True,
) -> ProbabilityEvaluation:
    """P(x_m(t) <= x) from the Fredholm-determinant formula, with diagnostics.

    The xi-contour and the lambda-contour node counts are doubled until the
    value changes by less than ``numerics.tol`` between resolutions.
    ``bernoulli_factor=False`` drops the density factor from the kernel, which
    gives the step (rho = 1) law whatever ``params.rho`` says.
    """
    _check_position_args(m, params)
    if R is None:
        R = default_radius(params, numerics.radius_factor)
    spec = KernelSpec(params, x, t, time_convention, R)
    if spec.time > MAX_DIRECT_TIME:
        warnings.warn(
            f"time {spec.time:.3g} exceeds {MAX_DIRECT_TIME}; double precision may not resolve the determinant",
            RuntimeWarning,
            stacklevel=2,
        )
    tau = float(params.tau)
    r_lam = lambda_radius(params, m)
    n_xi = numerics.n_xi
    n_lam = lambda_nodes(m, numerics.n_lambda)

    cache: dict = {}

    def value(nx, nl):
        key = (nx, nl)
        if key not in cache:
            M = kernel_matrix(spec, make_circle(0.0, R, nx), bernoulli_factor)
            cache[key] = _lambda_integral(M, m, tau, make_circle(0.0, r_lam, nl))
        return cache[key]

    while True:
        v = value(n_xi, n_lam)
        err_xi = abs(v - value(n_xi // 2, n_lam))
        err_lam = abs(v - value(n_xi, n_lam // 2))
        err = max(err_xi, err_lam)
        if err < numerics.tol:
            converged = True
            break
        grow_xi = err_xi >= numerics.tol and 2 * n_xi <= numerics.n_xi_max
        grow_lam = err_lam >= numerics.tol and 2 * n_lam <= numerics.n_lambda_max
        if not (grow_xi or grow_lam):
            converged = False
            break
        if grow_xi:
            n_xi *= 2
        if grow_lam:
            n_lam *= 2

    result = ProbabilityEvaluation(
        value=min(1.0, max(0.0, v.real)),
        raw=v,
        imag_residual=abs(v.imag),
        error_estimate=float(err),
        n_xi=n_xi,
        n_lambda=n_lam,
        converged=converged,
    )
    log.debug("P(x_%d(%g) <= %d) raw=%r err=%.3g", m, t, x, v, err)
    if strict:
        if not converged:
            raise ConvergenceError(
                f"P(x_{m}({t}) <= {x}) unconverged: estimate {err:.3g} at n_xi={n_xi}, n_lambda={n_lam}"
            )
        _check_probability(result, numerics)
    return result


def prob_position_at(
    m: int,
    x: int,
    t: float,
    params: ModelParams,
    n_xi: int,
    n_lambda: int,
    time_convention: str = RAW,
    R: float | None = None,
    bernoulli_factor: bool = True,
) -> complex:
    """Raw (complex) value of the Fredholm formula at fixed node counts, no refinement."""
    _check_position_args(m, params)
    if R is None:
        R = default_radius(params)
    spec = KernelSpec(params, x, t, time_convention, R)
    M = kernel_matrix(spec, make_circle(0.0, R, n_xi), bernoulli_factor)
    return _lambda_integral(M, m, float(params.tau), make_circle(0.0, lambda_radius(params, m), n_lambda))


def _check_probability(result: ProbabilityEvaluation, numerics: Numerics):
    if result.imag_residual > numerics.imag_tol:
        raise ConsistencyError(f"imaginary part {result.imag_residual:.3g} above tolerance")
    slack = max(numerics.imag_tol, numerics.tol)
    if not -slack <= result.raw.real <= 1 + slack:
        raise ConsistencyError(f"probability {result.raw.real!r} outside [0, 1]")


def prob_position(
    m: int,
    x: int,
    t: float,
    params: ModelParams,
    numerics: Numerics = DEFAULT_NUMERICS,
    time_convention: str = RAW,
    R: float | None = None,
) -> float:
    """P(x_m(t) <= x) for step Bernoulli initial data, clamped to [0, 1]."""
    return prob_position_detail(m, x, t, params, numerics, time_convention, R).value


def prob_position_residues(
    m: int,
    x: int,
    t: float,
    params: ModelParams,
    n_xi: int = 256,
    time_convention: str = RAW,
    R: float | None = None,
) -> complex:
    """Same probability by summing the residues of the lambda-integrand.

    The poles sit at lam = 0 (residue 1) and lam = tau^(-k), k < m, so

        P = 1 - sum_k det(I - tau^(-k) K) / prod_{j != k} (1 - tau^(j - k)).
    """
    _check_position_args(m, params)
    tau = float(params.tau)
    if R is None:
        R = default_radius(params)
    spec = KernelSpec(params, x, t, time_convention, R)
    M = kernel_matrix(spec, make_circle(0.0, R, n_xi))
    total = 1.0 + 0.0j
    for k in range(m):
        denom = 1.0
        for j in range(m):
            if j != k:
                denom *= 1.0 - tau ** (j - k)
        total -= det_identity_minus(M, tau ** (-k)) / denom
    return total


# -- finite initial configurations -------------------------------------------------


def _finite_y_integrand(S: Sequence[int], x: int, t: float, params: ModelParams):
    p, q = float(params.p), float(params.q)
    k = len(S)

    def f(*xi):
        value = 1.0 + 0.0j
        prod_all = 1.0 + 0.0j
        for i in range(k):
            for j in range(i + 1, k):
                value = value * (xi[j] - xi[i]) / (p + q * xi[i] * xi[j] - xi[i])
        for i in range(k):
            prod_all = prod_all * xi[i]
            value = (
                value
                * _int_power(xi[i], x - 1 - S[i])
                * np.exp(epsilon(xi[i], params) * t)
                / (1.0 - xi[i])
            )
        return value * (1.0 - prod_all)

    return f


def finite_y_radius(params: ModelParams, t: float) -> float:
    """Radius for the finite-configuration integrals.

    Only p + q xi xi' - xi must stay nonzero outside the circle; the extra room
    keeps the nearest pole of the integrand well inside for fast trapezoidal
    convergence while e^{q R t} stays moderate.
    """
    p, q = float(params.p), float(params.q)
    base = max(1.0, (1.0 + math.sqrt(1.0 + 4.0 * p * q)) / (2.0 * q))
    return base * (1.0 + 1.0 / (1.0 + q * t))


def saddle_radius(n: int, params: ModelParams, t: float) -> float:
    """Radius minimizing |xi^n exp(eps(xi) t)| on circles: root of q t R^2 + n R - p t = 0."""
    p, q = float(params.p), float(params.q)
    if t == 0 or p == 0:
        return 1.0 if n >= 0 else max(1.0, -n / (q * t)) if t > 0 else 1.0
    return (-n + math.sqrt(n * n + 4.0 * p * q * t * t)) / (2.0 * q * t)


def prob_position_finite_Y(
    Y: Iterable[int],
    m: int,
    x: int,
    t: float,
    params: ModelParams,
    n: int = 64,
    tol: float = 1e-10,
    n_max: int = 512,
    R: float | None = None,
) -> float:
    """P_Y(x_m(t) = x) for a deterministic finite initial configuration Y.

    Sums c_{m,|S|} tau^{sigma(S, Y)} times a |S|-fold contour integral over the
    subsets S of Y, doubling the per-dimension node count to ``tol``.

    For |S| = 1 the integrand reduces to xi^(x-1-s) e^{eps(xi) t}, whose only
    singularity is at 0, so that integral is taken on its saddle-point circle;
    this keeps the quadrature free of cancellation when x is far from s.
    """
    Y = sorted(set(int(y) for y in Y))
    if len(Y) > 3:
        raise UnsupportedError("finite-Y series limited to |Y| <= 3")
    if not 1 <= m <= len(Y):
        raise DomainError("need 1 <= m <= |Y|")
    if float(params.p) == 0:
        raise DomainError("the finite-Y series needs p != 0")
    tau = float(params.tau)
    if R is None:
        R = finite_y_radius(params, t)

    def radius(S) -> float:
        r = saddle_radius(x - 1 - S[0], params, t)
        if len(S) > 1:
            # growing is always admissible; shrinking would pull the contour onto the poles
            return max(R, r)
        # the removable 0/0 at xi = 1 must not land on a node
        return 1.01 if abs(r - 1.0) < 1e-3 else r

    def evaluate(nodes: int) -> tuple:
        total = 0.0 + 0.0j
        mass = 0.0
        for k in range(m, len(Y) + 1):
            coeff = float(c_mk(m, k, params))
            for S in itertools.combinations(Y, k):
                weight = coeff * tau ** sigma_count(S, Y)
                grid = make_circle(0.0, radius(S), nodes)
                val, mag = contour_integral_multi(_finite_y_integrand(S, x, t, params), grid, k, return_mass=True)
                total += weight * val
                mass += abs(weight) * mag
        return total, mass

    cap = n_max if len(Y) < 3 else min(n_max, 256)
    prev, _ = evaluate(n)
    while True:
        if 2 * n > cap:
            raise ConvergenceError(f"finite-Y series unconverged at n={n}")
        n *= 2
        cur, mass = evaluate(n)
        # below the rounding floor of the sum, further doubling cannot help
        if abs(cur - prev) < max(tol, 1e3 * np.finfo(float).eps * mass):
            break
        prev = cur
    floor = 1e3 * np.finfo(float).eps * mass
    if floor > 1e-8:
        # far tails: the subset terms cancel beyond double precision
        raise PrecisionError(f"finite-Y rounding floor {floor:.3g} exceeds 1e-8 at x={x}")
    if abs(cur.imag) > 1e-8:
        raise ConsistencyError(f"imaginary part {cur.imag:.3g} in finite-Y probability")
    return cur.real


def bernoulli_weight_closed_form(S: Sequence[int], params: ModelParams):
    """tau^{k(k+1)/2} rho^k prod_i (1 - rho + tau^{k-i+1} rho)^{t_i}, t_i the gap before s_i.

    Equals the Bernoulli average of tau^{sigma(S, Y)} over configurations Y
    containing S.  Exact for rational inputs.
    """
    S = list(S)
    if any(s <= 0 for s in S) or any(b <= a for a, b in zip(S, S[1:])):
        raise DomainError("S must be strictly increasing positive integers")
    tau, rho = params.tau, params.rho
    k = len(S)
    value = tau ** (k * (k + 1) // 2) * rho**k
    prev = 0
    for i, s in enumerate(S, start=1):
        value *= (1 - rho + tau ** (k - i + 1) * rho) ** (s - prev - 1)
        prev = s
    return value


def bernoulli_weight_enumerated(S: Sequence[int], params: ModelParams, N: int):
    """Brute-force sum over S <= Y <= [1, N] of rho^|Y| (1-rho)^(N-|Y|) tau^sigma(S, Y)."""
    S = sorted(S)
    if S and S[-1] > N:
        raise DomainError("N must be at least max(S)")
    tau, rho = params.tau, params.rho
    rest = [y for y in range(1, N + 1) if y not in set(S)]
    total = 0
    for r in range(len(rest) + 1):
        for extra in itertools.combinations(rest, r):
            Y = sorted(S + list(extra))
            total += rho ** len(Y) * (1 - rho) ** (N - len(Y)) * tau ** sigma_count(S, Y)
    return total
