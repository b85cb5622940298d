import numpy as np
import pytest

from asep_lab.contour import (
    contour_integral_multi,
    det_identity_minus,
    fredholm_series_term,
    make_circle,
    nystrom_fredholm_det,
    nystrom_matrix,
)
from asep_lab.errors import DomainError, NumericalDegeneracyError, UnsupportedError


def test_weights_residue_invariant():
    for c, r, n in [(0, 1, 8), (0.5 + 1j, 2.5, 64), (-3, 0.1, 33)]:
        g = make_circle(c, r, n)
        assert abs(np.sum(g.weights / (g.nodes - g.center)) - 1) < 1e-14


def test_make_circle_validation():
    with pytest.raises(DomainError):
        make_circle(0, 0.0, 16)
    with pytest.raises(DomainError):
        make_circle(0, 1.0, 4)


def test_trapezoid_examples():
    assert abs(make_circle(0, 1, 64).integrate(lambda z: 1 / z) - 1) < 1e-14
    assert abs(make_circle(0, 2, 64).integrate(lambda z: z**3)) < 1e-13


def test_spectral_convergence():
    # error of 1/(z - a) with |a| = r/2 is (1/2)^n, so error(2n) ~ error(n)^2
    errs = {n: abs(make_circle(0, 1, n).integrate(lambda z: 1 / (z - 0.5)) - 1) for n in (16, 32, 64)}
    assert errs[32] < 1e-8 and errs[64] < 1e-14
    assert errs[32] <= 4 * errs[16] ** 2


def test_fredholm_trivial_cases():
    g = make_circle(0, 1, 32)
    k = lambda a, b: 1 / (2 * a - b)
    assert nystrom_fredholm_det(k, g, 0).value == 1
    zero = nystrom_fredholm_det(lambda a, b: 0 * a * b, g, 0.7)
    assert zero.value == 1


def test_fredholm_vs_series_oracle():
    g = make_circle(0, 1, 24)
    kernel = lambda a, b: 1 / (2 * a - b)
    lam = 0.5
    ev = nystrom_fredholm_det(kernel, g, lam)
    series = sum((-lam) ** k * fredholm_series_term(kernel, g, k) for k in range(7))
    assert abs(ev.value - series) < 1e-10
    assert ev.error_estimate >= 0


def test_det_is_polynomial_in_lambda():
    g = make_circle(0, 1.3, 20)
    M = nystrom_matrix(lambda a, b: np.exp(a * b) / (3 - a), g)
    eig = np.linalg.eigvals(M)
    for lam in (0.3, 1.0 + 0.5j, -2.0):
        assert abs(np.prod(1 - lam * eig) - det_identity_minus(M, lam)) < 1e-10


def test_conjugate_symmetry():
    g = make_circle(0, 1.2, 32)
    M = nystrom_matrix(lambda a, b: a**2 / (2.5 - a * b), g)
    lam = 0.4 + 0.9j
    assert abs(det_identity_minus(M, np.conj(lam)) - np.conj(det_identity_minus(M, lam))) < 1e-12


def test_singular_pivot_detected():
    with pytest.raises(NumericalDegeneracyError):
        det_identity_minus(np.eye(4), 1.0)


def test_multi_examples():
    g = make_circle(0, 1, 32)
    assert abs(contour_integral_multi(lambda a, b: 1 / (a * b), g, 2) - 1) < 1e-14
    assert abs(contour_integral_multi(lambda a, b: 1 / (a * b * b), g, 2)) < 1e-14
    assert abs(contour_integral_multi(lambda a, b, c: 1 / (a * b * c), g, 3) - 1) < 1e-13
    with pytest.raises(UnsupportedError):
        contour_integral_multi(lambda *z: 1, g, 4)
