import random

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, special

from asep_lab.errors import DomainError, RangeError
from asep_lab.limits import (
    DistributionTable,
    Law,
    airy,
    airy_kernel,
    airy_kernel_diag,
    airy_kernel_matrix,
    airy_kernel_offdiag,
    airy_prime,
    airy_tail_integral,
    build_table,
    gaussian_G,
    quantile,
    tracy_widom_F1sq,
    tracy_widom_F2,
)

AI0 = 0.35502805388781723926


def test_airy_at_zero():
    assert abs(airy(0.0) - AI0) < 1e-16
    assert abs(airy_prime(0.0) + 0.25881940379280679840) < 1e-16


@pytest.mark.parametrize("x", [-19.5, -12.0, -8.6, -8.4, -3.3, 0.7, 4.4, 4.6, 8.4, 8.6, 15.0, 29.0])
def test_airy_vs_scipy(x):
    ai, aip, _, _ = special.airy(x)
    assert abs(airy(x) - ai) <= 1e-12 * max(abs(ai), 1e-300) or abs(airy(x) - ai) < 1e-15
    assert abs(airy_prime(x) - aip) <= 1e-12 * max(abs(aip), 1e-300) or abs(airy_prime(x) - aip) < 1e-14


@pytest.mark.parametrize("x", range(-5, 6))
def test_airy_ode_residual(x):
    h = 5e-3
    f = [airy(x + k * h) for k in (-2, -1, 0, 1, 2)]
    d2 = (-f[0] + 16 * f[1] - 30 * f[2] + 16 * f[3] - f[4]) / (12 * h * h)
    assert abs(d2 - x * f[2]) < 1e-8


def test_airy_integral_normalization():
    # int_0^inf Ai = 1/3 and int_-inf^0 Ai = 2/3, so the whole line integrates to 1
    assert abs(airy_tail_integral(0.0) - 1 / 3) < 1e-15
    # int_y^0 Ai by extended-precision quadrature of mpmath's Ai
    with mpmath.workdps(30):
        for y in (-19.0, -9.0, -8.5, -3.0, 1.5, 8.5, 12.0):
            ref = float(mpmath.mpf(1) / 3 + mpmath.quad(mpmath.airyai, [y, 0]))
            assert abs(airy_tail_integral(y) - ref) < 1e-9
    # left tail: 1 - int_y^inf Ai tends to 0 as y -> -inf, with decaying oscillation
    assert abs(1 - airy_tail_integral(-19.9)) < 0.1


def test_airy_range():
    with pytest.raises(DomainError):
        airy(-25.0)
    with pytest.raises(DomainError):
        airy(31.0)


def test_gaussian_examples():
    assert gaussian_G(0.0) == 0.5
    assert abs(gaussian_G(1.96) - 0.975) < 1e-3
    rng = random.Random(1)
    for _ in range(100):
        s = rng.uniform(-8, 8)
        assert abs(gaussian_G(s) + gaussian_G(-s) - 1) < 1e-14


@given(st.floats(-30, 30))
def test_gaussian_vs_ndtr(s):
    assert abs(gaussian_G(s) - special.ndtr(s)) < 1e-15


def test_kernel_symmetry_and_diag():
    for x, y in [(0.3, -1.2), (-4.0, 2.5), (1.0, 1.0 + 1e-4)]:
        assert airy_kernel(x, y) == airy_kernel(y, x)
    z = np.linspace(-6, 4, 17)
    M = airy_kernel_matrix(z)
    assert np.array_equal(M, M.T)


@pytest.mark.parametrize("x", [-6.0, -1.5, 0.0, 2.0, 5.0])
def test_near_diagonal_agreement(x):
    y = x + 1e-4
    ax, apx, _, _ = special.airy(x)
    ay, apy, _, _ = special.airy(y)
    off = airy_kernel_offdiag(x, y, ax, apx, ay, apy)
    assert abs(airy_kernel(x, y) - off) < 1e-9
    # the integral representation as an independent oracle
    ref, _ = integrate.quad(lambda z: special.airy(x + z)[0] * special.airy(y + z)[0], 0, 40, limit=400)
    assert abs(airy_kernel(x, y) - ref) < 1e-9
    assert abs(airy_kernel_diag(x, ax, apx) - airy_kernel(x, x)) < 1e-14


def test_f2_right_end():
    assert abs(tracy_widom_F2(6.0).value - 1) < 1e-8
    assert abs(tracy_widom_F1sq(6.0).value - 1) < 1e-5


def test_f2_two_resolution_and_trace_bound():
    v40 = tracy_widom_F2(0.0, 40).value
    v80 = tracy_widom_F2(0.0, 80).value
    assert abs(v40 - v80) < 1e-10
    trace, _ = integrate.quad(lambda x: special.airy(x)[1] ** 2 - x * special.airy(x)[0] ** 2, 0, 30)
    assert 1 - trace <= v80 <= 1


def test_f2_two_resolution_range():
    for s in np.arange(-8, 4.01, 1.0):
        assert tracy_widom_F2(s, 80).error_estimate < 1e-10
        assert tracy_widom_F1sq(s, 80).error_estimate < 1e-8


def test_truncation_length():
    for s in (-8.0, -2.0, 1.0):
        assert abs(tracy_widom_F2(s, 80, L=12).value - tracy_widom_F2(s, 80, L=16).value) < 1e-12


def test_f1sq_paths_agree():
    for s in np.arange(-10, 6.01, 0.5):
        d = tracy_widom_F1sq(s, 40, path="direct").value
        l = tracy_widom_F1sq(s, 40, path="lemma").value
        assert abs(d - l) < 1e-8


def test_bad_path_and_range():
    with pytest.raises(DomainError):
        tracy_widom_F1sq(0.0, path="other")
    with pytest.raises(DomainError):
        tracy_widom_F2(-11.0)


def _moments(cdf):
    x, w = np.polynomial.legendre.leggauss(60)
    out = []
    for a, b, sign in ((-10.0, 0.0, -1), (0.0, 6.0, 1)):
        s = (a + b) / 2 + (b - a) / 2 * x
        ws = (b - a) / 2 * w
        F = np.array([cdf(v) for v in s])
        tail = 1 - F if sign > 0 else F
        out.append((sign * np.sum(ws * tail), 2 * sign * np.sum(ws * s * tail)))
    mean = out[0][0] + out[1][0]
    second = out[0][1] + out[1][1]
    return mean, second - mean**2


def test_published_moments():
    # GUE and GOE Tracy-Widom moments from the literature
    mean, var = _moments(lambda s: tracy_widom_F2(s, 40).value)
    assert abs(mean + 1.7710868074116) < 1e-9
    assert abs(var - 0.8131947928329) < 1e-9
    mean, var = _moments(lambda s: np.sqrt(tracy_widom_F1sq(s, 40).value))
    # the GOE mass beyond s = 6 (about 2e-6) is cut off by the domain
    assert abs(mean + 1.2065335745820) < 2e-6
    assert abs(var - 1.6077810345810) < 3e-5


@pytest.fixture(scope="module")
def tables():
    grid = np.round(np.arange(-10, 6.001, 0.25), 10)
    return {law: build_table(law, grid, 40) for law in (Law.G, Law.F2, Law.F1SQ)}


def test_tables_monotone_and_endpoints(tables):
    for law, tab in tables.items():
        assert np.all((tab.values >= 0) & (tab.values <= 1))
        assert tab.is_monotone(1e-10)
    assert tables[Law.F2].values[0] < 1e-6 and tables[Law.F2].values[-1] > 1 - 1e-6
    assert tables[Law.F1SQ].values[0] < 1e-6


def test_quantile_examples(tables):
    assert abs(quantile(tables[Law.G], 0.5)) < 1e-10
    step = 0.25
    for tab in tables.values():
        for s in (-3.3, -1.1, 0.4, 2.2):
            assert abs(quantile(tab, float(tab.value_at(s))) - s) < 2 * step
    with pytest.raises(RangeError):
        quantile(tables[Law.F2], 1.0)
    with pytest.raises(RangeError):
        quantile(tables[Law.G], 1e-30)


def test_quantile_two_resolution():
    grid = np.round(np.arange(0.0, 1.001, 0.05), 10)
    q40 = quantile(build_table(Law.F2, grid, 40), 0.99)
    q80 = quantile(build_table(Law.F2, grid, 80), 0.99)
    assert abs(q40 - q80) < 1e-6


def test_table_csv_round_trip(tables):
    tab = tables[Law.F1SQ]
    back = DistributionTable.from_csv(tab.to_csv())
    assert back.law is Law.F1SQ and back.n_quad == 40 and back.L == tab.L
    assert np.array_equal(back.grid, tab.grid) and np.array_equal(back.values, tab.values)
    assert tab.to_csv().splitlines()[1] == "s,F,err_estimate"
    with pytest.raises(RangeError):
        tab.value_at(7.0)


def test_reflection(tables):
    tab = tables[Law.F2]
    ref = tab.reflect()
    assert ref.reflected and not ref.reflect().reflected
    for s in (-2.5, 0.0, 3.0):
        assert abs(ref.value_at(s) - (1 - tab.value_at(-s))) < 1e-15
