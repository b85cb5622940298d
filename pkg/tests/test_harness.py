import json
import math

import numpy as np
import pytest
from scipy import special

from asep_lab.errors import DomainError
from asep_lab.harness import (
    ExperimentPlan,
    duality_check,
    ks_distance,
    ks_distance_detail,
    run_convergence,
    scaled_current_statistic,
    scaled_position_statistic,
    standard_table,
)
from asep_lab.limits import DistributionTable, Law, gaussian_G
from asep_lab.model import Mode, ModelParams, RegimeLabel, scaling_constants
from asep_lab.simulator import simulate_batch

STEP = ModelParams(0.0, 1.0, 1.0)
HALF = ModelParams(0.0, 1.0, 0.5)
G = np.vectorize(gaussian_G)


def test_position_statistic_examples():
    c = scaling_constants(0.25, STEP, "position")
    t = 1000.0
    assert scaled_position_statistic(c.c1 * t, 250, t, c) == 0.0
    x = c.c1 * t + 2 * c.c2 * t ** (1 / 3)
    assert abs(scaled_position_statistic(x, 250, t, c) - 2.0) < 1e-14
    with pytest.raises(DomainError):
        scaled_position_statistic(3, 10, 10.0, scaling_constants(1.0, STEP, "position"))
    with pytest.raises(DomainError):
        scaled_position_statistic(3, 10, 10.0, scaling_constants(0.5, STEP, "current"))


def test_gaussian_position_statistic():
    c = scaling_constants(0.5, HALF, "position")
    t = 400.0
    x = c.c1p * t - 1.5 * c.c2p * math.sqrt(t)
    assert abs(scaled_position_statistic(x, 200, t, c, RegimeLabel.GAUSSIAN) + 1.5) < 1e-12
    # sigma < rho^2 has no Gaussian scale
    with pytest.raises(DomainError):
        scaled_position_statistic(0, 1, t, scaling_constants(0.1, HALF, "position"), RegimeLabel.GAUSSIAN)


def test_current_statistic_examples():
    c = scaling_constants(0.2, STEP, "current")
    t = 500.0
    assert scaled_current_statistic(c.a1 * t, 100, t, c) == 0.0
    T = c.a1 * t + 2 * c.a2 * t ** (1 / 3)
    assert abs(scaled_current_statistic(T, 100, t, c) - 2.0) < 1e-14
    rho = 0.4
    b = scaling_constants(2 * rho - 1, ModelParams(0.0, 1.0, rho), "current")
    assert abs(b.a1 - b.a1p) < 1e-15
    for T in (10, 37, 80):
        assert abs((T - b.a1 * t) - (T - b.a1p * t)) < 1e-12
    # the Gaussian scale vanishes on the boundary
    with pytest.raises(DomainError):
        scaled_current_statistic(10, 0, t, b, RegimeLabel.GAUSSIAN)


def test_ks_self_samples():
    n = 10_000
    fails = 0
    for seed in range(50):
        u = np.random.default_rng(seed).random(n)
        samples = special.ndtri(u)
        if ks_distance(samples, G) >= 1.63 / math.sqrt(n):
            fails += 1
    assert fails <= 2


def test_ks_against_table_matches_callable():
    tab = standard_table(Law.G)
    samples = special.ndtri(np.random.default_rng(3).random(2000))
    assert abs(ks_distance(samples, tab) - ks_distance(samples, G)) < 1e-6


def test_ks_constant_samples():
    for c in (-0.7, 0.0, 1.3):
        d = ks_distance(np.full(25, c), G)
        assert abs(d - max(gaussian_G(c), 1 - gaussian_G(c))) < 1e-12


def test_ks_reflection():
    samples = np.random.default_rng(4).gamma(2.0, size=500) - 2.0
    tab = standard_table(Law.G)
    a = ks_distance(samples, tab)
    b = ks_distance(-samples[::-1], tab.reflect())
    assert abs(a - b) < 1e-12
    cdf = lambda s: special.gammainc(2.0, np.maximum(s + 2.0, 0))
    a = ks_distance(samples, cdf)
    b = ks_distance(-samples, lambda s: 1 - cdf(-s))
    assert abs(a - b) < 1e-12


def test_ks_clamping_flag():
    tab = standard_table(Law.G)
    assert not ks_distance_detail([0.1, 0.2], tab).clamped
    assert ks_distance_detail([0.1, 12.0], tab).clamped
    with pytest.raises(DomainError):
        ks_distance([], G)


def test_plan_validation():
    ExperimentPlan(STEP, "position", "tw2", 0.25, (10, 20), 100)
    with pytest.raises(DomainError):
        ExperimentPlan(HALF, "position", "tw2", 0.5, (10, 20), 100)
    with pytest.raises(DomainError):
        ExperimentPlan(STEP, "position", "tw2", 0.25, (20, 10), 100)
    with pytest.raises(DomainError):
        ExperimentPlan(STEP, "position", "tw2", 0.25, (10,), 99)
    with pytest.raises(DomainError):
        ExperimentPlan(STEP, "position", "tw2", -0.25, (10,), 100)
    p = ExperimentPlan(HALF, "position", "auto", 0.25, (10,), 100)
    assert p.regime is RegimeLabel.CRITICAL and p.target_law is Law.F1SQ
    assert p.observable(1000.0) == 250 and p.observable(999.0) == 250
    c = ExperimentPlan(HALF, "current", "auto", 0.0, (10,), 100)
    assert c.regime is RegimeLabel.CRITICAL


def test_run_convergence_reproducible():
    plan = ExperimentPlan(STEP, "position", "tw2", 0.25, (20.0, 40.0), 200, seed_root=5, compare_laws=("g",))
    a = run_convergence(plan)
    b = run_convergence(plan)
    assert a.to_csv() == b.to_csv()
    assert a.to_csv().splitlines()[0] == "t,trials,ks,mean,sd,regime,law"
    assert [r.t for r in a.rows] == [20.0, 20.0, 40.0, 40.0]
    assert all(0 <= r.ks <= 1 for r in a.rows)
    assert a.rows[0].physical_time == 20.0 and a.rows[0].observable == 5
    m = json.loads(json.dumps(a.manifest()))
    assert m["plan"]["seed_root"] == 5 and len(m["batch_seeds"]) == 2
    other = run_convergence(ExperimentPlan(STEP, "position", "tw2", 0.25, (20.0, 40.0), 200, seed_root=6))
    assert other.ks(20.0) != a.ks(20.0)


def test_physical_clock_uses_gamma():
    P = ModelParams(0.2, 0.8, 1.0)
    plan = ExperimentPlan(P, "current", "tw2", 0.0, (6.0,), 100, seed_root=1)
    rep = run_convergence(plan)
    assert abs(rep.rows[0].physical_time - 10.0) < 1e-12


def test_current_position_count_agreement():
    # level-m exceedances of T(x) match the count of x_m <= x on the same trajectories
    batch = simulate_batch(HALF, 50.0, 300, seed_root=9, m_list=[5, 12], x_list=[-8, 0, 3])
    assert duality_check(batch).exceptions == 0
    for i, m in enumerate(batch.m_list):
        for j, x in enumerate(batch.x_list):
            assert np.count_nonzero(batch.currents[:, j] >= m) == np.count_nonzero(batch.positions[:, i] <= x)


def test_f2_target_shared_by_step_and_bernoulli():
    a = ExperimentPlan(STEP, "position", "auto", 0.25, (10,), 100)
    b = ExperimentPlan(ModelParams(0.0, 1.0, 0.9), "position", "auto", 0.25, (10,), 100)
    assert a.target_law is b.target_law is Law.F2


def test_standard_table_reflection_for_current():
    tab = standard_table(Law.F2)
    assert isinstance(tab, DistributionTable) and tab.grid[0] == -10.0 and tab.grid[-1] == 6.0
    assert tab.is_monotone(1e-10)
