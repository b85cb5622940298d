"""Monte Carlo convergence experiments for the fluctuation limit theorems.

Simulations run on the physical clock t/gamma; centering and scaling use the
theorem time t.  KS distances are taken against tabulated limit laws.
"""

from __future__ import annotations

import csv
import io
import json
import math
import platform
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np

from . import __version__
from .errors import DomainError
from .limits import DEFAULT_L, DistributionTable, Law, build_table
from .model import Mode, ModelParams, RegimeLabel, ScalingConstants, classify_regime, scaling_constants
from .simulator import NO_PARTICLE, BatchResult, simulate_batch, trial_seed

REGIME_LAW = {RegimeLabel.TW2: Law.F2, RegimeLabel.CRITICAL: Law.F1SQ, RegimeLabel.GAUSSIAN: Law.G}
BOUNDARY_TOL = 1e-12


# -- statistics ------------------------------------------------------------------------


def _affine(value, t: float, center, scale, exponent: float, what: str):
    if center is None or scale is None or scale == 0:
        raise DomainError(f"{what} scaling undefined for this regime (scale absent or zero)")
    return (np.asarray(value, dtype=float) - center * t) / (scale * t**exponent)


def scaled_position_statistic(x_m, m: int, t: float, consts: ScalingConstants, regime=RegimeLabel.TW2):
    """(x_m - c1 t)/(c2 t^(1/3)), or (x_m - c1' t)/(c2' t^(1/2)) in the Gaussian regime.

    ``m`` is not used by the formula; it is accepted so call sites record
    which particle the position belongs to.
    """
    if consts.mode is not Mode.POSITION:
        raise DomainError("position statistic needs position-mode constants")
    center, scale, expo = consts.pair(RegimeLabel(regime))
    return _affine(x_m, t, center, scale, expo, "position")


def scaled_current_statistic(T_val, x: int, t: float, consts: ScalingConstants, regime=RegimeLabel.TW2):
    """(T - a1 t)/(a2 t^(1/3)), or with (a1', a2', 1/2) in the Gaussian regime."""
    if consts.mode is not Mode.CURRENT:
        raise DomainError("current statistic needs current-mode constants")
    center, scale, expo = consts.pair(RegimeLabel(regime))
    return _affine(T_val, t, center, scale, expo, "current")


@dataclass(frozen=True)
class KSResult:
    distance: float
    clamped: bool


def ks_distance_detail(samples, cdf) -> KSResult:
    """KS statistic of ``samples`` against a DistributionTable or a vectorized callable."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = len(x)
    if n == 0:
        raise DomainError("KS distance needs at least one sample")
    if isinstance(cdf, DistributionTable):
        F, clamped = cdf.cdf_clamped(x)
    else:
        F, clamped = np.asarray(cdf(x), dtype=float), False
    i = np.arange(1, n + 1)
    d_plus = np.max(i / n - F)
    d_minus = np.max(F - (i - 1) / n)
    return KSResult(float(max(d_plus, d_minus, 0.0)), bool(clamped))


def ks_distance(samples, cdf) -> float:
    return ks_distance_detail(samples, cdf).distance


# -- tables ----------------------------------------------------------------------------


TABLE_STEP = 0.05
TABLE_NQUAD = 40


@lru_cache(maxsize=None)
def standard_table(law, step: float = TABLE_STEP, n_quad: int = TABLE_NQUAD) -> DistributionTable:
    """Cached table used as a KS target: G on [-10, 10], F2 and F1^2 on [-10, 6]."""
    law = Law(law)
    hi = 10.0 if law is Law.G else 6.0
    grid = np.round(np.arange(-10.0, hi + step / 2, step), 12)
    return build_table(law, grid, n_quad, DEFAULT_L)


def target_table(law, mode) -> DistributionTable:
    table = standard_table(Law(law))
    return table.reflect() if Mode(mode) is Mode.CURRENT else table


# -- experiments -----------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentPlan:
    params: ModelParams
    mode: Mode
    regime: RegimeLabel
    sigma_or_v: float
    t_list: tuple
    trials: int
    seed_root: int = 0
    compare_laws: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "t_list", tuple(float(t) for t in self.t_list))
        object.__setattr__(self, "compare_laws", tuple(Law(l) for l in self.compare_laws))
        if self.regime == "auto":
            regime = classify_regime(self.sigma_or_v, float(self.params.rho), self.mode, BOUNDARY_TOL)
        else:
            regime = RegimeLabel(self.regime)
        object.__setattr__(self, "regime", regime)
        if not self.t_list or any(t <= 0 for t in self.t_list) or any(b <= a for a, b in zip(self.t_list, self.t_list[1:])):
            raise DomainError("times must be positive and strictly increasing")
        if self.trials < 100:
            raise DomainError("at least 100 trials per time are required")
        actual = classify_regime(self.sigma_or_v, float(self.params.rho), self.mode, BOUNDARY_TOL)
        if actual is not regime:
            raise DomainError(f"sigma/v = {self.sigma_or_v} with rho = {self.params.rho} lies in the {actual.value} regime, not {regime.value}")
        if self.mode is Mode.POSITION and self.sigma_or_v <= 0:
            raise DomainError("sigma must be positive")

    @property
    def target_law(self) -> Law:
        return REGIME_LAW[self.regime]

    def laws(self) -> tuple:
        out = [self.target_law]
        out += [l for l in self.compare_laws if l not in out]
        return tuple(out)

    def observable(self, t: float) -> int:
        """m = ceil(sigma t) in position mode, x = ceil(v t) in current mode."""
        # guard against sigma t landing a rounding error above an integer
        return int(math.ceil(self.sigma_or_v * t - 1e-9))

    def to_dict(self) -> dict:
        return {
            "p": float(self.params.p),
            "q": float(self.params.q),
            "rho": float(self.params.rho),
            "mode": self.mode.value,
            "regime": self.regime.value,
            "sigma_or_v": self.sigma_or_v,
            "t_list": list(self.t_list),
            "trials": self.trials,
            "seed_root": self.seed_root,
            "compare_laws": [l.value for l in self.compare_laws],
        }


@dataclass(frozen=True)
class ConvergenceRow:
    t: float
    physical_time: float
    observable: int
    trials: int
    ks: float
    mean: float
    sd: float
    regime: str
    law: str
    clamped: bool


@dataclass
class ConvergenceReport:
    plan: ExperimentPlan
    rows: list = field(default_factory=list)
    batch_seeds: list = field(default_factory=list)

    def ks(self, t: float, law=None) -> float:
        law = Law(law) if law is not None else self.plan.target_law
        for r in self.rows:
            if r.t == t and r.law == law.value:
                return r.ks
        raise KeyError((t, law))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "trials", "ks", "mean", "sd", "regime", "law"])
        for r in self.rows:
            w.writerow([f"{r.t:.17g}", r.trials, f"{r.ks:.17g}", f"{r.mean:.17g}", f"{r.sd:.17g}", r.regime, r.law])
        return buf.getvalue()

    def manifest(self) -> dict:
        return {
            "plan": self.plan.to_dict(),
            "batch_seeds": self.batch_seeds,
            "rows": [asdict(r) for r in self.rows],
            "versions": software_versions(),
        }


def software_versions() -> dict:
    import numba
    import scipy

    return {
        "asep_lab": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
    }


def batch_root(seed_root: int, index: int) -> int:
    """Seed root of the batch simulated for the ``index``-th time of a plan."""
    return trial_seed(seed_root, (1 << 40) + index)


def simulate_observable(plan: ExperimentPlan, t: float, index: int) -> tuple:
    """(raw observable values, batch result) for one time of the plan."""
    obs = plan.observable(t)
    T_phys = t / float(plan.params.gamma)
    root = batch_root(plan.seed_root, index)
    if plan.mode is Mode.POSITION:
        if obs < 1:
            raise DomainError(f"m = {obs} must be at least 1")
        batch = simulate_batch(plan.params, T_phys, plan.trials, root, m_list=[obs])
        values = batch.positions[:, 0]
        if np.any(values == NO_PARTICLE):
            raise DomainError("some trials have fewer than m particles")
    else:
        batch = simulate_batch(plan.params, T_phys, plan.trials, root, x_list=[obs])
        values = batch.currents[:, 0]
    return values, batch


def run_convergence(plan: ExperimentPlan) -> ConvergenceReport:
    consts = scaling_constants(plan.sigma_or_v, plan.params, plan.mode)
    center, scale, _ = consts.pair(plan.regime)
    if center is None or not scale:
        raise DomainError(f"scaling constants undefined in the {plan.regime.value} regime")
    report = ConvergenceReport(plan)
    stat_fn = scaled_position_statistic if plan.mode is Mode.POSITION else scaled_current_statistic
    for i, t in enumerate(plan.t_list):
        values, batch = simulate_observable(plan, t, i)
        report.batch_seeds.append(batch.seed_root)
        stats = stat_fn(values, plan.observable(t), t, consts, plan.regime)
        for law in plan.laws():
            ks = ks_distance_detail(stats, target_table(law, plan.mode))
            report.rows.append(
                ConvergenceRow(
                    t,
                    t / float(plan.params.gamma),
                    plan.observable(t),
                    plan.trials,
                    ks.distance,
                    float(np.mean(stats)),
                    float(np.std(stats, ddof=1)),
                    plan.regime.value,
                    law.value,
                    ks.clamped,
                )
            )
    return report


# -- duality ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DualityCheck:
    pairs: int
    exceptions: int


def duality_check(batch: BatchResult) -> DualityCheck:
    """Compare 1{T(x) >= m} with 1{x_m <= x} for every trial and (m, x) pair."""
    pos = batch.positions.astype(np.float64)
    pos[batch.positions == NO_PARTICLE] = np.inf
    cur = batch.currents
    m = batch.m_list[None, :, None]
    x = batch.x_list[None, None, :]
    lhs = cur[:, None, :] >= m
    rhs = pos[:, :, None] <= x
    return DualityCheck(int(lhs.size), int(np.count_nonzero(lhs != rhs)))


def manifest_json(obj: dict) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)

