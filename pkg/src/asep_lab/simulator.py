"""ASEP dynamics: exact Gillespie simulation and an exact CTMC law on small lattices.

Sites are integers.  A particle hops right at rate ``p`` and left at rate
``q``; a hop onto an occupied site is suppressed.  Step Bernoulli initial data
occupies each site of Z+ independently with probability ``rho``.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numba
import numpy as np
import scipy.sparse as sp
from scipy.stats import poisson

from .errors import BoundaryViolationError, DomainError, PrecisionError, UnsupportedError
from .model import ModelParams

# --- seeding ---------------------------------------------------------------------

_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def trial_seed(root: int, trial: int) -> int:
    """Counter-based seed for one trial: a hash of (root, trial), 32 bits."""
    return _splitmix64(_splitmix64(root & _MASK64) ^ (trial & _MASK64)) & 0xFFFFFFFF


@numba.njit(cache=True)
def _splitmix64_nb(x):
    x = (x + np.uint64(0x9E3779B97F4A7C15))
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


@numba.njit(cache=True)
def _trial_seed_nb(root_hash, trial):
    return _splitmix64_nb(root_hash ^ np.uint64(trial)) & np.uint64(0xFFFFFFFF)


# --- state and trajectory types ----------------------------------------------------


@dataclass(frozen=True)
class LatticeState:
    """Occupied sites inside the truncation window ``bounds = (left_min, right_max)``."""

    occupied: tuple
    bounds: tuple
    time: float = 0.0

    def __post_init__(self):
        occ = tuple(sorted(int(s) for s in self.occupied))
        if len(set(occ)) != len(occ):
            raise DomainError("exclusion violated: repeated site")
        lo, hi = self.bounds
        if occ and (occ[0] < lo or occ[-1] > hi):
            raise DomainError("occupied site outside the window")
        object.__setattr__(self, "occupied", occ)

    def occupancy(self) -> np.ndarray:
        lo, hi = self.bounds
        occ = np.zeros(hi - lo + 1, dtype=np.int8)
        occ[np.asarray(self.occupied, dtype=np.int64) - lo] = 1
        return occ


@dataclass
class Trajectory:
    """A simulated path: hop events and the states at the requested times.

    ``events`` rows are (time, site, direction) with direction +1 for a right
    hop and -1 for a left hop; ``site`` is the departure site.
    """

    seed: int
    params: ModelParams
    initial: LatticeState
    events: np.ndarray
    snapshot_times: np.ndarray
    snapshots: list = field(default_factory=list)

    def state_at(self, t: float) -> LatticeState:
        idx = np.flatnonzero(np.isclose(self.snapshot_times, t, rtol=0, atol=1e-12))
        if len(idx) == 0:
            raise DomainError(f"no snapshot at t={t}")
        return self.snapshots[idx[0]]

    def replay(self, t: float) -> LatticeState:
        """State at any time ``t`` rebuilt from the initial state and the event log."""
        occ = set(self.initial.occupied)
        for time, site, direction in self.events:
            if time > t:
                break
            occ.remove(int(site))
            occ.add(int(site + direction))
        return LatticeState(tuple(occ), self.initial.bounds, t)

    def to_records(self) -> str:
        """Line-oriented export: ``t site1 site2 ...`` per snapshot."""
        lines = []
        for t, snap in zip(self.snapshot_times, self.snapshots):
            lines.append(" ".join([repr(float(t))] + [str(s) for s in snap.occupied]))
        return "\n".join(lines) + "\n"


# --- initial data ------------------------------------------------------------------


def sample_initial(rho: float, window: tuple, rng, right_max: int | None = None) -> LatticeState:
    """Step Bernoulli initial state: sites 1..right_max of the window occupied w.p. ``rho``.

    ``right_max`` defaults to the window's right edge; sites <= 0 are always empty.
    """
    lo, hi = window
    if not 0 < rho <= 1:
        raise DomainError("rho must lie in (0, 1]")
    top = hi if right_max is None else min(hi, right_max)
    first = max(1, lo)
    if top < first:
        raise DomainError("window contains no positive site")
    rng = np.random.default_rng(rng)
    sites = np.arange(first, top + 1)
    if rho >= 1:
        chosen = sites
    else:
        chosen = sites[rng.random(len(sites)) < rho]
    return LatticeState(tuple(int(s) for s in chosen), (lo, hi), 0.0)


# --- numba Gillespie core ----------------------------------------------------------

_STATUS_OK = 0
_STATUS_BOUNDARY = 1


@numba.njit(cache=True)
def _set_add(lst, where, n, s):
    if where[s] < 0:
        where[s] = n
        lst[n] = s
        n += 1
    return n


@numba.njit(cache=True)
def _set_remove(lst, where, n, s):
    k = where[s]
    if k >= 0:
        n -= 1
        last = lst[n]
        lst[k] = last
        where[last] = k
        where[s] = -1
    return n


@numba.njit(cache=True)
def _refresh(occ, s, W, rlist, rwhere, nr, llist, lwhere, nl, p, q):
    # membership of site s in the right/left movable sets; outside the window counts as empty
    if s < 0 or s >= W:
        return nr, nl
    can_r = occ[s] == 1 and p > 0 and (s + 1 >= W or occ[s + 1] == 0)
    can_l = occ[s] == 1 and q > 0 and (s - 1 < 0 or occ[s - 1] == 0)
    if can_r:
        nr = _set_add(rlist, rwhere, nr, s)
    else:
        nr = _set_remove(rlist, rwhere, nr, s)
    if can_l:
        nl = _set_add(llist, lwhere, nl, s)
    else:
        nl = _set_remove(llist, lwhere, nl, s)
    return nr, nl


@numba.njit(cache=True)
def _gillespie(occ, p, q, t_start, snap_times, record, snap_out):
    """Run the exact event-driven dynamics on ``occ`` in place.

    Uses the numba global RNG, which the caller seeds.  Snapshots of the
    occupancy are written to ``snap_out`` rows.  Returns (status, events,
    n_events) where events rows are (time, window index, direction).
    """
    W = occ.shape[0]
    rlist = np.empty(W, np.int64)
    llist = np.empty(W, np.int64)
    rwhere = -np.ones(W, np.int64)
    lwhere = -np.ones(W, np.int64)
    nr = 0
    nl = 0
    for s in range(W):
        nr, nl = _refresh(occ, s, W, rlist, rwhere, nr, llist, lwhere, nl, p, q)
    cap = 1024 if record else 1
    events = np.empty((cap, 3), np.float64)
    n_events = 0
    t = t_start
    k = 0
    n_snap = snap_times.shape[0]
    while k < n_snap:
        total = p * nr + q * nl
        if total <= 0.0:
            while k < n_snap:
                snap_out[k, :] = occ
                k += 1
            break
        t_next = t - math.log(1.0 - np.random.random()) / total
        while k < n_snap and snap_times[k] < t_next:
            snap_out[k, :] = occ
            k += 1
        if k >= n_snap:
            break
        t = t_next
        u = np.random.random() * total
        if u < p * nr:
            idx = int(u / p)
            if idx >= nr:
                idx = nr - 1
            s = rlist[idx]
            d = 1
        else:
            idx = int((u - p * nr) / q)
            if idx >= nl:
                idx = nl - 1
            s = llist[idx]
            d = -1
        target = s + d
        if target < 0 or target >= W:
            return _STATUS_BOUNDARY, events, n_events
        occ[s] = 0
        occ[target] = 1
        if record:
            if n_events >= events.shape[0]:
                bigger = np.empty((2 * events.shape[0], 3), np.float64)
                bigger[: events.shape[0], :] = events
                events = bigger
            events[n_events, 0] = t
            events[n_events, 1] = s
            events[n_events, 2] = d
            n_events += 1
        lo = min(s, target) - 1
        hi = max(s, target) + 1
        for r in range(lo, hi + 1):
            nr, nl = _refresh(occ, r, W, rlist, rwhere, nr, llist, lwhere, nl, p, q)
    return _STATUS_OK, events, n_events


@numba.njit(cache=True)
def _seed_numba(seed):
    np.random.seed(seed)


def evolve(
    state: LatticeState,
    t_end: float,
    params: ModelParams,
    rng=None,
    snapshot_times: Sequence[float] | None = None,
) -> Trajectory:
    """Exact continuous-time dynamics from ``state`` up to ``t_end``.

    ``rng`` is an integer seed or a numpy Generator (a seed is drawn from it).
    Raises :class:`BoundaryViolationError` if a particle tries to leave the window.
    """
    if t_end < state.time:
        raise DomainError("t_end precedes the state's time")
    if isinstance(rng, np.random.Generator):
        seed = int(rng.integers(0, 2**32))
    elif rng is None:
        seed = 0
    else:
        seed = int(rng) & 0xFFFFFFFF
    times = np.array(sorted(set([float(t_end)] + [float(t) for t in (() if snapshot_times is None else snapshot_times)])))
    if times[0] < state.time:
        raise DomainError("snapshot before the state's time")
    occ = state.occupancy()
    snaps = np.zeros((len(times), len(occ)), dtype=np.int8)
    _seed_numba(seed)
    status, events, n_events = _gillespie(occ, float(params.p), float(params.q), float(state.time), times, True, snaps)
    if status == _STATUS_BOUNDARY:
        raise BoundaryViolationError("particle reached the edge of the simulation window")
    lo = state.bounds[0]
    ev = events[:n_events].copy()
    ev[:, 1] += lo
    snapshots = [LatticeState(tuple(int(s) + lo for s in np.flatnonzero(row)), state.bounds, float(t)) for t, row in zip(times, snaps)]
    return Trajectory(seed, params, state, ev, times, snapshots)


def observe_position(state: LatticeState, m: int) -> int:
    """Site of the m-th particle from the left."""
    if m < 1 or m > len(state.occupied):
        raise DomainError(f"fewer than {m} particles")
    return state.occupied[m - 1]


def observe_current(state: LatticeState, x: int) -> int:
    """Number of particles at sites <= x."""
    return bisect.bisect_right(state.occupied, x)


def empirical_cdf_csv(values) -> str:
    """CSV ``value,count,cum_prob`` over the distinct observed values."""
    vals, counts = np.unique(np.asarray(values), return_counts=True)
    cum = np.cumsum(counts) / counts.sum()
    lines = ["value,count,cum_prob"]
    lines += [f"{v},{c},{p:.17g}" for v, c, p in zip(vals, counts, cum)]
    return "\n".join(lines) + "\n"


# --- batched simulation -------------------------------------------------------------


def light_cone_margin(params: ModelParams, t_end: float) -> int:
    return int(math.ceil(10 + 6 * max(float(params.p), float(params.q)) * t_end))


@dataclass(frozen=True)
class SimulationWindow:
    """Truncation of Z for a batch of trials.

    Bernoulli sites are 1..right_max; the lattice is [left_min, right_edge].
    """

    left_min: int
    right_max: int
    right_edge: int

    @property
    def size(self) -> int:
        return self.right_edge - self.left_min + 1


def plan_window(
    params: ModelParams,
    t_end: float,
    m_max: int = 0,
    x_min: int | None = None,
    x_max: int | None = None,
) -> SimulationWindow:
    """Window covering the light cone of the observed particles and sites.

    Particles started beyond ``right_max`` are omitted.  With p = 0 no particle
    is ever blocked by one on its right, so the first ``m_max`` particles
    evolve autonomously and nothing beyond them matters.
    """
    margin = light_cone_margin(params, t_end)
    rho = float(params.rho)
    # site holding the m-th Bernoulli particle, with a wide binomial allowance
    m_site = 0
    if m_max > 0:
        mean = m_max / rho
        m_site = int(math.ceil(mean + 8 * math.sqrt(m_max * (1 - rho)) / rho + 8 / rho))
    far = max(m_site, x_max if x_max is not None else 1, 1)
    if float(params.p) == 0 and (x_max is None):
        right_max = m_site
    else:
        right_max = far + margin
    left = min(x_min if x_min is not None else 1, 1) - margin
    right_edge = right_max + (margin if float(params.p) > 0 else 1)
    return SimulationWindow(left, right_max, right_edge)


@numba.njit(cache=True)
def _batch_kernel(root_hash, first_trial, trials, W, offset, bern_lo, bern_hi, rho, p, q, t_end, m_list, x_list, pos_out, cur_out, status_out):
    snap_times = np.array([t_end])
    snap = np.zeros((1, W), np.int8)
    for i in range(trials):
        seed = _trial_seed_nb(root_hash, first_trial + i)
        np.random.seed(seed)
        occ = np.zeros(W, np.int8)
        for s in range(bern_lo, bern_hi + 1):
            if rho >= 1.0 or np.random.random() < rho:
                occ[s] = 1
        status, _, _ = _gillespie(occ, p, q, 0.0, snap_times, False, snap)
        status_out[i] = status
        if status != _STATUS_OK:
            continue
        final = snap[0]
        # positions of requested particles (window index -> site via offset)
        count = 0
        j = 0
        nm = m_list.shape[0]
        for k in range(nm):
            pos_out[i, k] = -(1 << 62)
        for s in range(W):
            if final[s] == 1:
                count += 1
                while j < nm and m_list[j] == count:
                    pos_out[i, j] = s + offset
                    j += 1
        # currents T(x) = #particles at sites <= x
        nx = x_list.shape[0]
        for k in range(nx):
            xi = x_list[k] - offset
            c = 0
            top = min(xi, W - 1)
            for s in range(0, top + 1):
                c += final[s]
            cur_out[i, k] = c


@dataclass
class BatchResult:
    positions: np.ndarray  # (trials, len(m_list)); NO_PARTICLE where fewer than m particles
    currents: np.ndarray  # (trials, len(x_list))
    m_list: np.ndarray
    x_list: np.ndarray
    window: SimulationWindow
    seed_root: int
    t_end: float


NO_PARTICLE = -(1 << 62)


def simulate_batch(
    params: ModelParams,
    t_end: float,
    trials: int,
    seed_root: int = 0,
    m_list: Iterable[int] = (),
    x_list: Iterable[int] = (),
    window: SimulationWindow | None = None,
    first_trial: int = 0,
) -> BatchResult:
    """Independent trials from step Bernoulli data; observables at ``t_end``.

    Trial ``i`` uses the counter-based stream ``trial_seed(seed_root, first_trial + i)``,
    so any subset of trials can be reproduced on its own.
    """
    m_arr = np.array(sorted(set(int(m) for m in m_list)), dtype=np.int64)
    x_arr = np.array(sorted(set(int(x) for x in x_list)), dtype=np.int64)
    if window is None:
        window = plan_window(
            params,
            t_end,
            int(m_arr.max()) if len(m_arr) else 0,
            int(x_arr.min()) if len(x_arr) else None,
            int(x_arr.max()) if len(x_arr) else None,
        )
    W = window.size
    offset = window.left_min
    pos = np.zeros((trials, len(m_arr)), dtype=np.int64)
    cur = np.zeros((trials, len(x_arr)), dtype=np.int64)
    status = np.zeros(trials, dtype=np.int64)
    root_hash = np.uint64(_splitmix64(int(seed_root) & _MASK64))
    _batch_kernel(
        root_hash,
        int(first_trial),
        int(trials),
        W,
        offset,
        1 - offset,
        window.right_max - offset,
        float(params.rho),
        float(params.p),
        float(params.q),
        float(t_end),
        m_arr,
        x_arr,
        pos,
        cur,
        status,
    )
    if np.any(status != _STATUS_OK):
        bad = int(np.count_nonzero(status != _STATUS_OK))
        raise BoundaryViolationError(f"{bad} trial(s) reached the window edge")
    return BatchResult(pos, cur, m_arr, x_arr, window, int(seed_root), float(t_end))


def single_trial_state(params: ModelParams, t_end: float, seed_root: int, trial: int, window: SimulationWindow) -> LatticeState:
    """Re-run one trial of :func:`simulate_batch` and return its final state (for auditing)."""
    W = window.size
    res = simulate_batch(params, t_end, 1, seed_root, m_list=range(1, 1), x_list=range(window.left_min, window.right_edge + 1), window=window, first_trial=trial)
    counts = res.currents[0]
    occupied = [window.left_min + k for k in range(W) if counts[k] - (counts[k - 1] if k else 0) == 1]
    return LatticeState(tuple(occupied), (window.left_min, window.right_edge), t_end)


# --- exact CTMC law ----------------------------------------------------------------

MAX_SITES = 24
MAX_STATES = 2_500_000
TAIL_BOUND = 1e-13


def _popcount(a: np.ndarray) -> np.ndarray:
    a = a.astype(np.uint64)
    c = np.zeros(a.shape, dtype=np.int64)
    while np.any(a):
        c += (a & np.uint64(1)).astype(np.int64)
        a >>= np.uint64(1)
    return c


@dataclass
class ExactLawTable:
    """Law at time ``t`` over configurations of ``lattice`` (bit j = site lattice[0] + j)."""

    lattice: tuple
    t: float
    states: np.ndarray
    law: np.ndarray

    def _counts_le(self, x: int) -> np.ndarray:
        lo, hi = self.lattice
        if x < lo:
            return np.zeros(len(self.states), dtype=np.int64)
        k = min(x, hi) - lo + 1
        mask = np.uint64((1 << k) - 1)
        return _popcount(self.states & mask)

    def prob_current_at_least(self, x: int, m: int) -> float:
        """P(T(x, t) >= m), equivalently P(x_m(t) <= x)."""
        return float(np.sum(self.law[self._counts_le(x) >= m]))

    def prob_position_le(self, m: int, x: int) -> float:
        return self.prob_current_at_least(x, m)

    def prob_position_eq(self, m: int, x: int) -> float:
        return self.prob_position_le(m, x) - self.prob_position_le(m, x - 1)

    def total(self) -> float:
        return float(np.sum(self.law))


def point_mass(Y: Iterable[int], lattice: tuple) -> dict:
    lo, hi = lattice
    mask = 0
    for y in Y:
        if not lo <= y <= hi:
            raise DomainError(f"site {y} outside lattice")
        mask |= 1 << (y - lo)
    return {mask: 1.0}


def bernoulli_initial(rho: float, lattice: tuple, right_max: int | None = None, max_particles: int | None = None) -> dict:
    """Step Bernoulli law on sites 1..right_max of the lattice, as {mask: probability}.

    With ``max_particles`` only the leftmost particles are kept (the rest are
    dropped, not conditioned away), so masses are preserved.
    """
    lo, hi = lattice
    top = hi if right_max is None else min(hi, right_max)
    first = max(1, lo)
    nb = top - first + 1
    if nb <= 0:
        return {0: 1.0}
    if nb > MAX_SITES:
        raise UnsupportedError("too many Bernoulli sites")
    raw = np.arange(1 << nb, dtype=np.uint64)
    pop = _popcount(raw)
    prob = rho**pop * (1.0 - rho) ** (nb - pop)
    if max_particles is not None:
        kept = np.zeros_like(raw)
        remaining = np.full(raw.shape, max_particles, dtype=np.int64)
        for j in range(nb):
            bit = (raw >> np.uint64(j)) & np.uint64(1)
            take = (bit == 1) & (remaining > 0)
            kept |= take.astype(np.uint64) << np.uint64(j)
            remaining -= take
        raw = kept
    masks = raw << np.uint64(first - lo)
    uniq, inv = np.unique(masks, return_inverse=True)
    sums = np.bincount(inv, weights=prob)
    return dict(zip((int(u) for u in uniq), sums))


def _state_space(n: int, counts: set) -> np.ndarray:
    total = sum(math.comb(n, k) for k in counts)
    if total > MAX_STATES:
        raise UnsupportedError(f"state space of {total} configurations exceeds {MAX_STATES}")
    if n <= 22:
        allm = np.arange(1 << n, dtype=np.uint64)
        pop = _popcount(allm)
        return allm[np.isin(pop, list(counts))]
    # enumerate by combinations for wide lattices
    import itertools

    out = []
    for k in sorted(counts):
        for combo in itertools.combinations(range(n), k):
            out.append(sum(1 << c for c in combo))
    return np.array(sorted(out), dtype=np.uint64)


def ctmc_generator(states: np.ndarray, n: int, p: float, q: float) -> sp.csr_matrix:
    """Generator Q (rows sum to zero) on the given sorted configuration list, closed boundaries."""
    N = len(states)
    rows, cols, vals = [], [], []
    exit_rate = np.zeros(N)
    idx = np.arange(N)
    for j in range(n - 1):
        a = np.uint64(1 << j)
        b = np.uint64(1 << (j + 1))
        here = (states & a) != 0
        there = (states & b) != 0
        for src_bit, dst_bit, rate, movable in ((a, b, p, here & ~there), (b, a, q, there & ~here)):
            if rate == 0:
                continue
            src = idx[movable]
            tgt_masks = states[movable] ^ src_bit ^ dst_bit
            tgt = np.searchsorted(states, tgt_masks)
            rows.append(src)
            cols.append(tgt)
            vals.append(np.full(len(src), rate))
            exit_rate[src] += rate
    rows.append(idx)
    cols.append(idx)
    vals.append(-exit_rate)
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N)
    )


def exact_ctmc_law(initial: Mapping[int, float], lattice: tuple, t: float, params: ModelParams) -> ExactLawTable:
    """Law at time ``t`` of ASEP on ``lattice`` with closed ends, by uniformization.

    ``initial`` maps configuration bitmasks to probabilities.  The Poisson
    series is truncated once its remaining mass is below 1e-13, which bounds
    the total-variation error of the result.
    """
    lo, hi = lattice
    n = hi - lo + 1
    if n > MAX_SITES:
        raise UnsupportedError(f"lattice of {n} sites exceeds {MAX_SITES}")
    masks = np.array(list(initial.keys()), dtype=np.uint64)
    probs = np.array(list(initial.values()), dtype=float)
    counts = set(int(c) for c in _popcount(masks))
    states = _state_space(n, counts)
    v = np.zeros(len(states))
    np.add.at(v, np.searchsorted(states, masks), probs)
    if t == 0:
        return ExactLawTable(lattice, 0.0, states, v)
    Q = ctmc_generator(states, n, float(params.p), float(params.q))
    rate = float(-Q.diagonal().min())
    if rate == 0:
        return ExactLawTable(lattice, float(t), states, v)
    PT = (sp.identity(len(states), format="csr") + Q / rate).T.tocsr()
    mu = rate * t
    K = int(poisson.isf(TAIL_BOUND, mu)) + 1
    if not poisson.sf(K, mu) <= TAIL_BOUND:
        raise PrecisionError("Poisson tail bound not reached")
    log_w = -mu
    out = math.exp(log_w) * v
    term = v
    for k in range(1, K + 1):
        term = PT @ term
        log_w += math.log(mu) - math.log(k)
        out += math.exp(log_w) * term
    return ExactLawTable(lattice, float(t), states, out)
