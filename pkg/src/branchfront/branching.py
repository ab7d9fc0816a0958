"""Branching Levy process simulator.

Every particle carries an Exp(1) clock. When it rings the particle is
replaced by ``N`` children at its current position; otherwise it moves as
an independent copy of ``L`` until the horizon. Displacements over any
duration are sampled exactly, so the only approximation is the population
cap.

Runs are processed generation by generation in vectorised blocks. A block
owns the generator ``default_rng([seed, block_index])`` and the block size
depends only on the configuration and horizon, so results are reproducible
whatever the number of worker threads.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .control import ValueEstimate
from .levy import DomainError, LevyModel, sample_increments
from .reaction import OffspringLaw, extinction_prob

DEFAULT_CAP = 1_000_000
BLOCK_BUDGET = 2_000_000  # expected particles per block
MAX_BLOCK_RUNS = 4096
CAPPED_FLAG_FRACTION = 0.01


class Status(enum.Enum):
    ALIVE = "ALIVE"
    EXTINCT = "EXTINCT"
    CAP_EXCEEDED = "CAP_EXCEEDED"


@dataclass(frozen=True)
class BranchingConfig:
    model: LevyModel
    law: OffspringLaw
    cap: int = DEFAULT_CAP
    start: float = 0.0
    rate: float = field(default=1.0, init=False)

    def __post_init__(self):
        if self.cap < 1:
            raise DomainError("cap must be >= 1")

    def expected_population(self, t: float) -> float:
        return math.exp((self.law.mean - 1.0) * t)


@dataclass
class RunOutcome:
    status: Status
    positions: np.ndarray
    rightmost: float
    n_particles: int


@dataclass
class RunBatch:
    """Per-run summaries, indexed by run number."""

    status: np.ndarray  # Status values as strings
    n_particles: np.ndarray
    rightmost: np.ndarray

    @property
    def n_runs(self) -> int:
        return self.status.size

    def mask(self, status: Status) -> np.ndarray:
        return self.status == status.value


def _block_size(config: BranchingConfig, t: float) -> int:
    pop = max(config.expected_population(t), 1.0)
    return int(max(1, min(MAX_BLOCK_RUNS, BLOCK_BUDGET // pop)))


def _simulate_block(config: BranchingConfig, t: float, n_runs: int, rng):
    """Simulate ``n_runs`` independent trees to time ``t``.

    Returns ``(run_ids, positions, capped)``: the final particles sorted by
    run, and a boolean mask of runs that crossed the cap.
    """
    ks, ps = config.law.ks, config.law.ps
    run = np.arange(n_runs)
    birth = np.zeros(n_runs)
    pos = np.full(n_runs, float(config.start))
    done_runs, done_pos = [], []
    n_done = np.zeros(n_runs, dtype=np.int64)
    capped = np.zeros(n_runs, dtype=bool)
    while run.size:
        life = rng.exponential(1.0 / config.rate, size=run.size)
        end = birth + life
        finish = end >= t
        dur = np.where(finish, t - birth, life)
        pos = pos + sample_increments(config.model, dur, rng)
        done_runs.append(run[finish])
        done_pos.append(pos[finish])
        n_done += np.bincount(run[finish], minlength=n_runs)
        split = ~finish
        kids = ks[rng.choice(ks.size, size=int(split.sum()), p=ps)]
        run = np.repeat(run[split], kids)
        pos = np.repeat(pos[split], kids)
        birth = np.repeat(end[split], kids)
        live = n_done + np.bincount(run, minlength=n_runs)
        over = (live > config.cap) & ~capped
        if over.any():
            capped |= over
            keep = ~capped[run]
            run, pos, birth = run[keep], pos[keep], birth[keep]
    runs = np.concatenate(done_runs) if done_runs else np.zeros(0, dtype=int)
    positions = np.concatenate(done_pos) if done_pos else np.zeros(0)
    keep = ~capped[runs]
    runs, positions = runs[keep], positions[keep]
    order = np.argsort(runs, kind="stable")
    return runs[order], positions[order], capped


def _summarise(runs, positions, capped, n_runs):
    counts = np.bincount(runs, minlength=n_runs)
    right = np.full(n_runs, -np.inf)
    if runs.size:
        starts = np.flatnonzero(np.r_[True, runs[1:] != runs[:-1]])
        right[runs[starts]] = np.maximum.reduceat(positions, starts)
    status = np.where(counts > 0, Status.ALIVE.value, Status.EXTINCT.value).astype(object)
    status[capped] = Status.CAP_EXCEEDED.value
    counts = np.where(capped, -1, counts)
    return status, counts, right


def simulate(config: BranchingConfig, t: float, rng) -> RunOutcome:
    """One tree to time ``t``; the outcome keeps every particle position."""
    if t < 0:
        raise DomainError("t must be >= 0")
    runs, positions, capped = _simulate_block(config, t, 1, rng)
    if capped[0]:
        return RunOutcome(Status.CAP_EXCEEDED, np.zeros(0), -math.inf, -1)
    if positions.size == 0:
        return RunOutcome(Status.EXTINCT, positions, -math.inf, 0)
    return RunOutcome(Status.ALIVE, positions, float(positions.max()), positions.size)


def _map_blocks(fn, n_runs, block, threads):
    jobs = [(i, s, min(block, n_runs - s)) for i, s in enumerate(range(0, n_runs, block))]
    if threads and threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


def simulate_runs(config: BranchingConfig, t: float, n_runs: int, seed: int = 1,
                  threads=None, reducer=None):
    """Simulate ``n_runs`` trees; returns a :class:`RunBatch`.

    ``reducer(runs, positions, n)`` is evaluated on every block's particles
    and its per-run outputs are concatenated; with a reducer the return
    value is ``(batch, reduced)``.
    """
    if t < 0:
        raise DomainError("t must be >= 0")
    block = _block_size(config, t)

    def job(block_info):
        idx, _, size = block_info
        rng = np.random.default_rng([int(seed), idx])
        runs, positions, capped = _simulate_block(config, t, size, rng)
        summary = _summarise(runs, positions, capped, size)
        red = reducer(runs, positions, size) if reducer else None
        return summary, red

    parts = _map_blocks(job, n_runs, block, threads)
    batch = RunBatch(
        status=np.concatenate([p[0][0] for p in parts]),
        n_particles=np.concatenate([p[0][1] for p in parts]),
        rightmost=np.concatenate([p[0][2] for p in parts]),
    )
    if reducer is None:
        return batch
    return batch, np.concatenate([p[1] for p in parts], axis=0)


def _products(u0, xs):
    xs = np.atleast_1d(np.asarray(xs, dtype=float))

    def reduce(runs, positions, n):
        out = np.ones((n, xs.size))
        if runs.size == 0:
            return out
        starts = np.flatnonzero(np.r_[True, runs[1:] != runs[:-1]])
        for c, x in enumerate(xs):
            vals = np.asarray(u0(x - positions), dtype=float)
            out[runs[starts], c] = np.multiply.reduceat(vals, starts)
        return out

    return reduce


@dataclass(frozen=True)
class McKeanEstimate:
    x: float
    estimate: ValueEstimate
    n_capped: int
    flagged: bool


def mckean_check(config: BranchingConfig, u0, t: float, x, n_runs: int = 100_000,
                 seed: int = 1, threads=None):
    """Monte Carlo mean of ``prod_i u0(x - L_t^i)`` (empty product 1).

    ``x`` may be a scalar or a sequence; capped runs are dropped and
    counted, and more than 1% of them flags the estimate.
    """
    scalar = np.ndim(x) == 0
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    batch, prods = simulate_runs(config, t, n_runs, seed, threads, reducer=_products(u0, xs))
    ok = ~batch.mask(Status.CAP_EXCEEDED)
    n_capped = int((~ok).sum())
    flagged = n_capped > CAPPED_FLAG_FRACTION * n_runs
    out = []
    for c, xv in enumerate(xs):
        vals = prods[ok, c]
        n = vals.size
        est = ValueEstimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n)), n, 0,
                            flagged=flagged)
        out.append(McKeanEstimate(float(xv), est, n_capped, flagged))
    return out[0] if scalar else out


def rightmost_cdf(batch: RunBatch, x) -> tuple[float, float]:
    """Empirical ``P(M_t <= x)`` over uncapped runs, with its binomial stderr."""
    ok = ~batch.mask(Status.CAP_EXCEEDED)
    p = float(np.mean(batch.rightmost[ok] <= x))
    return p, math.sqrt(p * (1 - p) / ok.sum())


def extinction_cutoff(law: OffspringLaw, eps: float = 1e-12) -> float:
    """Population size beyond which later extinction has probability below ``eps``."""
    alpha = extinction_prob(law)
    if law.p0 == 0:
        return 1
    if alpha >= 1:
        return math.inf
    if alpha == 0:
        return 1
    return math.ceil(math.log(eps) / math.log(alpha))


@dataclass(frozen=True)
class ExtinctionEstimate:
    probability: float
    stderr: float
    n_runs: int
    n_extinct: int
    n_capped: int


def extinction_estimate(config: BranchingConfig, t_long: float = 30.0, n_runs: int = 100_000,
                        seed: int = 1, eps: float = 1e-12) -> ExtinctionEstimate:
    """Fraction of runs extinct by ``t_long``.

    Extinction ignores positions, so only the population size is simulated.
    A run whose population reaches the size where eventual extinction has
    probability below ``eps`` (or ``config.cap``) is counted as surviving.
    """
    law = config.law
    ks, ps = law.ks, law.ps
    rng = np.random.default_rng([int(seed), 0xE7])
    stop = min(extinction_cutoff(law, eps), config.cap)
    n = np.ones(n_runs, dtype=np.int64)
    clock = np.zeros(n_runs)
    active = (n > 0) & (n < stop)
    while active.any():
        idx = np.flatnonzero(active)
        clock[idx] += rng.exponential(1.0, size=idx.size) / (config.rate * n[idx])
        alive = clock[idx] < t_long
        hit = idx[alive]
        n[hit] += ks[rng.choice(ks.size, size=hit.size, p=ps)] - 1
        active[idx[~alive]] = False
        active[hit] = (n[hit] > 0) & (n[hit] < stop)
    n_extinct = int((n == 0).sum())
    p = n_extinct / n_runs
    capped = int((n >= config.cap).sum())
    return ExtinctionEstimate(p, math.sqrt(p * (1 - p) / n_runs), n_runs, n_extinct, capped)


@dataclass(frozen=True)
class SpeedRow:
    t: float
    median_speed: float
    q10: float
    q90: float
    median_rightmost: float
    extinct_frac: float
    n_alive: int
    n_capped: int
    flagged: bool


def max_horizon(config: BranchingConfig) -> float:
    """Largest ``t`` whose mean population ``e^{(E N - 1) t}`` fits the cap."""
    growth = config.law.mean - 1.0
    return math.inf if growth <= 0 else math.log(config.cap) / growth


def speed_experiment(config: BranchingConfig, t_list, n_runs: int = 10_000, seed: int = 1,
                     threads=None) -> list[SpeedRow]:
    """Conditional quantiles of ``M_t / t`` over non-extinct runs, per horizon."""
    t_list = [float(t) for t in t_list]
    if any(b <= a for a, b in zip(t_list, t_list[1:])):
        raise DomainError("t_list must be ascending")
    bound = max_horizon(config)
    rows = []
    for t in t_list:
        if t <= 0:
            raise DomainError("horizons must be > 0")
        if t > bound:
            rows.append(SpeedRow(t, math.nan, math.nan, math.nan, math.nan, math.nan, 0, 0, True))
            continue
        batch = simulate_runs(config, t, n_runs, seed, threads)
        alive = batch.mask(Status.ALIVE)
        n_capped = int(batch.mask(Status.CAP_EXCEEDED).sum())
        m = batch.rightmost[alive]
        if m.size:
            q10, med, q90 = np.quantile(m / t, [0.1, 0.5, 0.9])
            med_m = float(np.median(m))
        else:
            q10 = med = q90 = med_m = math.nan
        rows.append(SpeedRow(
            t, float(med), float(q10), float(q90), med_m,
            float(batch.mask(Status.EXTINCT).mean()), int(alive.sum()), n_capped,
            n_capped > CAPPED_FLAG_FRACTION * n_runs,
        ))
    return rows
