"""Monte Carlo evaluation of the control functional and its optimal policy.

For a Markov policy ``z = rule(s, x)`` the functional is

    Xi = exp(A_t) u0(X_t) - int_0^t exp(A_s) fhat(Z_s) ds,   A_s = int_0^s Z_r dr,

and its expectation is maximised, with value ``u(t, x)``, by
``Z_s = f'(u(t - s, X_s))``. Controls are held constant over each step of
the time grid (they only see ``X`` at the step's left end), and the
exponential weights are integrated exactly over each step.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .levy import DomainError, LevyModel, sample_increments
from .reaction import ReactionFn, fhat
from .semigroup import BracketPath, GridFn, trotter_bounds

BLOCK_PATHS = 4096
DEFAULT_J = 200


@dataclass
class PathSample:
    """Skeleton of ``X = x - L`` on ``J`` uniform steps; ``states[..., j] = X_{s_j}``."""

    t: float
    times: np.ndarray
    states: np.ndarray

    @property
    def J(self) -> int:
        return self.times.size - 1


def sample_paths(model: LevyModel, x: float, t: float, J: int, rng, n: int) -> PathSample:
    if J < 1:
        raise DomainError("J must be >= 1")
    dt = t / J
    steps = -sample_increments(model, dt, rng, size=(n, J))
    states = np.empty((n, J + 1))
    states[:, 0] = x
    np.cumsum(steps, axis=1, out=states[:, 1:])
    states[:, 1:] += x
    return PathSample(t, np.linspace(0.0, t, J + 1), states)


def sample_path(model: LevyModel, x: float, t: float, J: int, rng) -> PathSample:
    batch = sample_paths(model, x, t, J, rng, 1)
    return PathSample(t, batch.times, batch.states[0])


@dataclass
class ControlPolicy:
    """State-feedback control, clamped to ``[lo, hi] = [f'(0), f'(1)]``."""

    name: str
    rule: object  # (s, x_array) -> z_array
    lo: float
    hi: float

    def __call__(self, s: float, x):
        z = np.broadcast_to(np.asarray(self.rule(s, x), dtype=float), np.shape(x))
        return np.clip(z, self.lo, self.hi), int(np.count_nonzero((z < self.lo) | (z > self.hi)))


def constant_policy(rf: ReactionFn, z: float, name: str | None = None) -> ControlPolicy:
    lo, hi = float(rf.f_prime(0.0)), float(rf.f_prime(1.0))
    return ControlPolicy(name or f"const({z:g})", lambda s, x: z, lo, hi)


def ramp_policy(rf: ReactionFn, t: float) -> ControlPolicy:
    """Moves linearly from ``f'(0)`` at ``s = 0`` to ``f'(1)`` at ``s = t``."""
    lo, hi = float(rf.f_prime(0.0)), float(rf.f_prime(1.0))
    return ControlPolicy("ramp", lambda s, x: lo + (hi - lo) * s / t, lo, hi)


def bundled_policies(rf: ReactionFn, t: float, seed: int = 1) -> dict[str, ControlPolicy]:
    lo, hi = float(rf.f_prime(0.0)), float(rf.f_prime(1.0))
    rand_z = float(np.random.default_rng([seed, 0xC0]).uniform(lo, hi))
    return {
        "zero": constant_policy(rf, 0.0, "zero"),
        "minus-one": constant_policy(rf, -1.0, "minus-one"),
        "gamma": constant_policy(rf, rf.gamma, "gamma"),
        "random-constant": constant_policy(rf, rand_z, "random-constant"),
        "ramp": ramp_policy(rf, t),
    }


def _step_weight(z, dt):
    # int_0^dt exp(z r) dr, stable near z = 0
    zdt = z * dt
    small = np.abs(zdt) < 1e-8
    safe = np.where(small, 1.0, zdt)
    return np.where(small, dt * (1.0 + 0.5 * zdt), np.expm1(safe) / safe * dt)


def xi_batch(paths: PathSample, policy: ControlPolicy, rf: ReactionFn, u0):
    """Xi for every path in the batch; returns ``(values, n_clamped)``."""
    states = np.atleast_2d(paths.states)
    J = paths.J
    dt = paths.t / J
    log_w = np.zeros(states.shape[0])
    running = np.zeros(states.shape[0])
    clamped = 0
    for j in range(J):
        z, c = policy(paths.times[j], states[:, j])
        clamped += c
        running += np.exp(log_w) * fhat(rf, z, check=False) * _step_weight(z, dt)
        log_w += z * dt
    vals = np.exp(log_w) * np.asarray(u0(states[:, -1]), dtype=float) - running
    return vals, clamped


def xi(path: PathSample, policy: ControlPolicy, rf: ReactionFn, u0) -> float:
    if path.states.ndim != 1:
        raise ValueError("xi expects a single path; use xi_batch for batches")
    vals, _ = xi_batch(path, policy, rf, u0)
    return float(vals[0])


@dataclass(frozen=True)
class ValueEstimate:
    mean: float
    stderr: float
    n_paths: int
    J: int
    n_clamped: int = 0
    flagged: bool = False


def _blocks(n_paths, block=BLOCK_PATHS):
    starts = range(0, n_paths, block)
    return [(i, s, min(block, n_paths - s)) for i, s in enumerate(starts)]


def _run_blocks(fn, n_paths, threads):
    blocks = _blocks(n_paths)
    if threads and threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(fn, blocks))
    return [fn(b) for b in blocks]


def _estimate(samples: np.ndarray, J: int, n_clamped=0) -> ValueEstimate:
    n = samples.size
    std = float(samples.std(ddof=1)) if n > 1 else 0.0
    return ValueEstimate(float(samples.mean()), std / math.sqrt(n), n, J, n_clamped)


def estimate_value(model, x, t, policy, rf, u0, n_paths=100_000, J=DEFAULT_J, seed=1,
                   threads=None) -> ValueEstimate:
    """Mean and standard error of Xi over seeded paths.

    Paths are generated in fixed blocks, each with its own generator keyed
    by ``(seed, block)``, so the result does not depend on ``threads``.
    """
    if n_paths < 100:
        raise DomainError("n_paths must be >= 100")

    def run(block):
        idx, _, size = block
        rng = np.random.default_rng([int(seed), idx])
        return xi_batch(sample_paths(model, x, t, J, rng, size), policy, rf, u0)

    parts = _run_blocks(run, n_paths, threads)
    vals = np.concatenate([p[0] for p in parts])
    return _estimate(vals, J, sum(p[1] for p in parts))


@dataclass
class SolutionPath:
    """PDE solution snapshots ``u(tau_k, .)`` (bracket midpoints) on a uniform time ladder."""

    brackets: BracketPath

    @property
    def times(self):
        return self.brackets.times

    @property
    def gap(self) -> float:
        return max(b.gap for b in self.brackets.brackets)

    def snapshot(self, tau: float) -> GridFn:
        return self.brackets.at(tau).mid

    def __call__(self, tau: float, x):
        return self.snapshot(tau)(x)


def solution_path(model, rf, u0: GridFn, t: float, J: int = DEFAULT_J, seed: int = 0) -> SolutionPath:
    """Snapshots from a single splitting run with ``J`` steps."""
    return SolutionPath(trotter_bounds(model, rf, u0, t, J, seed, keep_path=True))


def optimal_policy(model, rf, u0: GridFn, t: float, J: int = DEFAULT_J, seed: int = 0,
                   snapshots: SolutionPath | None = None) -> ControlPolicy:
    """``z = f'(u(t - s, x))`` with snapshot lookup nearest in time."""
    sol = snapshots or solution_path(model, rf, u0, t, J, seed)
    lo, hi = float(rf.f_prime(0.0)), float(rf.f_prime(1.0))

    def rule(s, x):
        u = np.clip(sol(t - s, x), 0.0, 1.0)
        return rf.f_prime(u)

    pol = ControlPolicy("optimal", rule, lo, hi)
    pol.solution = sol
    return pol


def fenchel_gaps(paths: PathSample, policy: ControlPolicy, rf: ReactionFn, sol: SolutionPath):
    """Integrand ``u z - f(u) - fhat(z)`` at every step; nonpositive by Fenchel-Young."""
    states = np.atleast_2d(paths.states)
    out = np.empty((states.shape[0], paths.J))
    for j in range(paths.J):
        s = paths.times[j]
        z, _ = policy(s, states[:, j])
        u = np.clip(sol(paths.t - s, states[:, j]), 0.0, 1.0)
        out[:, j] = u * z - rf.f(u) - fhat(rf, z, check=False)
    return out


@dataclass(frozen=True)
class MartingaleCheck:
    max_deviation: float
    reference: float
    checkpoints: tuple
    means: tuple
    stderrs: tuple


def martingale_check(model, rf, sol: SolutionPath, x, t, checkpoints, n_paths=100_000,
                     seed=1, J=None, threads=None) -> MartingaleCheck:
    """Compare ``E[M_s]`` with ``u(t, x)`` where
    ``M_s = u(t - s, X_s) + int_0^s f(u(t - r, X_r)) dr`` (left-endpoint sum)."""
    J = J or (sol.times.size - 1)
    dt = t / J
    cps = [float(c) for c in checkpoints]
    if any(c < 0 or c > t + 1e-12 for c in cps):
        raise DomainError("checkpoints must lie in [0, t]")
    idx = [int(round(c / dt)) for c in cps]

    def run(block):
        b, _, size = block
        rng = np.random.default_rng([int(seed), b])
        paths = sample_paths(model, x, t, J, rng, size)
        acc = np.zeros(size)
        out = np.empty((size, len(idx)))
        for j in range(J + 1):
            tau = t - paths.times[j]
            u = sol(tau, paths.states[:, j])
            for c, k in enumerate(idx):
                if k == j:
                    out[:, c] = u + acc
            if j < J:
                acc += rf.f(np.clip(u, 0.0, 1.0)) * dt
        return out

    samples = np.concatenate(_run_blocks(run, n_paths, threads), axis=0)
    ref = float(sol(t, np.array([x]))[0])
    means = samples.mean(axis=0)
    ses = samples.std(axis=0, ddof=1) / math.sqrt(samples.shape[0])
    dev = float(np.max(np.abs(means - ref))) if len(idx) else 0.0
    return MartingaleCheck(dev, ref, tuple(cps), tuple(map(float, means)), tuple(map(float, ses)))
