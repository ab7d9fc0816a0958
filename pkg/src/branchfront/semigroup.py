"""Grid functions, the transition semigroup ``P_t``, and splitting brackets.

A :class:`GridFn` samples a function on a uniform grid and is extended by
constants outside it. ``P_t`` acts by a discrete correlation with weights
``w_k = E[hat_k(X_t - X_0)]``, where ``hat_k`` is the piecewise-linear
basis function at offset ``k*h``. That is the exact expectation of the
linear interpolant, it keeps the weights nonnegative and summing to one,
and a pure shift by a whole number of cells is reproduced exactly.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import oaconvolve
from scipy.special import expit, ndtr, ndtri

from .levy import DomainError, LevyModel, sample_increments
from .reaction import R_t, ReactionFn

DEFAULT_GRID = (-15.0, 15.0, 2001)
TAIL_MASS = 1e-8
MAX_OFFGRID_MASS = 0.2
KERNEL_SAMPLES = 1_000_000
INTERIOR_MARGIN = 0.05


class GridTooSmallError(RuntimeError):
    """The transition kernel spills too much mass beyond the grid."""


@dataclass
class GridFn:
    x_min: float
    x_max: float
    values: np.ndarray
    left_ext: float
    right_ext: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1 or self.values.size < 2:
            raise DomainError("a grid needs at least 2 points")
        if not self.x_max > self.x_min:
            raise DomainError("x_max must exceed x_min")

    @property
    def m(self) -> int:
        return self.values.size

    @property
    def h(self) -> float:
        return (self.x_max - self.x_min) / (self.m - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.m)

    def __call__(self, y):
        return np.interp(y, self.x, self.values, left=self.left_ext, right=self.right_ext)

    def with_values(self, values, left_ext=None, right_ext=None) -> "GridFn":
        return GridFn(
            self.x_min,
            self.x_max,
            values,
            self.left_ext if left_ext is None else left_ext,
            self.right_ext if right_ext is None else right_ext,
        )

    def map(self, fn) -> "GridFn":
        """Apply a pointwise map to the values and both extension constants."""
        ext = fn(np.array([self.left_ext, self.right_ext]))
        return GridFn(self.x_min, self.x_max, fn(self.values), float(ext[0]), float(ext[1]))

    def interior(self) -> slice:
        k = int(INTERIOR_MARGIN * self.m)
        return slice(k, self.m - k)


def grid_from_fn(fn, x_min=DEFAULT_GRID[0], x_max=DEFAULT_GRID[1], m=DEFAULT_GRID[2]):
    """Sample ``fn`` on a grid; the extension constants are ``fn`` at the end points."""
    x = np.linspace(x_min, x_max, m)
    vals = np.asarray(fn(x), dtype=float)
    return GridFn(x_min, x_max, vals, float(vals[0]), float(vals[-1]))


def heaviside(x):
    return (np.asarray(x) >= 0).astype(float)


def heaviside_grid(x_min=DEFAULT_GRID[0], x_max=DEFAULT_GRID[1], m=DEFAULT_GRID[2]) -> GridFn:
    return grid_from_fn(heaviside, x_min, x_max, m)


def constant_grid(c, x_min=DEFAULT_GRID[0], x_max=DEFAULT_GRID[1], m=DEFAULT_GRID[2]) -> GridFn:
    return GridFn(x_min, x_max, np.full(m, float(c)), float(c), float(c))


@dataclass(frozen=True)
class Kernel:
    weights: np.ndarray  # offsets -half .. half
    half: int
    offgrid_mass: float


def _gaussian_hat_weights(mu, s, h, half):
    c = np.arange(-half - 1, half + 2) * h

    if s > 0:
        d = (mu - c) / s
        g = (mu - c) * ndtr(d) + s * np.exp(-0.5 * d * d) / math.sqrt(2 * math.pi)
    else:
        g = np.maximum(mu - c, 0.0)
    w = (g[:-2] - 2 * g[1:-1] + g[2:]) / h
    return np.clip(w, 0.0, None)


def _mc_hat_weights(model, dt, h, n, seed):
    rng = np.random.default_rng([int(seed), 0xC0DE])
    y = -sample_increments(model, dt, rng, size=n) / h
    lo = np.floor(y)
    frac = y - lo
    lo = lo.astype(np.int64)
    k_min, k_max = int(lo.min()), int(lo.max()) + 1
    half = max(-k_min, k_max)
    w = np.zeros(2 * half + 1)
    np.add.at(w, lo + half, 1.0 - frac)
    np.add.at(w, lo + 1 + half, frac)
    return w / n, half


_KERNELS: dict = {}
_KERNEL_LOCK = threading.Lock()


def transition_kernel(model: LevyModel, dt: float, h: float, m: int, seed: int = 0) -> Kernel:
    """Hat-function weights of ``X_dt - X_0`` on grid offsets, cached per key."""
    key = (model, float(dt), float(h), int(m), int(seed))
    with _KERNEL_LOCK:
        hit = _KERNELS.get(key)
    if hit is not None:
        return hit
    if model.has_jumps:
        w, half = _mc_hat_weights(model, dt, h, KERNEL_SAMPLES, seed)
    else:
        mu = -model.drift * dt
        s = model.diffusion * math.sqrt(dt)
        # a 6.1 sd window leaves tail mass ~1e-9
        half = int(math.ceil((abs(mu) + 6.1 * s) / h)) + 1
        w = _gaussian_hat_weights(mu, s, h, half)
    offsets = np.arange(-half, half + 1)
    # trim negligible tails
    tail = np.cumsum(w)
    keep_lo = int(np.searchsorted(tail, TAIL_MASS / 2))
    rtail = np.cumsum(w[::-1])
    keep_hi = w.size - int(np.searchsorted(rtail, TAIL_MASS / 2))
    cut = min(keep_lo, w.size - keep_hi, half)
    if cut > 0:
        w = w[cut : w.size - cut]
        offsets = offsets[cut : offsets.size - cut]
        half -= cut
    w = w / w.sum()
    offgrid = float(w[np.abs(offsets) > m - 1].sum())
    kern = Kernel(weights=w, half=half, offgrid_mass=offgrid)
    with _KERNEL_LOCK:
        _KERNELS.setdefault(key, kern)
    return kern


def _correlate(values, left, right, kern: Kernel):
    half = kern.half
    padded = np.concatenate([np.full(half, left), values, np.full(half, right)])
    if half == 0:
        return padded * kern.weights[0]
    if kern.weights.size > 64:
        return oaconvolve(padded, kern.weights[::-1], mode="valid")
    return np.convolve(padded, kern.weights[::-1], mode="valid")


def apply_P(model: LevyModel, dt: float, gf: GridFn, seed: int = 0) -> GridFn:
    """``P_dt gf(x) = E_x[gf(X_dt)]`` on the grid."""
    if dt <= 0:
        raise DomainError("dt must be > 0")
    kern = transition_kernel(model, dt, gf.h, gf.m, seed)
    if kern.offgrid_mass > MAX_OFFGRID_MASS:
        raise GridTooSmallError(
            f"{kern.offgrid_mass:.1%} of the transition kernel falls beyond the grid"
        )
    vals = _correlate(gf.values, gf.left_ext, gf.right_ext, kern)
    # a convex combination stays inside the input range; strip FFT round-off
    lo = min(gf.values.min(), gf.left_ext, gf.right_ext)
    hi = max(gf.values.max(), gf.left_ext, gf.right_ext)
    return gf.with_values(np.clip(vals, lo, hi))


def apply_R(rf: ReactionFn, dt: float, gf: GridFn) -> GridFn:
    """Pointwise reaction flow ``R_dt`` applied to values and extensions."""
    if dt <= 0:
        raise DomainError("dt must be > 0")
    return gf.map(lambda v: np.asarray(R_t(rf, v, dt), dtype=float))


@dataclass
class Bracket:
    lower: GridFn
    upper: GridFn
    n: int
    gap: float
    converged: bool = True

    @property
    def mid(self) -> GridFn:
        lo, up = self.lower, self.upper
        return lo.with_values(
            0.5 * (lo.values + up.values),
            0.5 * (lo.left_ext + up.left_ext),
            0.5 * (lo.right_ext + up.right_ext),
        )


def _gap(lower: GridFn, upper: GridFn) -> float:
    sl = lower.interior()
    return float(np.max(upper.values[sl] - lower.values[sl]))


@dataclass
class BracketPath:
    """Brackets at every splitting time ``k*t/n``, ``k = 0..n``."""

    times: np.ndarray
    brackets: list = field(default_factory=list)

    def at(self, tau: float) -> Bracket:
        k = int(np.argmin(np.abs(self.times - tau)))
        return self.brackets[k]


def trotter_bounds(model, rf, u0: GridFn, t: float, n: int, seed: int = 0, keep_path=False):
    """Splitting bracket ``(R P)^n u0 <= U_t u0 <= (P R)^n u0`` with step ``t/n``.

    With ``keep_path`` a :class:`BracketPath` holding every intermediate
    bracket is returned instead.
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    if t < 0:
        raise DomainError("t must be >= 0")
    lower = upper = u0
    path = BracketPath(times=np.linspace(0.0, t, n + 1))
    if keep_path:
        path.brackets.append(Bracket(u0, u0, n, 0.0))
    if t > 0:
        dt = t / n
        for _ in range(n):
            lower = apply_R(rf, dt, apply_P(model, dt, lower, seed))
            upper = apply_P(model, dt, apply_R(rf, dt, upper), seed)
            if keep_path:
                path.brackets.append(Bracket(lower, upper, n, _gap(lower, upper)))
    if keep_path:
        return path
    return Bracket(lower, upper, n, _gap(lower, upper))


def solve(model, rf, u0: GridFn, t: float, tol: float = 0.02, n_max: int = 1024, seed: int = 0):
    """Double the splitting count until the bracket gap drops below ``tol``.

    Returns ``(midpoint, bracket)``; ``bracket.converged`` is False when
    ``n_max`` was reached first.
    """
    if tol <= 0:
        raise DomainError("tol must be > 0")
    if t == 0:
        return u0, Bracket(u0, u0, 1, 0.0)
    n = 1
    while True:
        br = trotter_bounds(model, rf, u0, t, n, seed)
        if br.gap < tol:
            break
        if n >= n_max:
            br.converged = False
            break
        n = min(2 * n, n_max)
    return br.mid, br


def picard_ladder(t: float, step: float = 0.05, min_levels: int = 32) -> int:
    return max(min_levels, int(math.ceil(t / step)))


@dataclass
class PicardResult:
    solution: GridFn
    iterations: int
    change: float
    converged: bool


def picard_solve(model, rf, u0: GridFn, t: float, levels: int | None = None,
                 max_iter: int = 100, tol: float = 1e-9, seed: int = 0) -> PicardResult:
    """Fixed-point iteration of the mild (Duhamel) identity on a time ladder.

    ``u(tau_i) = P_{tau_i} u0 + dt * sum_{j<i} P_{j dt} f(u(tau_{i-j}))``,
    left-endpoint quadrature in the backward time variable.
    """
    if t == 0:
        return PicardResult(u0, 0, 0.0, True)
    J = levels or picard_ladder(t)
    dt = t / J

    def P(j, gf):
        return gf if j == 0 else apply_P(model, j * dt, gf, seed)

    free = [P(i, u0) for i in range(J + 1)]
    u = list(free)
    change = math.inf
    it = 0
    while it < max_iter and change >= tol:
        reac = [gf.map(rf.f) for gf in u]
        new = []
        for i in range(J + 1):
            vals = free[i].values.copy()
            ext = np.array([free[i].left_ext, free[i].right_ext])
            for j in range(i):
                term = P(j, reac[i - j])
                vals += dt * term.values
                ext += dt * np.array([term.left_ext, term.right_ext])
            new.append(u0.with_values(vals, float(ext[0]), float(ext[1])))
        change = max(float(np.max(np.abs(a.values - b.values))) for a, b in zip(new, u))
        u = new
        it += 1
    return PicardResult(u[-1], it, change, change < tol)


def median(gf: GridFn, level: float = 0.5) -> float:
    """First crossing of ``level`` by a nondecreasing grid function."""
    v = gf.values
    above = np.nonzero(v >= level)[0]
    if above.size == 0 or above[0] == 0:
        raise ValueError(f"grid values do not cross {level}")
    i = int(above[0])
    x = gf.x
    v0, v1 = v[i - 1], v[i]
    return float(x[i - 1] + (level - v0) / (v1 - v0) * (x[i] - x[i - 1]))


def median_bounds_dyadic(t: float, n: int, b: float) -> tuple[float, float]:
    """Two-sided bound on the median of dyadic branching Brownian motion.

    Returns ``(lo, hi)``; ``n`` splitting steps and level ``b`` in (1/2, 1)
    tune the lower bound.
    """
    if not 0.5 < b < 1:
        raise DomainError("b must lie in (1/2, 1)")
    if n < 1 or t <= 0:
        raise DomainError("need n >= 1 and t > 0")
    hi = -math.sqrt(t) * float(ndtri(expit(-t)))
    step = math.sqrt(t / n)
    # 1/(e^{t/n}(1-b) + b), via log-sum-exp to stay finite for long horizons
    log_denom = np.logaddexp(math.log(b), math.log(1 - b) + t / n)
    inner = float(ndtri(math.exp(-log_denom))) if n > 1 else 0.0
    lo = -step * float(ndtri(1.0 / (2 * b))) - (n - 1) * step * inner
    return lo, hi


def best_median_bounds(t, ns=(1, 2, 4), bs=(0.6, 0.75, 0.9)) -> tuple[float, float]:
    lo = max(median_bounds_dyadic(t, n, b)[0] for n in ns for b in bs)
    return lo, median_bounds_dyadic(t, 1, bs[0])[1]
