"""One-dimensional Levy models for the particle displacement ``L``.

Only finite-activity jumps are supported, so the cumulant generating
function is written in untruncated form::

    cgf(theta) = drift*theta + sigma**2*theta**2/2
                 + jump_intensity * sum_k p_k (exp(theta*y_k) - 1)

and ``drift`` is the total linear drift of ``L``. The process driving the
PDE is ``X_s = x - L_s``; :func:`cdf_X` and :func:`quantile_X` describe
``X_t`` started from 0.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from ._optim import bisect, scan_then_golden

DEFAULT_THETA_MAX = 50.0
GOLDEN_TOL = 1e-10
BISECT_TOL = 1e-8
DEFAULT_CDF_SAMPLES = 1_000_000


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


@dataclass(frozen=True)
class LevyModel:
    drift: float = 0.0
    diffusion: float = 0.0
    jump_intensity: float = 0.0
    jump_pmf: tuple[tuple[float, float], ...] = ()
    theta_max: float = DEFAULT_THETA_MAX

    def __post_init__(self):
        object.__setattr__(
            self, "jump_pmf", tuple((float(y), float(p)) for y, p in self.jump_pmf)
        )
        if self.diffusion < 0:
            raise DomainError("diffusion must be >= 0")
        if self.jump_intensity < 0:
            raise DomainError("jump_intensity must be >= 0")
        if self.theta_max <= 0:
            raise DomainError("theta_max must be > 0")
        if self.jump_intensity > 0:
            probs = [p for _, p in self.jump_pmf]
            if not probs or min(probs) < 0 or abs(sum(probs) - 1.0) > 1e-12:
                raise DomainError("jump probabilities must be >= 0 and sum to 1")

    @property
    def has_jumps(self) -> bool:
        return self.jump_intensity > 0 and any(y != 0 for y, _ in self.jump_pmf)

    @property
    def is_degenerate(self) -> bool:
        """True when ``L_t = drift * t`` deterministically."""
        return self.diffusion == 0 and not self.has_jumps

    @property
    def sizes(self) -> np.ndarray:
        return np.array([y for y, _ in self.jump_pmf], dtype=float)

    @property
    def probs(self) -> np.ndarray:
        return np.array([p for _, p in self.jump_pmf], dtype=float)

    @classmethod
    def brownian(cls, sigma=1.0, drift=0.0, **kw):
        return cls(drift=drift, diffusion=sigma, **kw)


def standard_bm() -> LevyModel:
    return LevyModel(diffusion=1.0)


@dataclass(frozen=True)
class SpeedResult:
    q: float
    theta_star: float
    method: str
    saturated: bool = False


@dataclass(frozen=True)
class Conjugate:
    value: float
    theta: float
    saturated: bool


def _cgf_unchecked(model: LevyModel, theta):
    theta = np.asarray(theta, dtype=float)
    out = model.drift * theta + 0.5 * model.diffusion**2 * theta**2
    if model.jump_intensity > 0:
        jumps = sum(p * np.expm1(theta * y) for y, p in model.jump_pmf)
        out = out + model.jump_intensity * jumps
    return out


def cgf(model: LevyModel, theta):
    """Cumulant generating function of ``L_1``; vectorised over ``theta``."""
    if np.any(np.abs(theta) > model.theta_max):
        raise DomainError(f"|theta| exceeds theta_max={model.theta_max}")
    out = _cgf_unchecked(model, theta)
    return float(out) if np.ndim(out) == 0 else out


def mean_increment(model: LevyModel) -> float:
    """``E(L_1)``, which is also the slope of :func:`cgf` at 0."""
    jump_mean = sum(y * p for y, p in model.jump_pmf) if model.jump_intensity > 0 else 0.0
    return model.drift + model.jump_intensity * jump_mean


def variance_increment(model: LevyModel) -> float:
    jump_m2 = sum(y * y * p for y, p in model.jump_pmf) if model.jump_intensity > 0 else 0.0
    return model.diffusion**2 + model.jump_intensity * jump_m2


def sample_increments(model: LevyModel, dt, rng: np.random.Generator, size=None):
    """Exact draws of ``L_{s+dt} - L_s``.

    ``dt`` may be a scalar (with ``size`` giving the number of draws) or an
    array of durations, one draw per entry.
    """
    dt = np.asarray(dt, dtype=float)
    if size is not None:
        dt = np.broadcast_to(dt, (size,) if np.isscalar(size) else size)
    out = model.drift * dt
    if model.diffusion > 0:
        out = out + model.diffusion * np.sqrt(dt) * rng.standard_normal(dt.shape)
    if model.has_jumps:
        counts = rng.poisson(model.jump_intensity * dt)
        total = int(counts.sum())
        if total:
            sizes = rng.choice(model.sizes, size=total, p=model.probs)
            owner = np.repeat(np.arange(counts.size), counts.ravel())
            out = out + np.bincount(owner, weights=sizes, minlength=counts.size).reshape(
                dt.shape
            )
    return np.array(out, dtype=float)


def sample_increment(model: LevyModel, dt: float, rng: np.random.Generator) -> float:
    if dt <= 0:
        raise DomainError("dt must be > 0")
    return float(sample_increments(model, dt, rng, size=1)[0])


# empirical samples of X_t = -L_t, keyed by (model, t, n, seed)
_X_CACHE: dict = {}
_X_LOCK = threading.Lock()


def x_sample(model: LevyModel, t: float, n: int = DEFAULT_CDF_SAMPLES, seed: int = 0):
    """Sorted Monte Carlo sample of ``X_t`` from 0; cached and read-only."""
    key = (model, float(t), int(n), int(seed))
    with _X_LOCK:
        cached = _X_CACHE.get(key)
        if cached is None:
            rng = np.random.default_rng([int(seed), 0x5EED])
            cached = np.sort(-sample_increments(model, t, rng, size=n))
            cached.setflags(write=False)
            _X_CACHE[key] = cached
    return cached


def cdf_X(model: LevyModel, t: float, y, n_samples=DEFAULT_CDF_SAMPLES, seed=0):
    """``P_0(X_t <= y)``; exact without jumps, empirical otherwise."""
    if t <= 0:
        raise DomainError("t must be > 0")
    y = np.asarray(y, dtype=float)
    loc = -model.drift * t
    if not model.has_jumps:
        if model.diffusion == 0:
            out = (y >= loc).astype(float)
        else:
            out = ndtr((y - loc) / (model.diffusion * math.sqrt(t)))
    else:
        sample = x_sample(model, t, n_samples, seed)
        out = np.searchsorted(sample, y, side="right") / sample.size
    return float(out) if out.ndim == 0 else out


def quantile_X(model: LevyModel, t: float, p, n_samples=DEFAULT_CDF_SAMPLES, seed=0):
    """Generalised inverse ``inf{x : F_t(x) >= p}`` of :func:`cdf_X`."""
    if t <= 0:
        raise DomainError("t must be > 0")
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0) | (p >= 1)):
        raise DomainError("p must lie in (0, 1)")
    loc = -model.drift * t
    if not model.has_jumps:
        if model.diffusion == 0:
            out = np.full(p.shape, loc)
        else:
            out = loc + model.diffusion * math.sqrt(t) * ndtri(p)
    else:
        sample = x_sample(model, t, n_samples, seed)
        idx = np.ceil(p * sample.size).astype(int) - 1
        out = sample[np.clip(idx, 0, sample.size - 1)]
    return float(out) if out.ndim == 0 else out


def _theta_grid(theta_max, n=401):
    return np.linspace(-theta_max, theta_max, n)


def conjugate(model: LevyModel, r: float) -> Conjugate:
    """Legendre transform of the cgf over ``[-theta_max, theta_max]``."""
    tm = model.theta_max

    def neg(th):
        return -(r * th - float(_cgf_unchecked(model, th)))

    theta, val = scan_then_golden(neg, _theta_grid(tm), tol=GOLDEN_TOL)
    saturated = abs(abs(theta) - tm) <= 1e-9 * tm
    return Conjugate(value=-val, theta=theta, saturated=saturated)


def legendre(model: LevyModel, r: float) -> float:
    return conjugate(model, r).value


def _speed_grid(theta_max, n=200):
    return np.geomspace(theta_max * 1e-6, theta_max, n)


def _speed_inf(model: LevyModel, gamma: float) -> SpeedResult:
    tm = model.theta_max

    def obj(th):
        return (float(_cgf_unchecked(model, th)) + gamma) / th

    theta, q = scan_then_golden(obj, _speed_grid(tm), tol=GOLDEN_TOL)
    return SpeedResult(q, theta, "inf_form", saturated=theta >= tm * (1 - 1e-9))


def _speed_sup(model: LevyModel, gamma: float) -> SpeedResult:
    mu = mean_increment(model)
    step = max(1.0, math.sqrt(2 * gamma * max(variance_increment(model), 1e-12)))
    hi = mu + step
    while legendre(model, hi) < gamma:
        hi = mu + 2 * (hi - mu)
        if hi - mu > 1e6:
            break
    r = bisect(lambda r: legendre(model, r) - gamma, mu, hi, tol=BISECT_TOL)
    info = conjugate(model, r)
    return SpeedResult(r, info.theta, "sup_form", saturated=info.saturated)


def _speed_perspective(model: LevyModel, gamma: float) -> SpeedResult:
    # perspective function on theta < 0: -theta * cgf(-1/theta)
    tm = model.theta_max
    lo, hi = -1.0 / (tm * 1e-6), -1.0 / tm

    def neg(th):
        return -(gamma * th + th * float(_cgf_unchecked(model, -1.0 / th)))

    grid = -np.geomspace(-lo, -hi, 200)
    theta, val = scan_then_golden(neg, grid, tol=GOLDEN_TOL)
    q = val  # q = -sup(...) = min(neg)
    return SpeedResult(q, -1.0 / theta, "perspective_form", saturated=theta >= hi * (1 + 1e-9))


_SPEED_METHODS = {
    "inf_form": _speed_inf,
    "sup_form": _speed_sup,
    "perspective_form": _speed_perspective,
}


def front_speed(model: LevyModel, gamma: float, method: str = "inf_form") -> SpeedResult:
    """Asymptotic front speed ``inf_{theta>0} (cgf(theta) + gamma) / theta``.

    For a degenerate model the infimum is approached only as theta grows
    without bound, so the exact value ``drift`` is returned directly.
    """
    if gamma <= 0:
        raise DomainError("gamma must be > 0")
    if method not in _SPEED_METHODS:
        raise ValueError(f"unknown method {method!r}")
    if model.is_degenerate:
        return SpeedResult(model.drift, math.inf, method)
    return _SPEED_METHODS[method](model, gamma)


def front_speed_all(model: LevyModel, gamma: float) -> dict[str, SpeedResult]:
    return {m: front_speed(model, gamma, m) for m in _SPEED_METHODS}


def parse_jumps(text: str) -> tuple[tuple[float, float], ...]:
    """Parse ``size:prob,size:prob`` pairs."""
    text = text.strip()
    if not text:
        return ()
    pairs = []
    for item in text.split(","):
        size, prob = item.split(":")
        pairs.append((float(size), float(prob)))
    return tuple(pairs)


def model_from_config(cfg: dict) -> LevyModel:
    return LevyModel(
        drift=float(cfg.get("drift", 0.0)),
        diffusion=float(cfg.get("sigma", 1.0)),
        jump_intensity=float(cfg.get("jump_intensity", 0.0)),
        jump_pmf=parse_jumps(str(cfg.get("jumps", ""))),
        theta_max=float(cfg.get("theta_max", DEFAULT_THETA_MAX)),
    )


__all__ = [
    "Conjugate",
    "DomainError",
    "LevyModel",
    "SpeedResult",
    "cdf_X",
    "cgf",
    "conjugate",
    "front_speed",
    "front_speed_all",
    "legendre",
    "mean_increment",
    "model_from_config",
    "parse_jumps",
    "quantile_X",
    "sample_increment",
    "sample_increments",
    "standard_bm",
    "variance_increment",
    "x_sample",
]
