"""Offspring laws and the reaction nonlinearity ``f(u) = G(u) - u``.

Branching happens at rate 1, which is what makes ``G(u) - u`` the reaction
term. ``R_t`` is the flow of ``r' = f(r)`` and ``Q_t(q) = 1 - R_t(1 - q)`` is
the flow of ``q' = g(q)`` with ``g(v) = -f(1 - v)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from ._optim import bisect
from .levy import DomainError

ODE_RTOL = 1e-11
ODE_ATOL = 1e-10
ROOT_TOL = 1e-12


@dataclass(frozen=True)
class OffspringLaw:
    pmf: tuple[tuple[int, float], ...]

    def __post_init__(self):
        pmf = tuple(sorted((int(k), float(p)) for k, p in self.pmf))
        object.__setattr__(self, "pmf", pmf)
        if not pmf:
            raise DomainError("empty offspring law")
        if any(k < 0 for k, _ in pmf) or any(p < 0 for _, p in pmf):
            raise DomainError("offspring counts and probabilities must be >= 0")
        if abs(sum(p for _, p in pmf) - 1.0) > 1e-12:
            raise DomainError("offspring probabilities must sum to 1")

    @classmethod
    def from_dict(cls, probs: dict) -> "OffspringLaw":
        return cls(tuple(probs.items()))

    @property
    def ks(self) -> np.ndarray:
        return np.array([k for k, _ in self.pmf], dtype=int)

    @property
    def ps(self) -> np.ndarray:
        return np.array([p for _, p in self.pmf], dtype=float)

    @property
    def mean(self) -> float:
        return float(sum(k * p for k, p in self.pmf))

    @property
    def p0(self) -> float:
        return float(sum(p for k, p in self.pmf if k == 0))

    @property
    def degree(self) -> int:
        return max(k for k, p in self.pmf if p > 0)

    @property
    def is_degenerate(self) -> bool:
        """``G(s) = s`` identically (every particle has one child)."""
        return self.p0 == 0 and all(k == 1 for k, p in self.pmf if p > 0)


def dyadic() -> OffspringLaw:
    return OffspringLaw(((2, 1.0),))


def _powers(s, ks):
    s = np.asarray(s, dtype=float)
    return s[..., None] ** ks  # numpy gives 0**0 == 1


def pgf(law: OffspringLaw, s):
    """``G(s) = E[s^N]`` on ``[0, 1]``."""
    s_arr = np.asarray(s, dtype=float)
    if np.any((s_arr < 0) | (s_arr > 1)):
        raise DomainError("pgf argument must lie in [0, 1]")
    out = _powers(s_arr, law.ks) @ law.ps
    return float(out) if out.ndim == 0 else out


def _pgf(law, s):
    return _powers(s, law.ks) @ law.ps


def _pgf_prime(law, s):
    ks = law.ks
    mask = ks > 0
    kk = ks[mask]
    return (_powers(s, kk - 1) * kk) @ law.ps[mask] if mask.any() else np.zeros(np.shape(s))


def extinction_prob(law: OffspringLaw) -> float:
    """Smallest root of ``G(s) = s`` on ``[0, 1]``.

    ``G(s) - s`` is convex with a root at 1, so it has at most one other
    root, found by bisection to the left of its minimiser. The degenerate
    law ``{1: 1}`` returns 0 (see :attr:`OffspringLaw.is_degenerate`).
    """
    if law.is_degenerate or law.p0 == 0:
        return 0.0
    if law.mean <= 1:
        return 1.0

    def h(s):
        return float(_pgf(law, s)) - s

    def dh(s):
        return float(_pgf_prime(law, s)) - 1.0

    s_min = bisect(dh, 0.0, 1.0, tol=ROOT_TOL)
    return bisect(h, 0.0, s_min, tol=ROOT_TOL)


@dataclass(frozen=True)
class ReactionFn:
    law: OffspringLaw
    alpha: float
    beta: float
    gamma: float

    @classmethod
    def from_law(cls, law: OffspringLaw) -> "ReactionFn":
        alpha = extinction_prob(law)
        return cls(law=law, alpha=alpha, beta=1.0 - alpha, gamma=law.mean - 1.0)

    @property
    def degenerate(self) -> bool:
        return self.law.is_degenerate

    @property
    def slope_bound(self) -> float:
        """Uniform bound on ``|f'|`` over ``[0, 1]``."""
        return self.law.mean + 1.0

    def f(self, u):
        return _pgf(self.law, u) - np.asarray(u, dtype=float)

    def f_prime(self, u):
        return _pgf_prime(self.law, u) - 1.0

    def g(self, v):
        return -self.f(1.0 - np.asarray(v, dtype=float))


def reaction_fn(law: OffspringLaw) -> ReactionFn:
    return ReactionFn.from_law(law)


def _check_unit(u):
    u = np.asarray(u, dtype=float)
    if np.any((u < 0) | (u > 1)):
        raise DomainError("argument must lie in [0, 1]")
    return u


def f_eval(rf: ReactionFn, u):
    out = rf.f(_check_unit(u))
    return float(out) if np.ndim(out) == 0 else out


def f_prime(rf: ReactionFn, u):
    out = rf.f_prime(_check_unit(u))
    return float(out) if np.ndim(out) == 0 else out


def _fprime_inverse(rf: ReactionFn, z):
    """Solve ``f'(v) = z`` for ``v`` in ``[0, 1]``, vectorised."""
    ks, ps = rf.law.ks, rf.law.ps
    if rf.law.degree <= 2:
        # f'(v) = p1 - 1 + 2 p2 v
        p1 = ps[ks == 1].sum()
        p2 = ps[ks == 2].sum()
        if p2 == 0:
            return np.zeros_like(z)
        return np.clip((z + 1.0 - p1) / (2.0 * p2), 0.0, 1.0)
    lo = np.zeros_like(z)
    hi = np.ones_like(z)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        below = rf.f_prime(mid) < z
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def fhat(rf: ReactionFn, z, check=True):
    """Convex conjugate ``sup_{v in [0,1]} (v z - f(v))`` for ``z`` in ``[-1, gamma]``."""
    z = np.asarray(z, dtype=float)
    if check:
        lo, hi = float(rf.f_prime(0.0)), float(rf.f_prime(1.0))
        if np.any(z < lo - 1e-12) | np.any(z > hi + 1e-12):
            raise DomainError(f"z must lie in [{lo}, {hi}]")
    v = _fprime_inverse(rf, z)
    out = v * z - rf.f(v)
    return float(out) if out.ndim == 0 else out


def _flow(fun, y0, t):
    y0 = np.asarray(y0, dtype=float)
    if t == 0 or y0.size == 0:
        return y0.copy()
    uniq, inv = np.unique(y0.ravel(), return_inverse=True)
    sol = solve_ivp(
        lambda _, y: fun(y),
        (0.0, float(t)),
        uniq,
        method="DOP853",
        rtol=ODE_RTOL,
        atol=ODE_ATOL,
        t_eval=[float(t)],
        vectorized=False,
    )
    if not sol.success:
        raise RuntimeError(sol.message)
    return sol.y[:, -1][inv].reshape(y0.shape)


def R_t(rf: ReactionFn, r0, t: float):
    """Reaction flow ``r' = f(r)`` run for time ``t``, clamped to ``[0, 1]``."""
    if t < 0:
        raise DomainError("t must be >= 0")
    r0 = _check_unit(r0)
    out = np.clip(_flow(rf.f, r0, t), 0.0, 1.0)
    # pin the fixed points
    out = np.where(r0 == 1.0, 1.0, out)
    out = np.where(r0 == rf.alpha, rf.alpha, out)
    return float(out) if out.ndim == 0 else out


def Q_t(rf: ReactionFn, q0, t: float):
    out = 1.0 - R_t(rf, 1.0 - _check_unit(q0), t)
    return float(out) if np.ndim(out) == 0 else out


def Q_inverse(rf: ReactionFn, b, delta: float):
    """Preimage of ``b`` under ``Q_delta``, by running ``q' = -g(q)`` for ``delta``."""
    b = np.asarray(b, dtype=float)
    if np.any((b <= 0) | (b >= rf.beta)):
        raise DomainError(f"b must lie in (0, {rf.beta})")
    if delta < 0:
        raise DomainError("delta must be >= 0")
    out = np.clip(_flow(lambda q: -rf.g(q), b, delta), 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def parse_offspring(text: str) -> OffspringLaw:
    """Parse ``k:p,k:p`` pairs."""
    pairs = []
    for item in text.strip().split(","):
        k, p = item.split(":")
        pairs.append((int(k), float(p)))
    return OffspringLaw(tuple(pairs))


def law_from_config(cfg: dict) -> OffspringLaw:
    return parse_offspring(str(cfg.get("offspring", "2:1")))
