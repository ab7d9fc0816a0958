"""Convex reaction-diffusion equations driven by Levy generators.

Modules: :mod:`levy` (cumulants, sampling, front speed), :mod:`reaction`
(offspring laws and reaction flows), :mod:`semigroup` (grid solver and
splitting brackets), :mod:`control` (Monte Carlo control functional),
:mod:`branching` (branching process simulator) and :mod:`cli`.
"""

from .levy import LevyModel, front_speed, standard_bm
from .reaction import OffspringLaw, ReactionFn, dyadic, reaction_fn
from .semigroup import GridFn, heaviside_grid, solve, trotter_bounds

__all__ = [
    "GridFn",
    "LevyModel",
    "OffspringLaw",
    "ReactionFn",
    "dyadic",
    "front_speed",
    "heaviside_grid",
    "reaction_fn",
    "solve",
    "standard_bm",
    "trotter_bounds",
]
