"""Random walks on T^d x R: exact models, log-scale products, Monte Carlo and exact oracles"""

from .cartan import CartanFrame, Flag, LogVector, cartan_projection, lyapunov_estimate, theta_n
from .core_model import (GroupElement, StateXT, TorusPoint, WalkConfig, Word, apply, chi_of_word,
                         load_walk_config, reference_model, word_product)
from .empirical import EmpiricalMeasure, atom_detect, real_marginal_invariance, weyl_sum
from .exceptions import (ConfigError, DimensionError, GapError, LabError, MemoryGuardError,
                         NumericalRangeError, PeriodicityError, PreconditionError)
from .fiber_lab import BasePoint, FiberSample, WindowSpec, fiber_point, window_conditional_sample
from .llt_lab import LatticeDist, joint_llt_estimate, lattice_dp, llt_1d_check, return_time_dp
from .orbits import block_orbit_components, rational_orbit
from .walk_sim import Censored, ReturnSample, Trajectory, first_return_sampler, simulate

__all__ = [
    "BasePoint", "CartanFrame", "Censored", "ConfigError", "DimensionError", "EmpiricalMeasure",
    "FiberSample", "Flag", "GapError", "GroupElement", "LabError", "LatticeDist", "LogVector",
    "MemoryGuardError", "NumericalRangeError", "PeriodicityError", "PreconditionError", "ReturnSample",
    "StateXT", "TorusPoint", "Trajectory", "WalkConfig", "WindowSpec", "Word", "apply", "atom_detect",
    "block_orbit_components", "cartan_projection", "chi_of_word", "fiber_point", "first_return_sampler",
    "joint_llt_estimate", "lattice_dp", "llt_1d_check", "load_walk_config", "lyapunov_estimate",
    "rational_orbit", "real_marginal_invariance", "reference_model", "return_time_dp", "simulate",
    "theta_n", "weyl_sum", "window_conditional_sample", "word_product",
]
