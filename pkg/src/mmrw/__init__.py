"""Decay rates and occupation measures of 2d skip-free Markov-modulated random walks.

Submodules
----------
model       model type, parsing, validation, drift
spectral    Feynman-Kac operator and Perron roots
gamma       geometry of the region ``chi <= 1``
decay       decay rates and the convergence domain
occupation  truncated and simulated occupation measures
qbd         QBD representations, rate matrices, re-blockings
cli         command-line front end
"""
__version__ = "0.1.0"

from mmrw._accel import get_backend, set_backend, use_backend
from mmrw.model import (
    MMRWModel,
    drift,
    load_model,
    parse_model,
    reference_model,
    swap_axes,
    validate,
)
from mmrw.spectral import chi, feynman_kac, perron_root
from mmrw.gamma import extreme_points, gamma_contains, trace_boundary, zeta2_section
from mmrw.decay import decay_rate, domain_contains, marginal_decay_rate
from mmrw.occupation import simulate_occupation, truncated_fundamental

__all__ = [
    "MMRWModel",
    "chi",
    "decay_rate",
    "domain_contains",
    "drift",
    "extreme_points",
    "feynman_kac",
    "gamma_contains",
    "get_backend",
    "load_model",
    "marginal_decay_rate",
    "parse_model",
    "perron_root",
    "reference_model",
    "set_backend",
    "simulate_occupation",
    "swap_axes",
    "trace_boundary",
    "truncated_fundamental",
    "use_backend",
    "validate",
    "zeta2_section",
]
