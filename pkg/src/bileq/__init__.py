"""Proximal splitting solvers for bilevel equilibrium problems.

Find x in S_f with g(x, y) >= 0 for all y in S_f, where S_f is the
solution set of the equilibrium problem f(u, z) >= 0 for all z in K.
"""

from .algorithms import (
    ALPHA_MAX,
    Method,
    Regime,
    Schedule,
    StopRule,
    Trace,
    ipsa_step,
    inertial_prox_step,
    ppm_penalization_step,
    psm_step,
    rppm_step,
    run,
    validate_regime,
)
from .bifunctions import (
    AffineBifunction,
    CallableBifunction,
    CombinedBifunction,
    DifferenceBifunction,
    MaxOneNorm,
    ShiftedQuadratic,
    ZeroBifunction,
    check_monotone,
    check_strong_monotone,
)
from .core import Ball, Box, Halfspace, WholeSpace, project, support_function
from .problems import Problem, get_problem, paper_r5, quadratic_hierarchical
from .resolvents import prox_max_one_norm, resolvent

__version__ = "0.1.0"
