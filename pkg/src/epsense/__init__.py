"""Compressed sensing reconstruction with Expectation Propagation and a
spike-and-slab prior."""

from epsense.errors import InfeasibleSystemError, NumericalError, ParameterError
from epsense.problem import (
    SensingMatrix,
    SensingProblem,
    SparseSignal,
    gen_correlated_matrix,
    gen_iid_matrix,
    gen_sparse_signal,
    make_problem,
    measure,
)
from epsense.prior import CavityMarginal, PriorParams, TiltedMoments, tilted_moments
from epsense.ep import EPConfig, EPResult, EPState, run_ep
from epsense.ep_zero import run_ep_zero_t
from epsense.omp import OMPConfig, omp_reconstruct

__version__ = "0.1.0"

__all__ = [
    "CavityMarginal",
    "EPConfig",
    "EPResult",
    "EPState",
    "InfeasibleSystemError",
    "NumericalError",
    "OMPConfig",

    "ParameterError",
    "PriorParams",
    "SensingMatrix",
    "SensingProblem",
    "SparseSignal",
    "TiltedMoments",
    "gen_correlated_matrix",
    "gen_iid_matrix",
    "gen_sparse_signal",
    "make_problem",
    "measure",
    "omp_reconstruct",

    "run_ep",
    "run_ep_zero_t",

    "tilted_moments",
]
