"""Decentralized optimization with affine coupled constraints."""
from .chebyshev import ChebyshevSchedule, LiftedOperators, LiftedVector, mul_wprime
from .errors import CoupledError
from .graphs import Graph, GossipMatrix, gossip_from_matrix, laplacian_gossip, make_graph
from .libsvm import SparseExamples, parse_libsvm, read_libsvm
from .oracle import ReferenceSolution, kkt_oracle
from .problems import (
    ObjectiveBlock,
    ProblemInstance,
    gen_conditioned_quadratic,
    gen_lower_bound_instance,
    gen_resource_allocation,
    gen_synthetic_regression,
    gen_vfl,
)
from .simnet import Counters, SimNet
from .solver import (
    ConvergenceTrace,
    SolveResult,
    SolverParams,
    default_params,
    exact_params,
    grad_G,
    solve,
)
from .spectral import DerivedConstants, constants_for

__version__ = "0.1.0"
