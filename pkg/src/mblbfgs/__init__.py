"""Multi-batch L-BFGS with overlap-consistent curvature updating.

The solver steps on a sizeable changing batch each iteration and keeps
quasi-Newton updating stable by differencing gradients on the overlap between
consecutive batches, including under simulated node failures. Baselines,
convergence-bound verifiers, and a CLI for traces/sweeps/plots are included.
"""

__version__ = "0.1.0"

from .data import Dataset, ParseError, SyntheticSpec, generate_synthetic, parse_libsvm, to_libsvm_text
from .lbfgs import (
    CurvaturePair,
    LbfgsMemory,
    dense_direct_hessian,
    dense_inverse_hessian,
    two_loop_direction,
)
from .objective import (
    BatchEval,
    CauchyProblem,
    LogisticProblem,
    Problem,
    QuadraticProblem,
    full_gradient_norm,
)
from .sampling import (
    BatchPlan,
    NodePartition,
    fault_sampler,
    partition_sampler,
    shuffle_redistribute,
    subsample_sampler,
)
from .solver import (
    ConfigError,
    IterationRecord,
    PairEvent,
    RunResult,
    SolverConfig,
    initial_point,
    run,
)

__all__ = [
    "__version__",
    "BatchEval",
    "BatchPlan",
    "CauchyProblem",
    "ConfigError",
    "CurvaturePair",
    "Dataset",
    "IterationRecord",
    "LbfgsMemory",
    "LogisticProblem",
    "NodePartition",
    "PairEvent",
    "ParseError",
    "Problem",
    "QuadraticProblem",
    "RunResult",
    "SolverConfig",
    "SyntheticSpec",
    "dense_direct_hessian",
    "dense_inverse_hessian",
    "fault_sampler",
    "full_gradient_norm",
    "generate_synthetic",
    "initial_point",
    "parse_libsvm",
    "partition_sampler",
    "run",
    "shuffle_redistribute",
    "subsample_sampler",
    "to_libsvm_text",
    "two_loop_direction",
]
