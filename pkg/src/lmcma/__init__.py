"""Limited-memory CMA-ES with full-matrix and diagonal baselines.

Three derivative-free minimizers behind one ask/tell interface:

- `LMCMA`: limited-memory CMA-ES, O(mn) time and memory, population
  success rule for step size;
- `CholeskyCMA`: full-matrix rank-one CMA-ES with incrementally updated
  Cholesky factor and inverse, O(n^2), CSA step size;
- `SepCMA`: diagonal-only covariance adaptation, O(n), CSA step size;

plus the benchmark problems they are measured on and a CSV-emitting
experiment harness (see `lmcma.cli` for the command line).
"""

from .benchmarks import (
    ellipsoid,
    make_problem,
    random_rotation,
    rosenbrock,
    rotated_ellipsoid,
    sphere,
)
from .cholesky import CholeskyCMA, CholeskyParams
from .core import (
    NumericalFailureError,
    ObjectiveProblem,
    Optimizer,
    RecombinationWeights,
    RunStatus,
    RunTrace,
    SeededRng,
    Termination,
    TraceRecord,
    default_lambda,
    expected_norm,
    make_weights,
    run_minimizer,
    sample_standard_normal_vector,
)
from .lmcma import (
    LMCMA,
    DirectionStore,
    LmcmaParams,
    ainvz,
    az,
    load_state,
    reconstruction_coefficients,
    save_state,
    update_set,
)
from .sepcma import SepCMA, SepCmaParams

__version__ = "0.1.0"

__all__ = [
    "LMCMA",
    "CholeskyCMA",
    "SepCMA",
    "LmcmaParams",
    "CholeskyParams",
    "SepCmaParams",
    "DirectionStore",
    "ObjectiveProblem",
    "Optimizer",
    "NumericalFailureError",
    "RecombinationWeights",
    "RunStatus",
    "RunTrace",
    "TraceRecord",
    "SeededRng",
    "Termination",
    "default_lambda",
    "expected_norm",
    "make_weights",
    "make_problem",
    "run_minimizer",
    "sample_standard_normal_vector",
    "save_state",
    "load_state",
    "az",
    "ainvz",
    "update_set",
    "reconstruction_coefficients",
    "sphere",
    "ellipsoid",
    "rotated_ellipsoid",
    "rosenbrock",
    "random_rotation",
    "__version__",
]
