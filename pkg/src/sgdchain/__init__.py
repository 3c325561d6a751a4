"""Constant step size SGD studied as a Markov chain.

Tools to simulate ensembles of SGD chains, diagnose the normality of their
averages, estimate long-run variances and step-size bias, and evaluate or
check the regularity constants behind those results.
"""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    LocalGrowthFn,
    Objective,
    RegularityConstants,
    SgdConfig,
    TestFunction,
    Trajectory,
    finite_diff_grad,
    gradient_check,
    parse_test_function,
)
from .errors import (  # noqa: E402
    CertificationError,
    DivergenceError,
    EmptyWindowError,
    EvaluationError,
    NotFoundError,
    SgdChainError,
    StepSizeError,
    UnsupportedObjectiveError,
)
from .noise import NoiseModel, RngStream, gen_regression_data  # noqa: E402
from .objectives import (  # noqa: E402
    BlakeZissermanMLE,
    CauchyRegMLE,
    QuadSine,
    Quadratic,
    SimplifiedBZ,
    SimplifiedCauchy,
    hessian_negativity_witness,
    make_objective,
)
from .sgd import (  # noqa: E402
    EnsembleRun,
    SgdState,
    polyak_ruppert_average,
    run_ensemble,
    run_trajectory,
    scaled_partial_sum,
    sgd_step,
)

__all__ = [name for name in dir() if not name.startswith("_")]
