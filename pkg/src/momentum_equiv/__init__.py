"""Momentum SGD versus plain SGD with a rescaled step: simulation toolkit."""

from .data_stream import (
    DatasetStream,
    RegressionStream,
    SampleStream,
    StreamSeed,
    make_logistic_dataset,
    make_logistic_stream,
    make_regression_stream,
    random_diagonal_covariance,
)
from .experiments import (
    ScalingPoint,
    StabilityReport,
    TrajectoryStats,
    d_max_d_ss,
    default_steps,
    diminishing_momentum_experiment,
    fit_slope,
    moment_sweep,
    msd_curve,
    run_coupled_pair,
    scaling_sweep,
    simulate,
    stability_probe,
    to_db,
)
from .optimizers import (
    BetaStairSchedule,
    DecayingStepScale,
    MomentumConfig,
    MomentumState,
    SgdConfig,
    equivalent_stepsize,
    momentum_init,
    momentum_step,
    sgd_step,
    stair_beta,
    validate_momentum_config,
)
from .risk_models import (
    ConvergenceError,
    LabeledFeature,
    LogisticRiskSpec,
    QuadraticRiskSpec,
    Regression,
    compute_minimizer,
    estimate_xi1,
    gradient_noise,
    hessian_bounds,
    loss_gradient,
    pointwise_loss,
    true_gradient,
)
from .transform import TransformedPair, beta_prime, extended_recursion_step, from_transformed, to_transformed

__version__ = "0.1.0"
