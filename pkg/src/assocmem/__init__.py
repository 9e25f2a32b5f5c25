"""Linear associative memory trained with spectral optimizers."""

from .capacity import CapacityReport, capacity, critical_batch_estimate, is_recovered
from .distmodel import (
    POPULATION,
    CovarianceSpec,
    EmbeddingSet,
    FrequencyDistribution,
    MinibatchWeights,
    population_weights,
    power_law_dist,
    sample_embeddings,
    sample_minibatch,
)
from .objective import (
    deflated_gradient,
    gradient,
    hessian_apply,
    hessian_factors,
    hessian_inverse_apply,
    loss,
    scores,
)
from .optimizers import (
    EtaSchedule,
    EvalOptions,
    LambdaSchedule,
    OptimizerSpec,
    gd_schedule,
    muon_step,
    newton_step,
    run_trajectory,
    sgd_step,
    theory_schedules,
)
from .scalingfit import FitResult, fit_alpha_form, fit_power_law
from .spectral import (
    NewtonSchulzSpec,
    h_lambda_apply,
    newton_schulz_apply,
    polar,
    signal_slope,
    spectral_map,
    svd,
)

__version__ = "0.1.0"
