"""Low-rank matrix completion by clipped soft-impute under Bernoulli sampling."""

from .engine import (
    CompletionConfig,
    CompletionResult,
    DenseRule,
    GeneralRule,
    IterationTrace,
    impute_step,
    objective_f,
    q_value,
    run,
    select_lambda_dense,
    select_lambda_general,
    stop_check,
)
from .estimator import SoftImputeClip, USVTImputer
from .linalg import (
    IndexSet,
    SvdFactors,
    clip,
    frobenius_norm,
    nuclear_norm,
    operator_norm,
    restrict,
    soft_threshold,
    sup_norm,
    svd,
)
from .sampling import (
    MarginalSummary,
    NoiseModel,
    ObservationSet,
    SamplingModel,
    draw_mask,
    empirical_marginals,
    feasibility_check,
    marginals,
    observe,
    weighted_norm_sq,
)

__version__ = "0.1.0"
