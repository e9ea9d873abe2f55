"""FDR-controlled variable selection for time series.

Builds approximate Gaussian knockoffs, computes signed importance
statistics (Lasso coefficient differences or random-forest MDA) on
interleaved subsamples, converts each subsample's knockoff filter into
e-values, and selects variables with e-BH at a target FDR level.
"""

from .diagnostics import (
    KlSamples,
    MixingBoundParams,
    fdr_bound,
    fdr_bound_report,
    gaussian_kl_stats,
    kl_draws_from_simulation,
    mixing_bound,
)
from .errors import TskiError
from .filters import (
    FilterParams,
    KnockoffStats,
    SelectionResult,
    aggregate_evalues,
    ebh_select,
    evalues_single,
    knockoff_threshold,
    lcd_statistics,
    subsample_indices,
    tski_run,
)
from .forest import Forest, ForestConfig, fit_forest, mda_statistics, predict, predict_many
from .fredmd import (
    FrequencyReport,
    MacroPanel,
    RollingDesign,
    apply_tcode,
    build_rolling,
    compute_inflation,
    parse_panel,
    rolling_inference,
)
from .knockoffs import (
    GaussianKnockoffModel,
    ShrinkageConfig,
    exact_model_from_truth,
    fit_knockoff_model,
    sample_knockoffs,
)
from .lasso import CrossValidated, LassoConfig, LassoFit, coordinate_descent, cv_select_lambda, lambda_path
from .numerics import RngStream, cholesky, min_eigenvalue, solve_spd, standardize_columns
from .simulate import (
    DgpSpec,
    McReport,
    SimDataset,
    assemble_covariates,
    fdp_power,
    gen_exogenous,
    gen_response,
    monte_carlo,
    simulate_dataset,
)

__version__ = "0.1.0"
