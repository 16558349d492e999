"""Daily state maps and Bayesian planar VAR models.

Pipeline in one breath: standardize gridded daily fields into state vectors,
train a self-organizing map, embed its nodes in the plane, project every day
onto that plane, then fit and compare a ladder of space-time vector
autoregressions on the projected trajectory.
"""

__version__ = "0.1.0"

from . import errors
from .data_model import (
    GridSpec,
    RawSeries,
    StateSeries,
    Standardization,
    as_matrix,
    destandardize,
    flatten,
    load_series,
    save_series,
    standardize,
    to_raw,
    unflatten,
)
from .som import (
    SomConfig,
    SomModel,
    assign,
    find_winner,
    lattice_coords,
    load_som,
    quantization_error,
    save_som,
    train_batch,
    train_online,
)
from .projection import (
    GreedyProjector,
    PlanarSeries,
    SammonConfig,
    SammonResult,
    Tessellation,
    load_planar,
    project_point,
    project_series,
    sammon_embed,
    sammon_stress,
    save_planar,
)
from .models import (
    MODEL_ALIASES,
    Calendar,
    DesignInfo,
    DesignPair,
    JitterPolicy,
    KnotGrid,
    ModelSpec,
    SpatialAdjust,
    build_design,
    log_likelihood,
    mle_var,
    resolve_spec,
    rw_sigma_mle,
)
from .synthetic import (
    TruthBundle,
    default_tessellation,
    ladder_truth,
    simulate_uniform_cloud,
    simulate_var,
)
from .mcmc import (
    Chain,
    McmcConfig,
    PosteriorDraw,
    SeriesPrediction,
    chain_design,
    load_chain,
    predict_one_step,
    predict_series,
    run_chain,
    save_chain,
    split_rhat,
)
from .evaluate import (
    DicResult,
    LagScanResult,
    ModelScore,
    TransitionMatrix,
    coverage,
    dic,
    empirical_transitions,
    model_transitions,
    node_field_maps,
    node_frequencies,
    node_table,
    repair_pd,
    rmspe,
    score_model,
    score_to_dict,
    transition_distances,
    var_lag_aic,
)

__all__ = [
    "Calendar",
    "Chain",
    "DesignInfo",
    "DesignPair",
    "DicResult",
    "GreedyProjector",
    "GridSpec",
    "JitterPolicy",
    "KnotGrid",
    "LagScanResult",
    "MODEL_ALIASES",
    "McmcConfig",
    "ModelScore",
    "ModelSpec",
    "PlanarSeries",
    "PosteriorDraw",
    "RawSeries",
    "SammonConfig",
    "SammonResult",
    "SeriesPrediction",
    "SomConfig",
    "SomModel",
    "SpatialAdjust",
    "StateSeries",
    "Standardization",
    "Tessellation",
    "TransitionMatrix",
    "TruthBundle",
    "as_matrix",
    "assign",
    "build_design",
    "chain_design",
    "coverage",
    "default_tessellation",
    "destandardize",
    "dic",
    "empirical_transitions",
    "errors",
    "find_winner",
    "flatten",
    "ladder_truth",
    "lattice_coords",
    "load_chain",
    "load_planar",
    "load_series",
    "load_som",
    "log_likelihood",
    "mle_var",
    "model_transitions",
    "node_field_maps",
    "node_frequencies",
    "node_table",
    "predict_one_step",
    "predict_series",
    "project_point",
    "project_series",
    "quantization_error",
    "repair_pd",
    "resolve_spec",
    "rmspe",
    "run_chain",
    "rw_sigma_mle",
    "sammon_embed",
    "sammon_stress",
    "save_chain",
    "save_planar",
    "save_series",
    "save_som",
    "score_model",
    "score_to_dict",
    "simulate_uniform_cloud",
    "simulate_var",
    "split_rhat",
    "standardize",
    "to_raw",
    "train_batch",
    "train_online",
    "transition_distances",
    "unflatten",
    "var_lag_aic",
    "__version__",
]
