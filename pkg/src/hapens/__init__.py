"""Hardware-aware post-hoc ensemble selection.

Builds sets of ensembles from a library of pretrained models (given as
probability matrices plus per-model hardware costs) that trade predictive
loss against deployment cost, and scores those sets with hypervolume and
IGD+.
"""
from .ensemble import Ensemble, EnsembleSet, Evaluator
from .indicators import (
    brute_force_front,
    build_objective_space,
    hypervolume_2d,
    igd_plus,
    pareto_front,
    reference_front,
)
from .library import (
    HardwareCost,
    LibraryError,
    ModelEntry,
    ModelLibrary,
    SyntheticConfig,
    generate_synthetic,
    load_library,
    validate_library,
    write_library,
)
from .metrics import (
    EnsembleCosts,
    average_loss_correlation,
    ensemble_costs,
    ensemble_predict,
    fitness_loss,
    hardware_aggregate,
    min_max_normalize,
    per_sample_log_loss,
    roc_auc,
    to_weights,
)
from .qdo import HapensConfig, hapens_run, qdo_es_run
from .selectors import MultiGesConfig, ges, ges_star, multi_ges, single_best

__version__ = "0.1.0"
