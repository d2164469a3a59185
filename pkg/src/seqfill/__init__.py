"""Sequence reconstruction with missing data: Gaussian-mixture conditional
modes as per-step candidates and a dynamic-programming search over them
that minimises a trajectory constraint."""

from .constraints import (ConstraintSpec, Continuity, ForwardMapping, NormKind, Quadratic, Smoothness,
                          parse_constraint)
from .mixture import GaussianMixture, IndexSplit, ModelSupportError, condition, marginal, prune
from .modes import ModeSet, find_all_modes, global_mode
from .reconstruct import (METHODS, CandidateSet, MaskedSequence, avg_squared_error, build_candidates,
                          dp_reconstruct, greedy_reconstruct, reconstruct, reconstruct_detailed,
                          split_at_singletons)
from .training import GtmModel, TrainConfig, em_fit_isotropic, gtm_fit, gtm_to_mixture

__all__ = [
    "ConstraintSpec", "Continuity", "ForwardMapping", "NormKind", "Quadratic", "Smoothness",
    "parse_constraint", "GaussianMixture", "IndexSplit", "ModelSupportError", "condition", "marginal",
    "prune", "ModeSet", "find_all_modes", "global_mode", "METHODS", "CandidateSet", "MaskedSequence",
    "avg_squared_error", "build_candidates", "dp_reconstruct", "greedy_reconstruct", "reconstruct",
    "reconstruct_detailed", "split_at_singletons", "GtmModel", "TrainConfig", "em_fit_isotropic",
    "gtm_fit", "gtm_to_mixture",
]
