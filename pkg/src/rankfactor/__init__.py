"""Discriminative Bayesian factor models built on data ranks.

The library couples a max-margin rank likelihood for the observation matrix
with Bayesian SVM classifiers on the latent factor scores, three-parameter
beta-normal (horseshoe-type) shrinkage on loadings and coefficients, and an
optional truncated Dirichlet-process mixture that turns the classifier into a
mixture of local linear experts. Inference runs by Gibbs sampling or by
deterministic variational moment updates.
"""

from .samplers import RandomStream, sample_inverse_gaussian, sample_gig, eps_loss
from .bessel import log_bessel_k, bessel_k_ratio
from .ranks import RankIndex, RankedFeature, build_rank_index, lower_upper_groups, test_bounds
from .model import Hyperparams, LoadingsState, ScoresState, ClassifierState, RankAugmentation, DpmState, ModelState, Dataset, init_state, log_pseudo_joint
from .gibbs import GibbsConfig, PosteriorSummary, run_gibbs
from .vb import VariationalMoments, VbReport, run_vb
# PENDING from .predict import TrainedModel, Prediction, infer_test_scores, predict, auc, kfold_cv
# PENDING from .synthetic import generate_synthetic

__version__ = "0.1.0"

__all__ = [
    "RandomStream",
    "sample_inverse_gaussian",
    "sample_gig",
    "eps_loss",
    "log_bessel_k",
    "bessel_k_ratio",
    "RankIndex",
    "RankedFeature",
    "build_rank_index",
    "lower_upper_groups",
    "test_bounds",
    "Hyperparams",
    "LoadingsState",
    "ScoresState",
    "ClassifierState",
    "RankAugmentation",
    "DpmState",
    "ModelState",
    "Dataset",
    "init_state",
    "log_pseudo_joint",
    "GibbsConfig",
    "PosteriorSummary",
    "run_gibbs",
    "VariationalMoments",
    "VbReport",
    "run_vb",
    "TrainedModel",
    "Prediction",
    "infer_test_scores",
    "predict",
    "auc",
    "kfold_cv",
    "generate_synthetic",
    "__version__",
]
