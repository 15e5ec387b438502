"""Attribution of Wasserstein distances to instance pairs, features and subspaces."""

__version__ = "0.1.0"

from .dataset import DataMatrix, load_csv, standardize, time_series_pairing, ground_truth_relevance
from .ot import WassersteinSpec, Coupling, pair_distances, solve_exact, solve_sinkhorn, uniform_coupling, wasserstein_distance
from .wax import WaxHyperparams, Attribution, default_hyperparams, explain
from .uwax import SubspaceBasis, SubspaceOptConfig, explain_subspaces, learn_subspaces, principal_subspace_eigen
from .evaluation import cosine_similarity, rank_features, srg

__all__ = [
    "Attribution",
    "Coupling",
    "DataMatrix",
    "SubspaceBasis",
    "SubspaceOptConfig",
    "WassersteinSpec",
    "WaxHyperparams",
    "cosine_similarity",
    "default_hyperparams",
    "explain",
    "explain_subspaces",
    "ground_truth_relevance",
    "learn_subspaces",
    "load_csv",
    "pair_distances",
    "principal_subspace_eigen",
    "rank_features",
    "solve_exact",
    "solve_sinkhorn",
    "srg",
    "standardize",
    "time_series_pairing",
    "uniform_coupling",
    "wasserstein_distance",
]
