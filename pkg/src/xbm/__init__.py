"""Sparse Boltzmann machines on scale-free, small-world bipartite topologies."""
from .data import Dataset, binarize, kfold, load_csv, load_idx, normalize, synthetic_gaussian
from .errors import (ConstructionError, FormatError, ParameterError, TopologyWarning,
                     TrainingDivergence, UnsupportedSizeError, XBMError)
from .evaluation import (EvalReport, ais_log_z, avg_log_prob, exact_log_z, haversine_km,
                         impute_visible, pcc, reconstruct, rmse)
from .graph import BipartiteGraph
from .kernels import BACKEND
from .models import BoltzmannMachine
from .topology import (TopologyParams, TopologyResult, average_shortest_path,
                       bipartite_clustering_coefficient, fit_to_data, generate_topology)
from .training import TrainConfig, cd_gradients, train, train_prune_train

__version__ = "0.1.0"

__all__ = [
    "Dataset", "binarize", "kfold", "load_csv", "load_idx", "normalize", "synthetic_gaussian",
    "ConstructionError", "FormatError", "ParameterError", "TopologyWarning",
    "TrainingDivergence", "UnsupportedSizeError", "XBMError",
    "EvalReport", "ais_log_z", "avg_log_prob", "exact_log_z", "haversine_km",
    "impute_visible", "pcc", "reconstruct", "rmse",
    "BipartiteGraph", "BACKEND", "BoltzmannMachine",
    "TopologyParams", "TopologyResult", "average_shortest_path",
    "bipartite_clustering_coefficient", "fit_to_data", "generate_topology",
    "TrainConfig", "cd_gradients", "train", "train_prune_train",
]
