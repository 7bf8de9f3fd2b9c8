"""panconv: path-integral graph convolution with maximal-entropy transition
propagators, a from-scratch trainable two-layer network, and a benchmark
harness for semi-supervised node classification."""

from .data import GraphDataset, load_dataset, save_dataset, validate_dataset
from .graph import Graph, PathKind, SparseMatrix, build_csr
from .propagator import (
    EnergyForm,
    Propagator,
    PropagatorConfig,
    build_propagator,
    map_to_grid_stencil,
)
from .train import TrainConfig, evaluate, grid_search_k, run_trials, train_model

__version__ = "0.1.0"

__all__ = [
    "EnergyForm",
    "Graph",
    "GraphDataset",
    "PathKind",
    "Propagator",
    "PropagatorConfig",
    "SparseMatrix",
    "TrainConfig",
    "build_csr",
    "build_propagator",
    "evaluate",
    "grid_search_k",
    "load_dataset",
    "map_to_grid_stencil",
    "run_trials",
    "save_dataset",
    "train_model",
    "validate_dataset",
    "__version__",
]
