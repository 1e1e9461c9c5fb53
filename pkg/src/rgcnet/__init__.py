"""Reservoir graph convolutional networks on a small numpy autodiff core."""
from .classify import ClassifierConfig, GraphClassifier, classify_forward, nll_loss, predict
from .data import Dataset, SimulatorParams, load_connectome_dataset, load_tu_dataset, simulate_longitudinal
from .errors import (
    ConfigurationError,
    ContractError,
    DimensionError,
    DomainError,
    IngestionError,
    NumericError,
    ParameterError,
    RGCError,
    StratificationError,
)
from .generate import GeneratorConfig, GeneratorModel, composite_loss, decode, encode, identity_baseline
from .graph import Graph, Permutation, normalize_adjacency, permute
from .harness import ExperimentConfig, nested_cv_run
from .metrics import EvalReport, evaluate
from .reservoir import ReservoirLayer, adjust_spectral_radius

__version__ = "0.1.0"
