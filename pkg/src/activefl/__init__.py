"""Federated learning simulator with active, valuation-driven client selection."""

from .datagen import FederatedDataset, SyntheticSpec, generate, minority_fraction
from .estimator import ActiveFederatedClassifier
from .exceptions import (
    ActiveFLError,
    ConfigError,
    DimensionError,
    EmptyDataError,
    GenerationError,
    NumericError,
)
from .model import (
    ClientDataset,
    ModelParams,
    TrainConfig,
    fedavg_aggregate,
    gradient,
    local_train,
    per_example_loss,
    predict,
)
from .orchestrator import (
    ExperimentConfig,
    ExperimentResult,
    RoundRecord,
    compare_strategies,
    run_experiment,
    run_round,
)
from .privacy import PrivacyConfig, clip_per_example_losses, laplace_noise, privatize_valuation
from .selection import SelectionPolicy, argmax_client, sample_clients, to_sampling_distribution
from .valuation import (
    Valuation,
    ValuationTable,
    count_high_loss_valuation,
    loss_valuation,
    update_valuation_table,
)

__version__ = "0.1.0"
