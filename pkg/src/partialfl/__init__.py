"""Partial-training federated learning with rolling, random and static sub-model extraction."""

from .aggregation import ClientUpdate, aggregate, client_weight, fedavg_reference
from .config import ConfigError, ExperimentConfig, MetricsRecord
from .data import (
    Dataset,
    PartitionPlan,
    cost_report,
    gen_synthetic,
    global_accuracy,
    local_accuracy,
    partition_by_labels,
    partition_dirichlet,
)
from .extraction import (
    SubModel,
    coverage_counts,
    extract_submodel,
    random_index_set,
    rolling_index_set,
    scatter_submodel,
    static_index_set,
)
from .federation import assign_capacities, client_step, run_experiment, run_round, sample_cohort
from .lemmas import expected_rounds_m, expected_rounds_once, monte_carlo_rounds, rolling_rounds_to_cover
from .model import Batch, ModelSpec, OptimizerState, ParamStore, forward, init_params, loss_and_grad, sgd_step

__version__ = "0.1.0"
