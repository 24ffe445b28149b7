"""Privacy-preserving collaborative training of binary QoE classifiers:
isolated, centralized, round-robin and federated regimes over disjoint user
groups, exchanging only serialized model weights."""

from .data import GroupDataset, load_csv, partition, split_train_test, synthesize_group, synthesize_reference_groups
from .metrics import MetricSummary, detect_saturation, mean_ci, roc_auc_exact, roc_auc_scan
from .network import ModelConfig, NetworkState, TrainReport, forward, init_network, sgd_fit
from .protocols import (
    ExperimentConfig,
    ScenarioResult,
    federated_average,
    fl_total_time,
    rrl_total_time,
    run_centralized,
    run_federated,
    run_isolated,
    run_round_robin,
)
from .transport import InProcessBus, Message, MessageKind, TcpBus, WeightSnapshot, decode_snapshot, encode_snapshot
from .tree import DecisionTreeModel, TreeConfig, dt_fit, dt_predict, gini

__version__ = "0.1.0"
