"""Split federated learning with clustered activation-map selection.

Clients training a shared CNN ship a small, per-class-clustered subset of
their split-level activation maps each round; the server trains the frozen
initial upper part on that union, composes it with the current lower part,
and tracks the composed model's accuracy alongside the FedAvg baseline.
"""

from .activations import ActivationMaps, extract_activations, load_activation_dump, save_activation_dump
from .config import (ExperimentConfig, Seeds, SelectionSpec, SyntheticSpec, apply_overrides,
                     config_to_dict, parse_config)
from .data import (LabeledDataset, PartitionPlan, class_templates, decode_records,
                   encode_records, gen_synthetic, load_cifar10, partition_noniid,
                   synthetic_train_test, write_records)
from .engine import (Hyperparams, backward_layers, forward, forward_layers, grad_check,
                     relu_margin, run_sgd, sgd_step, softmax_cross_entropy)
from .exceptions import (AggregationError, CompositionError, ConfigError, FormatError,
                         ShapeError)
from .model import (ArchSpec, LayerParams, ModelWeights, SplitWeights, build_model,
                    compose_weights, copy_layers, param_count, split_weights, LEVELS)
from .reporting import CSV_HEADER, emit_metrics
from .selection import KMeans, MetadataSelector, PCA, medoid_indices
from .simulation import (ClientState, MetadataSet, RoundRecord, RoundTrace, Simulation,
                         compose_global, evaluate, fed_average, local_update,
                         metadata_training, mix_seed, run_experiment)

__version__ = "0.1.0"
