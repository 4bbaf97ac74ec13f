"""hyperflux: forecasting timed directed group interactions.

The model watches a stream of directed hyperedge events (who acted on
whom, and when), keeps a per-node memory updated in temporal batches, and
forecasts the next event in three stages: which nodes fire and when, what
their neighborhoods and group sizes look like, and which exact candidate
hyperedge is realized.
"""

from .autodiff import Tensor, grad_check
from .checkpoint import (CHECKPOINT_VERSION, CheckpointVersionError, load_checkpoint,
                         save_checkpoint)
from .heads import (LossCounters, PredictionBundle, adjacency_nll, generate_candidates,
                    negative_sample, node_event_nll, predict_event_time, size_nll,
                    total_nll)
from .memory import (MemoryState, NeighborCaches, RelationRecord, cache_update,
                     compute_representations, generate_messages, hyperedge_repr,
                     memory_update, neighborhood_features, node_representation)
from .metrics import (EvalCollector, MetricsReport, evaluate_auc, evaluate_mae,
                      evaluate_mrr, evaluate_recall, evaluate_split, rank_of, roc_auc)
from .nn import Adam, ParamStore, fourier_encode, gru_cell, mlp2, multi_head_attention
from .predictor import cat_layer, directed_score, hyperedge_loglik, sat_layer
from .streams import (BatchItem, DatasetError, DirectedHyperedge, EventStream,
                      NodeTargets, TimedEvent, batch_iter, build_node_targets,
                      chronological_split, parse_jsonl, serialize_jsonl)
from .synthetic import SyntheticConfig, generate_synthetic
from .training import (Model, TrainConfig, build_model, commit_batch, fit,
                       process_batch, warm_replay)

__version__ = "0.1.0"
