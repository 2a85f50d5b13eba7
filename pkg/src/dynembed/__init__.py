"""Dynamic attributed network embedding with activeness-gated aggregation
and attention-based next-snapshot prediction."""

__version__ = "0.1.0"

from .autodiff import (Parameter, ShapeError, Tape, TapeConsumedError, Var,
                       grad_check, load_params, save_params)
from .evaluation import (LinkEvalSplit, MetricsReport, draw_link_split,
                         eval_link_prediction, eval_node_classification, f1_binary,
                         pr_auc, roc_auc, score_link, train_logreg, weighted_f1)
from .graph import (DynamicGraph, GraphFormatError, NoiseDistribution, Snapshot,
                    load_dynamic_graph, new_edges, noise_distribution,
                    save_dynamic_graph)
from .seeding import child_rng
from .spatial import (EmbeddingHistory, LayerEmbeddings, SpatialParams,
                      embed_snapshot, embed_window, propagate_activeness)
from .synthetic import generate_synthetic
from .temporal import (TemporalParams, merge_layers, predict_layer, predict_next,
                       summarize_history)
from .training import (Adam, Model, TrainConfig, fine_tune, ns_loss,
                       predict_embeddings, softmax_loss_oracle, train)
