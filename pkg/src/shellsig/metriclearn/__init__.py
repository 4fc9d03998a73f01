"""Distances, metric-learning losses, embedding networks and training."""

from .features import ArrayStore, ImageStore, RoutingStore, ShellStore
from .losses import contrastive_loss, dist_cosine_sim, dist_euclidean, dist_manhattan, triplet_loss
from .models import (
    EmbeddingNet,
    ModelConfig,
    build_model,
    count_blocks,
    psnet_forward,
    psnet_shapes,
    resnet1d_forward,
    shell_input,
    smallcnn2d_forward,
    trace_shapes,
)
from .training import (
    EpochRecord,
    TrainConfig,
    TrainResult,
    embed_keys,
    embed_pairs,
    load_model,
    read_history,
    train,
    write_history,
)
