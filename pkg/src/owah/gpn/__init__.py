"""Goal prediction network: count-delta encoder, softmax heads, training."""

from .checkpoint import load_checkpoint, save_checkpoint
from .encoding import (
    DELTA_CLAMP,
    MAX_GOAL_COUNT,
    NUM_BUCKETS,
    IncompatibleVocabularyError,
    delta_buckets,
    goal_counts,
)
from .network import (
    BATCH_SIZE,
    EMBED_DIM,
    HIDDEN_DIM,
    LEARNING_RATE,
    AdamState,
    GoalPredictionNet,
)
from .sampling import argmax_goal, head_probs, sample_goal
from .training import TrainReport, train

__all__ = [
    "AdamState",
    "BATCH_SIZE",
    "DELTA_CLAMP",
    "EMBED_DIM",
    "GoalPredictionNet",
    "HIDDEN_DIM",
    "IncompatibleVocabularyError",
    "LEARNING_RATE",
    "MAX_GOAL_COUNT",
    "NUM_BUCKETS",
    "TrainReport",
    "argmax_goal",
    "delta_buckets",
    "goal_counts",
    "head_probs",
    "load_checkpoint",
    "sample_goal",
    "save_checkpoint",
    "train",
]
