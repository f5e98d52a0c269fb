"""Feature encoding for the goal-prediction network.

The network never sees raw scene graphs.  Each vocabulary row is summarized
by how the count of that (relation, object class, location class) triple
has changed between the episode's first state and the current one, clamped
to a small symmetric range and shifted to a non-negative bucket index.
Row deltas are the entire input: the network's job is to map "what has
moved so far" to a distribution over "how much of each thing the goal
wants".
"""

from __future__ import annotations

import numpy as np

from ..errors import IncompatibleVocabularyError
from ..goals import GoalSpec, PredicateVocabulary
from ..worldsim import SceneGraph

DELTA_CLAMP = 4
NUM_BUCKETS = 2 * DELTA_CLAMP + 1  # delta in [-4, 4] -> bucket in [0, 8]
MAX_GOAL_COUNT = NUM_BUCKETS - 1  # target heads share the bucket layout


def delta_buckets(
    vocab: PredicateVocabulary, first: SceneGraph, current: SceneGraph
) -> np.ndarray:
    """Per-row count-change bucket indices, shape (vocab.size,), dtype int64."""
    vocab.check_state(first)
    vocab.check_state(current)
    d = vocab.count_vector(current).astype(np.int64) - vocab.count_vector(first).astype(
        np.int64
    )
    return np.clip(d, -DELTA_CLAMP, DELTA_CLAMP) + DELTA_CLAMP


def goal_counts(vocab: PredicateVocabulary, state: SceneGraph, goal: GoalSpec) -> np.ndarray:
    """Per-row goal counts clamped to the head range, shape (vocab.size,)."""
    vec = vocab.goal_vector(state, goal).astype(np.int64)
    if vec.max(initial=0) > MAX_GOAL_COUNT:
        raise IncompatibleVocabularyError(
            f"goal count {int(vec.max())} exceeds the network's head range"
        )
    return vec


def one_hot(buckets: np.ndarray, num_buckets: int = NUM_BUCKETS) -> np.ndarray:
    """Dense one-hot view of a bucket matrix, useful in tests."""
    eye = np.eye(num_buckets, dtype=np.float64)
    return eye[buckets]
