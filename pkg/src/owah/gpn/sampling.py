"""Turning head distributions into concrete goals."""

from __future__ import annotations

import numpy as np

from ..errors import IncompatibleVocabularyError
from ..goals import GoalSpec, PredicateVocabulary
from ..worldsim import SceneGraph
from .encoding import delta_buckets
from .network import GoalPredictionNet


def _check(net: GoalPredictionNet, vocab: PredicateVocabulary) -> None:
    if net.entries != vocab.entries:
        raise IncompatibleVocabularyError(
            "network was trained on a different predicate vocabulary"
        )


def _counts_to_goal(
    vocab: PredicateVocabulary, counts: np.ndarray
) -> GoalSpec | None:
    items = {}
    for i in np.nonzero(counts)[0]:
        pred, cnt = vocab.ground(vocab.entries[int(i)], int(counts[i]))
        items[pred] = cnt
    return GoalSpec.of(items) if items else None


def head_probs(
    net: GoalPredictionNet,
    vocab: PredicateVocabulary,
    first: SceneGraph,
    current: SceneGraph,
) -> np.ndarray:
    _check(net, vocab)
    return net.predict_probs(delta_buckets(vocab, first, current))


def sample_goal(
    net: GoalPredictionNet,
    vocab: PredicateVocabulary,
    first: SceneGraph,
    current: SceneGraph,
    rng: np.random.Generator,
    max_tries: int = 10,
    temperature: float = 1.0,
) -> GoalSpec:
    """Draw a goal by sampling every row's count head independently.

    ``temperature`` below one sharpens each row's distribution toward its
    mode (fewer spurious predicates per draw); above one flattens it.
    All-zero draws are retried; after ``max_tries`` the fallback picks the
    row most confident it is part of the goal and asks for one of it, so a
    goal always comes back.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    probs = head_probs(net, vocab, first, current)
    if temperature != 1.0:
        probs = probs ** (1.0 / temperature)
        probs /= probs.sum(axis=1, keepdims=True)
    p = probs.shape[0]
    for _ in range(max_tries):
        u = rng.random((p, 1))
        counts = (probs.cumsum(axis=1) < u).sum(axis=1)
        goal = _counts_to_goal(vocab, counts)
        if goal is not None:
            return goal
    row = int(np.argmax(1.0 - probs[:, 0]))
    pred, cnt = vocab.ground(vocab.entries[row], 1)
    return GoalSpec.of({pred: cnt})


def argmax_goal(
    net: GoalPredictionNet,
    vocab: PredicateVocabulary,
    first: SceneGraph,
    current: SceneGraph,
) -> GoalSpec | None:
    """Most likely count per row; None when every head prefers zero."""
    probs = head_probs(net, vocab, first, current)
    return _counts_to_goal(vocab, probs.argmax(axis=1))
