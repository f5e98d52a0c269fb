"""Goal predicates, the household task grammar, and goal-space metrics.

A goal is a multiset of placement predicates: ``ON(plate, table_id): 2``
means two plates should end up on that table.  Task goals are drawn from a
fixed five-task grammar whose support is small enough to enumerate, which
the uniform baselines and several tests rely on.

The predicate vocabulary indexes ``(relation, object class, location
class)`` triples.  Keying locations by class rather than instance id keeps
the vocabulary identical across apartments, so a model trained in one
layout can read states from another; goal locations are unambiguous anyway
because templates instantiate each goal location class exactly once.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import IncompatibleVocabularyError, UnsatisfiableConfigError
from .worldsim import (
    CONTAINER_CLASSES,
    IN,
    OBJECT_CLASSES,
    ON,
    SURFACE_CLASSES,
    SceneGraph,
    class_of,
    instances_of,
    placements,
)
from .worldsim.classes import CATEGORY_CONTAINER, CATEGORY_OBJECT, CATEGORY_SURFACE, category_of


class Predicate(NamedTuple):
    relation: str  # IN or ON
    object_class: str
    location: int  # entity id of a specific surface or container


@dataclass(frozen=True)
class GoalSpec:
    """Non-empty multiset of predicates, stored sorted for canonical form."""

    items: tuple[tuple[Predicate, int], ...]

    def __post_init__(self):
        if not self.items:
            raise ValueError("a goal needs at least one predicate")
        for pred, count in self.items:
            if count < 1:
                raise ValueError(f"non-positive count for {pred}")
        keys = [p for p, _ in self.items]
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate predicate in goal")
        if tuple(sorted(self.items)) != self.items:
            raise ValueError("goal items must be sorted")

    @staticmethod
    def of(mapping: dict[Predicate, int] | Iterable[tuple[Predicate, int]]) -> "GoalSpec":
        pairs = mapping.items() if isinstance(mapping, dict) else mapping
        return GoalSpec(tuple(sorted((p, int(c)) for p, c in pairs)))

    def count_for(self, pred: Predicate) -> int:
        for p, c in self.items:
            if p == pred:
                return c
        return 0

    def as_dict(self) -> dict[Predicate, int]:
        return dict(self.items)

    def total(self) -> int:
        return sum(c for _, c in self.items)

    def to_json_obj(self) -> list:
        return [
            {"relation": p.relation, "class": p.object_class, "location": p.location, "count": c}
            for p, c in self.items
        ]

    @staticmethod
    def from_json_obj(obj: list) -> "GoalSpec":
        return GoalSpec.of(
            {
                Predicate(d["relation"], d["class"], int(d["location"])): int(d["count"])
                for d in obj
            }
        )

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj(), sort_keys=True, separators=(",", ":"))


def count_satisfied(state: SceneGraph, pred: Predicate) -> int:
    """Instances of the predicate's class currently at its location.

    Held objects never count: a plate in someone's hand is not on the table.
    """
    n = 0
    for p in placements(state):
        if (
            p[1] == pred.relation
            and p[2] == pred.location
            and class_of(state, p[0]) == pred.object_class
        ):
            n += 1
    return n


def is_satisfied(state: SceneGraph, goal: GoalSpec) -> bool:
    return all(count_satisfied(state, p) >= c for p, c in goal.items)


def goal_f1(predicted: GoalSpec | None, truth: GoalSpec) -> float:
    """Multiset F1 between a predicted goal and the true goal.

    Overlap counts per-predicate min of the two counts; an empty or None
    prediction scores zero.
    """
    if truth is None or truth.total() == 0:
        raise ValueError("truth goal must be non-empty")
    if predicted is None:
        return 0.0
    overlap = 0
    for pred, c in predicted.items:
        overlap += min(c, truth.count_for(pred))
    if overlap == 0:
        return 0.0
    total_pred = predicted.total()
    total_truth = truth.total()
    precision = overlap / total_pred
    recall = overlap / total_truth
    return 2 * precision * recall / (precision + recall)


def marginal_mode_goal(goals: Sequence[GoalSpec | None]) -> GoalSpec | None:
    """Per-predicate most frequent count across a particle population.

    Absence counts as zero; ties resolve to the lower count.  Returns None
    when the modal goal is empty.
    """
    views = [g for g in goals]
    if not views:
        return None
    all_preds = sorted({p for g in views if g is not None for p, _ in g.items})
    out: dict[Predicate, int] = {}
    n = len(views)
    for pred in all_preds:
        freq: dict[int, int] = {}
        for g in views:
            c = 0 if g is None else g.count_for(pred)
            freq[c] = freq.get(c, 0) + 1
        mode = min(sorted(freq), key=lambda c: (-freq[c], c))
        if mode > 0:
            out[pred] = mode
    if not out:
        return None
    return GoalSpec.of(out)


def project_to_task_goal(candidates: Sequence[GoalSpec], goal: GoalSpec) -> GoalSpec:
    """The candidate most similar to an arbitrary predicate multiset.

    Similarity is multiset F1; ties keep the earliest candidate, so a
    sorted candidate list makes the result deterministic.  Snapping a
    free-form prediction onto a known goal grammar removes predicate
    combinations the grammar can never produce.
    """
    if not candidates:
        raise ValueError("candidates must be non-empty")
    best, best_score = candidates[0], -1.0
    for cand in candidates:
        overlap = sum(min(c, goal.count_for(p)) for p, c in cand.items)
        denom = cand.total() + goal.total()
        score = 0.0 if denom == 0 else 2 * overlap / denom
        if score > best_score:
            best, best_score = cand, score
    return best


# --- task grammar -----------------------------------------------------------

TASK_NAMES = ("set_table", "put_dishwasher", "stock_fridge", "prepare_meal", "get_snacks")

_SET_TABLE_OBJ = ("waterglass", "wineglass")
_SET_TABLE_LOC = ("kitchentable", "coffeetable")
_DISHWASHER_POOL = ("fork", "plate", "waterglass", "wineglass")
_FRIDGE_POOL = ("apple", "cupcake", "pudding", "salmon")
_MEAL_OBJ = ("cupcake", "pudding")
_MEAL_LOC = ("coffeetable", "kitchentable", "stove")


def goal_location_ids(state: SceneGraph) -> dict[str, int]:
    """Unique instance id per goal location class present in the scene."""
    out: dict[str, int] = {}
    for cls in ("coffeetable", "dishwasher", "fridge", "kitchentable", "stove"):
        ids = instances_of(state, cls)
        if len(ids) != 1:
            raise UnsatisfiableConfigError(f"expected exactly one {cls}, found {len(ids)}")
        out[cls] = ids[0]
    return out


def _rel_for(cls: str) -> str:
    return IN if category_of(cls) == CATEGORY_CONTAINER else ON


def _pool_multisets(pool: Sequence[str], low: int, high: int) -> list[dict[str, int]]:
    out = []
    for n in range(low, high + 1):
        for combo in itertools.combinations_with_replacement(sorted(pool), n):
            counts: dict[str, int] = {}
            for cls in combo:
                counts[cls] = counts.get(cls, 0) + 1
            out.append(counts)
    return out


def enumerate_task_goals(state: SceneGraph, task: str | None = None) -> list[GoalSpec]:
    """Every goal the grammar can produce in this apartment, sorted.

    With ``task`` given, only that task's goals.  Sizes per task are fixed
    by the grammar: 12, 315, 315, 18, and 1.
    """
    locs = goal_location_ids(state)
    tasks = (task,) if task else TASK_NAMES
    goals: list[GoalSpec] = []
    for t in tasks:
        if t == "set_table":
            for n in (1, 2, 3):
                for obj in _SET_TABLE_OBJ:
                    for loc_cls in _SET_TABLE_LOC:
                        loc = locs[loc_cls]
                        goals.append(
                            GoalSpec.of(
                                {
                                    Predicate(ON, "plate", loc): n,
                                    Predicate(ON, "fork", loc): n,
                                    Predicate(ON, obj, loc): n,
                                }
                            )
                        )
        elif t == "put_dishwasher":
            loc = locs["dishwasher"]
            for counts in _pool_multisets(_DISHWASHER_POOL, 3, 7):
                goals.append(
                    GoalSpec.of({Predicate(IN, cls, loc): c for cls, c in counts.items()})
                )
        elif t == "stock_fridge":
            loc = locs["fridge"]
            for counts in _pool_multisets(_FRIDGE_POOL, 3, 7):
                goals.append(
                    GoalSpec.of({Predicate(IN, cls, loc): c for cls, c in counts.items()})
                )
        elif t == "prepare_meal":
            for n in (1, 2, 3):
                for obj in _MEAL_OBJ:
                    for loc_cls in _MEAL_LOC:
                        loc = locs[loc_cls]
                        goals.append(
                            GoalSpec.of(
                                {
                                    Predicate(ON, "salmon", loc): n,
                                    Predicate(ON, "apple", loc): n,
                                    Predicate(ON, obj, loc): n,
                                }
                            )
                        )
        elif t == "get_snacks":
            loc = locs["coffeetable"]
            goals.append(
                GoalSpec.of(
                    {
                        Predicate(ON, "remote", loc): 1,
                        Predicate(ON, "condiment", loc): 1,
                        Predicate(ON, "chips", loc): 1,
                    }
                )
            )
        else:
            raise ValueError(f"unknown task {t!r}")
    return sorted(goals, key=lambda g: g.items)


def sample_task(rng: np.random.Generator, state: SceneGraph) -> GoalSpec:
    """Draw a task type uniformly, then a goal from that task's row."""
    locs = goal_location_ids(state)
    task = TASK_NAMES[int(rng.integers(len(TASK_NAMES)))]
    if task == "set_table":
        n = int(rng.integers(1, 4))
        obj = _SET_TABLE_OBJ[int(rng.integers(2))]
        loc = locs[_SET_TABLE_LOC[int(rng.integers(2))]]
        return GoalSpec.of(
            {
                Predicate(ON, "plate", loc): n,
                Predicate(ON, "fork", loc): n,
                Predicate(ON, obj, loc): n,
            }
        )
    if task == "put_dishwasher":
        return _sample_pool(rng, _DISHWASHER_POOL, IN, locs["dishwasher"])
    if task == "stock_fridge":
        return _sample_pool(rng, _FRIDGE_POOL, IN, locs["fridge"])
    if task == "prepare_meal":
        n = int(rng.integers(1, 4))
        obj = _MEAL_OBJ[int(rng.integers(2))]
        loc = locs[_MEAL_LOC[int(rng.integers(3))]]
        return GoalSpec.of(
            {
                Predicate(ON, "salmon", loc): n,
                Predicate(ON, "apple", loc): n,
                Predicate(ON, obj, loc): n,
            }
        )
    loc = locs["coffeetable"]
    return GoalSpec.of(
        {
            Predicate(ON, "remote", loc): 1,
            Predicate(ON, "condiment", loc): 1,
            Predicate(ON, "chips", loc): 1,
        }
    )


def _sample_pool(rng, pool, rel, loc) -> GoalSpec:
    n = int(rng.integers(3, 8))
    counts: dict[str, int] = {}
    for _ in range(n):
        cls = pool[int(rng.integers(len(pool)))]
        counts[cls] = counts.get(cls, 0) + 1
    return GoalSpec.of({Predicate(rel, cls, loc): c for cls, c in counts.items()})


def uniform_goal(rng: np.random.Generator, support: Sequence[GoalSpec]) -> GoalSpec:
    """Uniform draw over an enumerated grammar support."""
    return support[int(rng.integers(len(support)))]


# --- predicate vocabulary ---------------------------------------------------


class VocabEntry(NamedTuple):
    relation: str
    object_class: str
    location_class: str


@dataclass(frozen=True)
class PredicateVocabulary:
    """Ordered predicate rows plus this apartment's location bindings."""

    entries: tuple[VocabEntry, ...]
    bindings: tuple[tuple[str, tuple[int, ...]], ...]  # location class -> instance ids

    @staticmethod
    def from_state(state: SceneGraph) -> "PredicateVocabulary":
        loc_classes: dict[str, list[int]] = {}
        for ent in state.entities.values():
            if ent.category in (CATEGORY_SURFACE, CATEGORY_CONTAINER):
                loc_classes.setdefault(ent.class_name, []).append(ent.id)
        entries = []
        for obj in OBJECT_CLASSES:
            for loc_cls in sorted(loc_classes):
                entries.append(VocabEntry(_rel_for(loc_cls), obj, loc_cls))
        return PredicateVocabulary(
            entries=tuple(sorted(entries)),
            bindings=tuple((c, tuple(sorted(ids))) for c, ids in sorted(loc_classes.items())),
        )

    @property
    def size(self) -> int:
        return len(self.entries)

    def binding_map(self) -> dict[str, tuple[int, ...]]:
        return dict(self.bindings)

    def index_of(self, entry: VocabEntry) -> int:
        try:
            return self._index()[entry]
        except KeyError:
            raise IncompatibleVocabularyError(f"{entry} not in vocabulary") from None

    def _index(self) -> dict[VocabEntry, int]:
        if not hasattr(self, "_idx"):
            object.__setattr__(self, "_idx", {e: i for i, e in enumerate(self.entries)})
        return self._idx

    def entry_for(self, state: SceneGraph, pred: Predicate) -> VocabEntry:
        return VocabEntry(pred.relation, pred.object_class, class_of(state, pred.location))

    def index_of_predicate(self, state: SceneGraph, pred: Predicate) -> int:
        return self.index_of(self.entry_for(state, pred))

    def check_state(self, state: SceneGraph) -> None:
        for loc_cls, ids in self.bindings:
            if instances_of(state, loc_cls) != ids:
                raise IncompatibleVocabularyError(
                    f"state binds {loc_cls} to {instances_of(state, loc_cls)}, vocabulary has {ids}"
                )

    def count_vector(self, state: SceneGraph) -> np.ndarray:
        """Per-row count of satisfied instances, aggregated over locations
        of the row's class."""
        bind = self.binding_map()
        counts = np.zeros(self.size, dtype=np.int64)
        by_key: dict[tuple[str, str, int], int] = {}
        for p in placements(state):
            if p[1] in (IN, ON) and category_of(class_of(state, p[0])) == CATEGORY_OBJECT:
                key = (p[1], class_of(state, p[0]), p[2])
                by_key[key] = by_key.get(key, 0) + 1
        for i, e in enumerate(self.entries):
            total = 0
            for loc_id in bind.get(e.location_class, ()):
                total += by_key.get((e.relation, e.object_class, loc_id), 0)
            counts[i] = total
        return counts

    def goal_vector(self, state: SceneGraph, goal: GoalSpec | None) -> np.ndarray:
        """Goal counts per vocabulary row (absent rows are zero)."""
        vec = np.zeros(self.size, dtype=np.int64)
        if goal is None:
            return vec
        for pred, c in goal.items:
            vec[self.index_of_predicate(state, pred)] += c
        return vec

    def ground(self, entry: VocabEntry, count: int) -> tuple[Predicate, int]:
        """Bind a vocabulary row to a concrete predicate.

        Multi-instance location classes bind to the lowest id; task goals
        only ever use unique-instance classes so this matters just for
        model-proposed goals, where any consistent grounding works.
        """
        ids = self.binding_map()[entry.location_class]
        return Predicate(entry.relation, entry.object_class, ids[0]), count

    def to_json_obj(self) -> dict:
        return {
            "entries": [list(e) for e in self.entries],
            "bindings": {c: list(ids) for c, ids in self.bindings},
        }

    @staticmethod
    def from_json_obj(obj: dict) -> "PredicateVocabulary":
        return PredicateVocabulary(
            entries=tuple(VocabEntry(*e) for e in obj["entries"]),
            bindings=tuple(
                (c, tuple(int(i) for i in ids)) for c, ids in sorted(obj["bindings"].items())
            ),
        )
