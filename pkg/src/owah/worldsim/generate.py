"""Deterministic apartment generation from a template, a seed, and a goal.

Entity ids are assigned in a fixed order (rooms, furniture, objects, agents)
so the same inputs always produce bit-identical scenes.  Rooms and furniture
ids do not depend on the seed or the goal, which lets callers sample a task
against the furnished skeleton and then generate the full scene for it.

The generator tops up object counts so that every goal predicate has at
least one spare instance beyond what the goal needs, and spawn rules keep
goal locations empty at tick zero.
"""

from __future__ import annotations

import zlib
from typing import Iterable

import numpy as np

from ..errors import UnsatisfiableConfigError
from .classes import CATEGORY_CONTAINER, CATEGORY_SURFACE, OBJECT_CLASSES, category_of
from .graph import IN, INSIDE_ROOM, ON, Edge, Entity, SceneGraph
from .templates import ApartmentTemplate

MAIN_AGENT_CLASS = "agent"


def stable_token(text: str) -> int:
    """Process-independent 32-bit token for seeding (str hash is salted)."""
    return zlib.crc32(text.encode())


def _rng(template: ApartmentTemplate, seed: int) -> np.random.Generator:
    ss = np.random.SeedSequence([stable_token(template.id), int(seed)])
    return np.random.Generator(np.random.PCG64(ss))


def furnish(template: ApartmentTemplate) -> SceneGraph:
    """Rooms, furniture, and agents only; no movable objects.

    Room and furniture ids match the full apartment for the same template.
    """
    return _build(template, object_spawn=[], seed=0)


def _layout(template: ApartmentTemplate):
    room_ids: dict[str, int] = {}
    entities: dict[int, Entity] = {}
    nxt = 1
    for name, cls in template.rooms:
        room_ids[name] = nxt
        entities[nxt] = Entity(nxt, cls)
        nxt += 1
    furniture_ids: list[tuple[int, str, str]] = []  # (id, room name, class)
    for room, cls in template.furniture:
        entities[nxt] = Entity(nxt, cls)
        furniture_ids.append((nxt, room, cls))
        nxt += 1
    return room_ids, entities, furniture_ids, nxt


def _build(
    template: ApartmentTemplate,
    object_spawn: Iterable[tuple[str, int]],
    seed: int,
) -> SceneGraph:
    room_ids, entities, furniture_ids, nxt = _layout(template)

    edges: set[Edge] = set()
    open_state: dict[int, bool] = {}
    for fid, room, cls in furniture_ids:
        edges.add(Edge(fid, INSIDE_ROOM, room_ids[room]))
        if category_of(cls) == CATEGORY_CONTAINER:
            open_state[fid] = False

    for cls, spot in object_spawn:
        oid = nxt
        nxt += 1
        entities[oid] = Entity(oid, cls)
        rel = IN if category_of(entities[spot].class_name) == CATEGORY_CONTAINER else ON
        edges.add(Edge(oid, rel, spot))
        spot_room = next(r for f, r, _ in furniture_ids if f == spot)
        edges.add(Edge(oid, INSIDE_ROOM, room_ids[spot_room]))

    for room_name in template.agent_rooms:
        aid = nxt
        nxt += 1
        entities[aid] = Entity(aid, MAIN_AGENT_CLASS)
        edges.add(Edge(aid, INSIDE_ROOM, room_ids[room_name]))

    adjacency: dict[int, set[int]] = {rid: set() for rid in room_ids.values()}
    for a, b in template.adjacency:
        adjacency[room_ids[a]].add(room_ids[b])
        adjacency[room_ids[b]].add(room_ids[a])

    return SceneGraph(
        entities=entities,
        edges=frozenset(edges),
        open_state=open_state,
        tick=0,
        room_adjacency={k: tuple(sorted(v)) for k, v in sorted(adjacency.items())},
    )


def goal_class_demands(goal) -> dict[str, int]:
    """Total object count the goal needs, per object class."""
    demands: dict[str, int] = {}
    if goal is None:
        return demands
    for pred, count in goal.items:
        demands[pred.object_class] = demands.get(pred.object_class, 0) + count
    return demands


def generate_apartment(template: ApartmentTemplate, seed: int, goal) -> SceneGraph:
    """Generate the full scene hosting ``goal`` (a goal spec or None)."""
    room_ids, entities, furniture_ids, _ = _layout(template)

    if goal is not None:
        for pred, _count in goal.items:
            loc = pred.location
            if loc not in entities:
                raise UnsatisfiableConfigError(f"goal location id {loc} not in template")
            cat = category_of(entities[loc].class_name)
            if pred.relation == ON and cat != CATEGORY_SURFACE:
                raise UnsatisfiableConfigError(f"ON goal at non-surface {loc}")
            if pred.relation == IN and cat != CATEGORY_CONTAINER:
                raise UnsatisfiableConfigError(f"IN goal at non-container {loc}")

    demands = goal_class_demands(goal)
    rules = {r.class_name: r for r in template.spawn}
    for cls in demands:
        if cls not in rules:
            raise UnsatisfiableConfigError(f"goal class {cls!r} has no spawn rule")

    rng = _rng(template, seed)
    spot_index: dict[str, list[int]] = {}
    for fid, room, cls in furniture_ids:
        spot_index.setdefault(f"{room}/{cls}", []).append(fid)

    object_spawn: list[tuple[str, int]] = []
    for cls in sorted(OBJECT_CLASSES):
        rule = rules.get(cls)
        if rule is None:
            continue
        base = int(rng.integers(rule.count_min, rule.count_max + 1))
        need = demands.get(cls, 0)
        count = max(base, need + 1 if need else base)
        spots = sorted(s for ref in rule.spots for s in spot_index[ref])
        for _ in range(count):
            spot = spots[int(rng.integers(len(spots)))]
            object_spawn.append((cls, spot))

    return _build(template, object_spawn, seed)
