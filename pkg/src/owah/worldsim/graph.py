"""Scene graphs: entities, relation edges, and the canonical serialization.

A scene graph is treated as an immutable value.  The action layer builds new
graphs instead of mutating old ones, so plans and particle predictions can
hold onto intermediate states safely.  Derived views (room lookup, placement
triples, adjacency distances) are memoized per instance.

The canonical JSON form sorts entities and edges, and hashing that form is
the determinism contract used by replay checks and the live service.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

from ..errors import IncomparableStatesError
from .classes import (
    CATEGORY_AGENT,
    CATEGORY_CONTAINER,
    CATEGORY_OBJECT,
    CATEGORY_ROOM,
    CATEGORY_SURFACE,
    category_of,
)

IN = "IN"
ON = "ON"
HOLDS = "HOLDS"
CLOSE = "CLOSE"
INSIDE_ROOM = "INSIDE_ROOM"

RELATIONS = (IN, ON, HOLDS, CLOSE, INSIDE_ROOM)

# Relations that say where a thing physically rests.
PLACEMENT_RELATIONS = (IN, ON, HOLDS)


@dataclass(frozen=True)
class Entity:
    id: int
    class_name: str

    @property
    def category(self) -> str:
        return category_of(self.class_name)


class Edge(NamedTuple):
    subject: int
    relation: str
    object: int


@dataclass
class SceneGraph:
    """Immutable-by-convention world state.

    ``room_adjacency`` is part of the state because navigation legality
    depends on it; it never changes within an episode.
    """

    entities: dict[int, Entity]
    edges: frozenset[Edge]
    open_state: dict[int, bool]
    tick: int
    room_adjacency: dict[int, tuple[int, ...]]
    _memo: dict = field(default_factory=dict, repr=False, compare=False)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SceneGraph):
            return NotImplemented
        return (
            self.tick == other.tick
            and self.entities == other.entities
            and self.edges == other.edges
            and self.open_state == other.open_state
            and self.room_adjacency == other.room_adjacency
        )

    def replace(self, **kwargs) -> "SceneGraph":
        base = dict(
            entities=self.entities,
            edges=self.edges,
            open_state=self.open_state,
            tick=self.tick,
            room_adjacency=self.room_adjacency,
        )
        base.update(kwargs)
        return SceneGraph(**base)


def category(state: SceneGraph, eid: int) -> str:
    return state.entities[eid].category


def class_of(state: SceneGraph, eid: int) -> str:
    return state.entities[eid].class_name


def rooms_of(state: SceneGraph) -> tuple[int, ...]:
    memo = state._memo
    if "rooms" not in memo:
        memo["rooms"] = tuple(
            sorted(e.id for e in state.entities.values() if e.category == CATEGORY_ROOM)
        )
    return memo["rooms"]


def agents_of(state: SceneGraph) -> tuple[int, ...]:
    """Agent ids, sorted.  By convention the first is the principal agent."""
    memo = state._memo
    if "agents" not in memo:
        memo["agents"] = tuple(
            sorted(e.id for e in state.entities.values() if e.category == CATEGORY_AGENT)
        )
    return memo["agents"]


def _room_map(state: SceneGraph) -> dict[int, int]:
    memo = state._memo
    if "room_map" not in memo:
        m: dict[int, int] = {}
        for rid in rooms_of(state):
            m[rid] = rid
        for e in state.edges:
            if e.relation == INSIDE_ROOM:
                m[e.subject] = e.object
        memo["room_map"] = m
    return memo["room_map"]


def room_of(state: SceneGraph, eid: int) -> int:
    return _room_map(state)[eid]


def instances_of(state: SceneGraph, class_name: str) -> tuple[int, ...]:
    memo = state._memo
    key = ("instances", class_name)
    if key not in memo:
        memo[key] = tuple(
            sorted(e.id for e in state.entities.values() if e.class_name == class_name)
        )
    return memo[key]


def placements(state: SceneGraph) -> frozenset[tuple[int, str, int]]:
    """Placement triples ``(object_id, relation, holder_id)``.

    HOLDS edges are stored agent-first in the graph but normalized here to
    object-first so every object contributes exactly one triple.
    """
    memo = state._memo
    if "placements" not in memo:
        out = set()
        for e in state.edges:
            if e.relation in (IN, ON):
                out.add((e.subject, e.relation, e.object))
            elif e.relation == HOLDS:
                out.add((e.object, HOLDS, e.subject))
        memo["placements"] = frozenset(out)
    return memo["placements"]


def placement_of(state: SceneGraph, oid: int) -> tuple[int, str, int]:
    memo = state._memo
    if "placement_map" not in memo:
        memo["placement_map"] = {p[0]: p for p in placements(state)}
    return memo["placement_map"][oid]


def close_targets(state: SceneGraph, agent: int) -> frozenset[int]:
    memo = state._memo
    key = ("close", agent)
    if key not in memo:
        memo[key] = frozenset(
            e.object for e in state.edges if e.relation == CLOSE and e.subject == agent
        )
    return memo[key]


def held_by(state: SceneGraph, agent: int) -> tuple[int, ...]:
    memo = state._memo
    key = ("held", agent)
    if key not in memo:
        memo[key] = tuple(
            sorted(e.object for e in state.edges if e.relation == HOLDS and e.subject == agent)
        )
    return memo[key]


def is_near(state: SceneGraph, agent: int, eid: int) -> bool:
    """Whether ``agent`` can interact with ``eid`` without moving.

    True when the agent walked up to the entity itself, to the surface or
    container currently holding it, or to something resting on/in it.
    """
    close = close_targets(state, agent)
    if eid in close:
        return True
    if category(state, eid) == CATEGORY_OBJECT:
        rel_placement = placement_of(state, eid)
        if rel_placement[1] in (IN, ON) and rel_placement[2] in close:
            return True
    for c in close:
        if category(state, c) == CATEGORY_OBJECT:
            p = placement_of(state, c)
            if p[1] in (IN, ON) and p[2] == eid:
                return True
    return False


def containment(state: SceneGraph, container: int) -> tuple[int, ...]:
    return tuple(
        sorted(
            e.subject
            for e in state.edges
            if e.relation in (IN, ON) and e.object == container
        )
    )


def entities_in_room(state: SceneGraph, rid: int) -> tuple[int, ...]:
    m = _room_map(state)
    return tuple(sorted(eid for eid, r in m.items() if r == rid and eid != rid))


def state_diff(a: SceneGraph, b: SceneGraph) -> int:
    """Size of the symmetric difference of object placement triples.

    Agent positions and proximity are irrelevant: only where the movable
    objects rest (or whose hands they are in) counts.
    """
    if a.entities != b.entities:
        raise IncomparableStatesError("states describe different entity sets")
    pa = {p for p in placements(a) if category(a, p[0]) == CATEGORY_OBJECT}
    pb = {p for p in placements(b) if category(b, p[0]) == CATEGORY_OBJECT}
    return len(pa ^ pb)


# --- serialization ---------------------------------------------------------


def to_json_obj(state: SceneGraph) -> dict:
    return {
        "entities": [
            {"id": e.id, "class": e.class_name}
            for e in sorted(state.entities.values(), key=lambda x: x.id)
        ],
        "edges": sorted([e.subject, e.relation, e.object] for e in state.edges),
        "open": {str(k): state.open_state[k] for k in sorted(state.open_state)},
        "rooms": {str(k): sorted(v) for k, v in sorted(state.room_adjacency.items())},
        "tick": state.tick,
    }


def canonical_json(state: SceneGraph) -> str:
    return json.dumps(to_json_obj(state), sort_keys=True, separators=(",", ":"))


def state_hash(state: SceneGraph) -> str:
    return hashlib.sha256(canonical_json(state).encode()).hexdigest()[:16]


def from_json_obj(obj: dict) -> SceneGraph:
    entities = {int(e["id"]): Entity(int(e["id"]), e["class"]) for e in obj["entities"]}
    edges = frozenset(Edge(int(s), r, int(o)) for s, r, o in obj["edges"])
    open_state = {int(k): bool(v) for k, v in obj["open"].items()}
    adjacency = {int(k): tuple(sorted(int(x) for x in v)) for k, v in obj["rooms"].items()}
    return SceneGraph(entities, edges, open_state, int(obj["tick"]), adjacency)


def from_json(text: str) -> SceneGraph:
    return from_json_obj(json.loads(text))


# --- invariants ------------------------------------------------------------


def validate_state(state: SceneGraph) -> list[str]:
    """All invariant violations, empty when the state is well formed."""
    problems: list[str] = []
    ids = set(state.entities)
    for e in state.edges:
        if e.subject not in ids or e.object not in ids:
            problems.append(f"dangling edge {e}")
            continue
        sc = category(state, e.subject)
        oc = category(state, e.object)
        if e.relation == IN and not (sc == CATEGORY_OBJECT and oc == CATEGORY_CONTAINER):
            problems.append(f"bad IN edge {e}")
        if e.relation == ON and not (sc == CATEGORY_OBJECT and oc == CATEGORY_SURFACE):
            problems.append(f"bad ON edge {e}")
        if e.relation == HOLDS and not (sc == CATEGORY_AGENT and oc == CATEGORY_OBJECT):
            problems.append(f"bad HOLDS edge {e}")
        if e.relation == CLOSE and sc != CATEGORY_AGENT:
            problems.append(f"CLOSE subject not agent {e}")
        if e.relation == INSIDE_ROOM and oc != CATEGORY_ROOM:
            problems.append(f"INSIDE_ROOM target not room {e}")

    m = _room_map(state)
    for eid, ent in state.entities.items():
        if ent.category == CATEGORY_ROOM:
            continue
        n = sum(1 for e in state.edges if e.relation == INSIDE_ROOM and e.subject == eid)
        if n != 1:
            problems.append(f"entity {eid} has {n} INSIDE_ROOM edges")

    for eid, ent in state.entities.items():
        if ent.category != CATEGORY_OBJECT:
            continue
        n = sum(1 for p in placements(state) if p[0] == eid)
        if n != 1:
            problems.append(f"object {eid} has {n} placements")

    for agent in agents_of(state):
        if len(held_by(state, agent)) > 2:
            problems.append(f"agent {agent} holds more than two objects")
        for tgt in close_targets(state, agent):
            if m.get(tgt) != m.get(agent):
                problems.append(f"agent {agent} CLOSE to {tgt} in another room")

    for eid, ent in state.entities.items():
        if ent.category == CATEGORY_CONTAINER and eid not in state.open_state:
            problems.append(f"container {eid} missing open flag")
    for eid in state.open_state:
        if category(state, eid) != CATEGORY_CONTAINER:
            problems.append(f"open flag on non-container {eid}")

    # held objects must share their holder's room
    for agent in agents_of(state):
        for oid in held_by(state, agent):
            if m.get(oid) != m.get(agent):
                problems.append(f"held object {oid} not in holder's room")
    return problems


def room_distances(state: SceneGraph) -> dict[int, dict[int, int]]:
    """All-pairs hop counts over the room adjacency graph (memoized)."""
    memo = state._memo
    if "room_dist" not in memo:
        adj = state.room_adjacency
        dist: dict[int, dict[int, int]] = {}
        for src in adj:
            d = {src: 0}
            frontier = [src]
            while frontier:
                nxt = []
                for r in frontier:
                    for n in adj[r]:
                        if n not in d:
                            d[n] = d[r] + 1
                            nxt.append(n)
                frontier = nxt
            dist[src] = d
        memo["room_dist"] = dist
    return memo["room_dist"]


def room_path(state: SceneGraph, src: int, dst: int) -> tuple[int, ...]:
    """Rooms to traverse from src to dst, excluding src.  Lexicographically
    least among shortest paths so plans are reproducible."""
    if src == dst:
        return ()
    dist = room_distances(state)
    if dst not in dist.get(src, {}):
        return ()
    path = []
    cur = src
    while cur != dst:
        nxt = min(
            n for n in state.room_adjacency[cur] if dist[n].get(dst, 1 << 30) == dist[cur][dst] - 1
        )
        path.append(nxt)
        cur = nxt
    return tuple(path)
