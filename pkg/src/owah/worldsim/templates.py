"""Apartment template loading and validation.

Templates are declarative JSON documents (see data/template.schema.json).
Five layouts are used for training data and two are held out for testing,
so learned components are always evaluated in apartments they never saw.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import jsonschema

from ..errors import UnsatisfiableConfigError
from .classes import (
    CATEGORY_CONTAINER,
    CATEGORY_SURFACE,
    CLASS_TABLE,
    GOAL_LOCATION_CLASSES,
    OBJECT_CLASSES,
    ROOM_CLASSES,
    category_of,
)

TRAIN_TEMPLATE_IDS = ("t1", "t2", "t3", "t4", "t5")
TEST_TEMPLATE_IDS = ("t6", "t7")
ALL_TEMPLATE_IDS = TRAIN_TEMPLATE_IDS + TEST_TEMPLATE_IDS

# Object spawn spots are deliberately restricted to these furniture classes
# so that a freshly generated apartment never pre-satisfies a task goal.
SPAWN_LOCATION_CLASSES = frozenset({"kitchencabinet", "drawer"})


@dataclass(frozen=True)
class SpawnRule:
    class_name: str
    spots: tuple[str, ...]  # "roomname/furnitureclass" references
    count_min: int
    count_max: int


@dataclass(frozen=True)
class ApartmentTemplate:
    id: str
    rooms: tuple[tuple[str, str], ...]  # (name, class)
    adjacency: tuple[tuple[str, str], ...]
    furniture: tuple[tuple[str, str], ...]  # (room name, class)
    agent_rooms: tuple[str, str]
    spawn: tuple[SpawnRule, ...]

    @property
    def room_names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.rooms)


def _schema() -> dict:
    text = resources.files("owah.worldsim").joinpath("data/template.schema.json").read_text()
    return json.loads(text)


def parse_template(doc: dict) -> ApartmentTemplate:
    jsonschema.validate(doc, _schema())
    names = [r["name"] for r in doc["rooms"]]
    if len(set(names)) != len(names):
        raise UnsatisfiableConfigError(f"duplicate room names in template {doc['id']}")
    name_set = set(names)
    for r in doc["rooms"]:
        if r["class"] not in ROOM_CLASSES:
            raise UnsatisfiableConfigError(f"unknown room class {r['class']!r}")
    for a, b in doc["adjacency"]:
        if a not in name_set or b not in name_set or a == b:
            raise UnsatisfiableConfigError(f"bad adjacency pair {a!r}-{b!r}")
    furniture_refs = set()
    goal_loc_counts = {c: 0 for c in GOAL_LOCATION_CLASSES}
    for f in doc["furniture"]:
        if f["room"] not in name_set:
            raise UnsatisfiableConfigError(f"furniture in unknown room {f['room']!r}")
        cat = category_of(f["class"])
        if cat not in (CATEGORY_SURFACE, CATEGORY_CONTAINER):
            raise UnsatisfiableConfigError(f"furniture class {f['class']!r} not placeable")
        furniture_refs.add(f"{f['room']}/{f['class']}")
        if f["class"] in goal_loc_counts:
            goal_loc_counts[f["class"]] += 1
    for cls, n in goal_loc_counts.items():
        if n != 1:
            raise UnsatisfiableConfigError(
                f"template {doc['id']} must place exactly one {cls}, found {n}"
            )
    for room in doc["agent_rooms"]:
        if room not in name_set:
            raise UnsatisfiableConfigError(f"agent start room {room!r} unknown")
    spawn_classes = set()
    rules = []
    for s in doc["spawn"]:
        if s["class"] not in OBJECT_CLASSES:
            raise UnsatisfiableConfigError(f"spawn rule for non-object class {s['class']!r}")
        if s["class"] in spawn_classes:
            raise UnsatisfiableConfigError(f"duplicate spawn rule for {s['class']!r}")
        spawn_classes.add(s["class"])
        for ref in s["at"]:
            if ref not in furniture_refs:
                raise UnsatisfiableConfigError(f"spawn spot {ref!r} has no furniture")
            if ref.split("/", 1)[1] not in SPAWN_LOCATION_CLASSES:
                raise UnsatisfiableConfigError(
                    f"spawn spot {ref!r} could pre-satisfy a task goal"
                )
        lo, hi = s["count"]
        if lo > hi:
            raise UnsatisfiableConfigError(f"empty count range for {s['class']!r}")
        rules.append(SpawnRule(s["class"], tuple(s["at"]), lo, hi))
    missing = set(OBJECT_CLASSES) - spawn_classes
    if missing:
        raise UnsatisfiableConfigError(f"no spawn rule for {sorted(missing)}")
    # rooms must be connected, otherwise navigation can dead-end
    reach = {names[0]}
    pairs = [(a, b) for a, b in doc["adjacency"]]
    while True:
        grew = False
        for a, b in pairs:
            if a in reach and b not in reach:
                reach.add(b)
                grew = True
            if b in reach and a not in reach:
                reach.add(a)
                grew = True
        if not grew:
            break
    if reach != name_set:
        raise UnsatisfiableConfigError(f"template {doc['id']} rooms not connected")

    return ApartmentTemplate(
        id=doc["id"],
        rooms=tuple((r["name"], r["class"]) for r in doc["rooms"]),
        adjacency=tuple((a, b) for a, b in doc["adjacency"]),
        furniture=tuple((f["room"], f["class"]) for f in doc["furniture"]),
        agent_rooms=(doc["agent_rooms"][0], doc["agent_rooms"][1]),
        spawn=tuple(rules),
    )


def load_template(template_id: str) -> ApartmentTemplate:
    if template_id not in ALL_TEMPLATE_IDS:
        raise UnsatisfiableConfigError(f"unknown template id {template_id!r}")
    text = (
        resources.files("owah.worldsim")
        .joinpath(f"data/templates/{template_id}.json")
        .read_text()
    )
    return parse_template(json.loads(text))


def load_template_file(path: str) -> ApartmentTemplate:
    with open(path) as fh:
        return parse_template(json.load(fh))
