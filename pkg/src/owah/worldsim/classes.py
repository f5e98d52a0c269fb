"""Entity class table.

Every entity in a scene belongs to exactly one class, and every class to
exactly one category.  Categories drive action preconditions: only
``object`` entities can be grabbed, only ``container`` entities open and
close, and placements target surfaces or containers.
"""

from __future__ import annotations

OBJECT_CLASSES = (
    "apple",
    "chips",
    "condiment",
    "cupcake",
    "fork",
    "plate",
    "pudding",
    "remote",
    "salmon",
    "waterglass",
    "wineglass",
)

SURFACE_CLASSES = ("coffeetable", "kitchentable", "stove")

CONTAINER_CLASSES = ("dishwasher", "drawer", "fridge", "kitchencabinet")

ROOM_CLASSES = (
    "bathroom",
    "bedroom",
    "diningroom",
    "hallway",
    "kitchen",
    "livingroom",
    "office",
)

AGENT_CLASS = "agent"

CATEGORY_OBJECT = "object"
CATEGORY_SURFACE = "surface"
CATEGORY_CONTAINER = "container"
CATEGORY_ROOM = "room"
CATEGORY_AGENT = "agent"

CLASS_TABLE: dict[str, str] = {}
for _c in OBJECT_CLASSES:
    CLASS_TABLE[_c] = CATEGORY_OBJECT
for _c in SURFACE_CLASSES:
    CLASS_TABLE[_c] = CATEGORY_SURFACE
for _c in CONTAINER_CLASSES:
    CLASS_TABLE[_c] = CATEGORY_CONTAINER
for _c in ROOM_CLASSES:
    CLASS_TABLE[_c] = CATEGORY_ROOM
CLASS_TABLE[AGENT_CLASS] = CATEGORY_AGENT

GRABBABLE = frozenset(OBJECT_CLASSES)
OPENABLE = frozenset(CONTAINER_CLASSES)

# Location classes a task goal may point at.  Templates instantiate each of
# these exactly once so that a goal location is unambiguous.
GOAL_LOCATION_CLASSES = ("coffeetable", "dishwasher", "fridge", "kitchentable", "stove")


def category_of(class_name: str) -> str:
    try:
        return CLASS_TABLE[class_name]
    except KeyError:
        raise KeyError(f"unknown entity class {class_name!r}") from None
