"""Symbolic apartment world: scene graphs, actions, templates, generation."""

from .actions import (
    ACTION_KINDS,
    Action,
    CLOSE_ACT,
    GIVE,
    GRAB,
    IDLE,
    IDLE_ACTION,
    MOVE_TO,
    MOVE_TO_ROOM,
    OPEN,
    OUTCOME_FAILED,
    OUTCOME_OK,
    PUT_IN,
    PUT_ON,
    give,
    grab,
    is_legal,
    legal_actions,
    move_to,
    move_to_room,
    open_container,
    close_container,
    put_in,
    put_on,
    step,
    step_single,
)
from .classes import (
    CONTAINER_CLASSES,
    GOAL_LOCATION_CLASSES,
    OBJECT_CLASSES,
    SURFACE_CLASSES,
    category_of,
)
from .generate import furnish, generate_apartment
from .graph import (
    CLOSE,
    Edge,
    Entity,
    HOLDS,
    IN,
    INSIDE_ROOM,
    ON,
    SceneGraph,
    agents_of,
    canonical_json,
    class_of,
    close_targets,
    containment,
    entities_in_room,
    from_json,
    held_by,
    instances_of,
    is_near,
    placement_of,
    placements,
    room_distances,
    room_of,
    room_path,
    rooms_of,
    state_diff,
    state_hash,
    to_json_obj,
    validate_state,
)
from .templates import (
    ALL_TEMPLATE_IDS,
    ApartmentTemplate,
    TEST_TEMPLATE_IDS,
    TRAIN_TEMPLATE_IDS,
    load_template,
    load_template_file,
    parse_template,
)
