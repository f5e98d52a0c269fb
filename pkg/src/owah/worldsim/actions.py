"""Actions and the two-agent transition function.

Both agents submit one action per tick.  The principal agent's action is
applied first, then the helper's action is re-checked against the
intermediate state, which realizes the rule that simultaneous conflicts
(grabbing the same object, toggling the same container) resolve in the
principal's favor with the helper degraded to a failed no-op.  Illegal
actions are failed no-ops as well; the tick always advances by one.
"""

from __future__ import annotations

from typing import NamedTuple

from .classes import (
    CATEGORY_AGENT,
    CATEGORY_CONTAINER,
    CATEGORY_OBJECT,
    CATEGORY_ROOM,
    CATEGORY_SURFACE,
    GRABBABLE,
    OPENABLE,
)
from .graph import (
    CLOSE,
    HOLDS,
    IN,
    INSIDE_ROOM,
    ON,
    Edge,
    SceneGraph,
    agents_of,
    category,
    class_of,
    close_targets,
    entities_in_room,
    held_by,
    is_near,
    placement_of,
    room_of,
)

MOVE_TO_ROOM = "MoveToRoom"
MOVE_TO = "MoveTo"
OPEN = "Open"
CLOSE_ACT = "Close"
GRAB = "Grab"
PUT_ON = "PutOn"
PUT_IN = "PutIn"
GIVE = "Give"
IDLE = "Idle"

ACTION_KINDS = (MOVE_TO_ROOM, MOVE_TO, OPEN, CLOSE_ACT, GRAB, PUT_ON, PUT_IN, GIVE, IDLE)

OUTCOME_OK = "ok"
OUTCOME_FAILED = "failed"


class Action(NamedTuple):
    kind: str
    args: tuple[int, ...] = ()

    def to_json(self) -> list:
        return [self.kind, *self.args]

    @staticmethod
    def from_json(obj: list) -> "Action":
        if not obj or obj[0] not in ACTION_KINDS:
            raise ValueError(f"malformed action {obj!r}")
        return Action(obj[0], tuple(int(x) for x in obj[1:]))


IDLE_ACTION = Action(IDLE)


def move_to_room(rid: int) -> Action:
    return Action(MOVE_TO_ROOM, (rid,))


def move_to(eid: int) -> Action:
    return Action(MOVE_TO, (eid,))


def open_container(cid: int) -> Action:
    return Action(OPEN, (cid,))


def close_container(cid: int) -> Action:
    return Action(CLOSE_ACT, (cid,))


def grab(oid: int) -> Action:
    return Action(GRAB, (oid,))


def put_on(oid: int, sid: int) -> Action:
    return Action(PUT_ON, (oid, sid))


def put_in(oid: int, cid: int) -> Action:
    return Action(PUT_IN, (oid, cid))


def give(oid: int, receiver: int) -> Action:
    return Action(GIVE, (oid, receiver))


def _arity_ok(action: Action) -> bool:
    need = {
        MOVE_TO_ROOM: 1,
        MOVE_TO: 1,
        OPEN: 1,
        CLOSE_ACT: 1,
        GRAB: 1,
        PUT_ON: 2,
        PUT_IN: 2,
        GIVE: 2,
        IDLE: 0,
    }
    return len(action.args) == need.get(action.kind, -1)


def is_legal(state: SceneGraph, agent: int, action: Action) -> bool:
    if action.kind == IDLE:
        return True
    if not _arity_ok(action):
        return False
    ids = state.entities
    if any(a not in ids for a in action.args):
        return False
    kind, args = action.kind, action.args

    if kind == MOVE_TO_ROOM:
        (rid,) = args
        return (
            category(state, rid) == CATEGORY_ROOM
            and rid in state.room_adjacency.get(room_of(state, agent), ())
        )
    if kind == MOVE_TO:
        (eid,) = args
        return eid != agent and room_of(state, eid) == room_of(state, agent)
    if kind == OPEN:
        (cid,) = args
        return (
            class_of(state, cid) in OPENABLE
            and not state.open_state.get(cid, True)
            and is_near(state, agent, cid)
        )
    if kind == CLOSE_ACT:
        (cid,) = args
        return (
            class_of(state, cid) in OPENABLE
            and state.open_state.get(cid, False)
            and is_near(state, agent, cid)
        )
    if kind == GRAB:
        (oid,) = args
        if class_of(state, oid) not in GRABBABLE:
            return False
        p = placement_of(state, oid)
        if p[1] == HOLDS:
            return False
        if p[1] == IN and not state.open_state.get(p[2], False):
            return False
        return is_near(state, agent, oid) and len(held_by(state, agent)) < 2
    if kind == PUT_ON:
        oid, sid = args
        return (
            placement_of(state, oid) == (oid, HOLDS, agent)
            and category(state, sid) == CATEGORY_SURFACE
            and is_near(state, agent, sid)
        )
    if kind == PUT_IN:
        oid, cid = args
        return (
            placement_of(state, oid) == (oid, HOLDS, agent)
            and category(state, cid) == CATEGORY_CONTAINER
            and state.open_state.get(cid, False)
            and is_near(state, agent, cid)
        )
    if kind == GIVE:
        oid, receiver = args
        if receiver == agent or category(state, receiver) != CATEGORY_AGENT:
            return False
        adjacent = receiver in close_targets(state, agent) or agent in close_targets(
            state, receiver
        )
        return (
            placement_of(state, oid) == (oid, HOLDS, agent)
            and adjacent
            and len(held_by(state, receiver)) < 2
        )
    return False


def legal_actions(state: SceneGraph, agent: int) -> tuple[Action, ...]:
    """Every action ``agent`` may take now, sorted for reproducibility."""
    out = [IDLE_ACTION]
    my_room = room_of(state, agent)
    for rid in state.room_adjacency.get(my_room, ()):
        out.append(move_to_room(rid))
    in_room = entities_in_room(state, my_room)
    for eid in in_room:
        if eid != agent:
            out.append(move_to(eid))
    for eid in in_room:
        cls = class_of(state, eid)
        if cls in OPENABLE and is_near(state, agent, eid):
            out.append(
                open_container(eid)
                if not state.open_state.get(eid, False)
                else close_container(eid)
            )
    held = held_by(state, agent)
    if len(held) < 2:
        for eid in in_room:
            if class_of(state, eid) in GRABBABLE and is_legal(state, agent, grab(eid)):
                out.append(grab(eid))
    for oid in held:
        for eid in in_room:
            cat = category(state, eid)
            if cat == CATEGORY_SURFACE and is_near(state, agent, eid):
                out.append(put_on(oid, eid))
            elif (
                cat == CATEGORY_CONTAINER
                and state.open_state.get(eid, False)
                and is_near(state, agent, eid)
            ):
                out.append(put_in(oid, eid))
            elif cat == CATEGORY_AGENT and is_legal(state, agent, give(oid, eid)):
                out.append(give(oid, eid))
    return tuple(sorted(set(out)))


def _apply(state: SceneGraph, agent: int, action: Action) -> tuple[SceneGraph, str]:
    if not is_legal(state, agent, action):
        return state, OUTCOME_FAILED
    kind, args = action.kind, action.args
    if kind == IDLE:
        return state, OUTCOME_OK

    edges = set(state.edges)
    open_state = state.open_state

    if kind == MOVE_TO_ROOM:
        (rid,) = args
        edges.discard(Edge(agent, INSIDE_ROOM, room_of(state, agent)))
        edges.add(Edge(agent, INSIDE_ROOM, rid))
        edges = {e for e in edges if not (e.relation == CLOSE and e.subject == agent)}
        for oid in held_by(state, agent):
            edges.discard(Edge(oid, INSIDE_ROOM, room_of(state, oid)))
            edges.add(Edge(oid, INSIDE_ROOM, rid))
    elif kind == MOVE_TO:
        (eid,) = args
        edges = {e for e in edges if not (e.relation == CLOSE and e.subject == agent)}
        edges.add(Edge(agent, CLOSE, eid))
    elif kind == OPEN:
        open_state = dict(open_state)
        open_state[args[0]] = True
    elif kind == CLOSE_ACT:
        open_state = dict(open_state)
        open_state[args[0]] = False
    elif kind == GRAB:
        (oid,) = args
        _, rel, holder = placement_of(state, oid)
        edges.discard(Edge(oid, rel, holder))
        edges.add(Edge(agent, HOLDS, oid))
    elif kind == PUT_ON:
        oid, sid = args
        edges.discard(Edge(agent, HOLDS, oid))
        edges.add(Edge(oid, ON, sid))
    elif kind == PUT_IN:
        oid, cid = args
        edges.discard(Edge(agent, HOLDS, oid))
        edges.add(Edge(oid, IN, cid))
    elif kind == GIVE:
        oid, receiver = args
        edges.discard(Edge(agent, HOLDS, oid))
        edges.add(Edge(receiver, HOLDS, oid))

    return state.replace(edges=frozenset(edges), open_state=open_state), OUTCOME_OK


def _prune_close(state: SceneGraph) -> SceneGraph:
    stale = [
        e
        for e in state.edges
        if e.relation == CLOSE and room_of(state, e.subject) != room_of(state, e.object)
    ]
    if not stale:
        return state
    return state.replace(edges=state.edges - frozenset(stale))


def step(
    state: SceneGraph, main_action: Action, helper_action: Action
) -> tuple[SceneGraph, dict[int, str]]:
    """Advance one tick with both agents acting.

    Returns the new state and a per-agent outcome of "ok" or "failed".
    """
    main, helper = agents_of(state)[:2]
    s1, out_main = _apply(state, main, main_action)
    s2, out_helper = _apply(s1, helper, helper_action)
    s3 = _prune_close(s2)
    return s3.replace(tick=state.tick + 1), {main: out_main, helper: out_helper}


def step_single(state: SceneGraph, agent: int, action: Action) -> tuple[SceneGraph, str]:
    """One agent acts, the other idles.  Used when replaying plans."""
    main, helper = agents_of(state)[:2]
    if agent == main:
        nxt, outs = step(state, action, IDLE_ACTION)
    else:
        nxt, outs = step(state, IDLE_ACTION, action)
    return nxt, outs[agent]
