"""Fetch macros, their exact cost model, and the greedy placement planner.

Plans are built from a small family of macros: fetch an object and put it
somewhere, hand it to the other agent, or set a held object down.  Each
macro has two faces that must stay in lockstep:

* ``ScriptBuilder`` emits the concrete action sequence by simulating it.
* ``PlanningView`` prices the same macro analytically without touching the
  scene graph, which is what makes tree search affordable.

``ScriptBuilder.fetch`` and ``PlanningView.fetch_parts`` make identical
navigate/open decisions by construction, and the planners cross-check the
two after every committed macro, so any drift fails loudly instead of
skewing costs.
"""

from __future__ import annotations

from typing import NamedTuple

from ..errors import UnreachableSubgoalError
from ..goals import GoalSpec, Predicate
from ..worldsim import (
    Action,
    HOLDS,
    IDLE_ACTION,
    IN,
    ON,
    SceneGraph,
    OUTCOME_OK,
    close_targets,
    give,
    grab,
    held_by,
    is_near,
    move_to,
    move_to_room,
    open_container,
    placement_of,
    placements,
    put_in,
    put_on,
    room_distances,
    room_of,
    room_path,
    step_single,
)
from ..worldsim.classes import (
    CATEGORY_AGENT,
    CATEGORY_CONTAINER,
    CATEGORY_OBJECT,
    CATEGORY_SURFACE,
)
from .plans import Plan, PlanStep


class MacroCostDrift(RuntimeError):
    """Concrete script length disagreed with the analytic cost model."""


# --- concrete side ---------------------------------------------------------


class ScriptBuilder:
    """Assembles macro scripts by simulating each action as it is added."""

    def __init__(self, state: SceneGraph, agent: int):
        self.start = state
        self.state = state
        self.agent = agent
        self.steps: list[PlanStep] = []

    def __len__(self) -> int:
        return len(self.steps)

    def do(self, action: Action) -> None:
        nxt, outcome = step_single(self.state, self.agent, action)
        if outcome != OUTCOME_OK:
            raise UnreachableSubgoalError(
                f"agent {self.agent} cannot execute {action} at step {len(self.steps)}"
            )
        self.state = nxt
        self.steps.append(PlanStep(action, nxt))

    def plan(self) -> Plan:
        return Plan(self.agent, self.start, tuple(self.steps))

    def _navigate(self, target: int, near_probe: int) -> None:
        """Walk to ``target``'s room and step up to it unless ``near_probe``
        (the entity we actually need to interact with) is already in reach."""
        here = room_of(self.state, self.agent)
        for rid in room_path(self.state, here, room_of(self.state, target)):
            self.do(move_to_room(rid))
        if not is_near(self.state, self.agent, near_probe):
            self.do(move_to(target))

    def _pick_up(self, obj: int) -> None:
        rel, src = placement_of(self.state, obj)[1:]
        self._navigate(src, near_probe=obj)
        if rel == IN and not self.state.open_state[src]:
            self.do(open_container(src))
        self.do(grab(obj))

    def _put_down(self, obj: int, dest_rel: str, dest: int) -> None:
        self._navigate(dest, near_probe=dest)
        if dest_rel == IN and not self.state.open_state[dest]:
            self.do(open_container(dest))
        self.do(put_in(obj, dest) if dest_rel == IN else put_on(obj, dest))

    def fetch(self, obj: int, dest_rel: str, dest: int) -> None:
        """Bring ``obj`` to ``dest``; grabs first unless already in hand."""
        if placement_of(self.state, obj)[1] != HOLDS:
            self._pick_up(obj)
        self._put_down(obj, dest_rel, dest)

    def fetch_pair(
        self,
        o1: int,
        d1_rel: str,
        d1: int,
        o2: int,
        d2_rel: str,
        d2: int,
    ) -> None:
        """Grab two co-located objects in one trip, then place both."""
        self._pick_up(o1)
        rel2, src2 = placement_of(self.state, o2)[1:]
        if not is_near(self.state, self.agent, o2):
            self.do(move_to(src2))
        if rel2 == IN and not self.state.open_state[src2]:
            self.do(open_container(src2))
        self.do(grab(o2))
        self._put_down(o1, d1_rel, d1)
        self._put_down(o2, d2_rel, d2)

    def give_to(self, obj: int, receiver: int) -> None:
        """Bring ``obj`` to the other agent and hand it over."""
        if placement_of(self.state, obj)[1] != HOLDS:
            self._pick_up(obj)
        here = room_of(self.state, self.agent)
        for rid in room_path(self.state, here, room_of(self.state, receiver)):
            self.do(move_to_room(rid))
        if receiver not in close_targets(self.state, self.agent):
            self.do(move_to(receiver))
        self.do(give(obj, receiver))


# --- analytic side ---------------------------------------------------------


class MacroParts(NamedTuple):
    """Priced macro: its length plus the view updates applying it causes."""

    cost: int
    room: int
    near: frozenset[int]
    opened: tuple[int, ...]
    moves: tuple[tuple[int, str, int], ...]  # (object, relation, target)


class PlanningView:
    """Placement-level abstraction of a scene graph for plan search.

    Prices macros in O(1) without building new graphs.  The static maps
    (room distances, furniture rooms, class rosters) are shared between
    views; only the mutable placement and open-flag dicts are copied when a
    macro is applied.
    """

    __slots__ = (
        "dist",
        "rooms",
        "classes",
        "by_class",
        "surfaces",
        "containers",
        "agent",
        "agents",
        "room",
        "near",
        "held",
        "other_held",
        "place",
        "open_flags",
    )

    @staticmethod
    def of(state: SceneGraph, agent: int) -> "PlanningView":
        v = PlanningView()
        v.dist = room_distances(state)
        rooms: dict[int, int] = {}
        classes: dict[int, str] = {}
        by_class: dict[str, tuple[int, ...]] = {}
        surfaces: list[int] = []
        containers: list[int] = []
        agents: list[int] = []
        for eid, ent in state.entities.items():
            classes[eid] = ent.class_name
            cat = ent.category
            if cat == CATEGORY_SURFACE:
                surfaces.append(eid)
                rooms[eid] = room_of(state, eid)
            elif cat == CATEGORY_CONTAINER:
                containers.append(eid)
                rooms[eid] = room_of(state, eid)
            elif cat == CATEGORY_AGENT:
                agents.append(eid)
                rooms[eid] = room_of(state, eid)
            elif cat == CATEGORY_OBJECT:
                cls = ent.class_name
                by_class[cls] = by_class.get(cls, ()) + (eid,)
        v.rooms = rooms
        v.classes = classes
        v.by_class = {c: tuple(sorted(ids)) for c, ids in by_class.items()}
        v.surfaces = tuple(sorted(surfaces))
        v.containers = tuple(sorted(containers))
        v.agent = agent
        v.agents = tuple(sorted(agents))
        v.room = room_of(state, agent)
        v.near = close_targets(state, agent)
        v.held = frozenset(held_by(state, agent))
        v.other_held = {
            a: frozenset(held_by(state, a)) for a in v.agents if a != agent
        }
        v.place = {p[0]: (p[1], p[2]) for p in placements(state)}
        v.open_flags = dict(state.open_state)
        return v

    def _clone(self) -> "PlanningView":
        v = PlanningView()
        for name in self.__slots__:
            setattr(v, name, getattr(self, name))
        return v

    # -- geometry ----------------------------------------------------------

    def _near_ok(self, near: frozenset[int], eid: int, moved: dict) -> bool:
        """Mirror of ``worldsim.is_near`` against this view plus mid-macro
        placement overrides in ``moved``."""
        if eid in near:
            return True
        p = moved.get(eid) or self.place.get(eid)
        if p is not None and p[0] != HOLDS and p[1] in near:
            return True
        for c in near:
            if c == eid:
                continue
            pc = moved.get(c) or self.place.get(c)
            if pc is not None and pc[0] != HOLDS and pc[1] == eid:
                return True
        return False

    def _nav(
        self,
        room: int,
        near: frozenset[int],
        target: int,
        probe: int,
        moved: dict,
    ) -> tuple[int, int, frozenset[int]] | None:
        """Cost of walking until ``probe`` is interactable, stepping up to
        ``target``.  Returns (cost, room, near) or None if unreachable."""
        troom = self.rooms[target]
        hops = self.dist[room].get(troom)
        if hops is None:
            return None
        if hops:
            return hops + 1, troom, frozenset((target,))
        if self._near_ok(near, probe, moved):
            return 0, room, near
        return 1, room, frozenset((target,))

    def object_room(self, obj: int) -> int:
        rel, tgt = self.place[obj]
        if rel == HOLDS:
            return self.room if tgt == self.agent else self.rooms[tgt]
        return self.rooms[tgt]

    # -- macro pricing -----------------------------------------------------

    def fetch_parts(self, obj: int, dest_rel: str, dest: int) -> MacroParts | None:
        p = self.place[obj]
        cost = 0
        room, near = self.room, self.near
        opened: tuple[int, ...] = ()
        moved: dict[int, tuple[str, int]] = {}
        if p[0] == HOLDS:
            if p[1] != self.agent:
                return None
        else:
            if len(self.held) >= 2:
                return None
            src = p[1]
            nav = self._nav(room, near, src, probe=obj, moved=moved)
            if nav is None:
                return None
            c, room, near = nav
            cost += c
            if p[0] == IN and not self.open_flags[src]:
                cost += 1
                opened += (src,)
            cost += 1  # grab
            moved[obj] = (HOLDS, self.agent)
        nav = self._nav(room, near, dest, probe=dest, moved=moved)
        if nav is None:
            return None
        c, room, near = nav
        cost += c
        if dest_rel == IN and not (self.open_flags[dest] or dest in opened):
            cost += 1
            opened += (dest,)
        cost += 1  # put
        return MacroParts(cost, room, near, opened, ((obj, dest_rel, dest),))

    def pair_parts(
        self,
        o1: int,
        d1_rel: str,
        d1: int,
        o2: int,
        d2_rel: str,
        d2: int,
    ) -> MacroParts | None:
        """Price a two-object trip.  Both objects must be resting in the
        same room and both hands must be free."""
        if self.held:
            return None
        p1, p2 = self.place[o1], self.place[o2]
        if p1[0] == HOLDS or p2[0] == HOLDS:
            return None
        src1, src2 = p1[1], p2[1]
        if self.rooms[src1] != self.rooms[src2]:
            return None
        cost = 0
        room, near = self.room, self.near
        opened: tuple[int, ...] = ()
        moved: dict[int, tuple[str, int]] = {}

        nav = self._nav(room, near, src1, probe=o1, moved=moved)
        if nav is None:
            return None
        c, room, near = nav
        cost += c
        if p1[0] == IN and not self.open_flags[src1]:
            cost += 1
            opened += (src1,)
        cost += 1
        moved[o1] = (HOLDS, self.agent)

        if not self._near_ok(near, o2, moved):
            cost += 1
            near = frozenset((src2,))
        if p2[0] == IN and not (self.open_flags[src2] or src2 in opened):
            cost += 1
            opened += (src2,)
        cost += 1
        moved[o2] = (HOLDS, self.agent)

        for obj, rel, dest in ((o1, d1_rel, d1), (o2, d2_rel, d2)):
            nav = self._nav(room, near, dest, probe=dest, moved=moved)
            if nav is None:
                return None
            c, room, near = nav
            cost += c
            if rel == IN and not (self.open_flags[dest] or dest in opened):
                cost += 1
                opened += (dest,)
            cost += 1
            moved[obj] = (rel, dest)
        return MacroParts(
            cost, room, near, opened, ((o1, d1_rel, d1), (o2, d2_rel, d2))
        )

    def give_parts(self, obj: int, receiver: int) -> MacroParts | None:
        if len(self.other_held.get(receiver, ())) >= 2:
            return None
        p = self.place[obj]
        cost = 0
        room, near = self.room, self.near
        opened: tuple[int, ...] = ()
        moved: dict[int, tuple[str, int]] = {}
        if p[0] == HOLDS:
            if p[1] != self.agent:
                return None
        else:
            if len(self.held) >= 2:
                return None
            src = p[1]
            nav = self._nav(room, near, src, probe=obj, moved=moved)
            if nav is None:
                return None
            c, room, near = nav
            cost += c
            if p[0] == IN and not self.open_flags[src]:
                cost += 1
                opened += (src,)
            cost += 1
            moved[obj] = (HOLDS, self.agent)
        rroom = self.rooms[receiver]
        hops = self.dist[room].get(rroom)
        if hops is None:
            return None
        if hops:
            cost += hops
            room, near = rroom, frozenset()
        if receiver not in near:
            cost += 1
            near = frozenset((receiver,))
        cost += 1  # hand over
        return MacroParts(cost, room, near, opened, ((obj, HOLDS, receiver),))

    def applied(self, parts: MacroParts) -> "PlanningView":
        v = self._clone()
        v.room = parts.room
        v.near = parts.near
        place = dict(self.place)
        held = self.held
        for obj, rel, tgt in parts.moves:
            if place[obj] == (HOLDS, self.agent):
                held = held - {obj}
            place[obj] = (rel, tgt)
        v.place = place
        v.held = held
        if parts.opened:
            flags = dict(self.open_flags)
            for c in parts.opened:
                flags[c] = True
            v.open_flags = flags
        return v


# --- goal bookkeeping over views -------------------------------------------


def predicate_sort_key(view: PlanningView, pred: Predicate) -> tuple:
    """Orders predicates the way the class-level vocabulary does."""
    return (pred.relation, pred.object_class, view.classes[pred.location], pred.location)


def remaining_needs(view: PlanningView, goal: GoalSpec) -> list[tuple[Predicate, int]]:
    """Predicates still short of their goal count, with how many are missing."""
    sat: dict[tuple[str, str, int], int] = {}
    for o, (rel, tgt) in view.place.items():
        if rel != HOLDS:
            key = (rel, view.classes[o], tgt)
            sat[key] = sat.get(key, 0) + 1
    out = []
    for pred, cnt in goal.items:
        r = cnt - sat.get((pred.relation, pred.object_class, pred.location), 0)
        if r > 0:
            out.append((pred, r))
    return out


def available_instances(view: PlanningView, goal: GoalSpec, cls: str) -> list[int]:
    """Instances of ``cls`` the planner may move.

    Excludes objects in the other agent's hands and the lowest-id objects
    already sitting where a goal predicate needs them (those are pinned as
    satisfiers and must stay put).
    """
    pinned: set[int] = set()
    roster = view.by_class.get(cls, ())
    for pred, cnt in goal.items:
        if pred.object_class != cls:
            continue
        at = [
            o
            for o in roster
            if view.place[o] == (pred.relation, pred.location)
        ]
        pinned.update(at[:cnt])
    out = []
    for o in roster:
        if o in pinned:
            continue
        rel, tgt = view.place[o]
        if rel == HOLDS and tgt != view.agent:
            continue
        out.append(o)
    return out


class Move(NamedTuple):
    """A priced candidate macro considered by the planners."""

    cost: int
    order_key: tuple
    parts: MacroParts
    pred: Predicate
    obj: int


def enumerate_single_moves(
    view: PlanningView,
    goal: GoalSpec,
    needs: list[tuple[Predicate, int]] | None = None,
) -> list[Move]:
    """All single-object fetch candidates for the unmet goal predicates."""
    if needs is None:
        needs = remaining_needs(view, goal)
    out = []
    for pred, _ in needs:
        pkey = predicate_sort_key(view, pred)
        for o in available_instances(view, goal, pred.object_class):
            parts = view.fetch_parts(o, pred.relation, pred.location)
            if parts is None:
                continue
            out.append(Move(parts.cost, (pkey, o), parts, pred, o))
    out.sort(key=lambda m: (m.cost, m.order_key))
    return out


def choose_unload(view: PlanningView, obj: int) -> MacroParts:
    """Cheapest way to set a held object down somewhere out of the way."""
    best = None
    best_key = None
    for spot in view.surfaces:
        parts = view.fetch_parts(obj, ON, spot)
        if parts is not None and (best is None or (parts.cost, spot) < best_key):
            best, best_key = parts, (parts.cost, spot)
    for spot in view.containers:
        parts = view.fetch_parts(obj, IN, spot)
        if parts is not None and (best is None or (parts.cost, spot) < best_key):
            best, best_key = parts, (parts.cost, spot)
    if best is None:
        raise UnreachableSubgoalError(f"no reachable spot to set object {obj} down")
    return best


def _stuck_unload(view: PlanningView, goal: GoalSpec) -> MacroParts | None:
    """When both hands are full of objects no goal predicate wants, free one."""
    if len(view.held) < 2:
        return None
    needy = {p.object_class for p, _ in remaining_needs(view, goal)}
    junk = sorted(o for o in view.held if view.classes[o] not in needy)
    if not junk:
        return None
    return choose_unload(view, junk[0])


def hp_plan(
    state: SceneGraph, agent: int, goal: GoalSpec, partial: bool = False
) -> Plan:
    """Greedy nearest-first placement planner.

    Repeatedly fetches whichever needed object is cheapest to deliver from
    where the agent currently stands, breaking ties by vocabulary order and
    then instance id.  Deterministic.  Raises UnreachableSubgoalError when
    the goal cannot be completed; with ``partial`` set an impossible
    remainder ends the plan instead, so callers get whatever prefix is
    still achievable (goals can ask for more instances than exist).
    """
    b = ScriptBuilder(state, agent)
    while True:
        view = PlanningView.of(b.state, agent)
        needs = remaining_needs(view, goal)
        if not needs:
            break
        moves = enumerate_single_moves(view, goal, needs)
        if moves:
            chosen = moves[0]
            before = len(b)
            b.fetch(chosen.obj, chosen.pred.relation, chosen.pred.location)
            if len(b) - before != chosen.cost:
                raise MacroCostDrift(
                    f"fetch of {chosen.obj} cost {len(b) - before}, priced {chosen.cost}"
                )
            continue
        try:
            unload = _stuck_unload(view, goal)
        except UnreachableSubgoalError:
            unload = None
        if unload is None:
            if partial:
                break
            raise UnreachableSubgoalError(f"no way to advance toward {goal.to_json()}")
        obj, rel, spot = unload.moves[0]
        before = len(b)
        b.fetch(obj, rel, spot)
        if len(b) - before != unload.cost:
            raise MacroCostDrift(
                f"unload of {obj} cost {len(b) - before}, priced {unload.cost}"
            )
    return b.plan()


def hp_assist_action(state: SceneGraph, agent: int, goal: GoalSpec) -> Action:
    """Next action for a second agent working the same goal list.

    Complements the greedy planner instead of copying it, three ways:
    predicates whose missing count is covered by objects other agents are
    already carrying count as handled; the needs list is walked from the
    opposite end of the canonical predicate order; and equal-cost instance
    ties break toward the high id.  Two greedy agents then split the work
    instead of racing each other to the same object.  Best-effort: returns
    Idle when nothing useful is plannable this tick.
    """
    view = PlanningView.of(state, agent)
    needs = remaining_needs(view, goal)
    carried: dict[str, int] = {}
    for o, (rel, tgt) in view.place.items():
        if rel == HOLDS and tgt != agent:
            cls = view.classes[o]
            carried[cls] = carried.get(cls, 0) + 1
    open_needs = []
    for pred, missing in needs:
        covered = min(missing, carried.get(pred.object_class, 0))
        if covered:
            carried[pred.object_class] -= covered
        if missing - covered > 0:
            open_needs.append(pred)
    open_needs.sort(key=lambda p: predicate_sort_key(view, p), reverse=True)
    for pred in open_needs:
        best = None
        for o in available_instances(view, goal, pred.object_class):
            parts = view.fetch_parts(o, pred.relation, pred.location)
            if parts is None:
                continue
            if best is None or (parts.cost, -o) < best[0]:
                best = ((parts.cost, -o), o)
        if best is None:
            continue
        b = ScriptBuilder(state, agent)
        b.fetch(best[1], pred.relation, pred.location)
        plan = b.plan()
        if plan.steps:
            return plan.steps[0].action
    return IDLE_ACTION
