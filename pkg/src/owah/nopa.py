"""The goal-inferring helper: particle filter, subgoal values, controller.

The helper never knows the main agent's goal.  It keeps a set of particles,
each one a goal hypothesis paired with a predicted main-agent plan, prunes
particles whose predictions the observed actions contradict, and refills
the set from a proposal distribution when everything is ruled out or the
predictions run stale.  Each tick it scores candidate placement edges by
how much main-agent time they would save, weighted by how many particles
want them, minus its own effort and any extra mess relative to the initial
state, then executes the first action toward the best-scoring edge.

All value arithmetic uses exact fractions so logged decisions can be
recomputed bit for bit.
"""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import NamedTuple, Protocol

import numpy as np

from .episode import EpisodeRecord, HpMainController, json_digest, run_episode
from .goals import (
    GoalSpec,
    PredicateVocabulary,
    is_satisfied,
    marginal_mode_goal,
    project_to_task_goal,
    uniform_goal,
)
from .gpn import GoalPredictionNet, sample_goal
from .planner import (
    MacroCostDrift,
    MctsConfig,
    Plan,
    PlanningView,
    ScriptBuilder,
    mcts_plan,
)
from .worldsim import (
    Action,
    Edge,
    HOLDS,
    IDLE_ACTION,
    IN,
    ON,
    SceneGraph,
    agents_of,
    placements,
    state_hash,
)
from .worldsim.actions import GIVE, GRAB, MOVE_TO, PUT_IN, PUT_ON


@dataclass(frozen=True)
class NopaConfig:
    num_particles: int = 20
    proposal_horizon: int = 15
    max_ticks: int = 250
    benefit_weight: int | Fraction = 1
    cost_weight: int | Fraction = 1
    restore_weight: int | Fraction = 5
    # assumed main-agent steps for edges wanted only by final goals
    goal_only_main_steps: int = 100
    # sharpening of the learned proposal distribution (1 = as trained)
    proposal_temperature: float = 1.0
    # ablation: keep every particle regardless of observed actions
    no_inverse_planning: bool = False
    proposal_search: MctsConfig = MctsConfig()


# --- goal proposers -----------------------------------------------------------


class GoalProposer(Protocol):
    def sample(self, current: SceneGraph, rng: np.random.Generator) -> GoalSpec: ...


@dataclass
class GpnProposer:
    """Draws goals from a trained network conditioned on (first, current).

    With a non-empty ``support`` every draw is snapped onto its most
    similar member, so proposals never leave the goal grammar; the raw
    network samples each predicate row independently and can otherwise
    propose combinations no task produces.
    """

    net: GoalPredictionNet
    vocab: PredicateVocabulary
    first_state: SceneGraph
    temperature: float = 1.0
    support: tuple[GoalSpec, ...] = ()

    def __post_init__(self):
        if self.net.entries != self.vocab.entries:
            raise ValueError("network and vocabulary disagree on predicate rows")

    def sample(self, current: SceneGraph, rng: np.random.Generator) -> GoalSpec:
        raw = sample_goal(
            self.net,
            self.vocab,
            self.first_state,
            current,
            rng,
            temperature=self.temperature,
        )
        if not self.support:
            return raw
        return project_to_task_goal(self.support, raw)


@dataclass
class UniformProposer:
    """Draws goals uniformly from an explicit support (no learning)."""

    support: tuple[GoalSpec, ...]

    def sample(self, current: SceneGraph, rng: np.random.Generator) -> GoalSpec:
        return uniform_goal(rng, self.support)


# --- particles ----------------------------------------------------------------


class Particle(NamedTuple):
    goal: GoalSpec
    plan: Plan
    consumed: int  # plan steps already matched against observed actions
    digest: str

    def suffix(self):
        return self.plan.steps[self.consumed :]


@dataclass(frozen=True)
class ParticleSet:
    particles: tuple[Particle, ...]
    steps_since_resample: int
    created_tick: int

    def goals(self) -> list[GoalSpec]:
        return [p.goal for p in self.particles]

    def marginal_goal(self) -> GoalSpec | None:
        return marginal_mode_goal(self.goals())

    def snapshot(self) -> list[dict]:
        return [
            {"goal": p.goal.to_json_obj(), "plan_hash": p.digest}
            for p in self.particles
        ]


def plan_explains(
    plan: Plan,
    consumed: int,
    action: Action,
    classes: Mapping[int, str] | None = None,
) -> tuple[bool, int]:
    """Does the unexecuted part of the plan contain the action?

    Idling is always consistent (waiting contradicts no goal).  On a match
    the consumed pointer advances past the matched step so each predicted
    action can explain at most one observation.

    With ``classes`` given, the object being grabbed, approached, or placed
    may be any instance of the predicted class: which copy of a duplicated
    object an agent walks to says nothing about its goal.  Placement
    targets still have to match exactly, so where things are being put
    remains fully informative.

    Matching is in order up to movement: steps before the match may be
    skipped only if none of them grabs or places anything.  Skipping a
    predicted grab or placement means the agent walked away from work its
    own plan called for, which contradicts the goal just as much as an
    action the plan never predicted.
    """
    if action == IDLE_ACTION:
        return True, consumed
    steps = plan.steps
    match = None
    for i in range(consumed, len(steps)):
        predicted = steps[i].action
        if predicted == action or (
            classes is not None
            and predicted.kind == action.kind
            and _same_but_for_instance(predicted, action, classes)
        ):
            match = i + 1
            break
    if match is None:
        return False, consumed
    for i in range(consumed, match - 1):
        if steps[i].action.kind in (GRAB, PUT_ON, PUT_IN):
            return False, consumed
    return True, match


def _same_but_for_instance(
    predicted: Action, observed: Action, classes: Mapping[int, str]
) -> bool:
    """Equal actions up to swapping the moved object for a same-class copy."""
    if predicted.kind not in (GRAB, MOVE_TO, PUT_ON, PUT_IN):
        return False
    if predicted.args[1:] != observed.args[1:]:
        return False
    return classes.get(predicted.args[0]) == classes.get(observed.args[0])


def _plan_digest(plan: Plan) -> str:
    return json_digest(
        [state_hash(plan.start), [a.to_json() for a in plan.actions]]
    )


def undo_own_changes(
    current: SceneGraph,
    initial: SceneGraph,
    own_moves: Mapping[int, tuple[str, int]],
) -> SceneGraph:
    """The state with this agent's surviving placements put back.

    ``own_moves`` maps an object to the placement this agent last gave it.
    Entries whose placement no longer holds are ignored (someone else has
    moved the object since, so its position is their evidence, not ours).
    The result feeds goal proposals: a proposal distribution fit to
    episodes where only the main agent acts stays on-distribution when it
    only sees the main agent's changes.
    """
    if not own_moves:
        return current
    place_now = {o: (rel, tgt) for o, rel, tgt in placements(current)}
    place_first = {o: (rel, tgt) for o, rel, tgt in placements(initial)}
    edges = set(current.edges)
    changed = False
    for obj, where in own_moves.items():
        if place_now.get(obj) != where or obj not in place_first:
            continue
        rel0, tgt0 = place_first[obj]
        edges.discard(Edge(obj, where[0], where[1]))
        edges.add(Edge(obj, rel0, tgt0))
        changed = True
    if not changed:
        return current
    return current.replace(edges=frozenset(edges))


def _fresh_particles(
    tick: int,
    current: SceneGraph,
    proposer: GoalProposer,
    cfg: NopaConfig,
    rng: np.random.Generator,
    main_agent: int,
    proposal_state: SceneGraph | None = None,
) -> ParticleSet:
    parts = []
    for index in range(cfg.num_particles):
        goal = proposer.sample(
            current if proposal_state is None else proposal_state, rng
        )
        search = replace(cfg.proposal_search, seed=index)
        plan = mcts_plan(current, main_agent, goal, cfg.proposal_horizon, search)
        parts.append(Particle(goal, plan, 0, _plan_digest(plan)))
    return ParticleSet(tuple(parts), 0, tick)


def update_particles(
    tick: int,
    pset: ParticleSet | None,
    observed_action: Action,
    current: SceneGraph,
    proposer: GoalProposer,
    cfg: NopaConfig,
    rng: np.random.Generator,
    main_agent: int | None = None,
    acted_from: SceneGraph | None = None,
    proposal_state: SceneGraph | None = None,
) -> ParticleSet:
    """One inference step: reject contradicted particles, refill if needed.

    Two signals contradict a particle: the observed action is not part of
    its predicted plan, or (when ``acted_from`` is given) its goal already
    held in the state the action was chosen from, yet the main agent kept
    working.  A particle whose plan is fully consumed has had every one of
    its predictions confirmed, so instead of rejecting it for lacking a
    prediction we replan for its goal and check the action against that.
    A full resample happens exactly when no particle survives rejection or
    when the predictions are ``proposal_horizon`` steps old.
    """
    if main_agent is None:
        main_agent = agents_of(current)[0]
    if (
        pset is not None
        and pset.particles
        and pset.steps_since_resample < cfg.proposal_horizon
    ):
        classes = {o: e.class_name for o, e in current.entities.items()}
        survivors = []
        for index, part in enumerate(pset.particles):
            if cfg.no_inverse_planning:
                consumed = min(part.consumed + 1, len(part.plan))
                survivors.append(part._replace(consumed=consumed))
                continue
            if part.consumed == len(part.plan):
                search = replace(cfg.proposal_search, seed=index)
                plan = mcts_plan(
                    current, main_agent, part.goal, cfg.proposal_horizon, search
                )
                part = Particle(part.goal, plan, 0, _plan_digest(plan))
            ok, consumed = plan_explains(
                part.plan, part.consumed, observed_action, classes
            )
            if ok and observed_action != IDLE_ACTION and acted_from is not None:
                ok = not is_satisfied(acted_from, part.goal)
            if ok:
                survivors.append(part._replace(consumed=consumed))
        if survivors:
            return ParticleSet(
                tuple(survivors), pset.steps_since_resample + 1, pset.created_tick
            )
    return _fresh_particles(
        tick, current, proposer, cfg, rng, main_agent, proposal_state
    )


# --- subgoal candidates ---------------------------------------------------------


@dataclass(frozen=True)
class SubgoalCandidate:
    """A single placement edge the helper could bring about.

    ``main_steps`` estimates when the main agent would otherwise reach the
    edge; ``support`` is the fraction of particles wanting it; ``restore_delta``
    is the exact change the edge would cause in the placement difference
    from the initial state (always -2, 0, or +2, since exactly one object
    moves).
    """

    obj: int
    relation: str
    target: int
    object_class: str
    target_class: str
    from_initial: bool
    main_steps: int
    support: Fraction
    helper_cost: int | None
    restore_delta: int | None
    value: Fraction | None
    order_key: tuple

    def to_json_obj(self) -> dict:
        return {
            "obj": self.obj,
            "relation": self.relation,
            "target": self.target,
            "main_steps": self.main_steps,
            "support": str(self.support),
            "helper_cost": self.helper_cost,
            "restore_delta": self.restore_delta,
            "V": None if self.value is None else str(self.value),
        }


def subgoal_value(
    support: Fraction,
    main_steps: int,
    helper_cost: int,
    restore_delta: int,
    cfg: NopaConfig,
) -> Fraction:
    """Exact edge value: expected main-agent steps saved, scaled by how
    certain the particles are, minus the helper's own cost and a penalty
    for moving the world further from its initial arrangement."""
    benefit = (
        Fraction(cfg.benefit_weight) * support * max(main_steps - helper_cost, 0)
    )
    return (
        benefit
        - Fraction(cfg.cost_weight) * helper_cost
        - Fraction(cfg.restore_weight) * restore_delta
    )


def _edge_of_action(action: Action, main_agent: int):
    if action.kind == GRAB:
        return (action.args[0], HOLDS, main_agent)
    if action.kind == PUT_ON:
        return (action.args[0], ON, action.args[1])
    if action.kind == PUT_IN:
        return (action.args[0], IN, action.args[1])
    return None


def score_candidates(
    pset: ParticleSet,
    first_state: SceneGraph,
    current: SceneGraph,
    helper_agent: int,
    cfg: NopaConfig,
) -> tuple[SubgoalCandidate, ...]:
    """Enumerate and price every candidate edge for the current tick.

    Three sources feed the pool: placements from the initial state (so
    displaced objects can be put back), new placements appearing in the
    particles' predicted plans, and groundings of goal predicates that
    still have unmet counts.  Edges already true now are not candidates.
    """
    view = PlanningView.of(current, helper_agent)
    main_agent = next(a for a in view.agents if a != helper_agent)
    # votes normalize by the survivor count: rejections are evidence, so a
    # consensus among the particles that survived them is full confidence
    total = len(pset.particles)

    # per-edge accounting: first predicted step per supporting particle,
    # plus the set of particles wanting it only as a final goal
    first_step: dict[tuple, dict[int, int]] = {}
    goal_votes: dict[tuple, set[int]] = {}

    satisfied_counts: dict = {}

    def have(pred) -> int:
        if pred not in satisfied_counts:
            satisfied_counts[pred] = sum(
                1
                for o in view.by_class.get(pred.object_class, ())
                if view.place[o] == (pred.relation, pred.location)
            )
        return satisfied_counts[pred]

    for k, part in enumerate(pset.particles):
        seen: set[tuple] = set()
        for i, step in enumerate(part.suffix(), start=1):
            edge = _edge_of_action(step.action, main_agent)
            if edge is None or edge in seen:
                continue
            seen.add(edge)
            if view.place.get(edge[0]) == (edge[1], edge[2]):
                continue  # already true, nothing to help with
            first_step.setdefault(edge, {})[k] = i
        for pred, want in part.goal.items:
            if have(pred) >= want:
                continue
            for o in view.by_class.get(pred.object_class, ()):
                if view.place[o] == (pred.relation, pred.location):
                    continue
                goal_votes.setdefault((o, pred.relation, pred.location), set()).add(k)

    initial_place = {
        o: (rel, tgt)
        for o, rel, tgt in placements(first_state)
        if o in view.place and rel != HOLDS
    }

    endorsed_cache: dict[int, bool] = {}
    marginal = pset.marginal_goal()

    def endorsed(o: int) -> bool:
        """Does the consensus goal read this object's current spot as progress?

        Moving such an object anywhere would undo what the helper believes
        the main agent wants, so it is not a candidate for any edge.  The
        consensus is the modal goal across particles, so a lone hypothesis
        cannot pin an object in place: excess copies beyond the consensus
        count stay movable, and so does anything in the helper's own hand.
        """
        if o in endorsed_cache:
            return endorsed_cache[o]
        rel_now, tgt_now = view.place[o]
        keep = False
        if rel_now != HOLDS and marginal is not None:
            cls = view.classes[o]
            for pred, want in marginal.items:
                if (
                    (pred.relation, pred.object_class, pred.location)
                    == (rel_now, cls, tgt_now)
                    and have(pred) <= want
                ):
                    keep = True
                    break
        endorsed_cache[o] = keep
        return keep

    restore_edges = {
        (o, rel, tgt)
        for o, (rel, tgt) in initial_place.items()
        if view.place[o] != (rel, tgt) and not endorsed(o)
    }

    candidates = []
    for edge in sorted(restore_edges | set(first_step) | set(goal_votes)):
        obj, rel, target = edge
        if edge not in restore_edges and endorsed(obj):
            continue
        if edge in restore_edges:
            main_steps, support = 0, Fraction(1)
            from_initial = True
        else:
            steps = first_step.get(edge, {})
            voters = set(steps) | goal_votes.get(edge, set())
            main_steps = min(steps.values()) if steps else cfg.goal_only_main_steps
            support = Fraction(len(voters), total)
            from_initial = False
        parts = (
            view.give_parts(obj, target)
            if rel == HOLDS
            else view.fetch_parts(obj, rel, target)
        )
        if parts is None:
            cost = delta = value = None
        else:
            cost = parts.cost
            before = 0 if view.place[obj] == initial_place.get(obj) else 2
            after = 0 if (rel, target) == initial_place.get(obj) else 2
            delta = after - before
            value = subgoal_value(support, main_steps, cost, delta, cfg)
        candidates.append(
            SubgoalCandidate(
                obj=obj,
                relation=rel,
                target=target,
                object_class=view.classes[obj],
                target_class=view.classes[target],
                from_initial=from_initial,
                main_steps=main_steps,
                support=support,
                helper_cost=cost,
                restore_delta=delta,
                value=value,
                order_key=(rel, view.classes[obj], view.classes[target], target, obj),
            )
        )
    return tuple(candidates)


def pick_best(
    candidates: tuple[SubgoalCandidate, ...], cfg: NopaConfig
) -> SubgoalCandidate | None:
    """Highest-value plannable candidate, or None when nothing is worth it.

    Values are recomputed from the raw fields so callers can re-rank the
    same pool under different weights.  Ties prefer the cheaper helper
    plan, then the vocabulary-style edge ordering.
    """
    best = None
    best_key = None
    for c in candidates:
        if c.helper_cost is None:
            continue
        v = subgoal_value(c.support, c.main_steps, c.helper_cost, c.restore_delta, cfg)
        key = (-v, c.helper_cost, c.order_key)
        if best is None or key < best_key:
            best, best_key = replace(c, value=v), key
    if best is None or best.value <= 0:
        return None
    return best


@dataclass(frozen=True)
class SubgoalDecision:
    plan: Plan | None
    chosen: SubgoalCandidate | None
    candidates: tuple[SubgoalCandidate, ...]


def select_subgoal(
    pset: ParticleSet,
    first_state: SceneGraph,
    current: SceneGraph,
    helper_agent: int,
    cfg: NopaConfig,
) -> SubgoalDecision:
    """Score all candidate edges and plan concretely for the winner."""
    candidates = score_candidates(pset, first_state, current, helper_agent, cfg)
    chosen = pick_best(candidates, cfg)
    if chosen is None:
        return SubgoalDecision(None, None, candidates)
    b = ScriptBuilder(current, helper_agent)
    if chosen.relation == HOLDS:
        b.give_to(chosen.obj, chosen.target)
    else:
        b.fetch(chosen.obj, chosen.relation, chosen.target)
    if len(b) != chosen.helper_cost:
        raise MacroCostDrift(
            f"subgoal {chosen.obj}->{chosen.target} built {len(b)} steps, "
            f"priced {chosen.helper_cost}"
        )
    return SubgoalDecision(b.plan(), chosen, candidates)


# --- the controller --------------------------------------------------------------


class NopaHelper:
    """Tick-by-tick helper: infer, pick a subgoal, act on its first step."""

    def __init__(
        self,
        proposer: GoalProposer,
        cfg: NopaConfig | None = None,
        seed: int = 0,
        name: str = "nopa",
    ):
        self.proposer = proposer
        self.cfg = cfg or NopaConfig()
        self.rng = np.random.default_rng(seed)
        self.name = name
        self.particles: ParticleSet | None = None
        self.last_decision: SubgoalDecision | None = None
        self._acted_from: SceneGraph | None = None
        self._own_moves: dict[int, tuple[str, int]] = {}

    def _record_move(self, action: Action, helper_agent: int) -> None:
        if action.kind == GRAB:
            self._own_moves[action.args[0]] = (HOLDS, helper_agent)
        elif action.kind == PUT_ON:
            self._own_moves[action.args[0]] = (ON, action.args[1])
        elif action.kind == PUT_IN:
            self._own_moves[action.args[0]] = (IN, action.args[1])
        elif action.kind == GIVE:
            self._own_moves[action.args[0]] = (HOLDS, action.args[1])

    def act(
        self,
        tick: int,
        first_state: SceneGraph,
        state: SceneGraph,
        observed_main_action: Action | None,
    ) -> Action:
        if tick == 0 or observed_main_action is None:
            # nothing observed yet: no particles, no opinion, no action
            self.last_decision = None
            self._acted_from = state
            return IDLE_ACTION
        main_agent, helper_agent = agents_of(state)[:2]
        place_now = {o: (rel, tgt) for o, rel, tgt in placements(state)}
        self._own_moves = {
            o: where for o, where in self._own_moves.items()
            if place_now.get(o) == where
        }
        self.particles = update_particles(
            tick,
            self.particles,
            observed_main_action,
            state,
            self.proposer,
            self.cfg,
            self.rng,
            main_agent,
            acted_from=self._acted_from,
            proposal_state=undo_own_changes(state, first_state, self._own_moves),
        )
        self._acted_from = state
        decision = select_subgoal(
            self.particles, first_state, state, helper_agent, self.cfg
        )
        self.last_decision = decision
        if decision.plan is None or not decision.plan.steps:
            return IDLE_ACTION
        action = decision.plan.steps[0].action
        self._record_move(action, helper_agent)
        return action

    def predicted_goal(self) -> GoalSpec | None:
        if self.particles is None:
            return None
        return self.particles.marginal_goal()

    def diagnostics(self) -> dict:
        out: dict = {
            "particles": None if self.particles is None else self.particles.snapshot()
        }
        chosen = self.last_decision.chosen if self.last_decision else None
        out["chosen_subgoal"] = None if chosen is None else chosen.to_json_obj()
        out["V"] = None if chosen is None else str(chosen.value)
        return out


def run_nopa_episode(
    initial_state: SceneGraph,
    goal: GoalSpec,
    proposer: GoalProposer,
    cfg: NopaConfig | None = None,
    seed: int = 0,
    meta: dict | None = None,
) -> EpisodeRecord:
    """Full episode with an oracle-planning main agent and this helper."""
    cfg = cfg or NopaConfig()
    helper = NopaHelper(proposer, cfg, seed)
    return run_episode(
        initial_state,
        goal,
        HpMainController(goal),
        helper,
        max_ticks=cfg.max_ticks,
        meta=meta,
    )
