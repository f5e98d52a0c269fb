"""Comparison helper controllers behind one construction interface.

Every controller satisfies the same protocol the episode runner drives:
a ``name``, an ``act(tick, first_state, state, observed_main_action)``
method, and optionally a ``predicted_goal()`` for scoring inference
quality.  None of them ever emits an illegal action: planning failures
degrade to idling.  Helpers that chase an explicit goal plan with
``hp_assist_action``, which skips work another agent is already carrying
out and walks the goal list from the opposite end of the canonical
order, so two greedy agents split the labor instead of racing for the
same object.

The ``nopa`` kind wires up the particle-filter helper itself (which
idles on the first tick, before any observation exists); ablation flags
reuse that exact code path with a tweaked configuration.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, replace

import numpy as np

from .errors import UnreachableSubgoalError
from .goals import (
    GoalSpec,
    PredicateVocabulary,
    enumerate_task_goals,
    marginal_mode_goal,
    uniform_goal,
)
from .gpn import GoalPredictionNet, argmax_goal, sample_goal
from .nopa import (
    GpnProposer,
    NopaConfig,
    NopaHelper,
    UniformProposer,
    _edge_of_action,
)
from .planner import ScriptBuilder, hp_assist_action, hp_plan
from .worldsim import (
    Action,
    HOLDS,
    IDLE_ACTION,
    SceneGraph,
    agents_of,
)

HELPER_KINDS = ("none", "nopa", "hp_gt", "hp_gpn", "af_gpn", "empowerment", "hp_rg")
ABLATIONS = ("random_proposals", "no_inverse_planning", "no_return")
GPN_TAGS = ("large", "small")


@dataclass(frozen=True)
class HelperSpec:
    """Parsed form of the ``--helper`` selector, e.g. ``nopa,no_return``."""

    kind: str
    ablations: frozenset = frozenset()
    gpn_tag: str = "large"

    def __post_init__(self):
        if self.kind not in HELPER_KINDS:
            raise ValueError(f"unknown helper kind {self.kind!r}")
        bad = set(self.ablations) - set(ABLATIONS)
        if bad:
            raise ValueError(f"unknown ablations {sorted(bad)!r}")
        if self.ablations and self.kind != "nopa":
            raise ValueError("ablation flags are only valid with the nopa helper")
        if self.gpn_tag not in GPN_TAGS:
            raise ValueError(f"unknown gpn tag {self.gpn_tag!r}")

    @property
    def label(self) -> str:
        parts = [self.kind] + sorted(self.ablations)
        return ",".join(parts)

    @property
    def needs_gpn(self) -> bool:
        if self.kind in ("hp_gpn", "af_gpn"):
            return True
        return self.kind == "nopa" and "random_proposals" not in self.ablations

    @staticmethod
    def parse(text: str) -> "HelperSpec":
        tokens = [t.strip() for t in text.split(",") if t.strip()]
        if not tokens:
            raise ValueError("empty helper selector")
        kind, rest = tokens[0], tokens[1:]
        ablations = set()
        gpn_tag = "large"
        for token in rest:
            if token.startswith("gpn="):
                gpn_tag = token.split("=", 1)[1]
            else:
                ablations.add(token)
        return HelperSpec(kind, frozenset(ablations), gpn_tag)


class NoopHelper:
    """Does nothing, forever; the solo lower bound."""

    name = "none"

    def act(self, tick, first_state, state, observed_main_action) -> Action:
        return IDLE_ACTION


class HpGoalHelper:
    """Fetches toward a per-tick goal estimate, avoiding duplicated work.

    The estimate callback may return None (no opinion).  Planning is
    best-effort: when part of the estimate is impossible (say a count
    higher than the apartment stocks, or the main agent holding the last
    instance) the helper does what it can and idles on the rest.
    """

    def __init__(self, name: str, estimate):
        self.name = name
        self._estimate = estimate
        self._last: GoalSpec | None = None

    def act(self, tick, first_state, state, observed_main_action) -> Action:
        self._last = self._estimate(first_state, state)
        if self._last is None:
            return IDLE_ACTION
        agent = agents_of(state)[1]
        return hp_assist_action(state, agent, self._last)

    def predicted_goal(self) -> GoalSpec | None:
        return self._last


def hp_gt_helper(goal: GoalSpec) -> HpGoalHelper:
    return HpGoalHelper("hp_gt", lambda first, state: goal)


def hp_rg_helper(support, seed: int = 0) -> HpGoalHelper:
    rng = np.random.default_rng(seed)
    fixed = uniform_goal(rng, tuple(support))
    return HpGoalHelper("hp_rg", lambda first, state: fixed)


def hp_gpn_helper(net: GoalPredictionNet, vocab: PredicateVocabulary) -> HpGoalHelper:
    return HpGoalHelper(
        "hp_gpn", lambda first, state: argmax_goal(net, vocab, first, state)
    )


class ActionFrequencyHelper:
    """Samples goals, plans toward each, and runs the modal first action."""

    name = "af_gpn"

    def __init__(
        self,
        net: GoalPredictionNet,
        vocab: PredicateVocabulary,
        num_samples: int = 20,
        seed: int = 0,
    ):
        self.net = net
        self.vocab = vocab
        self.num_samples = num_samples
        self.rng = np.random.default_rng(seed)
        self._samples: list[GoalSpec] = []

    def act(self, tick, first_state, state, observed_main_action) -> Action:
        agent = agents_of(state)[1]
        self._samples = [
            sample_goal(self.net, self.vocab, first_state, state, self.rng)
            for _ in range(self.num_samples)
        ]
        tally: Counter = Counter()
        for goal in self._samples:
            tally[hp_assist_action(state, agent, goal)] += 1
        top = max(tally.values())
        return min(a for a, n in tally.items() if n == top)

    def predicted_goal(self) -> GoalSpec | None:
        return marginal_mode_goal(self._samples)


class EmpowermentHelper:
    """Chases the placement edge most plans share, whatever the goal is.

    Uniformly samples goals every tick, plans toward each, tallies the
    placement edges those plans would create, and fetches toward the most
    frequent one.  No inference, no uncertainty bookkeeping.
    """

    name = "empowerment"

    def __init__(self, support, num_samples: int = 20, seed: int = 0):
        self.support = tuple(support)
        self.num_samples = num_samples
        self.rng = np.random.default_rng(seed)

    def act(self, tick, first_state, state, observed_main_action) -> Action:
        agent = agents_of(state)[1]
        tally: Counter = Counter()
        for _ in range(self.num_samples):
            goal = uniform_goal(self.rng, self.support)
            plan = hp_plan(state, agent, goal, partial=True)
            seen = set()
            for action in plan.actions:
                edge = _edge_of_action(action, agent)
                if edge is None or edge[1] == HOLDS or edge in seen:
                    continue
                seen.add(edge)
                tally[edge] += 1
        for edge, _ in sorted(tally.items(), key=lambda kv: (-kv[1], kv[0])):
            obj, rel, target = edge
            builder = ScriptBuilder(state, agent)
            try:
                builder.fetch(obj, rel, target)
            except UnreachableSubgoalError:
                continue
            plan = builder.plan()
            if plan.steps:
                return plan.steps[0].action
        return IDLE_ACTION


def make_helper(
    spec: HelperSpec | str,
    *,
    state: SceneGraph,
    goal: GoalSpec,
    net: GoalPredictionNet | None = None,
    vocab: PredicateVocabulary | None = None,
    support=None,
    cfg: NopaConfig | None = None,
    seed: int = 0,
):
    """Build the helper controller a spec describes, for one episode.

    ``state`` is the episode's initial state (proposal support and the
    network conditioning both key off it); ``goal`` is the main agent's
    true goal, used only by the ground-truth reference helper.
    """
    if isinstance(spec, str):
        spec = HelperSpec.parse(spec)
    if spec.needs_gpn and net is None:
        raise ValueError(f"helper {spec.label!r} requires a trained network")
    if support is None:
        support = tuple(enumerate_task_goals(state))

    if spec.kind == "none":
        return NoopHelper()
    if spec.kind == "hp_gt":
        return hp_gt_helper(goal)
    if spec.kind == "hp_rg":
        return hp_rg_helper(support, seed)
    if spec.kind == "hp_gpn":
        return hp_gpn_helper(net, vocab or PredicateVocabulary.from_state(state))
    if spec.kind == "af_gpn":
        return ActionFrequencyHelper(
            net, vocab or PredicateVocabulary.from_state(state), seed=seed
        )
    if spec.kind == "empowerment":
        return EmpowermentHelper(support, seed=seed)

    base = cfg or NopaConfig()
    if "no_inverse_planning" in spec.ablations:
        base = replace(base, no_inverse_planning=True)
    if "no_return" in spec.ablations:
        base = replace(base, restore_weight=0)
    if "random_proposals" in spec.ablations:
        proposer = UniformProposer(support)
    else:
        proposer = GpnProposer(
            net,
            vocab or PredicateVocabulary.from_state(state),
            state,
            temperature=base.proposal_temperature,
            support=support,
        )
    return NopaHelper(proposer, base, seed=seed, name=spec.label)
