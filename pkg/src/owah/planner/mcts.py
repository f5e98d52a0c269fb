"""Anytime tree search over fetch decisions.

The search space is not raw actions but whole macros: "bring object o to
location l", optionally two objects per trip when their sources share a
room.  Macro costs come from the analytic view in :mod:`.macros`, so a
simulation never touches a scene graph; only the finally chosen decision
sequence is rendered into concrete actions and verified by simulation.

With a bounded ``horizon`` the result is truncated to that many actions and
an unreachable goal degrades to an idle plan (the caller is predicting what
another agent might do, and "nothing" is the sensible prediction).  With
``horizon=None`` the plan runs to goal completion and unreachability is an
error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import UnreachableSubgoalError
from ..goals import GoalSpec
from ..worldsim import SceneGraph
from .macros import (
    MacroCostDrift,
    Move,
    PlanningView,
    ScriptBuilder,
    _stuck_unload,
    enumerate_single_moves,
    remaining_needs,
)
from .plans import Plan, idle_plan

UNFINISHED_STEP_PENALTY = 50


@dataclass(frozen=True)
class MctsConfig:
    num_simulations: int = 100
    exploration: float = math.sqrt(2)
    rollout_horizon: int = 30
    seed: int = 0
    epsilon: float = 0.2
    # None = pair up fetches only when planning to completion; pairing is
    # wasted effort for short prediction prefixes but matters for efficiency.
    allow_pairs: bool | None = None


class _Node:
    __slots__ = ("view", "cost", "needs", "visits", "total", "children", "untried")

    def __init__(self, view: PlanningView, cost: int, goal: GoalSpec):
        self.view = view
        self.cost = cost
        self.needs = remaining_needs(view, goal)
        self.visits = 0
        self.total = 0.0
        # key -> (Move, child); untried is filled lazily on first descent
        self.children: dict[tuple, tuple[Move, "_Node"]] = {}
        self.untried: list[tuple[tuple, Move]] | None = None


def _unmet(needs) -> int:
    return sum(r for _, r in needs)


def _decision_list(view, goal, needs, pairs: bool) -> list[tuple[tuple, Move]]:
    """Priced decisions at a node, keyed for deterministic ordering."""
    singles = enumerate_single_moves(view, goal, needs)
    out: list[tuple[tuple, Move]] = [(("s", m.order_key), m) for m in singles]
    if pairs and not view.held and _unmet(needs) >= 2:
        need_of = {p: r for p, r in needs}
        for i, m1 in enumerate(singles):
            for m2 in singles[i + 1 :]:
                if m1.obj == m2.obj:
                    continue
                if m1.pred == m2.pred and need_of[m1.pred] < 2:
                    continue
                parts = view.pair_parts(
                    m1.obj, m1.pred.relation, m1.pred.location,
                    m2.obj, m2.pred.relation, m2.pred.location,
                )
                if parts is None:
                    continue
                move = Move(parts.cost, (m1.order_key, m2.order_key), parts, m1.pred, m1.obj)
                out.append((("p", m1.order_key, m2.order_key), move))
    if not out:
        unload = _stuck_unload(view, goal)
        if unload is not None:
            move = Move(unload.cost, (unload.moves[0],), unload, None, unload.moves[0][0])
            out.append((("u", unload.moves[0]), move))
    out.sort(key=lambda d: (d[1].cost, d[0]))
    return out


def _rollout(view, goal, needs, rng, horizon: int, epsilon: float) -> tuple[int, int]:
    """Greedy completion with light randomness; returns (cost, unmet)."""
    cost = 0
    while True:
        if not needs:
            return cost, 0
        if cost >= horizon:
            return cost, _unmet(needs)
        moves = enumerate_single_moves(view, goal, needs)
        if not moves:
            unload = _stuck_unload(view, goal)
            if unload is None:
                return cost, _unmet(needs)
            view = view.applied(unload)
            cost += unload.cost
            needs = remaining_needs(view, goal)
            continue
        if epsilon > 0.0 and rng.random() < epsilon:
            m = moves[int(rng.integers(len(moves)))]
        else:
            m = moves[0]
        view = view.applied(m.parts)
        cost += m.cost
        needs = remaining_needs(view, goal)


def _select(node: _Node, exploration: float) -> "_Node":
    kids = node.children
    means = {k: c.total / c.visits for k, (_, c) in kids.items()}
    best_mean = min(means.values())
    span = max(means.values()) - best_mean
    log_n = math.log(node.visits)
    best_key, best_score = None, None
    for k in sorted(kids):
        _, c = kids[k]
        q = 1.0 if span == 0 else (means[k] - best_mean) / span
        score = (1.0 - q) + exploration * math.sqrt(log_n / c.visits)
        if best_score is None or score > best_score:
            best_key, best_score = k, score
    return kids[best_key][1]


def mcts_plan(
    state: SceneGraph,
    agent: int,
    goal: GoalSpec,
    horizon: int | None = None,
    config: MctsConfig | None = None,
) -> Plan:
    """Plan placements for ``goal`` via anytime tree search.

    Deterministic given (state, goal, horizon, config).  When only one
    placement remains the search collapses to exhaustive enumeration of the
    candidate fetches, which is exact.
    """
    cfg = config or MctsConfig()
    root_view = PlanningView.of(state, agent)
    root_needs = remaining_needs(root_view, goal)
    if not root_needs:
        return Plan(agent, state, ())

    pairs = cfg.allow_pairs if cfg.allow_pairs is not None else horizon is None
    rollout_cap = cfg.rollout_horizon if horizon is None else min(cfg.rollout_horizon, horizon)

    decisions: list[Move]
    if _unmet(root_needs) == 1:
        moves = enumerate_single_moves(root_view, goal, root_needs)
        decisions = moves[:1]
    else:
        decisions = _search(root_view, goal, root_needs, cfg, pairs, rollout_cap, horizon)
    if not decisions:
        if horizon is None:
            raise UnreachableSubgoalError(f"cannot reach {goal.to_json()}")
        return idle_plan(state, agent, horizon)

    builder = ScriptBuilder(state, agent)
    for move in decisions:
        before = len(builder)
        if len(move.parts.moves) == 2:
            (o1, r1, d1), (o2, r2, d2) = move.parts.moves
            builder.fetch_pair(o1, r1, d1, o2, r2, d2)
        else:
            obj, rel, dest = move.parts.moves[0]
            builder.fetch(obj, rel, dest)
        if len(builder) - before != move.cost:
            raise MacroCostDrift(
                f"decision {move.parts.moves} cost {len(builder) - before}, priced {move.cost}"
            )
        if horizon is not None and len(builder) >= horizon:
            break
    plan = builder.plan()
    return plan.truncated(horizon) if horizon is not None else plan


def _search(root_view, goal, root_needs, cfg, pairs, rollout_cap, horizon) -> list[Move]:
    rng = np.random.default_rng(cfg.seed)
    root = _Node(root_view, 0, goal)
    root.untried = _decision_list(root_view, goal, root_needs, pairs)
    if not root.untried:
        return []

    for _ in range(cfg.num_simulations):
        node = root
        path = [root]
        while True:
            if not node.needs or (horizon is not None and node.cost >= horizon):
                break
            if node.untried is None:
                node.untried = _decision_list(node.view, goal, node.needs, pairs)
            if node.untried:
                idx = int(rng.integers(len(node.untried)))
                key, move = node.untried.pop(idx)
                child = _Node(node.view.applied(move.parts), node.cost + move.cost, goal)
                node.children[key] = (move, child)
                path.append(child)
                node = child
                break
            if not node.children:
                break  # dead end: unmet needs, no moves, no unload
            node = _select(node, cfg.exploration)
            path.append(node)
        cost, unmet = _rollout(
            node.view, goal, node.needs, rng, rollout_cap, cfg.epsilon
        )
        total = node.cost + cost + unmet * UNFINISHED_STEP_PENALTY
        for n in path:
            n.visits += 1
            n.total += total

    # Extract: follow the most-visited branch, then finish greedily.
    decisions: list[Move] = []
    node = root
    spent = 0
    while node.children:
        best_key = min(
            node.children,
            key=lambda k: (
                -node.children[k][1].visits,
                node.children[k][1].total / node.children[k][1].visits,
                k,
            ),
        )
        move, node = node.children[best_key]
        decisions.append(move)
        spent += move.cost
        if horizon is not None and spent >= horizon:
            return decisions
    view, needs = node.view, node.needs
    while needs:
        if horizon is not None and spent >= horizon:
            break
        moves = enumerate_single_moves(view, goal, needs)
        if not moves:
            unload = _stuck_unload(view, goal)
            if unload is None:
                break
            moves = [Move(unload.cost, (unload.moves[0],), unload, None, unload.moves[0][0])]
        m = moves[0]
        decisions.append(m)
        spent += m.cost
        view = view.applied(m.parts)
        needs = remaining_needs(view, goal)
    return decisions
