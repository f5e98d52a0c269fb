"""Placement planning: macro scripts, tree search, and the exact oracle."""

from .bfs import NODE_BUDGET, bfs_optimal
from .macros import (
    MacroCostDrift,
    PlanningView,
    ScriptBuilder,
    available_instances,
    choose_unload,
    enumerate_single_moves,
    hp_assist_action,
    hp_plan,
    predicate_sort_key,
    remaining_needs,
)
from .mcts import MctsConfig, mcts_plan
from .plans import Plan, PlanStep, idle_plan
