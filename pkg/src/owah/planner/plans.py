"""Plan containers.

A plan is a sequence of actions for one agent together with the state
predicted after each action, assuming every other agent idles.  Keeping the
predicted states around is what lets the goal-inference layer match observed
actions against plan suffixes and mine predicted states for candidate edges
without re-simulating.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple

from ..errors import IllegalActionError
from ..worldsim import (
    Action,
    IDLE_ACTION,
    OUTCOME_OK,
    SceneGraph,
    state_hash,
    step_single,
)


class PlanStep(NamedTuple):
    action: Action
    state: SceneGraph


@dataclass(frozen=True)
class Plan:
    agent: int
    start: SceneGraph
    steps: tuple[PlanStep, ...]

    @property
    def actions(self) -> tuple[Action, ...]:
        return tuple(s.action for s in self.steps)

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def final_state(self) -> SceneGraph:
        return self.steps[-1].state if self.steps else self.start

    def suffix(self, consumed: int) -> tuple[PlanStep, ...]:
        """Steps not yet executed, given how many were already matched."""
        return self.steps[consumed:]

    def truncated(self, horizon: int) -> "Plan":
        return Plan(self.agent, self.start, self.steps[:horizon])

    @staticmethod
    def replay(start: SceneGraph, agent: int, actions: Iterable[Action]) -> "Plan":
        """Build a plan by simulating ``actions`` from ``start``.

        Raises IllegalActionError if any action fails, because a plan whose
        actions cannot execute is a construction bug, not a runtime state.
        """
        steps = []
        state = start
        for i, action in enumerate(actions):
            state, outcome = step_single(state, agent, action)
            if outcome != OUTCOME_OK:
                raise IllegalActionError(f"step {i} ({action}) failed for agent {agent}")
            steps.append(PlanStep(action, state))
        return Plan(agent, start, tuple(steps))

    def verify(self) -> bool:
        """Re-simulate and compare predicted state hashes step by step."""
        state = self.start
        for step in self.steps:
            state, outcome = step_single(state, self.agent, step.action)
            if outcome != OUTCOME_OK:
                return False
            if state_hash(state) != state_hash(step.state):
                return False
        return True

    def to_json_obj(self) -> dict:
        return {
            "agent": self.agent,
            "start_hash": state_hash(self.start),
            "actions": [s.action.to_json() for s in self.steps],
            "step_hashes": [state_hash(s.state) for s in self.steps],
        }


def idle_plan(start: SceneGraph, agent: int, length: int) -> Plan:
    """A plan that predicts the agent doing nothing for ``length`` ticks."""
    return Plan.replay(start, agent, [IDLE_ACTION] * length)
