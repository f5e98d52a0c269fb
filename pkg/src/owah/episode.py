"""Joint episode execution and its durable record.

One episode is a turn-based loop: the main agent picks an action from the
current state, the helper picks one from the same state plus the main
agent's previous action (never the current one: what the helper observes is
executed behavior), and both are applied in a single world step.  Every
tick is written down in a wire-friendly dict so that finished episodes can
be stored as JSON lines, replayed, and audited.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, runtime_checkable

import numpy as np

from .errors import UnreachableSubgoalError
from .goals import GoalSpec, goal_f1, is_satisfied
from .planner import hp_plan
from .worldsim import (
    Action,
    IDLE_ACTION,
    SceneGraph,
    agents_of,
    legal_actions,
    state_hash,
    step,
)

RECORD_FORMAT = "owah-episode/1"
MAX_TICKS = 250


def json_digest(obj) -> str:
    """Short stable digest of any JSON-serializable object."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# --- controller contracts ----------------------------------------------------


class MainController(Protocol):
    def act(self, tick: int, first_state: SceneGraph, state: SceneGraph) -> Action: ...


@runtime_checkable
class HelperController(Protocol):
    """Helpers decide from (s^0..s^t, a_M^0..a_M^(t-1)); the previous main
    action arrives as ``observed_main_action`` (None on the first tick)."""

    name: str

    def act(
        self,
        tick: int,
        first_state: SceneGraph,
        state: SceneGraph,
        observed_main_action: Action | None,
    ) -> Action: ...


class HpMainController:
    """The task owner: replans greedily toward its goal every tick.

    When the goal is momentarily unreachable (say, the helper is carrying
    the last qualifying object) it waits instead of failing.
    """

    def __init__(self, goal: GoalSpec):
        self.goal = goal

    def act(self, tick: int, first_state: SceneGraph, state: SceneGraph) -> Action:
        if is_satisfied(state, self.goal):
            return IDLE_ACTION
        agent = agents_of(state)[0]
        try:
            plan = hp_plan(state, agent, self.goal)
        except UnreachableSubgoalError:
            return IDLE_ACTION
        return plan.steps[0].action if plan.steps else IDLE_ACTION


class RandomWalkMainController:
    """An aimless main agent, useful for probing helper caution.

    ``kinds`` restricts the sampled action kinds; the default allows
    everything, while movement-only walks leave every object untouched.
    """

    def __init__(self, seed: int, kinds: tuple[str, ...] | None = None):
        self.rng = np.random.default_rng(seed)
        self.kinds = kinds

    def act(self, tick: int, first_state: SceneGraph, state: SceneGraph) -> Action:
        agent = agents_of(state)[0]
        choices = legal_actions(state, agent)
        if self.kinds is not None:
            choices = [a for a in choices if a.kind in self.kinds]
        if not choices:
            return IDLE_ACTION
        return choices[int(self.rng.integers(len(choices)))]


# --- records ------------------------------------------------------------------


@dataclass
class EpisodeRecord:
    """Header plus one wire dict per executed tick."""

    header: dict
    rows: list[dict] = field(default_factory=list)

    @property
    def length(self) -> int:
        return len(self.rows)

    @property
    def completed(self) -> bool:
        return bool(self.header.get("completed"))

    def to_json_lines(self) -> str:
        lines = [json.dumps(self.header, sort_keys=True)]
        lines.extend(json.dumps(r, sort_keys=True) for r in self.rows)
        return "\n".join(lines) + "\n"

    def write(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json_lines())

    @staticmethod
    def from_json_lines(text: str) -> "EpisodeRecord":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise ValueError("empty episode record")
        header = json.loads(lines[0])
        if header.get("record") != RECORD_FORMAT:
            raise ValueError("not a recognized episode record")
        return EpisodeRecord(header, [json.loads(ln) for ln in lines[1:]])

    @staticmethod
    def read(path: str | Path) -> "EpisodeRecord":
        return EpisodeRecord.from_json_lines(Path(path).read_text())


def replay_record(record: EpisodeRecord, initial_state: SceneGraph) -> SceneGraph:
    """Re-execute a record's actions and verify every stored state hash.

    Returns the final state; raises ValueError on the first divergence.
    """
    if state_hash(initial_state) != record.header["start_hash"]:
        raise ValueError("initial state does not match the record")
    state = initial_state
    for row in record.rows:
        state, _ = step(
            state,
            Action.from_json(row["a_M"]),
            Action.from_json(row["a_H"]),
        )
        if state_hash(state) != row["s_hash"]:
            raise ValueError(f"state hash diverged at tick {row['t']}")
    return state


# --- the loop -------------------------------------------------------------------


def run_episode(
    initial_state: SceneGraph,
    goal: GoalSpec,
    main: MainController,
    helper: HelperController,
    max_ticks: int = MAX_TICKS,
    meta: dict | None = None,
) -> EpisodeRecord:
    """Run a joint episode until the goal holds or the tick budget runs out."""
    header = {
        "record": RECORD_FORMAT,
        "start_hash": state_hash(initial_state),
        "goal": goal.to_json_obj(),
        "helper": getattr(helper, "name", helper.__class__.__name__),
        "max_ticks": max_ticks,
    }
    if meta:
        header.update(meta)
    record = EpisodeRecord(header)

    state = initial_state
    observed: Action | None = None
    tick = 0
    done = is_satisfied(state, goal)
    while not done and tick < max_ticks:
        try:
            main_action = main.act(tick, initial_state, state)
        except Exception as exc:  # a broken main agent ends the episode loudly
            header["aborted"] = f"main controller failed at tick {tick}: {exc}"
            break
        helper_action = helper.act(tick, initial_state, state, observed)
        state, outcomes = step(state, main_action, helper_action)
        done = is_satisfied(state, goal)

        # f1 is None only before the first observation; once the helper has
        # seen a main-agent action, a missing or diffuse estimate scores 0
        f1 = None
        if tick > 0 and hasattr(helper, "predicted_goal"):
            f1 = goal_f1(helper.predicted_goal(), goal)
        row = {
            "t": tick,
            "s_hash": state_hash(state),
            "a_M": main_action.to_json(),
            "a_H": helper_action.to_json(),
            "outcomes": {str(a): o for a, o in outcomes.items()},
            "f1": f1,
        }
        if hasattr(helper, "diagnostics"):
            row.update(helper.diagnostics())
        record.rows.append(row)

        observed = main_action
        tick += 1

    header["completed"] = done
    header["length"] = len(record.rows)
    return record
