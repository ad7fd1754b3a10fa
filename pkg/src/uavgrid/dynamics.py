"""UAV state machine: actions, legality, safety controller, reward assembly."""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

from .world import EnvironmentMap


class Action(IntEnum):
    """The six discrete actions; index order is the network output order."""

    NORTH = 0
    EAST = 1
    SOUTH = 2
    WEST = 3
    HOVER = 4
    LAND = 5


MOVES = {
    Action.NORTH: (0, 1),
    Action.EAST: (1, 0),
    Action.SOUTH: (0, -1),
    Action.WEST: (-1, 0),
    Action.HOVER: (0, 0),
    Action.LAND: (0, 0),
}


@dataclass(frozen=True)
class UavState:
    """Position, operational flag and remaining battery (in action steps).

    The altitude is implied: flight height while operational, ground after
    landing.  Once inactive the state is frozen; stepping it is a caller bug.
    """

    x: int
    y: int
    operational: bool
    battery: int

    @property
    def position(self) -> tuple[int, int]:
        return (self.x, self.y)

    def altitude(self, env_map: EnvironmentMap) -> float:
        return env_map.uav_height_m if self.operational else 0.0


@dataclass(frozen=True)
class StepFlags:
    blocked: bool = False
    landed: bool = False
    crashed: bool = False


@dataclass(frozen=True)
class RewardWeights:
    cell: float = 0.4  # per newly covered target cell
    data: float = 0.1  # per collected data unit
    safety: float = -1.0  # safety controller intervened
    movement: float = -0.05  # any step that does not end the mission
    crash: float = -5.0  # battery exhausted while airborne

    def validate(self) -> None:
        if self.cell < 0 or self.data < 0:
            raise ValueError("cell and data rewards must be nonnegative")
        if self.safety > 0 or self.movement > 0 or self.crash > 0:
            raise ValueError("safety, movement and crash weights must be nonpositive")


def legal_actions(state: UavState, env_map: EnvironmentMap) -> set[Action]:
    """All six actions on a landing cell, otherwise everything but LAND."""
    actions = set(Action)
    if not env_map.landing[state.x, state.y]:
        actions.discard(Action.LAND)
    return actions


def safety_filter(
    state: UavState, action: Action, env_map: EnvironmentMap
) -> tuple[Action, bool]:
    """Replace moves that would leave the grid or enter a no-occupy cell.

    Returns (executed action, blocked flag); blocked moves become HOVER.
    """
    dx, dy = MOVES[action]
    nx, ny = state.x + dx, state.y + dy
    if not env_map.in_bounds(nx, ny) or env_map.no_occupy[nx, ny]:
        return Action.HOVER, True
    return action, False


def step(
    state: UavState, action: Action, env_map: EnvironmentMap
) -> tuple[UavState, StepFlags]:
    """One mission time slot: apply the safety-filtered action.

    Battery drops by exactly 1 per active step; LAND (only legal on landing
    cells) deactivates the UAV; hitting battery 0 while still airborne is a
    crash and terminates the episode.
    """
    if not state.operational:
        raise RuntimeError("stepping an inactive UAV")
    if state.battery <= 0:
        raise RuntimeError("stepping a UAV with an empty battery")
    if action not in legal_actions(state, env_map):
        raise ValueError(f"{action.name} is not legal at {state.position}")

    executed, blocked = safety_filter(state, action, env_map)
    dx, dy = MOVES[executed]
    landed = executed is Action.LAND
    battery = state.battery - 1
    new_state = UavState(
        x=state.x + dx,
        y=state.y + dy,
        operational=not landed,
        battery=battery,
    )
    crashed = battery == 0 and new_state.operational
    return new_state, StepFlags(blocked=blocked, landed=landed, crashed=crashed)


def step_reward(
    flags: StepFlags,
    newly_covered_cells: int,
    collected_data: float,
    weights: RewardWeights,
) -> float:
    """Per-step reward; the movement penalty is waived on the landing step."""
    if newly_covered_cells < 0 or collected_data < 0:
        raise ValueError("coverage and collection amounts must be nonnegative")
    reward = weights.cell * newly_covered_cells + weights.data * collected_data
    if flags.blocked:
        reward += weights.safety
    if not flags.landed:
        reward += weights.movement
    if flags.crashed:
        reward += weights.crash
    return reward
