"""Mission state: coverage targets and device data behind one target layer.

Both mission types evolve a single G x G ``target_layer``: for coverage it is
a 0/1 indicator of cells still to be overflown, for data harvesting it holds
the remaining data at each device cell.  The observation pipeline consumes
only this layer, which is what lets one network topology serve both missions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Sequence

import numpy as np

from . import kernels
from .radio import DeviceState

if TYPE_CHECKING:
    from .world import EnvironmentMap

FOV_RADIUS = 2  # 5x5 camera window around the UAV


class Mission(str, Enum):
    CPP = "cpp"
    DH = "dh"


@dataclass
class MissionState:
    mission: Mission
    target_layer: np.ndarray  # (G, G) float, indexed [x, y]
    devices: list[DeviceState] = field(default_factory=list)
    initial_total: float = 0.0
    generated_total: float = 0.0  # Poisson arrivals, if enabled

    def copy(self) -> "MissionState":
        return MissionState(
            mission=self.mission,
            target_layer=self.target_layer.copy(),
            devices=[
                DeviceState(d.position, d.remaining_data, d.collected_data, d.initial_data)
                for d in self.devices
            ],
            initial_total=self.initial_total,
            generated_total=self.generated_total,
        )

    def remaining_total(self) -> float:
        return float(self.target_layer.sum())

    def collected_total(self) -> float:
        return float(sum(d.collected_data for d in self.devices))


@dataclass(frozen=True)
class FieldOfView:
    covered: frozenset[tuple[int, int]]


@dataclass(frozen=True)
class Metrics:
    mission: Mission
    landed: bool
    coverage_ratio: float | None = None
    collection_ratio: float | None = None

    @property
    def primary_ratio(self) -> float:
        return self.coverage_ratio if self.mission is Mission.CPP else self.collection_ratio


def compute_fov(uav_cell: tuple[int, int], env_map: "EnvironmentMap") -> FieldOfView:
    """Visible cells in the clipped 5x5 window around the UAV.

    A window cell is visible iff the sight line from the UAV's cell center to
    its center is not interrupted by a tall building (down-looking camera at
    flight height sees over small buildings).  The UAV's own cell is always
    visible.
    """
    g = env_map.size_g
    x0, y0 = uav_cell
    tall = env_map.tall
    covered = []
    for x in range(max(0, x0 - FOV_RADIUS), min(g, x0 + FOV_RADIUS + 1)):
        for y in range(max(0, y0 - FOV_RADIUS), min(g, y0 + FOV_RADIUS + 1)):
            if kernels.segment_clear(tall, x0, y0, x, y):
                covered.append((x, y))
    return FieldOfView(covered=frozenset(covered))


def apply_coverage(state: MissionState, fov: FieldOfView) -> tuple[MissionState, int]:
    """Clear covered target cells; returns (state, newly covered count)."""
    if state.mission is not Mission.CPP:
        raise ValueError("apply_coverage requires a coverage mission state")
    newly = 0
    layer = state.target_layer
    for (x, y) in fov.covered:
        if layer[x, y] != 0.0:
            layer[x, y] = 0.0
            newly += 1
    return state, newly


def apply_harvest(state: MissionState, amounts: Sequence[float]) -> tuple[MissionState, float]:
    """Drain collected amounts from devices and the target layer."""
    if state.mission is not Mission.DH:
        raise ValueError("apply_harvest requires a data-harvesting mission state")
    if len(amounts) != len(state.devices):
        raise ValueError("one amount per device required")
    total = 0.0
    for dev, amount in zip(state.devices, amounts):
        if amount < 0 or amount > dev.remaining_data + 1e-12:
            raise ValueError(
                f"over-collection at device {dev.position}: {amount} > {dev.remaining_data}"
            )
        amount = min(amount, dev.remaining_data)
        dev.remaining_data -= amount
        dev.collected_data += amount
        state.target_layer[dev.position] = dev.remaining_data
        total += amount
    return state, total


def generate_device_data(state: MissionState, rng: np.random.Generator, rate: float) -> float:
    """Poisson data arrivals at every device for one mission slot."""
    if state.mission is not Mission.DH or rate <= 0.0:
        return 0.0
    total = 0.0
    for dev in state.devices:
        new = float(rng.poisson(rate))
        dev.remaining_data += new
        dev.initial_data += new
        state.target_layer[dev.position] = dev.remaining_data
        total += new
    state.generated_total += total
    return total


def episode_metrics(initial: MissionState, final: MissionState, landed: bool) -> Metrics:
    """Terminal ratios of an episode: coverage (CPP) or collection (DH)."""
    if initial.mission is not final.mission:
        raise ValueError("initial and final states are from different missions")
    if initial.mission is Mission.CPP:
        total = initial.initial_total
        covered = total - final.remaining_total()
        return Metrics(Mission.CPP, landed, coverage_ratio=_ratio(covered, total))
    total = final.initial_total + final.generated_total
    return Metrics(Mission.DH, landed, collection_ratio=_ratio(final.collected_total(), total))


def _ratio(part: float, total: float) -> float:
    if total <= 0:
        return 0.0
    return min(1.0, max(0.0, part / total))
