"""Air-to-ground radio channel: line of sight, SNR, rates, TDMA scheduling.

Distances are 3D (the UAV flies at the map's fixed height, devices sit at
ground level).  Shadow fading is lognormal in dB with separate sigmas for the
LoS and NLoS regimes; the path-loss exponent likewise switches on LoS.  Within
one mission time slot the UAV position is fixed and the slot is subdivided
into ``comm_slots_per_mission_slot`` communication slots, each of which is
granted to at most one device (TDMA).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np

from . import kernels

if TYPE_CHECKING:
    from .world import EnvironmentMap


@dataclass(frozen=True)
class ChannelParams:
    """Channel constants.

    ``tx_power_over_noise_db`` is the aggregate transmit-power-to-noise ratio
    in dB; the remaining defaults are engineering choices, all overridable
    from the experiment config.
    """

    tx_power_over_noise_db: float = 60.0
    pathloss_exp_los: float = 2.3
    pathloss_exp_nlos: float = 3.0
    shadow_sigma_los_db: float = 2.0
    shadow_sigma_nlos_db: float = 5.0
    comm_slots_per_mission_slot: int = 4
    comm_slot_seconds: float = 0.5
    # Mean of per-mission-slot Poisson data arrivals per device; 0 disables
    # the arrival process (the evaluated scenarios use fixed initial data).
    poisson_rate: float = 0.0

    def validate(self) -> None:
        if self.pathloss_exp_los <= 0 or self.pathloss_exp_nlos <= 0:
            raise ValueError("path loss exponents must be positive")
        if self.pathloss_exp_nlos < self.pathloss_exp_los:
            raise ValueError("NLoS path loss exponent must be >= LoS exponent")
        if self.shadow_sigma_los_db < 0 or self.shadow_sigma_nlos_db < 0:
            raise ValueError("shadow sigmas must be nonnegative")
        if self.comm_slots_per_mission_slot < 1:
            raise ValueError("comm_slots_per_mission_slot must be >= 1")
        if self.comm_slot_seconds <= 0:
            raise ValueError("comm_slot_seconds must be positive")
        if self.poisson_rate < 0:
            raise ValueError("poisson_rate must be nonnegative")


@dataclass
class DeviceState:
    """One ground IoT device: grid cell, remaining and already-collected data."""

    position: tuple[int, int]
    remaining_data: float
    collected_data: float = 0.0
    initial_data: float = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.initial_data is None:
            self.initial_data = self.remaining_data + self.collected_data


def has_los(
    uav_cell: tuple[int, int], device_cell: tuple[int, int], env_map: "EnvironmentMap"
) -> bool:
    """Line of sight between two cell centers.

    True iff the open segment between the centers crosses no radio-blocking
    cell (tall or small building); the endpoint cells themselves do not
    block.  Cells touched only at an exact corner do not block either, which
    keeps the test in exact agreement with dense point sampling along the
    segment.
    """
    return kernels.segment_clear(
        env_map.blocks_radio, uav_cell[0], uav_cell[1], device_cell[0], device_cell[1]
    )


def snr(
    uav_pos_m: Sequence[float],
    device_pos_m: Sequence[float],
    los: bool,
    shadow_db: float,
    params: ChannelParams,
) -> float:
    """Received SNR (linear) for one link: power ratio x d^-alpha x shadow."""
    dx = uav_pos_m[0] - device_pos_m[0]
    dy = uav_pos_m[1] - device_pos_m[1]
    dz = uav_pos_m[2] - device_pos_m[2]
    d = math.sqrt(dx * dx + dy * dy + dz * dz)
    if d <= 0.0:
        raise ValueError("zero UAV-device distance")
    alpha = params.pathloss_exp_los if los else params.pathloss_exp_nlos
    return 10.0 ** (params.tx_power_over_noise_db / 10.0) * d ** (-alpha) * 10.0 ** (shadow_db / 10.0)


def achievable_rate(snr_linear: float) -> float:
    """Shannon rate log2(1 + SNR), in data units per second."""
    if snr_linear < 0:
        raise ValueError("SNR must be nonnegative")
    return math.log2(1.0 + snr_linear)


def effective_rate(rate: float, remaining: float, slot_seconds: float) -> float:
    """Rate capped so a device never sends more data than it holds."""
    return min(rate, remaining / slot_seconds)


def schedule_and_collect(
    uav_cell: tuple[int, int],
    devices: Sequence[DeviceState],
    env_map: "EnvironmentMap",
    params: ChannelParams,
    rng: np.random.Generator,
) -> tuple[np.ndarray, float]:
    """Run one mission slot of TDMA collection from a fixed UAV position.

    For each communication slot: draw shadow fading for every device, grant
    the slot to the nonempty device with the highest effective rate (ties to
    the lowest index), and drain it by slot_seconds * effective_rate.  Device
    states are not mutated; returns (per-device collected amounts, slot
    throughput = sum of granted effective rates).
    """
    k = len(devices)
    collected = np.zeros(k)
    if k == 0:
        return collected, 0.0

    c = env_map.cell_size_m
    h = env_map.uav_height_m
    uav_m = ((uav_cell[0] + 0.5) * c, (uav_cell[1] + 0.5) * c, h)
    los_flags = [has_los(uav_cell, d.position, env_map) for d in devices]
    sigmas = np.array(
        [params.shadow_sigma_los_db if f else params.shadow_sigma_nlos_db for f in los_flags]
    )
    base_snr = np.array(
        [
            snr(uav_m, ((d.position[0] + 0.5) * c, (d.position[1] + 0.5) * c, 0.0),
                los_flags[i], 0.0, params)
            for i, d in enumerate(devices)
        ]
    )
    remaining = np.array([d.remaining_data for d in devices])

    nu = params.comm_slot_seconds
    throughput = 0.0
    for _ in range(params.comm_slots_per_mission_slot):
        # one standard normal per device per slot, also for drained devices,
        # so the stream layout does not depend on the data state
        shadow = rng.standard_normal(k) * sigmas
        active = remaining > 0.0
        if not active.any():
            continue
        rates = np.log2(1.0 + base_snr * 10.0 ** (shadow / 10.0))
        eff = np.minimum(rates, remaining / nu)
        eff[~active] = -1.0
        pick = int(np.argmax(eff))
        amount = min(nu * eff[pick], remaining[pick])
        remaining[pick] -= amount
        collected[pick] += amount
        throughput += eff[pick]
    return collected, float(throughput)
