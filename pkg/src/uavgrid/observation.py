"""Network input construction: agent-centered map stacks plus battery scalar.

Five channels, fixed order: landing zones, no-occupy cells (NFZ or tall
building), radio-blocking cells (any building), the target layer, and the
UAV position one-hot.  The full map is first recentered on the agent into a
(2G-1)^2 frame whose out-of-world padding reads as unflyable (no-occupy and
radio-blocking set, everything else zero); from that frame a full-resolution
local crop and an average-pooled global view are taken.  This module reads
only the mission's target layer, never device internals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import UavState
from .world import EnvironmentMap

CH_LANDING = 0
CH_NO_OCCUPY = 1
CH_RADIO_BLOCK = 2
CH_TARGET = 3
CH_UAV = 4
NUM_CHANNELS = 5

# padding for out-of-world area, per channel
PAD_VALUES = np.array([0.0, 1.0, 1.0, 0.0, 0.0])


@dataclass(frozen=True)
class ObsParams:
    local_size: int = 17  # odd window side of the uncompressed local crop
    global_scale: int = 5  # pooling factor of the global view
    target_scale: float = 1.0  # target layer is divided by this for the net

    def validate(self) -> None:
        if self.local_size < 1 or self.local_size % 2 == 0:
            raise ValueError(f"local_size must be odd and positive, got {self.local_size}")
        if self.global_scale < 1:
            raise ValueError(f"global_scale must be >= 1, got {self.global_scale}")
        if self.target_scale <= 0:
            raise ValueError("target_scale must be positive")


@dataclass(frozen=True)
class Observation:
    local_stack: np.ndarray  # (l, l, C)
    global_stack: np.ndarray  # (m, m, C)
    battery_frac: float


def global_view_size(size_g: int, global_scale: int) -> int:
    centered = 2 * size_g - 1
    return -(-centered // global_scale)  # ceil division


def build_layers(
    env_map: EnvironmentMap, target_layer: np.ndarray, uav_cell: tuple[int, int],
    target_scale: float = 1.0,
) -> np.ndarray:
    g = env_map.size_g
    layers = np.zeros((g, g, NUM_CHANNELS))
    layers[:, :, CH_LANDING] = env_map.landing
    layers[:, :, CH_NO_OCCUPY] = env_map.no_occupy
    layers[:, :, CH_RADIO_BLOCK] = env_map.blocks_radio
    layers[:, :, CH_TARGET] = target_layer / target_scale
    layers[uav_cell[0], uav_cell[1], CH_UAV] = 1.0
    return layers


def center_map(layers: np.ndarray, uav_cell: tuple[int, int]) -> np.ndarray:
    """Recenter a (G, G, C) stack on the agent into (2G-1, 2G-1, C).

    Output index (G-1, G-1) holds the UAV's cell; area outside the world is
    filled with PAD_VALUES.
    """
    g, _, c = layers.shape
    x, y = uav_cell
    if not (0 <= x < g and 0 <= y < g):
        raise ValueError(f"UAV cell {uav_cell} outside the {g}x{g} grid")
    n = 2 * g - 1
    out = np.empty((n, n, c))
    out[...] = PAD_VALUES[:c]
    out[g - 1 - x : n - x, g - 1 - y : n - y, :] = layers
    return out


def compress_global(centered: np.ndarray, global_scale: int) -> np.ndarray:
    """Non-overlapping average pooling after padding up to a multiple of g_s."""
    if global_scale == 1:
        return centered.copy()
    n, _, c = centered.shape
    m = -(-n // global_scale) * global_scale
    lo = (m - n) // 2
    padded = np.empty((m, m, c))
    padded[...] = PAD_VALUES[:c]
    padded[lo : lo + n, lo : lo + n, :] = centered
    k = m // global_scale
    return padded.reshape(k, global_scale, k, global_scale, c).mean(axis=(1, 3))


def crop_local(centered: np.ndarray, local_size: int) -> np.ndarray:
    """The odd local_size window around the center of the centered stack."""
    n = centered.shape[0]
    if local_size % 2 == 0 or local_size > n:
        raise ValueError(f"local_size must be odd and <= {n}, got {local_size}")
    c = n // 2  # (G-1): the UAV's index in the centered frame
    r = (local_size - 1) // 2
    return centered[c - r : c + r + 1, c - r : c + r + 1, :].copy()


def observe(
    env_map: EnvironmentMap,
    mission_state,
    uav_state: UavState,
    params: ObsParams,
    initial_budget: int,
) -> Observation:
    """Full observation for the current state; pure and deterministic."""
    layers = build_layers(
        env_map, mission_state.target_layer, uav_state.position, params.target_scale
    )
    centered = center_map(layers, uav_state.position)
    return Observation(
        local_stack=crop_local(centered, params.local_size),
        global_stack=compress_global(centered, params.global_scale),
        battery_frac=uav_state.battery / initial_budget,
    )
