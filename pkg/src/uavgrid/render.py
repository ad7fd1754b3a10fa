"""Deterministic raster rendering of maps and flight traces to binary PPM."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

from .radio import DeviceState
from .world import EnvironmentMap

COLOR_FREE = (235, 235, 235)
COLOR_LANDING = (70, 110, 230)
COLOR_NFZ = (220, 70, 70)
COLOR_TALL = (90, 90, 90)
COLOR_SMALL = (170, 170, 170)
COLOR_TARGET = (40, 200, 40)
COLOR_PATH = (0, 0, 0)
DEVICE_PALETTE = (
    (255, 180, 0),
    (0, 180, 180),
    (200, 0, 200),
    (150, 75, 0),
    (255, 100, 150),
    (80, 80, 255),
    (255, 240, 0),
    (0, 120, 60),
)


def _cell_to_pixel(x: int, y: int, size_g: int, scale: int) -> tuple[int, int]:
    """Center pixel (row, col) of a cell; row 0 is the northernmost row."""
    row = (size_g - 1 - y) * scale + scale // 2
    col = x * scale + scale // 2
    return row, col


def render_trajectory(
    env_map: EnvironmentMap,
    target_layer: np.ndarray,
    trace: Sequence[tuple[int, int]],
    devices: Sequence[DeviceState] = (),
    scale: int = 12,
    target_scale: float = 1.0,
) -> np.ndarray:
    """Render map, remaining targets, devices and the UAV path to (H, W, 3)."""
    if len(trace) == 0:
        raise ValueError("empty trace")
    g = env_map.size_g
    img = np.zeros((g * scale, g * scale, 3), dtype=np.uint8)

    base = np.empty((g, g, 3))
    base[...] = COLOR_FREE
    base[env_map.landing] = COLOR_LANDING
    base[env_map.nfz] = COLOR_NFZ
    base[env_map.tall] = COLOR_TALL
    base[env_map.small] = COLOR_SMALL
    # remaining targets blend toward green, weight proportional to D(t)
    weight = np.clip(target_layer / target_scale, 0.0, 1.0)[..., None] * 0.75
    base = base * (1.0 - weight) + np.array(COLOR_TARGET) * weight

    for x in range(g):
        for y in range(g):
            r0 = (g - 1 - y) * scale
            c0 = x * scale
            img[r0 : r0 + scale, c0 : c0 + scale] = base[x, y].astype(np.uint8)

    half = max(1, scale // 8)
    for i, dev in enumerate(devices):
        r, c = _cell_to_pixel(dev.position[0], dev.position[1], g, scale)
        inset = max(1, scale // 4)
        color = DEVICE_PALETTE[i % len(DEVICE_PALETTE)]
        img[r - inset : r + inset + 1, c - inset : c + inset + 1] = color

    def mark(r: int, c: int) -> None:
        img[max(0, r - half) : r + half, max(0, c - half) : c + half] = COLOR_PATH

    prev = None
    for (x, y) in trace:
        r, c = _cell_to_pixel(x, y, g, scale)
        if prev is not None:
            pr, pc = prev
            steps = max(abs(r - pr), abs(c - pc), 1)
            for t in range(steps + 1):
                mark(pr + (r - pr) * t // steps, pc + (c - pc) * t // steps)
        else:
            mark(r, c)
        prev = (r, c)
    return img


def write_ppm(path: str | Path, img: np.ndarray) -> None:
    """Binary PPM (P6); byte-stable for identical inputs."""
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise ValueError("expected (H, W, 3) uint8 image")
    h, w, _ = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode())
        fh.write(img.tobytes())
