"""Static environment grid: cell flags, map files, scenario and map generation.

Coordinates are cell indices (x, y) with x growing east and y growing north;
all per-cell arrays are shaped (G, G) and indexed ``[x, y]``.  In the map
file the first data row is the northernmost row (y = G-1).

Map file grammar::

    GRID <G> <cell_size_m> <height_m>
    <G rows of G characters>

with cell characters ``.`` free, ``L`` landing, ``N`` no-fly zone, ``T`` tall
building (cannot be occupied, blocks radio), ``S`` small building (can be
overflown, blocks radio).  One character per cell makes multi-role cells
unrepresentable, which is exactly the invariant the format must keep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .missions import Mission, MissionState
from .radio import DeviceState

CELL_CHARS = {
    ".": "free",
    "L": "landing",
    "N": "nfz",
    "T": "tall",
    "S": "small",
}
MIN_GRID = 4


class MapError(ValueError):
    """Map file parse or invariant failure, with 1-based line/column."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        loc = ""
        if line is not None:
            loc = f"line {line}" + (f", column {column}" if column is not None else "") + ": "
        super().__init__(loc + message)
        self.line = line
        self.column = column


class InfeasibleScenario(ValueError):
    pass


@dataclass(frozen=True)
class CellFlags:
    landing: bool = False
    nfz: bool = False
    tall_building: bool = False
    small_building: bool = False

    @property
    def no_occupy(self) -> bool:
        return self.nfz or self.tall_building

    @property
    def blocks_radio(self) -> bool:
        return self.tall_building or self.small_building


@dataclass(frozen=True)
class EnvironmentMap:
    """Immutable grid world; arrays are read-only and safe to share."""

    size_g: int
    cell_size_m: float
    uav_height_m: float
    landing: np.ndarray
    nfz: np.ndarray
    tall: np.ndarray
    small: np.ndarray
    no_occupy: np.ndarray = field(init=False)
    blocks_radio: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "no_occupy", self.nfz | self.tall)
        object.__setattr__(self, "blocks_radio", self.tall | self.small)
        for name in ("landing", "nfz", "tall", "small", "no_occupy", "blocks_radio"):
            arr = getattr(self, name)
            if arr.shape != (self.size_g, self.size_g):
                raise MapError(f"{name} array must be ({self.size_g}, {self.size_g})")
            arr.setflags(write=False)

    def validate(self) -> None:
        if self.size_g < MIN_GRID:
            raise MapError(f"grid size {self.size_g} below minimum {MIN_GRID}")
        if self.cell_size_m <= 0 or self.uav_height_m <= 0:
            raise MapError("cell size and UAV height must be positive")
        multi = (
            self.landing.astype(int) + self.nfz.astype(int)
            + self.tall.astype(int) + self.small.astype(int)
        )
        if (multi > 1).any():
            x, y = np.argwhere(multi > 1)[0]
            raise MapError(f"cell ({x}, {y}) has multiple roles")
        if (self.landing & self.nfz).any():
            x, y = np.argwhere(self.landing & self.nfz)[0]
            raise MapError(f"landing cell ({x}, {y}) inside a no-fly zone")
        if not self.landing.any():
            raise MapError("map has no landing cell")

    def in_bounds(self, x: int, y: int) -> bool:
        return 0 <= x < self.size_g and 0 <= y < self.size_g

    def flags(self, x: int, y: int) -> CellFlags:
        return CellFlags(
            landing=bool(self.landing[x, y]),
            nfz=bool(self.nfz[x, y]),
            tall_building=bool(self.tall[x, y]),
            small_building=bool(self.small[x, y]),
        )

    def landing_cells(self) -> list[tuple[int, int]]:
        return [(int(x), int(y)) for x, y in np.argwhere(self.landing)]


def load_map(text: str) -> EnvironmentMap:
    """Parse a map file; raises MapError with line/column on bad input."""
    lines = text.splitlines()
    if not lines:
        raise MapError("empty map file", line=1)
    header = lines[0].split()
    if len(header) != 4 or header[0] != "GRID":
        raise MapError("expected header 'GRID <size> <cell_m> <height_m>'", line=1)
    try:
        g = int(header[1])
        cell_m = float(header[2])
        height_m = float(header[3])
    except ValueError as exc:
        raise MapError(f"bad header value: {exc}", line=1) from None
    if g < MIN_GRID:
        raise MapError(f"grid size {g} below minimum {MIN_GRID}", line=1, column=6)

    rows = lines[1:]
    while rows and rows[-1] == "":
        rows.pop()
    if len(rows) != g:
        raise MapError(f"expected {g} rows, found {len(rows)}", line=len(lines))

    landing = np.zeros((g, g), dtype=bool)
    nfz = np.zeros((g, g), dtype=bool)
    tall = np.zeros((g, g), dtype=bool)
    small = np.zeros((g, g), dtype=bool)
    for r, row in enumerate(rows):
        if len(row) != g:
            raise MapError(
                f"row has {len(row)} cells, expected {g}", line=r + 2, column=len(row) + 1
            )
        y = g - 1 - r  # first row is the northernmost
        for x, ch in enumerate(row):
            if ch not in CELL_CHARS:
                raise MapError(f"invalid cell character {ch!r}", line=r + 2, column=x + 1)
            if ch == "L":
                landing[x, y] = True
            elif ch == "N":
                nfz[x, y] = True
            elif ch == "T":
                tall[x, y] = True
            elif ch == "S":
                small[x, y] = True

    env_map = EnvironmentMap(g, cell_m, height_m, landing, nfz, tall, small)
    env_map.validate()
    return env_map


def save_map(env_map: EnvironmentMap) -> str:
    """Inverse of load_map (up to the trailing newline)."""
    g = env_map.size_g
    out = [f"GRID {g} {env_map.cell_size_m:g} {env_map.uav_height_m:g}"]
    for r in range(g):
        y = g - 1 - r
        chars = []
        for x in range(g):
            f = env_map.flags(x, y)
            if f.landing:
                chars.append("L")
            elif f.nfz:
                chars.append("N")
            elif f.tall_building:
                chars.append("T")
            elif f.small_building:
                chars.append("S")
            else:
                chars.append(".")
        out.append("".join(chars))
    return "\n".join(out) + "\n"


@dataclass(frozen=True)
class ScenarioSpec:
    """Per-episode randomization: what a fresh scenario on a map looks like."""

    mission: Mission
    movement_budget_range: tuple[int, int] = (150, 300)
    cpp_zone_count_range: tuple[int, int] = (3, 8)
    device_count: int = 10
    device_data_range: tuple[float, float] = (5.0, 20.0)
    rng_seed: int = 0

    def validate(self) -> None:
        lo, hi = self.movement_budget_range
        if not (0 < lo <= hi):
            raise ValueError(f"bad movement budget range {self.movement_budget_range}")
        lo, hi = self.cpp_zone_count_range
        if not (0 < lo <= hi):
            raise ValueError(f"bad zone count range {self.cpp_zone_count_range}")
        lo, hi = self.device_data_range
        if not (0 < lo <= hi):
            raise ValueError(f"bad device data range {self.device_data_range}")
        if self.mission is Mission.DH and self.device_count < 1:
            raise ValueError("data harvesting needs at least one device")


def generate_scenario(env_map: EnvironmentMap, spec: ScenarioSpec) -> MissionState:
    """Pure function of (map, spec): equal seeds give bit-identical scenarios."""
    spec.validate()
    rng = rngmod.stream(spec.rng_seed, rngmod.STREAM_SCENARIO)
    if spec.mission is Mission.CPP:
        return _generate_coverage_scenario(env_map, spec, rng)
    return _generate_harvest_scenario(env_map, spec, rng)


def draw_coverage_shapes(
    g: int, count_range: tuple[int, int], rng: np.random.Generator
) -> list[np.ndarray]:
    """Random axis-aligned rectangles and discrete disks, as cell masks.

    Shape count uniform in count_range, sizes uniform in [2, ceil(G/4)];
    shapes may clip at the grid edge.
    """
    lo, hi = count_range
    count = int(rng.integers(lo, hi, endpoint=True))
    max_size = max(2, math.ceil(g / 4))
    shapes = []
    for _ in range(count):
        kind = int(rng.integers(0, 2))
        size = int(rng.integers(2, max_size, endpoint=True))
        mask = np.zeros((g, g), dtype=bool)
        if kind == 0:
            x0 = int(rng.integers(1 - size, g))
            y0 = int(rng.integers(1 - size, g))
            mask[max(0, x0) : max(0, x0 + size), max(0, y0) : max(0, y0 + size)] = True
        else:
            cx = int(rng.integers(0, g))
            cy = int(rng.integers(0, g))
            r2 = (size / 2.0) ** 2
            xs, ys = np.ogrid[:g, :g]
            mask |= (xs - cx) ** 2 + (ys - cy) ** 2 <= r2
        shapes.append(mask)
    return shapes


def _generate_coverage_scenario(
    env_map: EnvironmentMap, spec: ScenarioSpec, rng: np.random.Generator
) -> MissionState:
    g = env_map.size_g
    target = np.zeros((g, g), dtype=bool)
    for mask in draw_coverage_shapes(g, spec.cpp_zone_count_range, rng):
        target |= mask
    # tall buildings can never be coverage targets; landing and NFZ cells can
    target &= ~env_map.tall
    if not target.any():
        open_cells = np.argwhere(~env_map.tall)
        x, y = open_cells[int(rng.integers(0, len(open_cells)))]
        target[x, y] = True
    return MissionState(
        mission=Mission.CPP,
        target_layer=target.astype(np.float64),
        devices=[],
        initial_total=float(target.sum()),
    )


def _generate_harvest_scenario(
    env_map: EnvironmentMap, spec: ScenarioSpec, rng: np.random.Generator
) -> MissionState:
    g = env_map.size_g
    eligible = ~(env_map.tall | env_map.small | env_map.landing)
    idx = np.flatnonzero(eligible)
    if len(idx) < spec.device_count:
        raise InfeasibleScenario(
            f"{spec.device_count} devices requested, only {len(idx)} open cells"
        )
    chosen = rng.choice(idx, size=spec.device_count, replace=False)
    lo, hi = spec.device_data_range
    data = rng.uniform(lo, hi, size=spec.device_count)
    target = np.zeros((g, g), dtype=np.float64)
    devices = []
    for flat, amount in zip(chosen, data):
        x, y = int(flat) // g, int(flat) % g
        devices.append(DeviceState(position=(x, y), remaining_data=float(amount)))
        target[x, y] = float(amount)
    return MissionState(
        mission=Mission.DH,
        target_layer=target,
        devices=devices,
        initial_total=float(data.sum()),
    )


@dataclass(frozen=True)
class MapGenSpec:
    """Knobs for the random map generator behind the gen-map command."""

    size_g: int = 16
    cell_size_m: float = 10.0
    uav_height_m: float = 25.0
    landing_zones: int = 2
    landing_zone_size: int = 2
    nfz_blocks: int = 2
    tall_blocks: int = 5
    small_blocks: int = 5
    block_size_range: tuple[int, int] = (2, 4)
    rng_seed: int = 0


def generate_map(spec: MapGenSpec) -> EnvironmentMap:
    """Random single-role layout: buildings, NFZ rectangles, landing zones."""
    g = spec.size_g
    if g < MIN_GRID:
        raise MapError(f"grid size {g} below minimum {MIN_GRID}")
    rng = rngmod.stream(spec.rng_seed, rngmod.STREAM_SCENARIO, 1)
    landing = np.zeros((g, g), dtype=bool)
    nfz = np.zeros((g, g), dtype=bool)
    tall = np.zeros((g, g), dtype=bool)
    small = np.zeros((g, g), dtype=bool)
    taken = np.zeros((g, g), dtype=bool)

    def paint_blocks(layer: np.ndarray, count: int) -> None:
        lo, hi = spec.block_size_range
        for _ in range(count):
            w = int(rng.integers(lo, hi, endpoint=True))
            h = int(rng.integers(lo, hi, endpoint=True))
            x0 = int(rng.integers(0, g))
            y0 = int(rng.integers(0, g))
            box = np.zeros((g, g), dtype=bool)
            box[x0 : min(g, x0 + w), y0 : min(g, y0 + h)] = True
            layer |= box & ~taken
            taken[...] |= box

    # landing zones are reserved first so buildings and NFZs can never
    # squeeze them out (and landing cells are never inside an NFZ)
    s = min(spec.landing_zone_size, g)
    for _ in range(max(1, spec.landing_zones)):
        x0 = int(rng.integers(0, g - s + 1))
        y0 = int(rng.integers(0, g - s + 1))
        box = np.zeros((g, g), dtype=bool)
        box[x0 : x0 + s, y0 : y0 + s] = True
        landing |= box & ~taken
        taken |= box
    paint_blocks(tall, spec.tall_blocks)
    paint_blocks(small, spec.small_blocks)
    paint_blocks(nfz, spec.nfz_blocks)

    env_map = EnvironmentMap(g, spec.cell_size_m, spec.uav_height_m, landing, nfz, tall, small)
    env_map.validate()
    return env_map
