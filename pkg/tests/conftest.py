import numpy as np
import pytest

from uavgrid.world import EnvironmentMap, load_map


def map_from_rows(rows, cell_m=10.0, height_m=25.0):
    """Build a map from top-to-bottom row strings (row 0 = northernmost)."""
    g = len(rows)
    text = f"GRID {g} {cell_m:g} {height_m:g}\n" + "\n".join(rows) + "\n"
    return load_map(text)


@pytest.fixture
def open4():
    return map_from_rows([
        "....",
        "....",
        "....",
        "L...",
    ])


@pytest.fixture
def open8():
    rows = ["........"] * 7 + ["L......."]
    return map_from_rows(rows)


def assert_maps_equal(a: EnvironmentMap, b: EnvironmentMap):
    assert a.size_g == b.size_g
    assert a.cell_size_m == b.cell_size_m
    assert a.uav_height_m == b.uav_height_m
    for name in ("landing", "nfz", "tall", "small"):
        assert np.array_equal(getattr(a, name), getattr(b, name)), name
