"""Built-in oracle suites behind the ``selfcheck`` command.

Each oracle is an independent, brute-force computation of something the fast
path implements cleverly: visibility by dense point sampling along the
segment instead of the integer cell walk, map centering by the direct index
formula instead of array slicing, gradients by central finite differences
instead of reverse mode, and double-Q targets from hand-built value tables.
The test suite reuses these oracles at full acceptance sizes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels, qnet, trainer
from .missions import FOV_RADIUS, compute_fov
from .observation import PAD_VALUES
from .qnet import QNetConfig
from .rng import stream
from .world import MapGenSpec, generate_map


# ---------------------------------------------------------------------------
# dense-sampling visibility oracle


def sampled_segment_clear(
    blocked: np.ndarray, x0: int, y0: int, x1: int, y1: int, samples: int = 1000
) -> bool:
    """Visibility by sampling the open segment between cell centers.

    A sample point blocks if it falls strictly inside a blocked cell other
    than the two endpoint cells.  With the default 1000 samples the spacing
    (1/1001 of the segment) is finer than the shortest possible in-cell
    traversal on grids up to 22x22, and since 1001 is odd no sample can ever
    land exactly on a cell boundary, so the oracle is exact there.
    """
    t = np.arange(1, samples + 1) / (samples + 1)
    px = x0 + 0.5 + t * (x1 - x0)
    py = y0 + 0.5 + t * (y1 - y0)
    cx = np.floor(px).astype(np.int64)
    cy = np.floor(py).astype(np.int64)
    inside = (cx >= 0) & (cx < blocked.shape[0]) & (cy >= 0) & (cy < blocked.shape[1])
    endpoint = ((cx == x0) & (cy == y0)) | ((cx == x1) & (cy == y1))
    keep = inside & ~endpoint
    if not keep.any():
        return True
    return not blocked[cx[keep], cy[keep]].any()


def sampled_clear_batch(
    blocked: np.ndarray,
    starts: np.ndarray,
    ends: np.ndarray,
    samples: int = 1000,
    chunk: int = 1024,
) -> np.ndarray:
    """Vectorized sampled_segment_clear over (R, 2) start/end cell arrays.

    Same sampling rule, evaluated for whole ray batches at once; used by the
    acceptance-size geometry suite where per-ray Python overhead would
    dominate the runtime.
    """
    g0, g1 = blocked.shape
    starts = np.asarray(starts, dtype=np.int64)
    ends = np.asarray(ends, dtype=np.int64)
    t = np.arange(1, samples + 1) / (samples + 1)
    out = np.empty(len(starts), dtype=bool)
    for lo in range(0, len(starts), chunk):
        s = starts[lo : lo + chunk]
        e = ends[lo : lo + chunk]
        px = s[:, 0:1] + 0.5 + t[None, :] * (e[:, 0:1] - s[:, 0:1])
        py = s[:, 1:2] + 0.5 + t[None, :] * (e[:, 1:2] - s[:, 1:2])
        cx = np.floor(px).astype(np.int64)
        cy = np.floor(py).astype(np.int64)
        inside = (cx >= 0) & (cx < g0) & (cy >= 0) & (cy < g1)
        endpoint = ((cx == s[:, 0:1]) & (cy == s[:, 1:2])) | (
            (cx == e[:, 0:1]) & (cy == e[:, 1:2])
        )
        hit = blocked[np.clip(cx, 0, g0 - 1), np.clip(cy, 0, g1 - 1)]
        out[lo : lo + chunk] = ~(hit & inside & ~endpoint).any(axis=1)
    return out


def sampled_visible_cells(
    tall: np.ndarray, uav: tuple[int, int], radius: int = FOV_RADIUS
) -> frozenset[tuple[int, int]]:
    """Field-of-view oracle: dense sampling with tall buildings as occluders."""
    g = tall.shape[0]
    x0, y0 = uav
    out = []
    for x in range(max(0, x0 - radius), min(g, x0 + radius + 1)):
        for y in range(max(0, y0 - radius), min(g, y0 + radius + 1)):
            if sampled_segment_clear(tall, x0, y0, x, y):
                out.append((x, y))
    return frozenset(out)


def centered_reference(layers: np.ndarray, uav: tuple[int, int]) -> np.ndarray:
    """Direct index-formula centering: out[i, j] = in[i - (G-1) + x, j - (G-1) + y]."""
    g, _, c = layers.shape
    x, y = uav
    n = 2 * g - 1
    out = np.empty((n, n, c))
    for i in range(n):
        for j in range(n):
            si = i - (g - 1) + x
            sj = j - (g - 1) + y
            if 0 <= si < g and 0 <= sj < g:
                out[i, j] = layers[si, sj]
            else:
                out[i, j] = PAD_VALUES[:c]
    return out


def conv_reference(x: np.ndarray, k: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Six-nested-loop same-padded cross-correlation (single image)."""
    h, w, cin = x.shape
    kk = k.shape[0]
    cout = k.shape[3]
    p = kk // 2
    out = np.zeros((h, w, cout))
    for i in range(h):
        for j in range(w):
            for o in range(cout):
                acc = b[o]
                for u in range(kk):
                    for v in range(kk):
                        si, sj = i + u - p, j + v - p
                        if 0 <= si < h and 0 <= sj < w:
                            for c in range(cin):
                                acc += x[si, sj, c] * k[u, v, c, o]
                out[i, j, o] = acc
    return out


# ---------------------------------------------------------------------------
# finite-difference gradient oracle

SMALL_NET = dict(conv_layers=2, kernel_size=3, conv_filters=2, rnn_units=3,
                 hidden_width=8, hidden_layers=3)


def small_net_fixture(core: str, attention: bool, seed: int = 5):
    config = QNetConfig(core=core, attention=attention, **SMALL_NET)
    params = qnet.init_params(config, seed)
    rng = stream(seed, 99)
    local = rng.uniform(0.0, 1.0, size=(5, 5, 5))
    glob = rng.uniform(0.0, 1.0, size=(3, 3, 5))
    from .observation import Observation

    obs = Observation(local_stack=local, global_stack=glob,
                      battery_frac=float(rng.uniform(0.2, 0.9)))
    gvec = rng.standard_normal(qnet.NUM_ACTIONS)
    return config, params, obs, gvec


def finite_difference_max_err(
    params, obs, gvec: np.ndarray, eps: float = 1e-5, floor: float = 1e-5
) -> float:
    """Worst relative error between analytic and central-difference gradients.

    The error denominator is floored to absorb double-precision FD noise on
    coordinates whose true gradient is essentially zero.
    """
    analytic = qnet.q_backward(obs, params, gvec)
    worst = 0.0
    for name, arr in params.items():
        flat = arr.ravel()
        ga = analytic[name].ravel()
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + eps
            fp = float(qnet.q_forward(obs, params) @ gvec)
            flat[idx] = orig - eps
            fm = float(qnet.q_forward(obs, params) @ gvec)
            flat[idx] = orig
            fd = (fp - fm) / (2.0 * eps)
            err = abs(fd - ga[idx]) / max(abs(fd), abs(ga[idx]), floor)
            worst = max(worst, err)
    return worst


# ---------------------------------------------------------------------------
# suites


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str


def check_geometry(maps: int = 20, device_cells: int = 6, seed: int = 12345) -> CheckResult:
    """Cell walk vs dense sampling on random 16x16 maps.

    Radio LoS is tested from every cell to ``device_cells`` random cells;
    the camera FoV from every cell of the grid.
    """
    rng = stream(seed)
    rays = 0
    for m in range(maps):
        env_map = generate_map(MapGenSpec(size_g=16, rng_seed=seed + m))
        g = env_map.size_g
        cells = [(x, y) for x in range(g) for y in range(g)]
        targets = [cells[int(rng.integers(0, len(cells)))] for _ in range(device_cells)]

        los_starts, los_ends, los_fast = [], [], []
        fov_starts, fov_ends, fov_fast = [], [], []
        for (x0, y0) in cells:
            for (x1, y1) in targets:
                los_starts.append((x0, y0))
                los_ends.append((x1, y1))
                los_fast.append(
                    kernels.segment_clear(env_map.blocks_radio, x0, y0, x1, y1)
                )
            covered = compute_fov((x0, y0), env_map).covered
            for x in range(max(0, x0 - FOV_RADIUS), min(g, x0 + FOV_RADIUS + 1)):
                for y in range(max(0, y0 - FOV_RADIUS), min(g, y0 + FOV_RADIUS + 1)):
                    fov_starts.append((x0, y0))
                    fov_ends.append((x, y))
                    fov_fast.append((x, y) in covered)
        rays += len(los_starts) + len(fov_starts)
        slow = sampled_clear_batch(env_map.blocks_radio, los_starts, los_ends)
        if not np.array_equal(slow, np.array(los_fast)):
            bad = int(np.nonzero(slow != np.array(los_fast))[0][0])
            return CheckResult(
                "geometry", False,
                f"LoS mismatch map {m} ray {los_starts[bad]}->{los_ends[bad]}",
            )
        # window rays span at most 2 cells per axis, where 100 samples are
        # already finer than the smallest possible in-cell traversal
        slow = sampled_clear_batch(env_map.tall, fov_starts, fov_ends, samples=100)
        if not np.array_equal(slow, np.array(fov_fast)):
            bad = int(np.nonzero(slow != np.array(fov_fast))[0][0])
            return CheckResult(
                "geometry", False,
                f"FoV mismatch map {m} at {fov_starts[bad]}->{fov_ends[bad]}",
            )
    return CheckResult("geometry", True, f"{maps} maps, {rays} rays, exact agreement")


def check_centering(cases: int = 20, seed: int = 777) -> CheckResult:
    from .observation import center_map

    rng = stream(seed)
    for i in range(cases):
        g = int(rng.integers(4, 13))
        layers = rng.uniform(0.0, 1.0, size=(g, g, 5))
        uav = (int(rng.integers(0, g)), int(rng.integers(0, g)))
        got = center_map(layers, uav)
        want = centered_reference(layers, uav)
        if not np.array_equal(got, want):
            return CheckResult("centering", False, f"case {i}: mismatch at G={g} uav={uav}")
    return CheckResult("centering", True, f"{cases} random maps, exact equality")


def check_gradients(rtol: float = 1e-4, cores=qnet.CORES, attention=(True, False)) -> CheckResult:
    worst = 0.0
    worst_tag = ""
    for core in cores:
        for attn in attention:
            _, params, obs, gvec = small_net_fixture(core, attn)
            err = finite_difference_max_err(params, obs, gvec)
            if err > worst:
                worst = err
                worst_tag = f"{core}/attn={attn}"
            if err > rtol:
                return CheckResult(
                    "gradients", False,
                    f"{core} attention={attn}: max rel err {err:.3e} > {rtol}",
                )
    return CheckResult("gradients", True, f"worst rel err {worst:.2e} ({worst_tag})")


def check_ddqn_semantics() -> CheckResult:
    # hand-built two-action tables where the online argmax and the target
    # argmax disagree: the target's value at the ONLINE argmax must be used
    q_main = np.array([[1.0, 0.0, -9.0, -9.0, -9.0, -9.0]])
    q_tgt = np.array([[2.0, 50.0, 0.0, 0.0, 0.0, 0.0]])
    legal = np.ones((1, 6), dtype=bool)
    y = trainer.double_q_targets(
        np.array([1.0]), np.array([False]), q_main, q_tgt, legal, 0.9
    )
    if not math.isclose(y[0], 1.0 + 0.9 * 2.0):
        return CheckResult("ddqn", False, f"double-Q target used the wrong table: {y[0]}")
    y_term = trainer.double_q_targets(
        np.array([-5.0]), np.array([True]), q_main, q_tgt, legal, 0.9
    )
    if y_term[0] != -5.0:
        return CheckResult("ddqn", False, f"terminal target should be r, got {y_term[0]}")

    config = QNetConfig(core="none", attention=False, **SMALL_NET)
    main = qnet.init_params(config, 1)
    for eta in (0.0, 0.005, 1.0):
        target = qnet.init_params(config, 2)
        snapshot = {k: v.copy() for k, v in target.items()}
        trainer.soft_update(target, main, eta)
        for k, v in target.items():
            want = (1.0 - eta) * snapshot[k] + eta * main[k]
            if not np.allclose(v, want, rtol=0, atol=1e-15):
                return CheckResult("ddqn", False, f"eta={eta} blend wrong for {k}")
    return CheckResult("ddqn", True, "selection-by-online / valuation-by-target, soft updates exact")


def run_all(fast: bool = True) -> list[CheckResult]:
    maps = 20 if fast else 200
    cases = 20 if fast else 100
    return [
        check_geometry(maps=maps),
        check_centering(cases=cases),
        check_gradients(),
        check_ddqn_semantics(),
    ]
