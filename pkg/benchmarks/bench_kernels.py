"""Benchmark the compiled kernel backend against the pure NumPy/Python one.

Run:  python benchmarks/bench_kernels.py [--repeat 5]

Covers the backend-switchable kernels (grid segment walk, LSTM/GRU scans),
the always-NumPy convolution for context, and an end-to-end training step
through each backend (via the UAVGRID_KERNELS environment switch, so the
end-to-end rows require running the script twice to cross-check; here the
scans are swapped in-process which captures the dominant difference).
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from uavgrid.kernels import reference
from uavgrid.rng import stream

try:
    from uavgrid.kernels import _core as compiled
except ImportError:
    compiled = None


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_segment(repeat: int):
    rng = stream(0)
    blocked = rng.random((32, 32)) < 0.25
    pairs = rng.integers(0, 32, size=(2000, 4))

    def run(mod):
        def inner():
            for x0, y0, x1, y1 in pairs:
                mod.segment_clear(blocked, int(x0), int(y0), int(x1), int(y1))

        return inner

    return "segment_clear x2000 (32x32)", run


def bench_lstm(repeat: int):
    rng = stream(1)
    xw = rng.standard_normal((32, 41, 64))
    u = rng.standard_normal((16, 64)) * 0.3
    dh = rng.standard_normal((32, 41, 16))

    def run(mod):
        def inner():
            h, c, g = mod.lstm_scan_forward(xw, u)
            mod.lstm_scan_backward(dh, u, h, c, g)

        return inner

    return "lstm scan fwd+bwd (B32 L41 n16)", run


def bench_gru(repeat: int):
    rng = stream(2)
    xw = rng.standard_normal((32, 41, 48))
    u = rng.standard_normal((16, 48)) * 0.3
    dh = rng.standard_normal((32, 41, 16))

    def run(mod):
        def inner():
            h, g = mod.gru_scan_forward(xw, u)
            mod.gru_scan_backward(dh, u, h, g)

        return inner

    return "gru scan fwd+bwd (B32 L41 n16)", run


def bench_conv(repeat: int):
    rng = stream(3)
    x = rng.standard_normal((32, 17, 17, 16))
    k = rng.standard_normal((5, 5, 16, 16)) * 0.1
    b = np.zeros(16)
    dout = rng.standard_normal((32, 17, 17, 16))

    def run(mod):
        def inner():
            reference.conv2d_forward(x, k, b)
            reference.conv2d_backward(x, k, dout)

        return inner

    return "conv fwd+bwd, NumPy/BLAS both backends (B32 17x17 f16)", run


def bench_train_step(repeat: int):
    from uavgrid import trainer
    from uavgrid.observation import Observation
    from uavgrid.qnet import QNetConfig, init_params

    config = QNetConfig(core="lstm", conv_layers=2, kernel_size=3, conv_filters=8,
                        rnn_units=8, hidden_width=64, hidden_layers=3)
    params = init_params(config, 0)
    rng = stream(4)
    buf = trainer.ReplayBuffer(128)
    for i in range(64):
        obs = Observation(rng.uniform(0, 1, (5, 5, 5)), rng.uniform(0, 1, (4, 4, 5)), 0.5)
        nxt = Observation(rng.uniform(0, 1, (5, 5, 5)), rng.uniform(0, 1, (4, 4, 5)), 0.4)
        buf.push(trainer.Transition(obs, i % 6 if i % 6 != 5 else 0, 0.1, nxt, i % 9 == 0))
    cfg = trainer.TrainerConfig(batch_size=32, buffer_capacity=128, total_steps=1)

    def run(mod):
        import uavgrid.kernels as K

        saved = (K.lstm_scan_forward, K.lstm_scan_backward,
                 K.gru_scan_forward, K.gru_scan_backward, K.segment_clear)

        def inner():
            K.lstm_scan_forward = mod.lstm_scan_forward
            K.lstm_scan_backward = mod.lstm_scan_backward
            K.gru_scan_forward = mod.gru_scan_forward
            K.gru_scan_backward = mod.gru_scan_backward
            K.segment_clear = mod.segment_clear
            try:
                main = params.copy()
                target = params.copy()
                opt = trainer.OptimizerState("sgd", 1e-3, 1.0)
                for _ in range(20):
                    trainer.train_step(buf, main, target, cfg, stream(9), opt)
            finally:
                (K.lstm_scan_forward, K.lstm_scan_backward,
                 K.gru_scan_forward, K.gru_scan_backward, K.segment_clear) = saved

        return inner

    return "train_step x20 (smoke-size net)", run


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    if compiled is None:
        print("compiled extension not built; only the python backend is available")

    benches = [bench_segment, bench_lstm, bench_gru, bench_conv, bench_train_step]
    print(f"{'benchmark':<52} {'python':>10} {'compiled':>10} {'speedup':>8}")
    for bench in benches:
        name, make = bench(args.repeat)
        t_py = best_of(make(reference), args.repeat)
        if compiled is not None:
            t_ext = best_of(make(compiled), args.repeat)
            print(f"{name:<52} {t_py * 1e3:>8.2f}ms {t_ext * 1e3:>8.2f}ms {t_py / t_ext:>7.2f}x")
        else:
            print(f"{name:<52} {t_py * 1e3:>8.2f}ms {'-':>10} {'-':>8}")


if __name__ == "__main__":
    main()
