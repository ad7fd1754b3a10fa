"""Kernel backend selection.

The hot inner loops exist twice: a compiled Cython extension (``_core``) and
a pure NumPy/Python reference (``reference``).  The compiled backend covers
the kernels that are loop-bound in Python (the exact grid segment walk and
the sequential LSTM/GRU scans); the convolution is matmul-bound and always
runs on the NumPy/BLAS path, where a naive C loop would be slower, not
faster.  The compiled backend is preferred when importable; set
``UAVGRID_KERNELS=python`` to force the fallback or
``UAVGRID_KERNELS=compiled`` to fail loudly if the extension is missing.
``benchmarks/bench_kernels.py`` compares the two.
"""

from __future__ import annotations

import os

from . import reference

_choice = os.environ.get("UAVGRID_KERNELS", "auto")
if _choice not in ("auto", "python", "compiled"):
    raise ValueError(f"UAVGRID_KERNELS must be auto|python|compiled, got {_choice!r}")

BACKEND = "python"
_impl = reference
if _choice != "python":
    try:
        from . import _core as _compiled

        _impl = _compiled
        BACKEND = "compiled"
    except ImportError:
        if _choice == "compiled":
            raise

segment_clear = _impl.segment_clear
trace_cells = _impl.trace_cells
lstm_scan_forward = _impl.lstm_scan_forward
lstm_scan_backward = _impl.lstm_scan_backward
gru_scan_forward = _impl.gru_scan_forward
gru_scan_backward = _impl.gru_scan_backward
conv2d_forward = reference.conv2d_forward
conv2d_backward = reference.conv2d_backward

__all__ = [
    "BACKEND",
    "reference",
    "segment_clear",
    "trace_cells",
    "conv2d_forward",
    "conv2d_backward",
    "lstm_scan_forward",
    "lstm_scan_backward",
    "gru_scan_forward",
    "gru_scan_backward",
]
