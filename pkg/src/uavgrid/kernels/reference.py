"""Pure NumPy/Python implementations of the hot kernels.

These are the fallback backend used when the compiled extension
(``uavgrid.kernels._core``) is unavailable, and the reference the extension
is tested against.  Both backends implement the same contracts:

* ``segment_clear`` / ``trace_cells`` — exact integer walk of the cells whose
  open interior the open segment between two cell centers crosses.  Cells
  touched only at a corner point are NOT visited, which is what makes the
  walk agree exactly with a dense point-sampling oracle.
* ``conv2d_forward`` / ``conv2d_backward`` — stride-1, zero same-padded 2D
  cross-correlation, channels-last, pre-activation output.
* ``lstm_scan_forward`` / ``lstm_scan_backward`` — batched LSTM scan over a
  token sequence; the input projection ``xw = tokens @ W + b`` is done by the
  caller so the kernel only carries the sequential recurrence.
* ``gru_scan_forward`` / ``gru_scan_backward`` — same for the GRU.

Gate layouts: LSTM ``[forget, input, output, candidate]``, GRU
``[update, reset, candidate]``; bidirectional cores are composed by the
caller from two independent scans.
"""

from __future__ import annotations

import numpy as np


def trace_cells(x0: int, y0: int, x1: int, y1: int) -> list[tuple[int, int]]:
    """Cells strictly between (x0,y0) and (x1,y1) crossed by the center segment.

    The segment runs between cell centers.  A cell is listed iff the segment
    passes through its open interior; exact corner crossings step diagonally
    and skip the two corner-touching neighbours.  Endpoint cells are omitted.
    The walk is exact: boundary-crossing parameters are compared with integer
    cross-multiplication, never floats.
    """
    cells = []
    dx, dy = x1 - x0, y1 - y0
    adx, ady = abs(dx), abs(dy)
    sx = 1 if dx > 0 else -1
    sy = 1 if dy > 0 else -1
    x, y = x0, y0
    i, j = 1, 1
    while i <= adx or j <= ady:
        if j > ady:
            x += sx
            i += 1
        elif i > adx:
            y += sy
            j += 1
        else:
            # compare crossing parameters (2i-1)/(2*adx) vs (2j-1)/(2*ady)
            tx = (2 * i - 1) * ady
            ty = (2 * j - 1) * adx
            if tx < ty:
                x += sx
                i += 1
            elif tx > ty:
                y += sy
                j += 1
            else:
                x += sx
                y += sy
                i += 1
                j += 1
        if (x, y) != (x1, y1):
            cells.append((x, y))
    return cells


def segment_clear(blocked: np.ndarray, x0: int, y0: int, x1: int, y1: int) -> bool:
    """True iff no blocked cell lies strictly between the two cell centers."""
    dx, dy = x1 - x0, y1 - y0
    adx, ady = abs(dx), abs(dy)
    sx = 1 if dx > 0 else -1
    sy = 1 if dy > 0 else -1
    x, y = x0, y0
    i, j = 1, 1
    while i <= adx or j <= ady:
        if j > ady:
            x += sx
            i += 1
        elif i > adx:
            y += sy
            j += 1
        else:
            tx = (2 * i - 1) * ady
            ty = (2 * j - 1) * adx
            if tx < ty:
                x += sx
                i += 1
            elif tx > ty:
                y += sy
                j += 1
            else:
                x += sx
                y += sy
                i += 1
                j += 1
        if (x != x1 or y != y1) and blocked[x, y]:
            return False
    return True


# ---------------------------------------------------------------------------
# convolution


def conv2d_forward(x: np.ndarray, k: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Same-padded stride-1 cross-correlation plus bias, no activation.

    x: (B, H, W, Cin), k: (kk, kk, Cin, Cout), b: (Cout,) -> (B, H, W, Cout)
    """
    bs, h, w, cin = x.shape
    kk = k.shape[0]
    cout = k.shape[3]
    p = kk // 2
    xp = np.zeros((bs, h + 2 * p, w + 2 * p, cin), dtype=x.dtype)
    xp[:, p : p + h, p : p + w, :] = x
    out = np.empty((bs, h, w, cout), dtype=x.dtype)
    out[...] = b
    flat = out.reshape(-1, cout)
    for u in range(kk):
        for v in range(kk):
            patch = xp[:, u : u + h, v : v + w, :].reshape(-1, cin)
            flat += patch @ k[u, v]
    return out


def conv2d_backward(
    x: np.ndarray, k: np.ndarray, dout: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of conv2d_forward w.r.t. input, kernel and bias."""
    bs, h, w, cin = x.shape
    kk = k.shape[0]
    cout = k.shape[3]
    p = kk // 2
    xp = np.zeros((bs, h + 2 * p, w + 2 * p, cin), dtype=x.dtype)
    xp[:, p : p + h, p : p + w, :] = x
    dxp = np.zeros_like(xp)
    dk = np.zeros_like(k)
    dflat = dout.reshape(-1, cout)
    db = dflat.sum(axis=0)
    for u in range(kk):
        for v in range(kk):
            patch = xp[:, u : u + h, v : v + w, :].reshape(-1, cin)
            dk[u, v] = patch.T @ dflat
            dxp[:, u : u + h, v : v + w, :] += (dflat @ k[u, v].T).reshape(bs, h, w, cin)
    dx = dxp[:, p : p + h, p : p + w, :]
    return np.ascontiguousarray(dx), dk, db


# ---------------------------------------------------------------------------
# recurrent scans


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def lstm_scan_forward(
    xw: np.ndarray, u: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """LSTM scan with zero initial state.

    xw: (B, L, 4n) precomputed input projection incl. bias, u: (n, 4n).
    Returns (h_seq (B,L,n), c_seq (B,L,n), gates (B,L,4n)) where gates holds
    the post-nonlinearity values [f, i, o, candidate].
    """
    bs, length, four_n = xw.shape
    n = four_n // 4
    h_seq = np.empty((bs, length, n), dtype=xw.dtype)
    c_seq = np.empty((bs, length, n), dtype=xw.dtype)
    gates = np.empty((bs, length, four_n), dtype=xw.dtype)
    h = np.zeros((bs, n), dtype=xw.dtype)
    c = np.zeros((bs, n), dtype=xw.dtype)
    for t in range(length):
        pre = xw[:, t, :] + h @ u
        f = _sigmoid(pre[:, :n])
        i = _sigmoid(pre[:, n : 2 * n])
        o = _sigmoid(pre[:, 2 * n : 3 * n])
        g = np.tanh(pre[:, 3 * n :])
        c = f * c + i * g
        h = o * np.tanh(c)
        gates[:, t, :n] = f
        gates[:, t, n : 2 * n] = i
        gates[:, t, 2 * n : 3 * n] = o
        gates[:, t, 3 * n :] = g
        h_seq[:, t, :] = h
        c_seq[:, t, :] = c
    return h_seq, c_seq, gates


def lstm_scan_backward(
    dh_seq: np.ndarray,
    u: np.ndarray,
    h_seq: np.ndarray,
    c_seq: np.ndarray,
    gates: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Backprop through lstm_scan_forward; returns (dxw, du)."""
    bs, length, n = h_seq.shape
    dxw = np.empty((bs, length, 4 * n), dtype=dh_seq.dtype)
    du = np.zeros_like(u)
    dh_carry = np.zeros((bs, n), dtype=dh_seq.dtype)
    dc_carry = np.zeros((bs, n), dtype=dh_seq.dtype)
    for t in range(length - 1, -1, -1):
        f = gates[:, t, :n]
        i = gates[:, t, n : 2 * n]
        o = gates[:, t, 2 * n : 3 * n]
        g = gates[:, t, 3 * n :]
        c_prev = c_seq[:, t - 1, :] if t > 0 else np.zeros((bs, n), dtype=dh_seq.dtype)
        h_prev = h_seq[:, t - 1, :] if t > 0 else np.zeros((bs, n), dtype=dh_seq.dtype)
        tc = np.tanh(c_seq[:, t, :])
        dh = dh_seq[:, t, :] + dh_carry
        do = dh * tc
        dc = dh * o * (1.0 - tc * tc) + dc_carry
        df = dc * c_prev
        di = dc * g
        dg = dc * i
        dc_carry = dc * f
        dpre = np.concatenate(
            [
                df * f * (1.0 - f),
                di * i * (1.0 - i),
                do * o * (1.0 - o),
                dg * (1.0 - g * g),
            ],
            axis=1,
        )
        dxw[:, t, :] = dpre
        du += h_prev.T @ dpre
        dh_carry = dpre @ u.T
    return dxw, du


def gru_scan_forward(xw: np.ndarray, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """GRU scan with zero initial state.

    xw: (B, L, 3n) precomputed input projection incl. bias, u: (n, 3n).
    The candidate recurrent term applies to the reset-gated state:
    ``cand = tanh(xw_g + (r * h_prev) @ u_g)``.  Returns (h_seq, gates) with
    gates holding [z, r, candidate] post-nonlinearity.
    """
    bs, length, three_n = xw.shape
    n = three_n // 3
    h_seq = np.empty((bs, length, n), dtype=xw.dtype)
    gates = np.empty((bs, length, three_n), dtype=xw.dtype)
    h = np.zeros((bs, n), dtype=xw.dtype)
    u_zr = u[:, : 2 * n]
    u_g = u[:, 2 * n :]
    for t in range(length):
        pre_zr = xw[:, t, : 2 * n] + h @ u_zr
        z = _sigmoid(pre_zr[:, :n])
        r = _sigmoid(pre_zr[:, n:])
        g = np.tanh(xw[:, t, 2 * n :] + (r * h) @ u_g)
        h = (1.0 - z) * h + z * g
        gates[:, t, :n] = z
        gates[:, t, n : 2 * n] = r
        gates[:, t, 2 * n :] = g
        h_seq[:, t, :] = h
    return h_seq, gates


def gru_scan_backward(
    dh_seq: np.ndarray, u: np.ndarray, h_seq: np.ndarray, gates: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Backprop through gru_scan_forward; returns (dxw, du)."""
    bs, length, n = h_seq.shape
    dxw = np.empty((bs, length, 3 * n), dtype=dh_seq.dtype)
    du = np.zeros_like(u)
    u_zr = u[:, : 2 * n]
    u_g = u[:, 2 * n :]
    dh_carry = np.zeros((bs, n), dtype=dh_seq.dtype)
    for t in range(length - 1, -1, -1):
        z = gates[:, t, :n]
        r = gates[:, t, n : 2 * n]
        g = gates[:, t, 2 * n :]
        h_prev = h_seq[:, t - 1, :] if t > 0 else np.zeros((bs, n), dtype=dh_seq.dtype)
        dh = dh_seq[:, t, :] + dh_carry
        dz = dh * (g - h_prev)
        dg = dh * z
        dh_prev = dh * (1.0 - z)
        dpre_g = dg * (1.0 - g * g)
        du[:, 2 * n :] += (r * h_prev).T @ dpre_g
        drh = dpre_g @ u_g.T
        dr = drh * h_prev
        dh_prev = dh_prev + drh * r
        dpre_z = dz * z * (1.0 - z)
        dpre_r = dr * r * (1.0 - r)
        dpre_zr = np.concatenate([dpre_z, dpre_r], axis=1)
        du[:, : 2 * n] += h_prev.T @ dpre_zr
        dh_carry = dpre_zr @ u_zr.T + dh_prev
        dxw[:, t, : 2 * n] = dpre_zr
        dxw[:, t, 2 * n :] = dpre_g
    return dxw, du
