# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: exact grid segment walk and recurrent scans.

Contracts and gate layouts match uavgrid.kernels.reference; convolution is
deliberately left to the NumPy/BLAS implementation, which is faster than a
naive C loop at the sizes this package runs.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, tanh

cnp.import_array()


cdef inline double _sig(double z) noexcept nogil:
    cdef double e
    if z >= 0.0:
        return 1.0 / (1.0 + exp(-z))
    e = exp(z)
    return e / (1.0 + e)


def trace_cells(long x0, long y0, long x1, long y1):
    """Intermediate cells crossed by the open center-to-center segment."""
    cdef long dx = x1 - x0
    cdef long dy = y1 - y0
    cdef long adx = dx if dx >= 0 else -dx
    cdef long ady = dy if dy >= 0 else -dy
    cdef long sx = 1 if dx > 0 else -1
    cdef long sy = 1 if dy > 0 else -1
    cdef long x = x0, y = y0, i = 1, j = 1, tx, ty
    cells = []
    while i <= adx or j <= ady:
        if j > ady:
            x += sx; i += 1
        elif i > adx:
            y += sy; j += 1
        else:
            tx = (2 * i - 1) * ady
            ty = (2 * j - 1) * adx
            if tx < ty:
                x += sx; i += 1
            elif tx > ty:
                y += sy; j += 1
            else:
                x += sx; y += sy; i += 1; j += 1
        if x != x1 or y != y1:
            cells.append((x, y))
    return cells


def segment_clear(object blocked_arr, long x0, long y0, long x1, long y1):
    """True iff no blocked cell lies strictly between the two cell centers."""
    cdef const unsigned char[:, :] blocked = np.ascontiguousarray(blocked_arr).view(np.uint8)
    cdef long dx = x1 - x0
    cdef long dy = y1 - y0
    cdef long adx = dx if dx >= 0 else -dx
    cdef long ady = dy if dy >= 0 else -dy
    cdef long sx = 1 if dx > 0 else -1
    cdef long sy = 1 if dy > 0 else -1
    cdef long x = x0, y = y0, i = 1, j = 1, tx, ty
    while i <= adx or j <= ady:
        if j > ady:
            x += sx; i += 1
        elif i > adx:
            y += sy; j += 1
        else:
            tx = (2 * i - 1) * ady
            ty = (2 * j - 1) * adx
            if tx < ty:
                x += sx; i += 1
            elif tx > ty:
                y += sy; j += 1
            else:
                x += sx; y += sy; i += 1; j += 1
        if (x != x1 or y != y1) and blocked[x, y]:
            return False
    return True


def conv2d_forward(x, k, b):
    from . import reference
    return reference.conv2d_forward(x, k, b)


def conv2d_backward(x, k, dout):
    from . import reference
    return reference.conv2d_backward(x, k, dout)


def lstm_scan_forward(object xw_arr, object u_arr):
    cdef double[:, :, ::1] xw = np.ascontiguousarray(xw_arr, dtype=np.float64)
    cdef double[:, ::1] u = np.ascontiguousarray(u_arr, dtype=np.float64)
    cdef Py_ssize_t bs = xw.shape[0]
    cdef Py_ssize_t length = xw.shape[1]
    cdef Py_ssize_t n4 = xw.shape[2]
    cdef Py_ssize_t n = n4 // 4
    h_seq_arr = np.empty((bs, length, n))
    c_seq_arr = np.empty((bs, length, n))
    gates_arr = np.empty((bs, length, n4))
    pre_arr = np.empty(n4)
    cdef double[:, :, ::1] h_seq = h_seq_arr
    cdef double[:, :, ::1] c_seq = c_seq_arr
    cdef double[:, :, ::1] gates = gates_arr
    cdef double[::1] pre = pre_arr
    cdef Py_ssize_t t, bi, g, hh
    cdef double hv, f, i_, o, cand, cp, c
    with nogil:
        for bi in range(bs):
            for t in range(length):
                for g in range(n4):
                    pre[g] = xw[bi, t, g]
                if t > 0:
                    for hh in range(n):
                        hv = h_seq[bi, t - 1, hh]
                        if hv != 0.0:
                            for g in range(n4):
                                pre[g] += hv * u[hh, g]
                for g in range(n):
                    f = _sig(pre[g])
                    i_ = _sig(pre[n + g])
                    o = _sig(pre[2 * n + g])
                    cand = tanh(pre[3 * n + g])
                    cp = c_seq[bi, t - 1, g] if t > 0 else 0.0
                    c = f * cp + i_ * cand
                    gates[bi, t, g] = f
                    gates[bi, t, n + g] = i_
                    gates[bi, t, 2 * n + g] = o
                    gates[bi, t, 3 * n + g] = cand
                    c_seq[bi, t, g] = c
                    h_seq[bi, t, g] = o * tanh(c)
    return h_seq_arr, c_seq_arr, gates_arr


def lstm_scan_backward(object dh_arr, object u_arr, object h_arr, object c_arr, object g_arr):
    cdef double[:, :, ::1] dh_seq = np.ascontiguousarray(dh_arr, dtype=np.float64)
    cdef double[:, ::1] u = np.ascontiguousarray(u_arr, dtype=np.float64)
    cdef double[:, :, ::1] h_seq = np.ascontiguousarray(h_arr, dtype=np.float64)
    cdef double[:, :, ::1] c_seq = np.ascontiguousarray(c_arr, dtype=np.float64)
    cdef double[:, :, ::1] gates = np.ascontiguousarray(g_arr, dtype=np.float64)
    cdef Py_ssize_t bs = h_seq.shape[0]
    cdef Py_ssize_t length = h_seq.shape[1]
    cdef Py_ssize_t n = h_seq.shape[2]
    cdef Py_ssize_t n4 = 4 * n
    dxw_arr = np.empty((bs, length, n4))
    du_arr = np.zeros((n, n4))
    dcarry_arr = np.zeros(n)
    dccarry_arr = np.zeros(n)
    dpre_arr = np.empty(n4)
    cdef double[:, :, ::1] dxw = dxw_arr
    cdef double[:, ::1] du = du_arr
    cdef double[::1] dh_carry = dcarry_arr
    cdef double[::1] dc_carry = dccarry_arr
    cdef double[::1] dpre = dpre_arr
    cdef Py_ssize_t bi, t, g, hh
    cdef double f, i_, o, cand, cp, hp, tc, dh, do, dc, df, di, dg, hv, acc
    with nogil:
        for bi in range(bs):
            for g in range(n):
                dh_carry[g] = 0.0
                dc_carry[g] = 0.0
            for t in range(length - 1, -1, -1):
                for g in range(n):
                    f = gates[bi, t, g]
                    i_ = gates[bi, t, n + g]
                    o = gates[bi, t, 2 * n + g]
                    cand = gates[bi, t, 3 * n + g]
                    cp = c_seq[bi, t - 1, g] if t > 0 else 0.0
                    tc = tanh(c_seq[bi, t, g])
                    dh = dh_seq[bi, t, g] + dh_carry[g]
                    do = dh * tc
                    dc = dh * o * (1.0 - tc * tc) + dc_carry[g]
                    df = dc * cp
                    di = dc * cand
                    dg = dc * i_
                    dc_carry[g] = dc * f
                    dpre[g] = df * f * (1.0 - f)
                    dpre[n + g] = di * i_ * (1.0 - i_)
                    dpre[2 * n + g] = do * o * (1.0 - o)
                    dpre[3 * n + g] = dg * (1.0 - cand * cand)
                for g in range(n4):
                    dxw[bi, t, g] = dpre[g]
                if t > 0:
                    for hh in range(n):
                        hp = h_seq[bi, t - 1, hh]
                        if hp != 0.0:
                            for g in range(n4):
                                du[hh, g] += hp * dpre[g]
                for hh in range(n):
                    acc = 0.0
                    for g in range(n4):
                        acc += dpre[g] * u[hh, g]
                    dh_carry[hh] = acc
    return dxw_arr, du_arr


def gru_scan_forward(object xw_arr, object u_arr):
    cdef double[:, :, ::1] xw = np.ascontiguousarray(xw_arr, dtype=np.float64)
    cdef double[:, ::1] u = np.ascontiguousarray(u_arr, dtype=np.float64)
    cdef Py_ssize_t bs = xw.shape[0]
    cdef Py_ssize_t length = xw.shape[1]
    cdef Py_ssize_t n3 = xw.shape[2]
    cdef Py_ssize_t n = n3 // 3
    h_seq_arr = np.empty((bs, length, n))
    gates_arr = np.empty((bs, length, n3))
    pre_arr = np.empty(n3)
    cdef double[:, :, ::1] h_seq = h_seq_arr
    cdef double[:, :, ::1] gates = gates_arr
    cdef double[::1] pre = pre_arr
    cdef Py_ssize_t t, bi, g, hh
    cdef double hv, z, r, cand, hp, rh
    with nogil:
        for bi in range(bs):
            for t in range(length):
                for g in range(n3):
                    pre[g] = xw[bi, t, g]
                if t > 0:
                    # update/reset take h_prev, the candidate takes r * h_prev
                    for hh in range(n):
                        hv = h_seq[bi, t - 1, hh]
                        if hv != 0.0:
                            for g in range(2 * n):
                                pre[g] += hv * u[hh, g]
                for g in range(n):
                    gates[bi, t, g] = _sig(pre[g])
                    gates[bi, t, n + g] = _sig(pre[n + g])
                if t > 0:
                    for hh in range(n):
                        rh = gates[bi, t, n + hh] * h_seq[bi, t - 1, hh]
                        if rh != 0.0:
                            for g in range(n):
                                pre[2 * n + g] += rh * u[hh, 2 * n + g]
                for g in range(n):
                    z = gates[bi, t, g]
                    cand = tanh(pre[2 * n + g])
                    hp = h_seq[bi, t - 1, g] if t > 0 else 0.0
                    gates[bi, t, 2 * n + g] = cand
                    h_seq[bi, t, g] = (1.0 - z) * hp + z * cand
    return h_seq_arr, gates_arr


def gru_scan_backward(object dh_arr, object u_arr, object h_arr, object g_arr):
    cdef double[:, :, ::1] dh_seq = np.ascontiguousarray(dh_arr, dtype=np.float64)
    cdef double[:, ::1] u = np.ascontiguousarray(u_arr, dtype=np.float64)
    cdef double[:, :, ::1] h_seq = np.ascontiguousarray(h_arr, dtype=np.float64)
    cdef double[:, :, ::1] gates = np.ascontiguousarray(g_arr, dtype=np.float64)
    cdef Py_ssize_t bs = h_seq.shape[0]
    cdef Py_ssize_t length = h_seq.shape[1]
    cdef Py_ssize_t n = h_seq.shape[2]
    cdef Py_ssize_t n3 = 3 * n
    dxw_arr = np.empty((bs, length, n3))
    du_arr = np.zeros((n, n3))
    dcarry_arr = np.zeros(n)
    dprev_arr = np.zeros(n)
    dpre_arr = np.empty(n3)
    cdef double[:, :, ::1] dxw = dxw_arr
    cdef double[:, ::1] du = du_arr
    cdef double[::1] dh_carry = dcarry_arr
    cdef double[::1] dh_prev = dprev_arr
    cdef double[::1] dpre = dpre_arr
    cdef Py_ssize_t bi, t, g, hh
    cdef double z, r, cand, hp, dh, dz, dg, dpg, drh, dr, acc
    with nogil:
        for bi in range(bs):
            for g in range(n):
                dh_carry[g] = 0.0
            for t in range(length - 1, -1, -1):
                for g in range(n):
                    z = gates[bi, t, g]
                    cand = gates[bi, t, 2 * n + g]
                    hp = h_seq[bi, t - 1, g] if t > 0 else 0.0
                    dh = dh_seq[bi, t, g] + dh_carry[g]
                    dz = dh * (cand - hp)
                    dg = dh * z
                    dh_prev[g] = dh * (1.0 - z)
                    dpre[2 * n + g] = dg * (1.0 - cand * cand)
                    dpre[g] = dz * z * (1.0 - z)  # reset-gate part filled below
                # candidate recurrent weights see r * h_prev
                if t > 0:
                    for hh in range(n):
                        hp = gates[bi, t, n + hh] * h_seq[bi, t - 1, hh]
                        if hp != 0.0:
                            for g in range(n):
                                du[hh, 2 * n + g] += hp * dpre[2 * n + g]
                for hh in range(n):
                    acc = 0.0
                    for g in range(n):
                        acc += dpre[2 * n + g] * u[hh, 2 * n + g]
                    # acc = d(r*h_prev)[hh]
                    hp = h_seq[bi, t - 1, hh] if t > 0 else 0.0
                    r = gates[bi, t, n + hh]
                    dr = acc * hp
                    dh_prev[hh] += acc * r
                    dpre[n + hh] = dr * r * (1.0 - r)
                for g in range(n3):
                    dxw[bi, t, g] = dpre[g]
                if t > 0:
                    for hh in range(n):
                        hp = h_seq[bi, t - 1, hh]
                        if hp != 0.0:
                            for g in range(2 * n):
                                du[hh, g] += hp * dpre[g]
                for hh in range(n):
                    acc = dh_prev[hh]
                    for g in range(2 * n):
                        acc += dpre[g] * u[hh, g]
                    dh_carry[hh] = acc
    return dxw_arr, du_arr
