# Compiled implementations of the hot kernels. Must stay behaviourally
# identical to pyback.py; the parity test suite holds both to that.

import numpy as np

cimport numpy as cnp
from libc.math cimport atan2

cnp.import_array()

BACKEND = "native"


def convolve2d(src, kernel):
    """2-D convolution (kernel flipped), borders replicated."""
    cdef double[:, ::1] s = np.ascontiguousarray(src, dtype=np.float64)
    cdef double[:, ::1] k = np.ascontiguousarray(kernel, dtype=np.float64)
    cdef Py_ssize_t h = s.shape[0], w = s.shape[1]
    cdef Py_ssize_t kh = k.shape[0], kw = k.shape[1]
    cdef Py_ssize_t ry = kh // 2, rx = kw // 2
    out_arr = np.zeros((h, w), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t y, x, i, j, sy, sx
    cdef double acc
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for i in range(kh):
                sy = y - (i - ry)
                if sy < 0:
                    sy = 0
                elif sy >= h:
                    sy = h - 1
                for j in range(kw):
                    sx = x - (j - rx)
                    if sx < 0:
                        sx = 0
                    elif sx >= w:
                        sx = w - 1
                    acc += k[i, j] * s[sy, sx]
            out[y, x] = acc
    return out_arr


def canny_nms(mag, gx, gy):
    """Directional non-maximum suppression of a gradient magnitude plane."""
    cdef double[:, ::1] m = np.ascontiguousarray(mag, dtype=np.float64)
    cdef double[:, ::1] dx = np.ascontiguousarray(gx, dtype=np.float64)
    cdef double[:, ::1] dy = np.ascontiguousarray(gy, dtype=np.float64)
    cdef Py_ssize_t h = m.shape[0], w = m.shape[1]
    out_arr = np.zeros((h, w), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t y, x, oy, ox
    cdef double ang, v, n1, n2
    cdef double PI = 3.141592653589793
    for y in range(h):
        for x in range(w):
            v = m[y, x]
            if v == 0.0:
                continue
            ang = atan2(dy[y, x], dx[y, x]) * 180.0 / PI
            if ang < 0.0:
                ang += 180.0
            if ang >= 180.0:
                ang -= 180.0
            if ang < 22.5 or ang >= 157.5:
                oy = 0; ox = 1
            elif ang < 67.5:
                oy = 1; ox = 1
            elif ang < 112.5:
                oy = 1; ox = 0
            else:
                oy = 1; ox = -1
            n1 = m[y + oy, x + ox] if 0 <= y + oy < h and 0 <= x + ox < w else 0.0
            n2 = m[y - oy, x - ox] if 0 <= y - oy < h and 0 <= x - ox < w else 0.0
            if v > n1 and v >= n2:
                out[y, x] = v
    return out_arr


def hysteresis8(strong, weak):
    """Edge tracking: weak pixels survive iff 8-connected to a strong one."""
    strong_arr = np.ascontiguousarray(strong, dtype=np.uint8)
    weak_arr = np.ascontiguousarray(weak, dtype=np.uint8)
    cdef unsigned char[:, ::1] st = strong_arr
    cdef unsigned char[:, ::1] wk = weak_arr
    cdef Py_ssize_t h = st.shape[0], w = st.shape[1]
    out_arr = np.zeros((h, w), dtype=np.uint8)
    cdef unsigned char[:, ::1] out = out_arr
    stack_arr = np.empty(h * w, dtype=np.int64)
    cdef long long[::1] stack = stack_arr
    cdef Py_ssize_t top = 0, y, x, ny, nx, dyy, dxx
    for y in range(h):
        for x in range(w):
            if st[y, x]:
                out[y, x] = 1
                stack[top] = y * w + x
                top += 1
    while top > 0:
        top -= 1
        y = stack[top] // w
        x = stack[top] % w
        for dyy in range(-1, 2):
            ny = y + dyy
            if ny < 0 or ny >= h:
                continue
            for dxx in range(-1, 2):
                nx = x + dxx
                if nx < 0 or nx >= w:
                    continue
                if out[ny, nx]:
                    continue
                if wk[ny, nx] or st[ny, nx]:
                    out[ny, nx] = 1
                    stack[top] = ny * w + nx
                    top += 1
    return out_arr


def hough_accumulate(xs, ys, ux, uy, rmin, rmax, height, width):
    """Gradient-directed circle voting over radii [rmin, rmax]."""
    cdef double[::1] px = np.ascontiguousarray(xs, dtype=np.float64)
    cdef double[::1] py = np.ascontiguousarray(ys, dtype=np.float64)
    cdef double[::1] vx = np.ascontiguousarray(ux, dtype=np.float64)
    cdef double[::1] vy = np.ascontiguousarray(uy, dtype=np.float64)
    cdef Py_ssize_t n = px.shape[0]
    cdef Py_ssize_t nr = rmax - rmin + 1
    cdef Py_ssize_t h = height, w = width
    acc_arr = np.zeros((nr, h, w), dtype=np.int32)
    cdef int[:, :, ::1] acc = acc_arr
    cdef Py_ssize_t i, ri, cx, cy
    cdef double r, sign
    for i in range(n):
        for ri in range(nr):
            r = rmin + ri
            for sign in (1.0, -1.0):
                cx = <Py_ssize_t>llround(px[i] + sign * r * vx[i])
                cy = <Py_ssize_t>llround(py[i] + sign * r * vy[i])
                if 0 <= cx < w and 0 <= cy < h:
                    acc[ri, cy, cx] += 1
    return acc_arr


cdef extern from "math.h":
    long long llround(double) nogil


def cascade_scan(
    ii,
    sqii,
    xs,
    ys,
    win_w,
    win_h,
    norm_x,
    norm_y,
    norm_w,
    norm_h,
    stage_starts,
    stage_thresh,
    stump_feat,
    stump_thresh,
    stump_left,
    stump_right,
    feat_starts,
    rect_x,
    rect_y,
    rect_w,
    rect_h,
    rect_weight,
):
    """Evaluate one scale's worth of windows against a flattened cascade."""
    cdef double[:, ::1] iv = np.ascontiguousarray(ii, dtype=np.float64)
    cdef double[:, ::1] sv = np.ascontiguousarray(sqii, dtype=np.float64)
    cdef long long[::1] wx = np.ascontiguousarray(xs, dtype=np.int64)
    cdef long long[::1] wy = np.ascontiguousarray(ys, dtype=np.int64)
    cdef long long[::1] sst = np.ascontiguousarray(stage_starts, dtype=np.int64)
    cdef double[::1] sth = np.ascontiguousarray(stage_thresh, dtype=np.float64)
    cdef long long[::1] tf = np.ascontiguousarray(stump_feat, dtype=np.int64)
    cdef double[::1] tt = np.ascontiguousarray(stump_thresh, dtype=np.float64)
    cdef double[::1] tl = np.ascontiguousarray(stump_left, dtype=np.float64)
    cdef double[::1] tr = np.ascontiguousarray(stump_right, dtype=np.float64)
    cdef long long[::1] fst = np.ascontiguousarray(feat_starts, dtype=np.int64)
    cdef long long[::1] rx = np.ascontiguousarray(rect_x, dtype=np.int64)
    cdef long long[::1] ry = np.ascontiguousarray(rect_y, dtype=np.int64)
    cdef long long[::1] rw = np.ascontiguousarray(rect_w, dtype=np.int64)
    cdef long long[::1] rh = np.ascontiguousarray(rect_h, dtype=np.int64)
    cdef double[::1] rwt = np.ascontiguousarray(rect_weight, dtype=np.float64)

    cdef Py_ssize_t m = wx.shape[0]
    out_arr = np.zeros(m, dtype=np.uint8)
    cdef unsigned char[::1] out = out_arr
    cdef Py_ssize_t n_stages = sth.shape[0]
    cdef Py_ssize_t i, s, t, r, f
    cdef long long x0, y0, nx, ny
    cdef double narea = float(norm_w * norm_h)
    cdef double s1, s2, nf2, inv_nf, votes, val
    cdef bint rejected

    for i in range(m):
        x0 = wx[i]
        y0 = wy[i]
        nx = x0 + norm_x
        ny = y0 + norm_y
        s1 = iv[ny + norm_h, nx + norm_w] - iv[ny, nx + norm_w] - iv[ny + norm_h, nx] + iv[ny, nx]
        s2 = sv[ny + norm_h, nx + norm_w] - sv[ny, nx + norm_w] - sv[ny + norm_h, nx] + sv[ny, nx]
        nf2 = narea * s2 - s1 * s1
        if nf2 <= 1e-9:
            continue
        inv_nf = 1.0 / (nf2 ** 0.5)
        rejected = False
        for s in range(n_stages):
            votes = 0.0
            for t in range(sst[s], sst[s + 1]):
                f = tf[t]
                val = 0.0
                for r in range(fst[f], fst[f + 1]):
                    val += rwt[r] * (
                        iv[y0 + ry[r] + rh[r], x0 + rx[r] + rw[r]]
                        - iv[y0 + ry[r], x0 + rx[r] + rw[r]]
                        - iv[y0 + ry[r] + rh[r], x0 + rx[r]]
                        + iv[y0 + ry[r], x0 + rx[r]]
                    )
                val *= inv_nf
                votes += tl[t] if val < tt[t] else tr[t]
            if votes < sth[s]:
                rejected = True
                break
        if not rejected:
            out[i] = 1
    return out_arr
