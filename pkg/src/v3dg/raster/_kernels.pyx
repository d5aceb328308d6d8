# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled tile blending kernels.

Forward runs tiles in parallel (disjoint pixel regions, so the result is
independent of scheduling); backward runs tiles serially so gradient
accumulation order is deterministic. Semantics mirror `_py_kernels.py`.
"""

from cython.parallel cimport prange
from libc.math cimport INFINITY, exp, log

import numpy as np

cimport numpy as cnp

BACKEND_NAME = "compiled"

cnp.import_array()


cdef inline double _sigma_cut(double alpha_skip) noexcept nogil:
    # Opacity is < 1, so sigma beyond -log(alpha_skip) cannot reach the skip
    # threshold; the exp can be bypassed entirely.
    if alpha_skip <= 0.0:
        return INFINITY
    return -log(alpha_skip)


cdef void _forward_tile(Py_ssize_t t, int h, int w, int tile, int tcx,
                        const double[:, ::1] means2d, const double[:, ::1] conic,
                        const double[:, ::1] colors, const double[::1] opac,
                        const long long[::1] tile_idx, const long long[::1] tile_ranges,
                        double alpha_clamp, double alpha_skip, double trans_floor,
                        double sigma_cut,
                        double[:, :, ::1] img, double[:, ::1] ft, int[:, ::1] nproc) noexcept nogil:
    cdef Py_ssize_t s0 = tile_ranges[t]
    cdef Py_ssize_t s1 = tile_ranges[t + 1]
    cdef int ty = <int>(t // tcx)
    cdef int tx = <int>(t - ty * tcx)
    cdef int x0 = tx * tile
    cdef int y0 = ty * tile
    cdef int x1 = min(x0 + tile, w)
    cdef int y1 = min(y0 + tile, h)
    cdef Py_ssize_t j, gid
    cdef int px, py, proc
    cdef double T, cr, cg, cb, ca, dx, dy, sigma, gval, alpha, wgt
    for py in range(y0, y1):
        for px in range(x0, x1):
            T = 1.0
            cr = 0.0
            cg = 0.0
            cb = 0.0
            ca = 0.0
            proc = 0
            for j in range(s0, s1):
                if T < trans_floor:
                    break
                proc = proc + 1
                gid = tile_idx[j]
                dx = px - means2d[gid, 0]
                dy = py - means2d[gid, 1]
                sigma = 0.5 * (conic[gid, 0] * dx * dx + conic[gid, 2] * dy * dy) \
                    + conic[gid, 1] * dx * dy
                if sigma < 0.0 or sigma > sigma_cut:
                    # beyond the cut, alpha < alpha_skip for any opacity < 1
                    continue
                gval = exp(-sigma)
                alpha = opac[gid] * gval
                if alpha > alpha_clamp:
                    alpha = alpha_clamp
                if alpha < alpha_skip:
                    continue
                wgt = T * alpha
                cr = cr + wgt * colors[gid, 0]
                cg = cg + wgt * colors[gid, 1]
                cb = cb + wgt * colors[gid, 2]
                ca = ca + wgt
                T = T * (1.0 - alpha)
            img[py, px, 0] = cr
            img[py, px, 1] = cg
            img[py, px, 2] = cb
            img[py, px, 3] = ca
            ft[py, px] = T
            nproc[py, px] = proc


def blend_forward(int h, int w, int tile,
                  const double[:, ::1] means2d, const double[:, ::1] conic,
                  const double[:, ::1] colors, const double[::1] opac,
                  const long long[::1] tile_idx, const long long[::1] tile_ranges,
                  double alpha_clamp, double alpha_skip, double trans_floor,
                  int num_threads=1):
    cdef int tcx = (w + tile - 1) // tile
    cdef int tcy = (h + tile - 1) // tile
    cdef Py_ssize_t ntiles = tcx * tcy
    image = np.zeros((h, w, 4))
    final_t = np.ones((h, w))
    n_proc = np.zeros((h, w), np.int32)
    cdef double[:, :, ::1] img = image
    cdef double[:, ::1] ft = final_t
    cdef int[:, ::1] nproc = n_proc
    cdef Py_ssize_t t
    cdef double sigma_cut = _sigma_cut(alpha_skip)
    if num_threads < 1:
        num_threads = 1
    if num_threads == 1:
        with nogil:
            for t in range(ntiles):
                _forward_tile(t, h, w, tile, tcx, means2d, conic, colors, opac,
                              tile_idx, tile_ranges, alpha_clamp, alpha_skip,
                              trans_floor, sigma_cut, img, ft, nproc)
    else:
        for t in prange(ntiles, nogil=True, num_threads=num_threads, schedule="dynamic"):
            _forward_tile(t, h, w, tile, tcx, means2d, conic, colors, opac,
                          tile_idx, tile_ranges, alpha_clamp, alpha_skip,
                          trans_floor, sigma_cut, img, ft, nproc)
    return image, final_t, n_proc


def blend_backward(int h, int w, int tile,
                   const double[:, ::1] means2d, const double[:, ::1] conic,
                   const double[:, ::1] colors, const double[::1] opac,
                   const long long[::1] tile_idx, const long long[::1] tile_ranges,
                   const double[:, ::1] final_t, const int[:, ::1] n_proc,
                   const double[:, :, ::1] grad_image,
                   double alpha_clamp, double alpha_skip, double trans_floor,
                   int num_threads=1):
    cdef Py_ssize_t k = means2d.shape[0]
    g_mean2d = np.zeros((k, 2))
    g_conic = np.zeros((k, 3))
    g_color = np.zeros((k, 3))
    g_opac = np.zeros(k)
    cdef double[:, ::1] gm = g_mean2d
    cdef double[:, ::1] gc = g_conic
    cdef double[:, ::1] gcol = g_color
    cdef double[::1] gop = g_opac
    cdef int tcx = (w + tile - 1) // tile
    cdef int tcy = (h + tile - 1) // tile
    cdef Py_ssize_t ntiles = tcx * tcy
    cdef Py_ssize_t t, j, gid, s0, s1
    cdef int ty, tx, x0, x1, y0, y1, px, py, proc
    cdef double T, acc, gr, gg, gb, ga, dx, dy, sigma, gval, alpha, raw
    cdef double dotc, wgt, d_alpha, d_gval, d_sigma
    cdef double sigma_cut = _sigma_cut(alpha_skip)
    with nogil:
        for t in range(ntiles):
            s0 = tile_ranges[t]
            s1 = tile_ranges[t + 1]
            if s1 <= s0:
                continue
            ty = <int>(t // tcx)
            tx = <int>(t - ty * tcx)
            x0 = tx * tile
            y0 = ty * tile
            x1 = min(x0 + tile, w)
            y1 = min(y0 + tile, h)
            for py in range(y0, y1):
                for px in range(x0, x1):
                    proc = n_proc[py, px]
                    if proc == 0:
                        continue
                    gr = grad_image[py, px, 0]
                    gg = grad_image[py, px, 1]
                    gb = grad_image[py, px, 2]
                    ga = grad_image[py, px, 3]
                    if gr == 0.0 and gg == 0.0 and gb == 0.0 and ga == 0.0:
                        continue
                    T = final_t[py, px]
                    acc = 0.0
                    for j in range(s0 + proc - 1, s0 - 1, -1):
                        gid = tile_idx[j]
                        dx = px - means2d[gid, 0]
                        dy = py - means2d[gid, 1]
                        sigma = 0.5 * (conic[gid, 0] * dx * dx + conic[gid, 2] * dy * dy) \
                            + conic[gid, 1] * dx * dy
                        if sigma < 0.0 or sigma > sigma_cut:
                            continue
                        gval = exp(-sigma)
                        raw = opac[gid] * gval
                        alpha = raw
                        if alpha > alpha_clamp:
                            alpha = alpha_clamp
                        if alpha < alpha_skip:
                            continue
                        T = T / (1.0 - alpha)
                        wgt = T * alpha
                        dotc = gr * colors[gid, 0] + gg * colors[gid, 1] \
                            + gb * colors[gid, 2] + ga
                        d_alpha = T * dotc - acc / (1.0 - alpha)
                        gcol[gid, 0] += wgt * gr
                        gcol[gid, 1] += wgt * gg
                        gcol[gid, 2] += wgt * gb
                        if raw <= alpha_clamp:
                            d_gval = opac[gid] * d_alpha
                            gop[gid] += gval * d_alpha
                            d_sigma = -gval * d_gval
                            gc[gid, 0] += d_sigma * 0.5 * dx * dx
                            gc[gid, 1] += d_sigma * dx * dy
                            gc[gid, 2] += d_sigma * 0.5 * dy * dy
                            gm[gid, 0] += -d_sigma * (conic[gid, 0] * dx + conic[gid, 1] * dy)
                            gm[gid, 1] += -d_sigma * (conic[gid, 1] * dx + conic[gid, 2] * dy)
                        acc = acc + wgt * dotc
    return g_mean2d, g_conic, g_color, g_opac
