"""Pure-numpy tile blending kernels, the fallback when the compiled extension
is unavailable. Semantics match `_kernels.pyx` exactly: per pixel, splats are
composited front to back in the supplied per-tile depth order, alpha is
clamped, sub-threshold contributions are skipped without touching the
transmittance, and processing stops once transmittance falls below the floor.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "python"


def blend_forward(h, w, tile, means2d, conic, colors, opacities,
                  tile_idx, tile_ranges, alpha_clamp, alpha_skip, trans_floor,
                  num_threads=1):
    image = np.zeros((h, w, 4))
    final_t = np.ones((h, w))
    n_proc = np.zeros((h, w), np.int32)
    tcx = (w + tile - 1) // tile
    starts = tile_ranges[:-1]
    ends = tile_ranges[1:]
    for t in np.nonzero(ends > starts)[0]:
        ids = tile_idx[starts[t] : ends[t]]
        ty, tx = divmod(int(t), tcx)
        x0, y0 = tx * tile, ty * tile
        x1, y1 = min(x0 + tile, w), min(y0 + tile, h)
        px, py = np.meshgrid(np.arange(x0, x1, dtype=np.float64),
                             np.arange(y0, y1, dtype=np.float64))
        px = px.ravel()[:, None]
        py = py.ravel()[:, None]

        alpha, _ = _alphas(px, py, ids, means2d, conic, opacities,
                           alpha_clamp, alpha_skip)
        t_prev = _prefix_transmittance(alpha)
        live = t_prev >= trans_floor
        weight = np.where(live, t_prev * alpha, 0.0)

        shape = (y1 - y0, x1 - x0)
        block = image[y0:y1, x0:x1]
        block[:, :, :3] += (weight @ colors[ids]).reshape(*shape, 3)
        block[:, :, 3] += weight.sum(axis=1).reshape(shape)
        counts = live.sum(axis=1)
        n_proc[y0:y1, x0:x1] = counts.reshape(shape).astype(np.int32)
        t_full = np.concatenate(
            [np.ones((alpha.shape[0], 1)), np.cumprod(1.0 - alpha, axis=1)], axis=1)
        final_t[y0:y1, x0:x1] = t_full[np.arange(alpha.shape[0]), counts].reshape(shape)
    return image, final_t, n_proc


def blend_backward(h, w, tile, means2d, conic, colors, opacities,
                   tile_idx, tile_ranges, final_t, n_proc, grad_image,
                   alpha_clamp, alpha_skip, trans_floor, num_threads=1):
    k = means2d.shape[0]
    g_mean2d = np.zeros((k, 2))
    g_conic = np.zeros((k, 3))
    g_color = np.zeros((k, 3))
    g_opac = np.zeros(k)
    tcx = (w + tile - 1) // tile
    starts = tile_ranges[:-1]
    ends = tile_ranges[1:]
    for t in np.nonzero(ends > starts)[0]:
        ids = tile_idx[starts[t] : ends[t]]
        ty, tx = divmod(int(t), tcx)
        x0, y0 = tx * tile, ty * tile
        x1, y1 = min(x0 + tile, w), min(y0 + tile, h)
        px, py = np.meshgrid(np.arange(x0, x1, dtype=np.float64),
                             np.arange(y0, y1, dtype=np.float64))
        px = px.ravel()[:, None]
        py = py.ravel()[:, None]

        alpha, gval = _alphas(px, py, ids, means2d, conic, opacities,
                              alpha_clamp, alpha_skip)
        t_prev = _prefix_transmittance(alpha)
        live = t_prev >= trans_floor
        weight = np.where(live, t_prev * alpha, 0.0)

        grad_block = grad_image[y0:y1, x0:x1].reshape(-1, 4)
        g_rgb = grad_block[:, :3]
        g_a = grad_block[:, 3]
        dotc = g_rgb @ colors[ids].T + g_a[:, None]

        contrib = weight * dotc
        suffix = contrib.sum(axis=1, keepdims=True) - np.cumsum(contrib, axis=1)
        one_m = 1.0 - alpha
        mask = live & (alpha > 0.0)
        d_alpha = np.where(mask, t_prev * dotc - suffix / one_m, 0.0)
        gate = mask & (opacities[ids][None, :] * gval <= alpha_clamp)
        d_gval = np.where(gate, opacities[ids][None, :] * d_alpha, 0.0)
        d_opac = np.where(gate, gval * d_alpha, 0.0)
        d_sigma = -gval * d_gval

        dx = px - means2d[ids, 0][None, :]
        dy = py - means2d[ids, 1][None, :]
        ca = conic[ids, 0][None, :]
        cb = conic[ids, 1][None, :]
        cc = conic[ids, 2][None, :]

        g_color[ids] += weight.T @ g_rgb
        g_opac[ids] += d_opac.sum(axis=0)
        g_conic[ids, 0] += (d_sigma * 0.5 * dx * dx).sum(axis=0)
        g_conic[ids, 1] += (d_sigma * dx * dy).sum(axis=0)
        g_conic[ids, 2] += (d_sigma * 0.5 * dy * dy).sum(axis=0)
        g_mean2d[ids, 0] += (-d_sigma * (ca * dx + cb * dy)).sum(axis=0)
        g_mean2d[ids, 1] += (-d_sigma * (cb * dx + cc * dy)).sum(axis=0)
    return g_mean2d, g_conic, g_color, g_opac


def _alphas(px, py, ids, means2d, conic, opacities, alpha_clamp, alpha_skip):
    """Clamped, threshold-gated alpha matrix (pixels x splats) and the raw
    Gaussian falloff values."""
    dx = px - means2d[ids, 0][None, :]
    dy = py - means2d[ids, 1][None, :]
    ca = conic[ids, 0][None, :]
    cb = conic[ids, 1][None, :]
    cc = conic[ids, 2][None, :]
    sigma = 0.5 * (ca * dx * dx + cc * dy * dy) + cb * dx * dy
    gval = np.exp(-np.maximum(sigma, 0.0))
    alpha = np.minimum(opacities[ids][None, :] * gval, alpha_clamp)
    alpha = np.where((sigma >= 0.0) & (alpha >= alpha_skip), alpha, 0.0)
    return alpha, gval


def _prefix_transmittance(alpha):
    """T before each splat: exclusive cumulative product of (1 - alpha)."""
    t_cum = np.cumprod(1.0 - alpha, axis=1)
    return np.concatenate([np.ones((alpha.shape[0], 1)), t_cum[:, :-1]], axis=1)
