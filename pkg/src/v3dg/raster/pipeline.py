"""Forward rasterization pipeline and its analytic backward.

Forward: project all Gaussians, sort survivors by ascending camera depth
(ties by input index via stable sort), bin them into tiles by their 3-sigma
screen extent, then composite front to back per pixel over a transparent
black background. Backward chains image-space gradients through the blend,
the 2D Gaussian evaluation, and the EWA projection down to every stored
Gaussian parameter.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

from ..model import Camera, GaussianSet
from . import backend
from .image import ImageRGBA
from .project import ProjectedSplats, project_set


@dataclass(frozen=True)
class RenderOptions:
    """Rasterizer constants; defaults follow common 3DGS practice."""

    near_plane: float = 0.01
    det_floor: float = 1e-12
    tile_size: int = 16
    sigma_extent: float = 3.0
    alpha_clamp: float = 0.99
    alpha_skip: float = 1.0 / 255.0
    transmittance_floor: float = 1e-4
    threads: Optional[int] = None

    def smooth(self) -> "RenderOptions":
        """Variant with the non-differentiable thresholds disabled."""
        return replace(self, alpha_skip=0.0, transmittance_floor=0.0)


DEFAULT_OPTIONS = RenderOptions()


_CPU_DEFAULT = max(1, min(os.cpu_count() or 1, 8))


def thread_count(requested: Optional[int] = None) -> int:
    """Worker cap: explicit argument > V3DG_THREADS env > cpu count (max 8)."""
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get("V3DG_THREADS")
    if env:
        return max(1, int(env))
    return _CPU_DEFAULT


@dataclass
class RenderAux:
    """Sorted/binned intermediates reused by the backward pass."""

    splats: ProjectedSplats
    order: np.ndarray
    tile_idx: np.ndarray
    tile_ranges: np.ndarray
    final_t: np.ndarray
    n_proc: np.ndarray
    options: RenderOptions
    width: int
    height: int


@dataclass
class GaussianGrads:
    """Per-Gaussian parameter gradients, shaped like the source GaussianSet."""

    position: np.ndarray
    scale: np.ndarray
    rotation: np.ndarray
    opacity: np.ndarray
    color: np.ndarray

    @staticmethod
    def zeros(n: int) -> "GaussianGrads":
        return GaussianGrads(np.zeros((n, 3)), np.zeros((n, 3)), np.zeros((n, 4)),
                             np.zeros(n), np.zeros((n, 3)))


def _bin_tiles(splats: ProjectedSplats, order: np.ndarray, width: int, height: int,
               tile: int) -> Tuple[np.ndarray, np.ndarray]:
    """Build per-tile splat lists (depth order preserved) as a CSR layout.

    Returns (tile_idx, tile_ranges): tile_idx holds positions into the
    depth-ordered splat arrays; tile t owns tile_idx[ranges[t]:ranges[t+1]].
    """
    tcx = (width + tile - 1) // tile
    tcy = (height + tile - 1) // tile
    ntiles = tcx * tcy
    mean = splats.mean2d[order]
    radius = splats.radius[order]

    tx0 = np.floor((mean[:, 0] - radius) / tile).astype(np.int64)
    tx1 = np.floor((mean[:, 0] + radius) / tile).astype(np.int64)
    ty0 = np.floor((mean[:, 1] - radius) / tile).astype(np.int64)
    ty1 = np.floor((mean[:, 1] + radius) / tile).astype(np.int64)
    on = (tx1 >= 0) & (tx0 <= tcx - 1) & (ty1 >= 0) & (ty0 <= tcy - 1)
    np.clip(tx0, 0, tcx - 1, out=tx0)
    np.clip(tx1, 0, tcx - 1, out=tx1)
    np.clip(ty0, 0, tcy - 1, out=ty0)
    np.clip(ty1, 0, tcy - 1, out=ty1)

    wx = np.where(on, tx1 - tx0 + 1, 0)
    wy = np.where(on, ty1 - ty0 + 1, 0)
    counts = wx * wy
    total = int(counts.sum())
    if total == 0:
        return (np.empty(0, np.int64), np.zeros(ntiles + 1, np.int64))

    sp = np.repeat(np.arange(order.size, dtype=np.int64), counts)
    offsets = np.cumsum(counts) - counts
    rank = np.arange(total, dtype=np.int64) - offsets[sp]
    dy, dx = np.divmod(rank, wx[sp])
    tile_of_pair = (ty0[sp] + dy) * tcx + (tx0[sp] + dx)

    pair_order = np.argsort(tile_of_pair, kind="stable")
    tile_idx = sp[pair_order]
    tile_counts = np.bincount(tile_of_pair, minlength=ntiles)
    tile_ranges = np.zeros(ntiles + 1, np.int64)
    np.cumsum(tile_counts, out=tile_ranges[1:])
    return tile_idx, tile_ranges


def render(gs: GaussianSet, cam: Camera,
           options: RenderOptions = DEFAULT_OPTIONS) -> ImageRGBA:
    """Rasterize a GaussianSet to an RGBA image (transparent background)."""
    img, _ = render_with_aux(gs, cam, options)
    return img


def render_with_aux(gs: GaussianSet, cam: Camera,
                    options: RenderOptions = DEFAULT_OPTIONS) -> Tuple[ImageRGBA, RenderAux]:
    """Rasterize and keep the intermediates needed for a backward pass."""
    h, w = cam.height, cam.width
    splats = project_set(gs, cam, near_plane=options.near_plane,
                         det_floor=options.det_floor, sigma_extent=options.sigma_extent)
    order = np.argsort(splats.depth, kind="stable")
    tile_idx, tile_ranges = _bin_tiles(splats, order, w, h, options.tile_size)

    kern = backend.kernels()
    means2d = np.ascontiguousarray(splats.mean2d[order])
    conic = np.ascontiguousarray(splats.conic[order])
    colors = np.ascontiguousarray(gs.colors[splats.indices[order]].astype(np.float64))
    opac = np.ascontiguousarray(gs.opacities[splats.indices[order]].astype(np.float64))
    image, final_t, n_proc = kern.blend_forward(
        h, w, options.tile_size, means2d, conic, colors, opac,
        tile_idx, tile_ranges,
        options.alpha_clamp, options.alpha_skip, options.transmittance_floor,
        thread_count(options.threads),
    )
    aux = RenderAux(splats=splats, order=order, tile_idx=tile_idx,
                    tile_ranges=tile_ranges, final_t=final_t, n_proc=n_proc,
                    options=options, width=w, height=h)
    return ImageRGBA(image), aux


def render_backward(gs: GaussianSet, cam: Camera, grad_image: np.ndarray,
                    aux: Optional[RenderAux] = None,
                    options: RenderOptions = DEFAULT_OPTIONS) -> GaussianGrads:
    """Gradients of a scalar loss w.r.t. every Gaussian parameter, given the
    loss gradient image (H, W, 4). Culled or skipped contributions get zeros."""
    if aux is None:
        _, aux = render_with_aux(gs, cam, options)
    opts = aux.options
    grad_image = np.ascontiguousarray(grad_image, dtype=np.float64)
    if grad_image.shape != (aux.height, aux.width, 4):
        raise ValueError("grad_image shape does not match the rendered image")

    n = len(gs)
    splats = aux.splats
    if len(splats) == 0:
        return GaussianGrads.zeros(n)

    order = aux.order
    kern = backend.kernels()
    means2d = np.ascontiguousarray(splats.mean2d[order])
    conic = np.ascontiguousarray(splats.conic[order])
    colors = np.ascontiguousarray(gs.colors[splats.indices[order]].astype(np.float64))
    opac = np.ascontiguousarray(gs.opacities[splats.indices[order]].astype(np.float64))
    gm_o, gc_o, gcol_o, gop_o = kern.blend_backward(
        aux.height, aux.width, opts.tile_size, means2d, conic, colors, opac,
        aux.tile_idx, aux.tile_ranges, aux.final_t, aux.n_proc, grad_image,
        opts.alpha_clamp, opts.alpha_skip, opts.transmittance_floor,
        thread_count(opts.threads),
    )
    # Undo the depth ordering back to projection (survivor) order.
    inv = np.empty_like(order)
    inv[order] = np.arange(order.size)
    g_mean2d = gm_o[inv]
    g_conic = gc_o[inv]
    g_color_k = gcol_o[inv]
    g_opac_k = gop_o[inv]

    from .project import project_backward

    g_pos, g_scale, g_rot = project_backward(gs, cam, splats, g_mean2d, g_conic)
    grads = GaussianGrads.zeros(n)
    grads.position = g_pos
    grads.scale = g_scale
    grads.rotation = g_rot
    grads.opacity[splats.indices] = g_opac_k
    grads.color[splats.indices] = g_color_k
    return grads
