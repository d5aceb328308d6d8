"""Software rasterizer for 3D Gaussian sets.

Hot blending kernels live in a compiled extension with a pure-numpy fallback;
`active_backend()` reports which one is in use.
"""

from .backend import active_backend, available_backends, get_kernels
from .image import ImageRGBA, downsample_box, from_png_bytes, psnr, to_png_bytes, write_png
from .pipeline import (
    DEFAULT_OPTIONS,
    GaussianGrads,
    RenderAux,
    RenderOptions,
    render,
    render_backward,
    render_with_aux,
    thread_count,
)
from .project import ProjectedSplats, Splat2D, project, project_set

__all__ = [
    "ImageRGBA",
    "Splat2D",
    "ProjectedSplats",
    "GaussianGrads",
    "RenderAux",
    "RenderOptions",
    "DEFAULT_OPTIONS",
    "render",
    "render_with_aux",
    "render_backward",
    "project",
    "project_set",
    "downsample_box",
    "psnr",
    "to_png_bytes",
    "from_png_bytes",
    "write_png",
    "active_backend",
    "available_backends",
    "get_kernels",
    "thread_count",
]
