"""Local splatting: optimize a simplified Gaussian set to match renders of the
originals from random nearby pseudo-views.

Pseudo-views sit at four times the group-sphere radius, look at its center,
and render 64x64; one view is consumed per optimization step. The loss is
mean L1 on RGB plus 0.1 * mean L1 on accumulated alpha, and gradients flow
through the full rasterization chain. Gaussian count never changes during
optimization (no densification or pruning).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .model import BoundingSphere, Camera, GaussianSet, look_at
from .raster.image import ImageRGBA
from .raster.pipeline import DEFAULT_OPTIONS, RenderOptions, render_backward, render_with_aux

log = logging.getLogger(__name__)

PSEUDO_VIEW_RESOLUTION = 64
PSEUDO_VIEW_FOCAL = 115.2
PSEUDO_VIEW_DISTANCE_FACTOR = 4.0
ALPHA_LOSS_WEIGHT = 0.1

LEARNING_RATES: Dict[str, float] = {
    "position": 1.6e-5,
    "scale": 5e-3,
    "rotation": 1e-3,
    "opacity": 5e-2,
    "color": 2.5e-3,
}

OPACITY_CLAMP = (1e-4, 1.0 - 1e-4)
SCALE_FLOOR = 1e-7


def sample_pseudo_views(sphere: BoundingSphere, count: int, seed: int) -> List[Camera]:
    """Seeded cameras on directions uniform over the unit sphere, each at
    distance 4r from the center and looking at it."""
    if not sphere.radius > 0:
        raise ValueError("pseudo-views require a sphere with positive radius")
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    views: List[Camera] = []
    dist = PSEUDO_VIEW_DISTANCE_FACTOR * sphere.radius
    while len(views) < count:
        d = rng.normal(size=3)
        norm = np.linalg.norm(d)
        if norm < 1e-12:
            continue
        d = d / norm
        up = (0.0, 0.0, 1.0) if abs(d[2]) <= 0.999 else (0.0, 1.0, 0.0)
        views.append(look_at(
            eye=sphere.center + dist * d, target=sphere.center, up=up,
            width=PSEUDO_VIEW_RESOLUTION, height=PSEUDO_VIEW_RESOLUTION,
            fx=PSEUDO_VIEW_FOCAL, fy=PSEUDO_VIEW_FOCAL,
        ))
    return views


def loss(render: ImageRGBA, target: ImageRGBA) -> float:
    """Mean L1 over RGB plus 0.1 * mean L1 over alpha."""
    value, _ = loss_and_grad(render, target)
    return value


def loss_and_grad(render: ImageRGBA, target: ImageRGBA) -> Tuple[float, np.ndarray]:
    """Loss plus its gradient image w.r.t. the render, shape (H, W, 4)."""
    if render.data.shape != target.data.shape:
        raise ValueError("loss requires images of equal dimensions")
    diff = render.data - target.data
    h, w = render.height, render.width
    rgb_term = float(np.abs(diff[:, :, :3]).mean())
    alpha_term = float(np.abs(diff[:, :, 3]).mean())
    grad = np.empty_like(render.data)
    grad[:, :, :3] = np.sign(diff[:, :, :3]) / (3.0 * h * w)
    grad[:, :, 3] = ALPHA_LOSS_WEIGHT * np.sign(diff[:, :, 3]) / (h * w)
    return rgb_term + ALPHA_LOSS_WEIGHT * alpha_term, grad


@dataclass
class OptimizerState:
    """Adam moments per parameter group plus the shared step counter."""

    learning_rates: Dict[str, float] = field(default_factory=lambda: dict(LEARNING_RATES))
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-15
    step_count: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]) -> None:
        self.step_count += 1
        t = self.step_count
        for name, p in params.items():
            g = grads[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / (1.0 - self.beta1 ** t)
            v_hat = v / (1.0 - self.beta2 ** t)
            p -= self.learning_rates[name] * m_hat / (np.sqrt(v_hat) + self.eps)


LossFn = Callable[[ImageRGBA, ImageRGBA], Tuple[float, np.ndarray]]


def optimize_group(original: GaussianSet, init: GaussianSet, iterations: int,
                   seed: int, sphere: BoundingSphere,
                   options: RenderOptions = DEFAULT_OPTIONS,
                   loss_fn: LossFn = loss_and_grad,
                   group_tag: Optional[str] = None) -> GaussianSet:
    """Optimize `init` to match renders of `original` over seeded pseudo-views,
    one view per iteration. Gaussian count is conserved; parameters stay valid
    (unit quaternions, clamped opacity, floored scales) after every step."""
    if len(init) == 0:
        raise ValueError("init must be non-empty")
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    if iterations == 0:
        return init.copy()

    views = sample_pseudo_views(sphere, iterations, seed)
    params = {
        "position": init.positions.astype(np.float64).copy(),
        "scale": init.scales.astype(np.float64).copy(),
        "rotation": init.rotations.astype(np.float64).copy(),
        "opacity": init.opacities.astype(np.float64).copy(),
        "color": init.colors.astype(np.float64).copy(),
    }
    state = OptimizerState()
    for it in range(iterations):
        cam = views[it]
        current = GaussianSet(params["position"], params["scale"], params["rotation"],
                              params["opacity"], params["color"], validate=False)
        target, _ = render_with_aux(original, cam, options)
        pred, aux = render_with_aux(current, cam, options)
        value, grad_img = loss_fn(pred, target)
        if not np.isfinite(value):
            log.warning("non-finite loss at step %d%s; keeping last finite state",
                        it, f" (group {group_tag})" if group_tag else "")
            break
        grads = render_backward(current, cam, grad_img, aux=aux)
        state.step(params, {
            "position": grads.position, "scale": grads.scale,
            "rotation": grads.rotation, "opacity": grads.opacity,
            "color": grads.color,
        })
        _project_params(params)
    return GaussianSet(params["position"], params["scale"], params["rotation"],
                       params["opacity"], params["color"], validate=False)


def _project_params(params: Dict[str, np.ndarray]) -> None:
    """Re-validate parameters in place after an optimizer step."""
    q = params["rotation"]
    norms = np.linalg.norm(q, axis=1, keepdims=True)
    np.divide(q, np.where(norms > 1e-12, norms, 1.0), out=q)
    np.clip(params["opacity"], OPACITY_CLAMP[0], OPACITY_CLAMP[1], out=params["opacity"])
    np.maximum(params["scale"], SCALE_FLOOR, out=params["scale"])
    # Colors carry a >= 0 invariant; Adam can graze below zero on dark splats.
    np.maximum(params["color"], 0.0, out=params["color"])
