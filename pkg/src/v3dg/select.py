"""Online selection stage: footprint evaluation and per-frame cluster picking.

Every cluster is tested independently (no tree traversal): it renders exactly
when its own-sphere footprint is within tolerance while its parent-sphere
footprint is not (F_own <= tau < F_parent). Parent radius +inf makes the top
layer always pass the parent test; own radius 0 makes the finest layer always
pass the own test.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .io import Bundle, read_bundle
from .model import (
    BoundingSphere,
    Camera,
    GaussianSet,
    Instance,
    Scene,
    quat_to_matrix,
    transform_set,
    transform_sphere,
)
from .raster.project import project_set


def bundle_bound_sphere(bundle: Bundle) -> BoundingSphere:
    """Sphere bounding a whole asset: the top-layer group sphere, or a sphere
    computed from positions for single-layer bundles (whose own radii are 0)."""
    top = bundle.layer_cluster_ids(bundle.n_layers - 1)
    radii = bundle.own_radii[top].astype(np.float64)
    if np.any(radii > 0.0):
        centers = bundle.own_centers[top].astype(np.float64)
        center = centers.mean(axis=0)
        reach = np.linalg.norm(centers - center, axis=1) + radii
        return BoundingSphere(center, float(reach.max()))
    pos = bundle.gaussians.positions.astype(np.float64)
    center = pos.mean(axis=0)
    return BoundingSphere(center, float(np.linalg.norm(pos - center, axis=1).max()))


@dataclass(frozen=True)
class Tolerance:
    """Footprint tolerance in pixel^2."""

    tau: float

    def __post_init__(self):
        if not (np.isfinite(self.tau) and self.tau >= 0.0):
            raise ValueError("tolerance must be >= 0")


def footprint(sphere: BoundingSphere, cam: Camera) -> float:
    """Projected pixel area of a bounding sphere: pi r^2 fx fy / z^2.

    Returns +inf when the camera is inside the sphere or the sphere reaches
    behind it (z < r); a radius-0 sphere has zero footprint everywhere.
    """
    if sphere.radius == 0.0:
        return 0.0
    z = float(cam.rotation[2] @ sphere.center + cam.translation[2])
    if z < sphere.radius:
        return float("inf")
    return float(np.pi * sphere.radius ** 2 * cam.fx * cam.fy / (z * z))


def _footprints(centers: np.ndarray, radii: np.ndarray, cam: Camera) -> np.ndarray:
    """Vectorized footprint over (C,3) centers and (C,) radii."""
    z = centers @ cam.rotation[2] + cam.translation[2]
    out = np.zeros(radii.shape[0])
    pos = radii > 0.0
    with np.errstate(over="ignore", invalid="ignore"):
        vals = np.pi * radii ** 2 * (cam.fx * cam.fy) / (z * z)
    out[pos] = np.where(z[pos] < radii[pos], np.inf, vals[pos])
    return out


def _instance_spheres(bundle: Bundle, inst: Instance) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    r = quat_to_matrix(inst.rotation)
    s = inst.uniform_scale
    own_c = s * (bundle.own_centers.astype(np.float64) @ r.T) + inst.translation
    par_c = s * (bundle.parent_centers.astype(np.float64) @ r.T) + inst.translation
    own_r = s * bundle.own_radii.astype(np.float64)
    par_r = s * bundle.parent_radii.astype(np.float64)
    return own_c, own_r, par_c, par_r


def _frustum_keep(centers: np.ndarray, radii: np.ndarray, cam: Camera,
                  near_plane: float = 0.01) -> np.ndarray:
    """Conservative sphere-vs-frustum test in camera space."""
    c = centers @ cam.rotation.T + cam.translation
    x, y, z = c[:, 0], c[:, 1], c[:, 2]
    keep = z + radii >= near_plane
    hw = (cam.width / 2.0) / cam.fx
    hh = (cam.height / 2.0) / cam.fy
    nx = 1.0 / np.sqrt(1.0 + hw * hw)
    ny = 1.0 / np.sqrt(1.0 + hh * hh)
    keep &= (x + hw * z) * nx >= -radii
    keep &= (-x + hw * z) * nx >= -radii
    keep &= (y + hh * z) * ny >= -radii
    keep &= (-y + hh * z) * ny >= -radii
    return keep


def select(bundle: Bundle, inst: Instance, cam: Camera, tau: float,
           frustum_cull: bool = False) -> np.ndarray:
    """Cluster ids selected for one instance (independent per-cluster test)."""
    own_c, own_r, par_c, par_r = _instance_spheres(bundle, inst)
    f_own = _footprints(own_c, own_r, cam)
    f_par = _footprints(par_c, par_r, cam)
    mask = (f_own <= tau) & (tau < f_par)
    if frustum_cull:
        # Layer-0 own spheres are points, so fall back to the parent sphere,
        # which bounds the cluster; without any finite bound, never cull.
        use_own = own_r > 0.0
        bound_c = np.where(use_own[:, None], own_c, par_c)
        bound_r = np.where(use_own, own_r, par_r)
        cullable = np.isfinite(bound_r)
        keep = np.ones(mask.shape[0], dtype=bool)
        keep[cullable] = _frustum_keep(bound_c[cullable], bound_r[cullable], cam)
        mask &= keep
    return np.nonzero(mask)[0].astype(np.int64)


@dataclass
class LoadedScene:
    """Scene with its bundles resident in memory."""

    scene: Scene
    bundles: Dict[str, Bundle]

    @staticmethod
    def load(scene: Scene) -> "LoadedScene":
        scene.validate()
        bundles = {aid: read_bundle(path) for aid, path in scene.assets.items()}
        return LoadedScene(scene, bundles)

    def resident_count(self) -> int:
        return sum(self.bundles[i.asset].layer_gaussian_count(0) for i in self.scene.instances)

    def bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        """Axis-aligned bounds of all instance-transformed asset spheres."""
        lo = np.full(3, np.inf)
        hi = np.full(3, -np.inf)
        for inst in self.scene.instances:
            s = transform_sphere(bundle_bound_sphere(self.bundles[inst.asset]), inst)
            lo = np.minimum(lo, s.center - s.radius)
            hi = np.maximum(hi, s.center + s.radius)
        if not np.all(np.isfinite(lo)):
            return np.zeros(3), np.zeros(3)
        return lo, hi


@dataclass
class SelectionResult:
    """Per-instance selected cluster ids plus aggregate counts and timing."""

    per_instance: List[np.ndarray]
    selected_count: int
    resident_count: int
    select_ms: float = 0.0
    tau: float = 0.0

    @property
    def percentage(self) -> float:
        if self.resident_count == 0:
            return 0.0
        return 100.0 * self.selected_count / self.resident_count


def select_scene(loaded: LoadedScene, cam: Camera, tau: float,
                 frustum_cull: bool = False) -> SelectionResult:
    """Run selection for every instance; instances are independent, so rigid
    per-frame instance updates just call this again with new transforms."""
    t0 = time.perf_counter()
    per_instance: List[np.ndarray] = []
    selected = 0
    for inst in loaded.scene.instances:
        bundle = loaded.bundles[inst.asset]
        ids = select(bundle, inst, cam, tau, frustum_cull=frustum_cull)
        per_instance.append(ids)
        selected += int(bundle.counts[ids].sum())
    ms = (time.perf_counter() - t0) * 1e3
    return SelectionResult(per_instance, selected, loaded.resident_count(),
                           select_ms=ms, tau=tau)


def select_vanilla(loaded: LoadedScene) -> SelectionResult:
    """Selection equivalent of vanilla rendering: every layer-0 cluster."""
    t0 = time.perf_counter()
    per_instance = []
    selected = 0
    for inst in loaded.scene.instances:
        bundle = loaded.bundles[inst.asset]
        ids = bundle.layer_cluster_ids(0).astype(np.int64)
        per_instance.append(ids)
        selected += int(bundle.counts[ids].sum())
    ms = (time.perf_counter() - t0) * 1e3
    return SelectionResult(per_instance, selected, loaded.resident_count(), select_ms=ms)


def gather(loaded: LoadedScene, result: SelectionResult,
           with_layers: bool = False):
    """Materialize the selected clusters as one world-space GaussianSet.

    With `with_layers`, also returns the source layer index per Gaussian
    (for the layer-debug view).
    """
    parts: List[GaussianSet] = []
    layer_parts: List[np.ndarray] = []
    for inst, ids in zip(loaded.scene.instances, result.per_instance):
        bundle = loaded.bundles[inst.asset]
        if ids.size == 0:
            continue
        offs = bundle.offsets[ids]
        cnts = bundle.counts[ids]
        index = np.concatenate([np.arange(o, o + c, dtype=np.int64)
                                for o, c in zip(offs, cnts)])
        parts.append(transform_set(bundle.gaussians.subset(index), inst))
        if with_layers:
            layer_parts.append(np.repeat(bundle.layers[ids], cnts))
    gs = GaussianSet.concatenate(parts)
    if with_layers:
        layers = (np.concatenate(layer_parts) if layer_parts
                  else np.empty(0, np.int32))
        return gs, layers
    return gs


def radius_clip_filter(gs: GaussianSet, cam: Camera, clip: float) -> GaussianSet:
    """Baseline: keep Gaussians whose projected 3-sigma radius is >= clip
    pixels; Gaussians culled in projection are dropped."""
    if clip < 0:
        raise ValueError("clip must be >= 0")
    splats = project_set(gs, cam)
    keep = splats.indices[splats.radius >= clip]
    return gs.subset(keep)
