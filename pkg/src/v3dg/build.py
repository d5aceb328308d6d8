"""Offline build stage: turn one Gaussian asset into a multi-layer bundle.

Layer 0 is the asset split into clusters. Each coarser layer is built by
grouping adjacent clusters, concatenating their Gaussians, downsampling by
half (keeping the larger scale-times-opacity scores, scales expanded by
2^(1/6)), optimizing the survivors against renders of the originals, and
re-splitting into clusters. Groups within a layer are independent and may be
processed in parallel; results are assembled in deterministic order.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .clustering import group_clusters, median_split
from .diffsplat import optimize_group
from .io import Bundle, BundleParams
from .model import BoundingSphere, GaussianSet
from .raster.pipeline import DEFAULT_OPTIONS, RenderOptions, thread_count

SCALE_EXPANSION_DEFAULT = 2.0 ** (1.0 / 6.0)

ProgressFn = Callable[[int, int, int], None]


@dataclass(frozen=True)
class BuildParams:
    n_gaussians_per_cluster: int = 4096
    n_clusters_per_group: int = 2
    simplify_iterations: int = 640
    scale_expansion: float = SCALE_EXPANSION_DEFAULT
    seed: int = 0

    def __post_init__(self):
        if self.n_gaussians_per_cluster < 1:
            raise ValueError("n_gaussians_per_cluster must be >= 1")
        if self.n_clusters_per_group < 2:
            raise ValueError("n_clusters_per_group must be >= 2")
        if self.simplify_iterations < 0:
            raise ValueError("simplify_iterations must be >= 0")
        if self.scale_expansion < 1.0:
            raise ValueError("scale_expansion must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")

    def bundle_params(self) -> BundleParams:
        return BundleParams(self.n_gaussians_per_cluster, self.n_clusters_per_group,
                            self.simplify_iterations, self.seed)


def downsample_half(gs: GaussianSet, scale_expansion: float = SCALE_EXPANSION_DEFAULT) -> GaussianSet:
    """Keep the ceil(N/2) Gaussians with the largest opacity x geometric-mean
    scale (ties to the lower index) and expand surviving scales."""
    if len(gs) == 0:
        raise ValueError("cannot downsample an empty set")
    scales = gs.scales.astype(np.float64)
    score = gs.opacities.astype(np.float64) * np.cbrt(scales[:, 0] * scales[:, 1] * scales[:, 2])
    keep_n = (len(gs) + 1) // 2
    order = np.argsort(-score, kind="stable")
    keep = np.sort(order[:keep_n])
    out = gs.subset(keep).astype(np.float64)
    out.scales *= scale_expansion
    return out


def compute_group_sphere(member_positions: np.ndarray,
                         child_own_spheres: Sequence[BoundingSphere]) -> BoundingSphere:
    """Sphere of a cluster group: mean-position center, farthest-member
    radius, inflated so it strictly encloses every child own-sphere."""
    pos = np.asarray(member_positions, dtype=np.float64)
    if pos.ndim != 2 or pos.shape[0] == 0:
        raise ValueError("group must contain at least one Gaussian")
    center = pos.mean(axis=0)
    radius = float(np.linalg.norm(pos - center, axis=1).max())
    if child_own_spheres:
        reach = max(float(np.linalg.norm(center - s.center)) + s.radius
                    for s in child_own_spheres)
        strict = max(s.radius for s in child_own_spheres) * (1.0 + 1e-4)
        # Extra relative slack keeps the enclosure chain valid after the
        # spheres are rounded to float32 in the bundle.
        radius = max(radius, reach, strict) * (1.0 + 1e-5)
    return BoundingSphere(center, radius)


@dataclass
class ClusterDraft:
    """Cluster under construction, before bundle assembly."""

    gaussians: GaussianSet
    layer: int
    own_sphere: BoundingSphere
    parent_sphere: Optional[BoundingSphere] = None
    centroid: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.centroid is None:
            self.centroid = self.gaussians.positions.astype(np.float64).mean(axis=0)


def simplify_group(members: List[ClusterDraft], params: BuildParams, seed: int,
                   options: RenderOptions = DEFAULT_OPTIONS):
    """Simplify one cluster group.

    Returns (group_sphere, new_drafts): the new clusters carry the group's
    sphere as their own sphere; the caller records it as the members' parent.
    """
    if not members:
        raise ValueError("group must have at least one member cluster")
    originals = GaussianSet.concatenate([m.gaussians for m in members]).astype(np.float64)
    sphere = compute_group_sphere(originals.positions, [m.own_sphere for m in members])
    init = downsample_half(originals, params.scale_expansion)
    simplified = optimize_group(originals, init, params.simplify_iterations, seed, sphere,
                                options=options, group_tag=f"seed={seed}")
    layer = members[0].layer + 1
    drafts = [
        ClusterDraft(gaussians=simplified.subset(leaf), layer=layer, own_sphere=sphere)
        for leaf in median_split(simplified.positions, params.n_gaussians_per_cluster)
    ]
    return sphere, drafts


def build_bundle(asset: GaussianSet, params: BuildParams,
                 progress: Optional[ProgressFn] = None,
                 threads: Optional[int] = None,
                 options: RenderOptions = DEFAULT_OPTIONS) -> Bundle:
    """Run the full offline build for one asset."""
    if len(asset) == 0:
        raise ValueError("asset is empty")
    asset.validate()

    leaves = median_split(asset.positions.astype(np.float64), params.n_gaussians_per_cluster)
    current: List[ClusterDraft] = []
    for leaf in leaves:
        sub = asset.subset(leaf)
        centroid = sub.positions.astype(np.float64).mean(axis=0)
        current.append(ClusterDraft(gaussians=sub, layer=0,
                                    own_sphere=BoundingSphere(centroid, 0.0),
                                    centroid=centroid))
    all_clusters: List[ClusterDraft] = list(current)

    workers = thread_count(threads)
    if workers > 1:
        # Parallelism lives at the group level; keep the kernels serial so the
        # machine is not oversubscribed.
        from dataclasses import replace as _replace

        options = _replace(options, threads=1)
    group_id = 0
    layer = 0
    while len(current) >= params.n_clusters_per_group:
        centroids = np.stack([c.centroid for c in current])
        groups = group_clusters(centroids, params.n_clusters_per_group)
        seeds = [params.seed ^ (group_id + gi) for gi in range(len(groups))]
        group_id += len(groups)

        def job(args):
            gidx, seed = args
            return simplify_group([current[i] for i in gidx], params, seed, options)

        tasks = list(zip(groups, seeds))
        if workers > 1 and len(tasks) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = []
                for done, res in enumerate(pool.map(job, tasks), 1):
                    results.append(res)
                    if progress:
                        progress(layer, done, len(tasks))
        else:
            results = []
            for done, task in enumerate(tasks, 1):
                results.append(job(task))
                if progress:
                    progress(layer, done, len(tasks))

        next_layer: List[ClusterDraft] = []
        for gidx, (sphere, drafts) in zip(groups, results):
            for i in gidx:
                current[i].parent_sphere = sphere
            next_layer.extend(drafts)
        all_clusters.extend(next_layer)
        current = next_layer
        layer += 1

    return _assemble(all_clusters, params)


def _assemble(drafts: List[ClusterDraft], params: BuildParams) -> Bundle:
    # Stable sort keeps build order within each layer.
    ordered = sorted(drafts, key=lambda d: d.layer)

    sets = [d.gaussians.astype(np.float32) for d in ordered]
    gaussians = GaussianSet.concatenate(sets)
    counts = np.array([len(d.gaussians) for d in ordered], dtype=np.int32)
    offsets = np.zeros(len(ordered), dtype=np.int64)
    np.cumsum(counts[:-1], out=offsets[1:])
    layers = np.array([d.layer for d in ordered], dtype=np.int32)

    own_centers = np.stack([d.own_sphere.center for d in ordered]).astype(np.float32)
    own_radii = np.array([d.own_sphere.radius for d in ordered], dtype=np.float32)
    parent_centers = np.empty((len(ordered), 3), dtype=np.float32)
    parent_radii = np.empty(len(ordered), dtype=np.float32)
    for i, d in enumerate(ordered):
        if d.parent_sphere is None:
            parent_centers[i] = d.own_sphere.center
            parent_radii[i] = np.inf
        else:
            parent_centers[i] = d.parent_sphere.center
            parent_radii[i] = d.parent_sphere.radius

    bundle = Bundle(
        params=params.bundle_params(),
        n_layers=int(layers.max()) + 1,
        gaussians=gaussians,
        layers=layers,
        offsets=offsets,
        counts=counts,
        own_centers=own_centers,
        own_radii=own_radii,
        parent_centers=parent_centers,
        parent_radii=parent_radii,
    )
    bundle.validate()
    return bundle
