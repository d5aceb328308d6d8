"""Evaluation harness: orbiting camera trajectories, supersampled reference
images, per-distance selection/timing/quality records, CSV reports.

Cameras sit on four orthogonal xy-plane directions at five elevation angles,
evenly spaced over the scene extent, all looking at the origin. References
come from rendering the full scene at k-times resolution and box-downsampling
(SSAA); both the LOD render and the vanilla render are scored against them.
"""

from __future__ import annotations

import csv
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .model import Camera, look_at
from .raster.image import ImageRGBA, downsample_box, psnr
from .raster.pipeline import DEFAULT_OPTIONS, RenderOptions, render
from .select import LoadedScene, gather, select_scene, select_vanilla

FULL_ELEVATIONS_DEG = (15.0, 30.0, 45.0, 60.0, 75.0)


@dataclass(frozen=True)
class TrajectoryCamera:
    camera: Camera
    direction: int
    elevation: float
    distance_index: int
    distance: float


def gen_trajectory(scene_extent: float,
                   elevations_deg: Sequence[float] = FULL_ELEVATIONS_DEG,
                   n_directions: int = 4,
                   n_distances: int = 20,
                   width: int = 1920,
                   height: int = 1080,
                   fov_x: float = np.pi / 4) -> List[TrajectoryCamera]:
    """Evaluation cameras: n_directions x len(elevations) x n_distances,
    evenly spaced within the scene extent, all aimed at the origin."""
    if scene_extent <= 0:
        raise ValueError("scene_extent must be positive")
    out: List[TrajectoryCamera] = []
    for d in range(n_directions):
        phi = 2.0 * np.pi * d / n_directions
        planar = np.array([np.cos(phi), np.sin(phi), 0.0])
        for elev in elevations_deg:
            theta = np.deg2rad(elev)
            direction = np.cos(theta) * planar + np.sin(theta) * np.array([0.0, 0.0, 1.0])
            for k in range(n_distances):
                dist = scene_extent * (k + 1) / n_distances
                cam = look_at(eye=dist * direction, target=(0.0, 0.0, 0.0),
                              up=(0.0, 0.0, 1.0), width=width, height=height,
                              fov_x=fov_x)
                out.append(TrajectoryCamera(cam, d, float(elev), k, float(dist)))
    return out


def fixture_trajectory(scene_extent: float, width: int = 480, height: int = 270,
                       n_distances: int = 5) -> List[TrajectoryCamera]:
    """Desk-scale preset: one direction, one elevation, few radii, small frame."""
    return gen_trajectory(scene_extent, elevations_deg=(30.0,), n_directions=1,
                          n_distances=n_distances, width=width, height=height)


def ssaa_reference(loaded: LoadedScene, cam: Camera, k: int = 4,
                   options: RenderOptions = DEFAULT_OPTIONS) -> ImageRGBA:
    """Anti-aliased reference: full (vanilla) scene rendered at k x resolution,
    then box-downsampled back."""
    if k < 1:
        raise ValueError("supersampling factor must be >= 1")
    full = gather(loaded, select_vanilla(loaded))
    img = render(full, cam.scaled(k), options)
    return downsample_box(img, k)


@dataclass
class BenchRecord:
    direction: int
    elevation: float
    distance: int
    tau: float
    sel_count: int
    vanilla_count: int
    percentage: float
    ours_ms: float
    vanilla_ms: float
    ours_psnr: float
    vanilla_psnr: float


CSV_COLUMNS = ("direction", "elevation", "distance", "tau", "sel_count",
               "vanilla_count", "percentage", "ours_ms", "vanilla_ms",
               "ours_psnr", "vanilla_psnr")


def _time_lod(loaded, cam, tau, options) -> Tuple[float, int, ImageRGBA]:
    t0 = time.perf_counter()
    result = select_scene(loaded, cam, tau)
    gs = gather(loaded, result)
    img = render(gs, cam, options)
    ms = (time.perf_counter() - t0) * 1e3
    return ms, result.selected_count, img


def _time_vanilla(loaded, cam, options) -> Tuple[float, int, ImageRGBA]:
    t0 = time.perf_counter()
    result = select_vanilla(loaded)
    gs = gather(loaded, result)
    img = render(gs, cam, options)
    ms = (time.perf_counter() - t0) * 1e3
    return ms, result.selected_count, img


def run_bench(loaded: LoadedScene, taus: Sequence[float],
              trajectory: Sequence[TrajectoryCamera],
              csv_path: Optional[os.PathLike] = None,
              ssaa: int = 4,
              options: RenderOptions = DEFAULT_OPTIONS,
              parallel: bool = False,
              progress=None) -> List[BenchRecord]:
    """One record per camera per tolerance. Sequential by default for stable
    timing; `parallel` renders cameras concurrently (quality-only runs)."""

    def bench_camera(tc: TrajectoryCamera) -> List[BenchRecord]:
        ref = ssaa_reference(loaded, tc.camera, ssaa, options)
        vanilla_ms, vanilla_count, vanilla_img = _time_vanilla(loaded, tc.camera, options)
        vanilla_psnr = psnr(vanilla_img, ref)
        rows = []
        for tau in taus:
            ours_ms, sel_count, ours_img = _time_lod(loaded, tc.camera, tau, options)
            rows.append(BenchRecord(
                direction=tc.direction, elevation=tc.elevation,
                distance=tc.distance_index, tau=float(tau),
                sel_count=sel_count, vanilla_count=vanilla_count,
                percentage=100.0 * sel_count / vanilla_count if vanilla_count else 0.0,
                ours_ms=ours_ms, vanilla_ms=vanilla_ms,
                ours_psnr=psnr(ours_img, ref), vanilla_psnr=vanilla_psnr,
            ))
        return rows

    records: List[BenchRecord] = []
    if parallel:
        with ThreadPoolExecutor() as pool:
            for i, rows in enumerate(pool.map(bench_camera, trajectory), 1):
                records.extend(rows)
                if progress:
                    progress(i, len(trajectory))
    else:
        for i, tc in enumerate(trajectory, 1):
            records.extend(bench_camera(tc))
            if progress:
                progress(i, len(trajectory))

    if csv_path is not None:
        write_csv(records, csv_path)
    return records


def write_csv(records: Sequence[BenchRecord], path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in records:
            writer.writerow([getattr(r, c) for c in CSV_COLUMNS])
    os.replace(tmp, path)
