"""Command-line entry point: build, render, bench, info, serve.

Flags mirror the build/selection knobs one-to-one with the basic defaults
(4096 Gaussians per cluster, groups of 2, 640 iterations, tolerance 2048).
Exit codes: 0 success, 1 runtime failure, 2 usage error. Output files are
written to a temp name and renamed on success.
"""

from __future__ import annotations

import sys
import time

import click
import numpy as np

from . import __version__
from .bench import fixture_trajectory, gen_trajectory, run_bench
from .build import SCALE_EXPANSION_DEFAULT, BuildParams, build_bundle
from .io import load_ply, load_scene, read_bundle, write_bundle
from .model import GaussianSet, look_at
from .raster import render, write_png
from .raster.pipeline import RenderOptions
from .select import (
    LoadedScene,
    Tolerance,
    gather,
    radius_clip_filter,
    select_scene,
    select_vanilla,
)

LAYER_PALETTE = np.array([
    [0.90, 0.10, 0.10], [0.10, 0.60, 0.90], [0.15, 0.80, 0.25],
    [0.95, 0.75, 0.10], [0.70, 0.25, 0.85], [0.95, 0.45, 0.10],
    [0.20, 0.85, 0.75], [0.90, 0.40, 0.60],
])


@click.group()
@click.version_option(__version__)
def cli():
    """Level-of-detail engine for composed 3D Gaussian scenes."""


@cli.command()
@click.argument("input_ply", type=click.Path(exists=True, dir_okay=False))
@click.argument("output_bundle", type=click.Path(dir_okay=False))
@click.option("--cluster-size", default=4096, show_default=True,
              help="Max Gaussians per cluster.")
@click.option("--group-size", default=2, show_default=True,
              help="Clusters per simplification group.")
@click.option("--iterations", default=640, show_default=True,
              help="Local-splatting optimization steps per group.")
@click.option("--scale-expansion", default=SCALE_EXPANSION_DEFAULT, show_default=True,
              help="Scale factor applied to downsampled Gaussians.")
@click.option("--seed", default=0, show_default=True)
@click.option("--threads", default=None, type=int,
              help="Worker cap (default: V3DG_THREADS or CPU count).")
@click.option("--quiet", is_flag=True, help="Suppress progress output.")
def build(input_ply, output_bundle, cluster_size, group_size, iterations,
          scale_expansion, seed, threads, quiet):
    """Build a multi-layer bundle from a 3DGS point-cloud PLY."""
    t0 = time.perf_counter()
    asset = load_ply(input_ply)
    params = BuildParams(
        n_gaussians_per_cluster=cluster_size, n_clusters_per_group=group_size,
        simplify_iterations=iterations, scale_expansion=scale_expansion, seed=seed)

    def progress(layer, done, total):
        if not quiet:
            click.echo(f"\rlayer {layer}: {done}/{total} groups", nl=False, err=True)
            if done == total:
                click.echo(err=True)

    bundle = build_bundle(asset, params, progress=progress, threads=threads)
    write_bundle(bundle, output_bundle)
    wall = time.perf_counter() - t0
    click.echo(f"built {output_bundle} in {wall:.1f}s "
               f"({len(asset)} Gaussians, {bundle.n_layers} layers)")
    for layer in range(bundle.n_layers):
        ids = bundle.layer_cluster_ids(layer)
        click.echo(f"  layer {layer}: {ids.size} clusters, "
                   f"{bundle.layer_gaussian_count(layer)} Gaussians")


def _parse_camera(spec, loaded: LoadedScene, width, height):
    lo, hi = loaded.bounds()
    center = (lo + hi) / 2.0
    extent = float(np.linalg.norm(hi - lo)) / 2.0 or 1.0
    if spec is None:
        eye = center + extent * 1.8 * np.array([0.0, -0.8, 0.45])
        target = center
    else:
        parts = spec.split(":")
        eye = np.array([float(v) for v in parts[0].split(",")])
        if eye.shape != (3,):
            raise click.UsageError("--camera needs 'ex,ey,ez[:tx,ty,tz]'")
        target = (np.array([float(v) for v in parts[1].split(",")])
                  if len(parts) > 1 else center)
    return look_at(eye=eye, target=target, up=(0, 0, 1), width=width, height=height,
                   fov_x=np.pi / 4)


def _render_scene(loaded, cam, mode, tau, clip, options):
    """Returns (image, stats dict). Shared by the render command and service."""
    t_sel = time.perf_counter()
    if mode == "vanilla":
        result = select_vanilla(loaded)
        gs = gather(loaded, result)
        layers = None
    elif mode == "radius-clip":
        result = select_vanilla(loaded)
        gs = radius_clip_filter(gather(loaded, result), cam, clip)
        layers = None
    elif mode == "layer-debug":
        result = select_scene(loaded, cam, tau)
        gs, layers = gather(loaded, result, with_layers=True)
    elif mode == "lod":
        result = select_scene(loaded, cam, tau)
        gs = gather(loaded, result)
        layers = None
    else:
        raise ValueError(f"unknown render mode {mode!r}")
    select_ms = (time.perf_counter() - t_sel) * 1e3

    if layers is not None and len(gs):
        gs = GaussianSet(gs.positions, gs.scales, gs.rotations, gs.opacities,
                         LAYER_PALETTE[layers % len(LAYER_PALETTE)], validate=False)
    t_r = time.perf_counter()
    img = render(gs, cam, options)
    render_ms = (time.perf_counter() - t_r) * 1e3

    selected = len(gs)
    resident = result.resident_count
    stats = {
        "selectedCount": selected,
        "residentCount": resident,
        "percentage": 100.0 * selected / resident if resident else 0.0,
        "selectMs": select_ms,
        "renderMs": render_ms,
        "tau": tau,
        "mode": mode,
    }
    return img, stats


@cli.command("render")
@click.argument("scene_json", type=click.Path(exists=True, dir_okay=False))
@click.argument("output_png", type=click.Path(dir_okay=False))
@click.option("--tau", default=2048.0, show_default=True, help="Footprint tolerance (px^2).")
@click.option("--camera", default=None, help="'ex,ey,ez[:tx,ty,tz]' (default: framed view).")
@click.option("--width", default=480, show_default=True)
@click.option("--height", default=270, show_default=True)
@click.option("--mode", default="lod", show_default=True,
              type=click.Choice(["lod", "vanilla", "radius-clip", "layer-debug"]))
@click.option("--clip", default=2.0, show_default=True,
              help="Screen-space radius threshold for --mode radius-clip.")
@click.option("--threads", default=None, type=int)
def render_cmd(scene_json, output_png, tau, camera, width, height, mode, clip, threads):
    """Select and rasterize one frame of a composed scene."""
    Tolerance(tau)
    loaded = LoadedScene.load(load_scene(scene_json))
    cam = _parse_camera(camera, loaded, width, height)
    options = RenderOptions(threads=threads)
    img, stats = _render_scene(loaded, cam, mode, tau, clip, options)
    write_png(img, output_png)
    click.echo(
        f"selected={stats['selectedCount']} ({stats['percentage']:.2f}%) "
        f"select={stats['selectMs']:.1f}ms render={stats['renderMs']:.1f}ms",
        err=True)


@cli.command()
@click.argument("scene_json", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "csv_out", required=True, type=click.Path(dir_okay=False),
              help="CSV report path.")
@click.option("--taus", default="512,1024,2048,4096,8192", show_default=True)
@click.option("--extent", default=None, type=float,
              help="Scene extent for camera spacing (default: from bounds).")
@click.option("--preset", default="fixture", show_default=True,
              type=click.Choice(["fixture", "full"]))
@click.option("--distances", default=5, show_default=True,
              help="Radii per direction (fixture preset).")
@click.option("--ssaa", default=4, show_default=True)
@click.option("--parallel", is_flag=True,
              help="Render cameras concurrently (degrades timing fidelity).")
@click.option("--threads", default=None, type=int)
def bench(scene_json, csv_out, taus, extent, preset, distances, ssaa, parallel, threads):
    """Run the trajectory benchmark and write a CSV report."""
    tau_list = [float(v) for v in taus.split(",") if v]
    for tau in tau_list:
        Tolerance(tau)
    loaded = LoadedScene.load(load_scene(scene_json))
    if extent is None:
        lo, hi = loaded.bounds()
        extent = float(np.linalg.norm(hi - lo)) * 1.5 or 10.0
    if preset == "full":
        trajectory = gen_trajectory(extent)
    else:
        trajectory = fixture_trajectory(extent, n_distances=distances)
    options = RenderOptions(threads=threads)

    def progress(done, total):
        click.echo(f"\rcamera {done}/{total}", nl=False, err=True)
        if done == total:
            click.echo(err=True)

    records = run_bench(loaded, tau_list, trajectory, csv_path=csv_out, ssaa=ssaa,
                        options=options, parallel=parallel, progress=progress)
    click.echo(f"wrote {len(records)} records to {csv_out}")


@cli.command()
@click.argument("bundle_path", type=click.Path(exists=True, dir_okay=False))
def info(bundle_path):
    """Print bundle structure and re-verify every invariant."""
    bundle = read_bundle(bundle_path)  # read_bundle validates; corruption raises
    p = bundle.params
    click.echo(f"bundle {bundle_path}")
    click.echo(f"  version {bundle.version}, seed {p.seed}, "
               f"{p.n_gaussians_per_cluster}x{p.n_clusters_per_group}, "
               f"{p.simplify_iterations} iterations")
    click.echo(f"  {bundle.n_layers} layers, {bundle.n_clusters} clusters, "
               f"{len(bundle.gaussians)} Gaussians")
    for layer in range(bundle.n_layers):
        ids = bundle.layer_cluster_ids(layer)
        radii = bundle.own_radii[ids]
        click.echo(f"  layer {layer}: {ids.size:5d} clusters "
                   f"{bundle.layer_gaussian_count(layer):9d} Gaussians "
                   f"own-radius [{radii.min():.4g}, {radii.max():.4g}]")
    click.echo("all invariants hold")


@cli.command()
@click.argument("scene_json", type=click.Path(exists=True, dir_okay=False))
@click.option("--port", default=8731, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--width", default=480, show_default=True)
@click.option("--height", default=270, show_default=True)
def serve(scene_json, port, host, width, height):
    """Host the interactive viewer service (WebSocket + static UI)."""
    import uvicorn

    from .service import create_app

    loaded = LoadedScene.load(load_scene(scene_json))
    app = create_app(loaded, default_resolution=(width, height))
    click.echo(f"serving on http://{host}:{port}")
    uvicorn.run(app, host=host, port=port, log_level="warning")


def main():
    try:
        cli.main(standalone_mode=False)
    except click.exceptions.Exit as exc:
        sys.exit(exc.exit_code)
    except click.UsageError as exc:
        exc.show()
        sys.exit(2)
    except click.ClickException as exc:
        exc.show()
        sys.exit(1)
    except KeyboardInterrupt:
        sys.exit(1)
    except Exception as exc:  # runtime failures map to exit 1 with a message
        print(f"error: {exc}", file=sys.stderr)
        sys.exit(1)


if __name__ == "__main__":
    main()
