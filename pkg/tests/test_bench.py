import csv

import numpy as np
import pytest

from helpers import shell_asset
from v3dg.bench import (
    CSV_COLUMNS,
    fixture_trajectory,
    gen_trajectory,
    run_bench,
    ssaa_reference,
)
from v3dg.build import BuildParams, build_bundle
from v3dg.io import write_bundle
from v3dg.model import GaussianSet, Instance, Scene
from v3dg.raster import render
from v3dg.select import LoadedScene, gather, select_vanilla


@pytest.fixture(scope="module")
def small_scene(tmp_path_factory):
    td = tmp_path_factory.mktemp("bench_scene")
    bundle = build_bundle(shell_asset(2048, 2), BuildParams(
        n_gaussians_per_cluster=256, simplify_iterations=0, seed=0))
    write_bundle(bundle, td / "a.bundle")
    instances = [Instance(asset="a", translation=np.array([dx * 4.0, 0.0, 0.0]))
                 for dx in (-1, 1)]
    return LoadedScene.load(Scene(assets={"a": str(td / "a.bundle")},
                                  instances=instances))


class TestTrajectory:
    def test_full_preset_has_400_cameras(self):
        cams = gen_trajectory(50.0)
        assert len(cams) == 400
        assert {tc.elevation for tc in cams} == {15.0, 30.0, 45.0, 60.0, 75.0}
        assert max(tc.elevation for tc in cams) == 75.0

    def test_rays_pass_through_origin(self):
        for tc in gen_trajectory(20.0, n_distances=3):
            eye = tc.camera.eye()
            fwd = tc.camera.forward()
            # distance from origin to the camera ray
            miss = np.linalg.norm(np.cross(fwd, -eye))
            assert miss < 1e-6

    def test_distances_evenly_spaced_within_extent(self):
        cams = gen_trajectory(10.0, elevations_deg=(30.0,), n_directions=1,
                              n_distances=4)
        dists = [np.linalg.norm(tc.camera.eye()) for tc in cams]
        assert np.allclose(dists, [2.5, 5.0, 7.5, 10.0])

    def test_extent_must_be_positive(self):
        with pytest.raises(ValueError):
            gen_trajectory(0.0)

    def test_fixture_preset_is_desk_scale(self):
        cams = fixture_trajectory(30.0)
        assert len(cams) == 5
        assert cams[0].camera.width == 480
        assert cams[0].camera.height == 270


class TestSsaaReference:
    def test_k1_equals_vanilla_render(self, small_scene):
        tc = fixture_trajectory(25.0, width=96, height=54, n_distances=2)[1]
        ref = ssaa_reference(small_scene, tc.camera, k=1)
        vanilla = render(gather(small_scene, select_vanilla(small_scene)), tc.camera)
        assert np.array_equal(ref.data, vanilla.data)

    def test_empty_scene_gives_transparent_target_resolution(self, tmp_path):
        loaded = LoadedScene.load(Scene(assets={}, instances=[]))
        tc = fixture_trajectory(10.0, width=64, height=36, n_distances=1)[0]
        ref = ssaa_reference(loaded, tc.camera, k=4)
        assert ref.data.shape == (36, 64, 4)
        assert np.all(ref.data == 0.0)

    def test_supersampling_reduces_aliasing_variance(self, tmp_path):
        # Dense grid of subpixel splats aliases at 1x; the SSAA reference of
        # the same scene must have strictly lower pixel variance.
        n = 40
        xs, ys = np.meshgrid(np.linspace(-1, 1, n), np.linspace(-1, 1, n))
        pos = np.stack([xs.ravel(), ys.ravel(), np.zeros(n * n)], axis=1)
        rng = np.random.default_rng(0)
        gs = GaussianSet(
            pos.astype(np.float32),
            np.full((n * n, 3), 0.008, np.float32),
            np.tile(np.array([1, 0, 0, 0], np.float32), (n * n, 1)),
            np.full(n * n, 0.9, np.float32),
            np.tile(np.array([1.0, 1.0, 1.0], np.float32), (n * n, 1)))
        bundle = build_bundle(gs, BuildParams(simplify_iterations=0, seed=0))
        write_bundle(bundle, tmp_path / "grid.bundle")
        loaded = LoadedScene.load(Scene(assets={"g": str(tmp_path / "grid.bundle")},
                                        instances=[Instance(asset="g")]))
        tc = fixture_trajectory(6.0, width=96, height=54, n_distances=2)[1]
        one_x = render(gather(loaded, select_vanilla(loaded)), tc.camera)
        ref = ssaa_reference(loaded, tc.camera, k=4)
        assert ref.alpha.var() < one_x.alpha.var()


class TestRunBench:
    def test_records_schema_and_row_count(self, small_scene, tmp_path):
        trajectory = fixture_trajectory(30.0, width=96, height=54, n_distances=2)
        taus = [512.0, 8192.0]
        out = tmp_path / "report.csv"
        records = run_bench(small_scene, taus, trajectory, csv_path=out, ssaa=2)
        assert len(records) == len(trajectory) * len(taus)
        with open(out) as fh:
            rows = list(csv.reader(fh))
        assert tuple(rows[0]) == CSV_COLUMNS
        assert len(rows) == 1 + len(records)

    def test_tau_zero_selects_everything(self, small_scene):
        trajectory = fixture_trajectory(30.0, width=96, height=54, n_distances=2)
        records = run_bench(small_scene, [0.0], trajectory, ssaa=1)
        for r in records:
            assert r.sel_count == r.vanilla_count
            assert r.percentage == pytest.approx(100.0)

    def test_percentage_nonincreasing_in_tau(self, small_scene):
        trajectory = fixture_trajectory(40.0, width=96, height=54, n_distances=2)
        taus = [512.0, 1024.0, 2048.0, 4096.0, 8192.0]
        records = run_bench(small_scene, taus, trajectory, ssaa=1)
        by_cam = {}
        for r in records:
            by_cam.setdefault((r.direction, r.elevation, r.distance), []).append(r)
        for rows in by_cam.values():
            percents = [r.percentage for r in sorted(rows, key=lambda r: r.tau)]
            assert percents == sorted(percents, reverse=True)

    def test_parallel_matches_sequential_counts(self, small_scene):
        trajectory = fixture_trajectory(30.0, width=96, height=54, n_distances=2)
        seq = run_bench(small_scene, [1024.0], trajectory, ssaa=1)
        par = run_bench(small_scene, [1024.0], trajectory, ssaa=1, parallel=True)
        assert [r.sel_count for r in seq] == [r.sel_count for r in par]
        assert [r.ours_psnr for r in seq] == [r.ours_psnr for r in par]
