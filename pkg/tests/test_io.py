import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import random_set
from v3dg.build import BuildParams, build_bundle
from v3dg.io import (
    BundleCorruptionError,
    BundleError,
    BundleFormatError,
    PlyDataError,
    PlyFormatError,
    SceneReferenceError,
    SceneValidationError,
    bundle_file_size,
    load_ply,
    load_scene,
    read_bundle,
    write_bundle,
    write_ply,
    write_scene,
)
from v3dg.model import Instance, Scene


def _tiny_bundle(n=200, seed=0, npc=16):
    asset = random_set(n, seed, dtype=np.float32)
    return build_bundle(asset, BuildParams(
        n_gaussians_per_cluster=npc, n_clusters_per_group=2,
        simplify_iterations=0, seed=seed))


class TestPly:
    def test_roundtrip_within_tolerance(self, tmp_path):
        gs = random_set(10, 1, dtype=np.float32)
        path = tmp_path / "a.ply"
        write_ply(gs, path)
        back = load_ply(path)
        assert np.allclose(back.positions, gs.positions, atol=1e-6)
        assert np.allclose(back.scales, gs.scales, rtol=1e-5)
        assert np.allclose(back.opacities, gs.opacities, atol=1e-6)
        assert np.allclose(back.colors, gs.colors, atol=1e-6)
        # Quaternions may flip sign only if written that way; here they round-trip.
        assert np.allclose(back.rotations, gs.rotations, atol=1e-6)

    def test_zero_raw_opacity_activates_to_half(self, tmp_path):
        gs = random_set(4, 2, dtype=np.float32)
        gs.opacities[:] = 0.5  # logit(0.5) == 0 raw
        path = tmp_path / "b.ply"
        write_ply(gs, path)
        assert np.allclose(load_ply(path).opacities, 0.5, atol=1e-7)

    def test_zero_dc_coefficients_give_mid_gray(self, tmp_path):
        gs = random_set(4, 3, dtype=np.float32)
        gs.colors[:] = 0.5  # f_dc == 0 raw
        path = tmp_path / "c.ply"
        write_ply(gs, path)
        assert np.allclose(load_ply(path).colors, 0.5, atol=1e-7)

    def test_missing_property_named_in_error(self, tmp_path):
        path = tmp_path / "bad.ply"
        header = (
            "ply\nformat binary_little_endian 1.0\nelement vertex 1\n"
            "property float x\nproperty float y\nproperty float z\nend_header\n"
        )
        path.write_bytes(header.encode() + b"\x00" * 12)
        with pytest.raises(PlyFormatError, match="f_dc_0"):
            load_ply(path)

    def test_nonfinite_after_activation_reports_row(self, tmp_path):
        gs = random_set(6, 4, dtype=np.float32)
        path = tmp_path / "nan.ply"
        write_ply(gs, path)
        raw = bytearray(path.read_bytes())
        # Poison one float in the vertex payload with NaN.
        offset = raw.index(b"end_header\n") + len(b"end_header\n")
        raw[offset : offset + 4] = np.float32("nan").tobytes()
        path.write_bytes(bytes(raw))
        with pytest.raises(PlyDataError, match="row 0"):
            load_ply(path)

    def test_ascii_ply_rejected(self, tmp_path):
        path = tmp_path / "ascii.ply"
        path.write_bytes(b"ply\nformat ascii 1.0\nelement vertex 0\nend_header\n")
        with pytest.raises(PlyFormatError):
            load_ply(path)


class TestBundle:
    def test_roundtrip_bitwise(self, tmp_path):
        bundle = _tiny_bundle()
        assert bundle.n_layers >= 3
        path = tmp_path / "a.bundle"
        write_bundle(bundle, path)
        back = read_bundle(path)
        assert back.equals(bundle)

    def test_corrupt_header_byte_is_error_not_crash(self, tmp_path):
        bundle = _tiny_bundle()
        path = tmp_path / "b.bundle"
        write_bundle(bundle, path)
        raw = bytearray(path.read_bytes())
        raw[30] ^= 0xFF  # high byte of the layer count
        path.write_bytes(bytes(raw))
        with pytest.raises(BundleError):
            read_bundle(path)

    def test_bad_magic_is_format_error(self, tmp_path):
        bundle = _tiny_bundle()
        path = tmp_path / "c.bundle"
        write_bundle(bundle, path)
        raw = bytearray(path.read_bytes())
        raw[0] ^= 0xFF
        path.write_bytes(bytes(raw))
        with pytest.raises(BundleFormatError):
            read_bundle(path)

    def test_truncated_file_is_io_error(self, tmp_path):
        bundle = _tiny_bundle()
        path = tmp_path / "d.bundle"
        write_bundle(bundle, path)
        path.write_bytes(path.read_bytes()[:-40])
        with pytest.raises(BundleError):
            read_bundle(path)

    def test_corrupt_sphere_is_corruption_error(self, tmp_path):
        bundle = _tiny_bundle()
        path = tmp_path / "e.bundle"
        write_bundle(bundle, path)
        raw = bytearray(path.read_bytes())
        # First cluster row: own_radius sits after layer+offset+count+center.
        off = 44 + 4 + 8 + 4 + 12
        raw[off : off + 4] = np.float32(123.0).tobytes()
        path.write_bytes(bytes(raw))
        with pytest.raises(BundleCorruptionError):
            read_bundle(path)

    def test_file_size_formula(self, tmp_path):
        asset = random_set(4096, 9, dtype=np.float32)
        bundle = build_bundle(asset, BuildParams(
            n_gaussians_per_cluster=512, n_clusters_per_group=2,
            simplify_iterations=0, seed=1))
        path = tmp_path / "f.bundle"
        write_bundle(bundle, path)
        n = len(bundle.gaussians)
        expected = bundle_file_size(n, bundle.n_clusters)
        assert path.stat().st_size == expected
        # 14 float32 fields dominate: 56 bytes per Gaussian plus table overhead.
        assert expected == 44 + 48 * bundle.n_clusters + 56 * n

    @settings(max_examples=12, deadline=None)
    @given(st.integers(2, 60), st.integers(0, 2**31 - 1))
    def test_serialization_bijection(self, n, seed):
        import tempfile
        from pathlib import Path

        bundle = build_bundle(
            random_set(n, seed, dtype=np.float32),
            BuildParams(n_gaussians_per_cluster=8, n_clusters_per_group=2,
                        simplify_iterations=0, seed=seed))
        with tempfile.TemporaryDirectory() as td:
            path = Path(td) / "x.bundle"
            write_bundle(bundle, path)
            assert read_bundle(path).equals(bundle)


class TestScene:
    def test_minimal_defaults(self, tmp_path):
        bundle_path = tmp_path / "a.bundle"
        write_bundle(_tiny_bundle(), bundle_path)
        scene_path = tmp_path / "scene.json"
        scene_path.write_text(
            '{"assets": {"a": "a.bundle"}, "instances": [{"asset": "a"}]}')
        scene = load_scene(scene_path)
        assert len(scene.instances) == 1
        inst = scene.instances[0]
        assert np.array_equal(inst.translation, np.zeros(3))
        assert np.array_equal(inst.rotation, [1.0, 0.0, 0.0, 0.0])
        assert inst.uniform_scale == 1.0

    def test_grid_roundtrip_matches_generator(self, tmp_path):
        rng = np.random.default_rng(5)
        instances = []
        for i in range(400):
            x, y = divmod(i, 20)
            instances.append(Instance(
                asset="a", translation=np.array([x * 2.0, y * 2.0, 0.0]),
                rotation=np.array([np.cos(i / 7), 0, 0, np.sin(i / 7)]) /
                np.linalg.norm([np.cos(i / 7), 0, 0, np.sin(i / 7)]),
                uniform_scale=float(rng.uniform(0.5, 2.0))))
        scene = Scene(assets={"a": str(tmp_path / "a.bundle")}, instances=instances)
        path = tmp_path / "grid.json"
        write_scene(scene, path)
        back = load_scene(path)
        assert len(back.instances) == 400
        for got, want in zip(back.instances, instances):
            assert np.allclose(got.translation, want.translation)
            assert np.allclose(got.rotation, want.rotation, atol=1e-12)
            assert got.uniform_scale == pytest.approx(want.uniform_scale)

    def test_unknown_asset_is_reference_error(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"assets": {"a": "a.bundle"}, "instances": [{"asset": "ghost"}]}')
        with pytest.raises(SceneReferenceError, match="ghost"):
            load_scene(path)

    def test_nonpositive_scale_rejected(self, tmp_path):
        path = tmp_path / "bad2.json"
        path.write_text(
            '{"assets": {"a": "a.bundle"}, "instances": [{"asset": "a", "scale": 0}]}')
        with pytest.raises(SceneValidationError):
            load_scene(path)
