import numpy as np
import pytest

from helpers import random_set
from v3dg.diffsplat import (
    OptimizerState,
    loss,
    loss_and_grad,
    optimize_group,
    sample_pseudo_views,
)
from v3dg.model import BoundingSphere, Camera, GaussianSet, look_at
from v3dg.raster.image import ImageRGBA
from v3dg.raster.pipeline import (
    GaussianGrads,
    RenderOptions,
    render_backward,
    render_with_aux,
)

SMOOTH = RenderOptions(threads=1).smooth()


class TestPseudoViews:
    def test_single_view_distance_and_aim(self):
        sphere = BoundingSphere(np.array([1.0, -2.0, 0.5]), 0.8)
        (cam,) = sample_pseudo_views(sphere, 1, seed=3)
        eye = cam.eye()
        assert np.linalg.norm(eye - sphere.center) == pytest.approx(4 * 0.8, abs=1e-9)
        to_center = sphere.center - eye
        to_center /= np.linalg.norm(to_center)
        assert np.abs(cam.forward() - to_center).max() < 1e-9
        assert cam.width == cam.height == 64
        assert cam.fx == cam.fy == pytest.approx(115.2)

    def test_directions_are_uniform(self):
        sphere = BoundingSphere(np.zeros(3), 1.0)
        views = sample_pseudo_views(sphere, 10_000, seed=0)
        dirs = np.stack([v.eye() / 4.0 for v in views])
        assert np.linalg.norm(dirs.mean(axis=0)) < 0.05

    def test_640_distinct_views_at_distance(self):
        sphere = BoundingSphere(np.zeros(3), 2.0)
        views = sample_pseudo_views(sphere, 640, seed=7)
        assert len(views) == 640
        eyes = np.stack([v.eye() for v in views])
        assert np.unique(eyes, axis=0).shape[0] == 640
        assert np.allclose(np.linalg.norm(eyes, axis=1), 8.0)

    def test_reproducible_for_fixed_seed(self):
        sphere = BoundingSphere(np.zeros(3), 1.0)
        a = sample_pseudo_views(sphere, 5, seed=11)
        b = sample_pseudo_views(sphere, 5, seed=11)
        for ca, cb in zip(a, b):
            assert np.array_equal(ca.rotation, cb.rotation)
            assert np.array_equal(ca.translation, cb.translation)

    def test_zero_radius_rejected(self):
        with pytest.raises(ValueError):
            sample_pseudo_views(BoundingSphere(np.zeros(3), 0.0), 1, seed=0)


class TestLoss:
    def test_identical_images_zero(self):
        img = ImageRGBA(np.random.default_rng(0).uniform(0, 1, (64, 64, 4)))
        assert loss(img, img) == 0.0

    def test_alpha_offset_weighted(self):
        a = np.zeros((64, 64, 4))
        b = a.copy()
        b[:, :, 3] = 0.5
        assert loss(ImageRGBA(a), ImageRGBA(b)) == pytest.approx(0.05, abs=1e-12)

    def test_matches_scalar_recomputation(self):
        rng = np.random.default_rng(1)
        a = ImageRGBA(rng.uniform(0, 1, (64, 64, 4)))
        b = ImageRGBA(rng.uniform(0, 1, (64, 64, 4)))
        total_rgb = 0.0
        total_a = 0.0
        for y in range(64):
            for x in range(64):
                for c in range(3):
                    total_rgb += abs(a.data[y, x, c] - b.data[y, x, c])
                total_a += abs(a.data[y, x, 3] - b.data[y, x, 3])
        expect = total_rgb / (64 * 64 * 3) + 0.1 * total_a / (64 * 64)
        assert loss(a, b) == pytest.approx(expect, abs=1e-9)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError):
            loss(ImageRGBA(np.zeros((64, 64, 4))), ImageRGBA(np.zeros((32, 32, 4))))


class TestBackward:
    def test_zero_grad_image_gives_zero_grads(self):
        gs = random_set(6, 2)
        cam = look_at(eye=(0, -2, 0), target=(0, 0, 0), width=64, height=64, fx=115.2)
        g = render_backward(gs, cam, np.zeros((64, 64, 4)))
        for f in ("position", "scale", "rotation", "opacity", "color"):
            assert np.all(getattr(g, f) == 0.0)

    def test_opacity_gradient_is_one_at_own_mean_pixel(self):
        cam = Camera(np.eye(3), np.zeros(3), 65, 65, 100.0, 100.0)
        gs = GaussianSet(
            np.array([[0.0, 0.0, 2.0]]), np.full((1, 3), 0.05),
            np.array([[1.0, 0.0, 0.0, 0.0]]), np.array([0.4]),
            np.array([[0.5, 0.5, 0.5]]))
        grad_img = np.zeros((65, 65, 4))
        grad_img[32, 32, 3] = 1.0  # loss = alpha at the splat's mean pixel
        g = render_backward(gs, cam, grad_img)
        assert g.opacity[0] == pytest.approx(1.0, abs=1e-12)

    def test_culled_gaussians_get_zero_gradients(self):
        gs = random_set(4, 3)
        gs.positions[2] = (0.0, -5.0, 0.0)  # behind a camera at y=-2 looking at +y
        cam = look_at(eye=(0, -2, 0), target=(0, 0, 0), width=64, height=64, fx=115.2)
        w = np.random.default_rng(0).uniform(-1, 1, (64, 64, 4))
        g = render_backward(gs, cam, w)
        behind = gs.positions @ cam.rotation[2] + cam.translation[2] <= 0.01
        assert behind[2]
        for f in ("position", "scale", "rotation", "opacity", "color"):
            assert np.all(getattr(g, f)[behind] == 0.0)

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(17)
        gs = random_set(3, 18)
        cam = look_at(eye=(0.2, -2.2, 0.4), target=(0, 0, 0), width=48, height=48, fx=90.0)
        w = rng.uniform(-1, 1, (48, 48, 4))

        def total(gsx):
            img, _ = render_with_aux(gsx, cam, SMOOTH)
            return float(np.sum(w * img.data))

        _, aux = render_with_aux(gs, cam, SMOOTH)
        g = render_backward(gs, cam, w, aux=aux)
        h = 1e-4
        for field, arr in (("position", gs.positions), ("scale", gs.scales),
                           ("rotation", gs.rotations), ("opacity", gs.opacities),
                           ("color", gs.colors)):
            analytic = getattr(g, {"position": "position", "scale": "scale",
                                   "rotation": "rotation", "opacity": "opacity",
                                   "color": "color"}[field])
            for ix in np.ndindex(arr.shape):
                orig = arr[ix]
                arr[ix] = orig + h
                lp = total(gs)
                arr[ix] = orig - h
                lm = total(gs)
                arr[ix] = orig
                num = (lp - lm) / (2 * h)
                assert abs(analytic[ix] - num) <= 1e-3 * max(abs(num), 1e-3)


class TestAdam:
    def test_moments_track_standard_formulas(self):
        state = OptimizerState(learning_rates={"w": 0.1})
        p = {"w": np.array([1.0, 2.0])}
        g = {"w": np.array([0.5, -0.5])}
        state.step(p, g)
        m_hat = 0.1 * g["w"] / 0.1  # (1-b1)g / (1-b1^1)
        v_hat = 0.001 * g["w"] ** 2 / 0.001
        expect = np.array([1.0, 2.0]) - 0.1 * m_hat / (np.sqrt(v_hat) + 1e-15)
        assert np.allclose(p["w"], expect, atol=1e-12)
        assert state.step_count == 1


class TestOptimizeGroup:
    def _fixture(self):
        original = random_set(64, 30, spread=0.4).astype(np.float64)
        from v3dg.build import downsample_half

        init = downsample_half(original)
        sphere = BoundingSphere(np.zeros(3), 1.0)
        return original, init, sphere

    def test_zero_iterations_returns_init_bitwise(self):
        original, init, sphere = self._fixture()
        out = optimize_group(original, init, 0, seed=0, sphere=sphere)
        assert out.equals(init)
        assert out is not init

    def test_heldout_loss_improves_after_optimization(self):
        original, init, sphere = self._fixture()
        out = optimize_group(original, init, 640, seed=5, sphere=sphere,
                             options=RenderOptions(threads=1))
        heldout = sample_pseudo_views(sphere, 32, seed=999)

        def mean_loss(simplified):
            vals = []
            for cam in heldout:
                target, _ = render_with_aux(original, cam)
                got, _ = render_with_aux(simplified, cam)
                vals.append(loss(got, target))
            return float(np.mean(vals))

        assert mean_loss(out) < mean_loss(init)

    def test_count_conserved_and_parameters_valid(self):
        original, init, sphere = self._fixture()
        out = optimize_group(original, init, 25, seed=1, sphere=sphere,
                             options=RenderOptions(threads=1))
        assert len(out) == len(init)
        out.validate()
        assert np.all(out.opacities >= 1e-4) and np.all(out.opacities <= 1 - 1e-4)
        assert np.all(out.scales >= 1e-7)
        assert np.allclose(np.linalg.norm(out.rotations, axis=1), 1.0, atol=1e-9)

    def test_deterministic_given_seed(self):
        original, init, sphere = self._fixture()
        a = optimize_group(original, init, 12, seed=9, sphere=sphere,
                           options=RenderOptions(threads=1))
        b = optimize_group(original, init, 12, seed=9, sphere=sphere,
                           options=RenderOptions(threads=1))
        assert a.equals(b)

    def test_progress_reduces_training_loss(self):
        # Training-view loss after many steps beats the first-step loss.
        original, init, sphere = self._fixture()
        cams = sample_pseudo_views(sphere, 1, seed=4)
        before = None
        out = optimize_group(original, init, 200, seed=4, sphere=sphere,
                             options=RenderOptions(threads=1))
        target, _ = render_with_aux(original, cams[0])
        init_img, _ = render_with_aux(init, cams[0])
        out_img, _ = render_with_aux(out, cams[0])
        assert loss(out_img, target) < loss(init_img, target)


class TestGrads:
    def test_zeros_constructor_shapes(self):
        g = GaussianGrads.zeros(5)
        assert g.position.shape == (5, 3)
        assert g.rotation.shape == (5, 4)
        assert g.opacity.shape == (5,)
