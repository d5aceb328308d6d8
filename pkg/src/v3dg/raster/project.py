"""EWA projection of 3D Gaussians to screen space, forward and backward.

The 2D covariance is J W Sigma W^T J^T with Sigma = R diag(s^2) R^T, W the
world-to-camera rotation and J the affine Jacobian of the pinhole projection
at the camera-space mean. No 2D dilation is added (eps2d = 0), so projected
covariances reflect true 3D occupancy.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..model import Camera, Gaussian3D, GaussianSet

NEAR_PLANE = 0.01
DET_FLOOR = 1e-12


@dataclass
class Splat2D:
    """A projected Gaussian: pixel-space mean, 2x2 covariance, camera depth."""

    mean2d: np.ndarray
    cov2d: np.ndarray
    depth: float
    color: np.ndarray
    opacity: float


@dataclass
class ProjectedSplats:
    """Columnar projection results for the surviving (uncalled) subset.

    `indices` maps each row back to the source GaussianSet. `cov2d` and
    `conic` store the symmetric 2x2 matrices as (a, b, c) triples.
    """

    indices: np.ndarray
    cam_pos: np.ndarray
    depth: np.ndarray
    mean2d: np.ndarray
    cov2d: np.ndarray
    conic: np.ndarray
    radius: np.ndarray

    def __len__(self) -> int:
        return self.indices.shape[0]


def project_set(gs: GaussianSet, cam: Camera, near_plane: float = NEAR_PLANE,
                det_floor: float = DET_FLOOR, sigma_extent: float = 3.0) -> ProjectedSplats:
    """Project every Gaussian, dropping those behind the near plane or with a
    degenerate 2D covariance. Survivors keep their input order."""
    n = len(gs)
    pos = gs.positions.astype(np.float64)
    p_cam = pos @ cam.rotation.T + cam.translation
    depth = p_cam[:, 2]
    alive = depth > near_plane
    if not np.any(alive):
        return _empty_projection()

    idx = np.nonzero(alive)[0]
    p_cam = p_cam[idx]
    depth = depth[idx]
    x, y, z = p_cam[:, 0], p_cam[:, 1], p_cam[:, 2]
    mean2d = np.stack([cam.fx * x / z + cam.cx, cam.fy * y / z + cam.cy], axis=1)

    q = gs.rotations[idx].astype(np.float64)
    q = q / np.linalg.norm(q, axis=1, keepdims=True)
    from ..model import quat_to_matrix

    rot = quat_to_matrix(q)
    m = rot * gs.scales[idx].astype(np.float64)[:, None, :]
    sigma3 = m @ m.transpose(0, 2, 1)
    sigma_cam = cam.rotation @ sigma3 @ cam.rotation.T

    # cov2d = J S J^T with the sparse pinhole Jacobian rows
    # (fx/z, 0, -fx x/z^2) and (0, fy/z, -fy y/z^2).
    fxz = cam.fx / z
    fyz = cam.fy / z
    jx = -cam.fx * x / (z * z)
    jy = -cam.fy * y / (z * z)
    s00, s01, s02 = sigma_cam[:, 0, 0], sigma_cam[:, 0, 1], sigma_cam[:, 0, 2]
    s11, s12, s22 = sigma_cam[:, 1, 1], sigma_cam[:, 1, 2], sigma_cam[:, 2, 2]
    t00 = fxz * s00 + jx * s02
    t01 = fxz * s01 + jx * s12
    t02 = fxz * s02 + jx * s22
    t11 = fyz * s11 + jy * s12
    t12 = fyz * s12 + jy * s22
    a = t00 * fxz + t02 * jx
    b = t01 * fyz + t02 * jy
    c = t11 * fyz + t12 * jy
    det = a * c - b * b
    ok = det > det_floor
    if not np.any(ok):
        return _empty_projection()

    idx, p_cam, depth, mean2d = idx[ok], p_cam[ok], depth[ok], mean2d[ok]
    a, b, c, det = a[ok], b[ok], c[ok], det[ok]
    cov2d = np.stack([a, b, c], axis=1)
    conic = np.stack([c / det, -b / det, a / det], axis=1)
    mid = 0.5 * (a + c)
    lam_max = mid + np.sqrt(np.maximum((0.5 * (a - c)) ** 2 + b * b, 0.0))
    radius = sigma_extent * np.sqrt(np.maximum(lam_max, 0.0))
    return ProjectedSplats(
        indices=idx.astype(np.int64), cam_pos=p_cam, depth=depth,
        mean2d=mean2d, cov2d=cov2d, conic=conic, radius=radius,
    )


def _empty_projection() -> ProjectedSplats:
    return ProjectedSplats(
        indices=np.empty(0, np.int64), cam_pos=np.empty((0, 3)), depth=np.empty(0),
        mean2d=np.empty((0, 2)), cov2d=np.empty((0, 3)), conic=np.empty((0, 3)),
        radius=np.empty(0),
    )


def project(g: Gaussian3D, cam: Camera, near_plane: float = NEAR_PLANE,
            det_floor: float = DET_FLOOR) -> Optional[Splat2D]:
    """Project a single Gaussian; returns None when culled."""
    gs = GaussianSet(
        g.position[None], g.scale[None], g.rotation[None],
        np.array([g.opacity]), g.color[None], validate=False,
    )
    ps = project_set(gs, cam, near_plane=near_plane, det_floor=det_floor)
    if len(ps) == 0:
        return None
    a, b, c = ps.cov2d[0]
    return Splat2D(
        mean2d=ps.mean2d[0], cov2d=np.array([[a, b], [b, c]]),
        depth=float(ps.depth[0]), color=np.asarray(g.color, dtype=np.float64),
        opacity=float(g.opacity),
    )


# Derivatives of the quaternion-to-matrix map, evaluated at the unit
# quaternion (w, x, y, z); rows follow quat_to_matrix.
def _rotmat_quat_derivs(q: np.ndarray):
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    zero = np.zeros_like(w)
    dw = 2.0 * np.stack([
        np.stack([zero, -z, y], axis=-1),
        np.stack([z, zero, -x], axis=-1),
        np.stack([-y, x, zero], axis=-1),
    ], axis=-2)
    dx = 2.0 * np.stack([
        np.stack([zero, y, z], axis=-1),
        np.stack([y, -2 * x, -w], axis=-1),
        np.stack([z, w, -2 * x], axis=-1),
    ], axis=-2)
    dy = 2.0 * np.stack([
        np.stack([-2 * y, x, w], axis=-1),
        np.stack([x, zero, z], axis=-1),
        np.stack([-w, z, -2 * y], axis=-1),
    ], axis=-2)
    dz = 2.0 * np.stack([
        np.stack([-2 * z, -w, x], axis=-1),
        np.stack([w, -2 * z, y], axis=-1),
        np.stack([x, y, zero], axis=-1),
    ], axis=-2)
    return dw, dx, dy, dz


def project_backward(gs: GaussianSet, cam: Camera, splats: ProjectedSplats,
                     g_mean2d: np.ndarray, g_conic: np.ndarray):
    """Chain kernel-level gradients (w.r.t. pixel mean and conic) back to the
    stored Gaussian parameters.

    Returns (g_position, g_scale, g_rotation) as full-length arrays with zeros
    for culled Gaussians.
    """
    n = len(gs)
    g_position = np.zeros((n, 3))
    g_scale = np.zeros((n, 3))
    g_rotation = np.zeros((n, 4))
    k = len(splats)
    if k == 0:
        return g_position, g_scale, g_rotation

    idx = splats.indices
    x, y, z = splats.cam_pos[:, 0], splats.cam_pos[:, 1], splats.cam_pos[:, 2]
    fx, fy = cam.fx, cam.fy

    # Rebuild the forward intermediates for the surviving subset.
    q_raw = gs.rotations[idx].astype(np.float64)
    q_norm = np.linalg.norm(q_raw, axis=1, keepdims=True)
    q = q_raw / q_norm
    from ..model import quat_to_matrix

    rot = quat_to_matrix(q)
    s = gs.scales[idx].astype(np.float64)
    m = rot * s[:, None, :]
    sigma3 = m @ m.transpose(0, 2, 1)
    sigma_cam = cam.rotation @ sigma3 @ cam.rotation.T
    fxz = fx / z
    fyz = fy / z
    jx = -fx * x / (z * z)
    jy = -fy * y / (z * z)

    # conic -> cov2d (full-matrix convention, both symmetric):
    # g_cov = -Minv Gbar Minv with Gbar = [[ga, gb/2], [gb/2, gc]].
    ca, cb, cc = splats.conic[:, 0], splats.conic[:, 1], splats.conic[:, 2]
    ga, gb, gc = g_conic[:, 0], 0.5 * g_conic[:, 1], g_conic[:, 2]
    p00 = ca * ga + cb * gb
    p01 = ca * gb + cb * gc
    p10 = cb * ga + cc * gb
    p11 = cb * gb + cc * gc
    g00 = -(p00 * ca + p01 * cb)
    g01 = -(p00 * cb + p01 * cc)
    g11 = -(p10 * cb + p11 * cc)

    # g_sigma_cam = J^T G J expanded over the sparse Jacobian columns
    # u = (fx/z, 0, jx), v = (0, fy/z, jy).
    u = np.stack([fxz, np.zeros(k), jx], axis=1)
    v = np.stack([np.zeros(k), fyz, jy], axis=1)
    uu = u[:, :, None] * u[:, None, :]
    vv = v[:, :, None] * v[:, None, :]
    uv = u[:, :, None] * v[:, None, :]
    g_sigma_cam = (g00[:, None, None] * uu
                   + g01[:, None, None] * (uv + uv.transpose(0, 2, 1))
                   + g11[:, None, None] * vv)

    # g_J = 2 G (J Sigma_cam) using the T = J S rows from the forward shape.
    s00, s01, s02 = sigma_cam[:, 0, 0], sigma_cam[:, 0, 1], sigma_cam[:, 0, 2]
    s11, s12, s22 = sigma_cam[:, 1, 1], sigma_cam[:, 1, 2], sigma_cam[:, 2, 2]
    t0 = np.stack([fxz * s00 + jx * s02, fxz * s01 + jx * s12, fxz * s02 + jx * s22], axis=1)
    t1 = np.stack([fyz * s01 + jy * s02, fyz * s11 + jy * s12, fyz * s12 + jy * s22], axis=1)
    g_jac = np.empty((k, 2, 3))
    g_jac[:, 0] = 2.0 * (g00[:, None] * t0 + g01[:, None] * t1)
    g_jac[:, 1] = 2.0 * (g01[:, None] * t0 + g11[:, None] * t1)

    g_sigma3 = cam.rotation.T @ g_sigma_cam @ cam.rotation

    # Sigma3 = M M^T with M = R diag(s).
    g_m = 2.0 * (g_sigma3 @ m)
    g_scale_k = np.einsum("nik,nik->nk", g_m, rot)
    g_rot = g_m * s[:, None, :]
    dw, dxq, dyq, dzq = _rotmat_quat_derivs(q)
    g_qhat = np.stack([
        np.einsum("nij,nij->n", g_rot, dw),
        np.einsum("nij,nij->n", g_rot, dxq),
        np.einsum("nij,nij->n", g_rot, dyq),
        np.einsum("nij,nij->n", g_rot, dzq),
    ], axis=1)
    # Through normalization: dq_hat/dq = (I - q_hat q_hat^T) / |q|.
    g_q = (g_qhat - q * np.sum(g_qhat * q, axis=1, keepdims=True)) / q_norm

    # Camera-space position gradient: pixel-mean path plus the J(p) path.
    z2 = z * z
    z3 = z2 * z
    gx = g_jac[:, 0, 2] * (-fx / z2) + g_mean2d[:, 0] * fx / z
    gy = g_jac[:, 1, 2] * (-fy / z2) + g_mean2d[:, 1] * fy / z
    gz = (
        g_jac[:, 0, 0] * (-fx / z2)
        + g_jac[:, 1, 1] * (-fy / z2)
        + g_jac[:, 0, 2] * (2.0 * fx * x / z3)
        + g_jac[:, 1, 2] * (2.0 * fy * y / z3)
        - g_mean2d[:, 0] * fx * x / z2
        - g_mean2d[:, 1] * fy * y / z2
    )
    g_p = np.stack([gx, gy, gz], axis=1) @ cam.rotation

    g_position[idx] = g_p
    g_scale[idx] = g_scale_k
    g_rotation[idx] = g_q
    return g_position, g_scale, g_rotation
