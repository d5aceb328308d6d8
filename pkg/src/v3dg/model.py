"""Core domain types: Gaussian primitives, bounding spheres, cameras, instances.

All types are immutable value objects once constructed; every operation here is
a pure function, so everything in this module is safe to share across threads.
Rotations are kept as (w, x, y, z) quaternions and turned into matrices on
demand.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

QUAT_NORM_TOL = 1e-6
ROT_ORTHO_TOL = 1e-6


def quat_normalize(q: np.ndarray) -> np.ndarray:
    """Normalize quaternion(s), shape (4,) or (N, 4)."""
    q = np.asarray(q, dtype=np.float64)
    norm = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(norm == 0.0):
        raise ValueError("cannot normalize a zero quaternion")
    return q / norm


def quat_renormalize(q: np.ndarray) -> np.ndarray:
    """Re-unitize quaternion(s) after composition.

    Rows whose squared norm is already 1 within 1e-14 are returned bit-exact,
    so composing with an identity rotation is a true identity.
    """
    q = np.asarray(q, dtype=np.float64)
    n2 = np.sum(q * q, axis=-1, keepdims=True)
    divisor = np.where(np.abs(n2 - 1.0) < 1e-14, 1.0, np.sqrt(n2))
    return q / divisor


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product a ∘ b for (...,4) arrays in (w, x, y, z) order."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """Rotation matrix/matrices for unit quaternion(s): (4,) -> (3,3), (N,4) -> (N,3,3)."""
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    row0 = np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], axis=-1)
    row1 = np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], axis=-1)
    row2 = np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], axis=-1)
    return np.stack([row0, row1, row2], axis=-2)


@dataclass(frozen=True)
class Gaussian3D:
    """One splat: position, per-axis stddev scale, unit quaternion, opacity, linear RGB."""

    position: np.ndarray
    scale: np.ndarray
    rotation: np.ndarray
    opacity: float
    color: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float64))
        object.__setattr__(self, "scale", np.asarray(self.scale, dtype=np.float64))
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64))
        object.__setattr__(self, "color", np.asarray(self.color, dtype=np.float64))
        if self.position.shape != (3,) or self.scale.shape != (3,) or self.color.shape != (3,):
            raise ValueError("position, scale and color must be 3-vectors")
        if self.rotation.shape != (4,):
            raise ValueError("rotation must be a (w,x,y,z) quaternion")
        if not np.all(self.scale > 0):
            raise ValueError("scale components must be strictly positive")
        if not (0.0 < self.opacity < 1.0):
            raise ValueError("opacity must lie strictly inside (0, 1)")
        if abs(np.linalg.norm(self.rotation) - 1.0) > QUAT_NORM_TOL:
            raise ValueError("rotation quaternion must be unit length")
        if not np.all(self.color >= 0):
            raise ValueError("color components must be >= 0")


class GaussianSet:
    """Columnar set of Gaussians: positions (N,3), scales (N,3), rotations (N,4),
    opacities (N,), colors (N,3). Arrays are stored as given (float32 or float64)."""

    __slots__ = ("positions", "scales", "rotations", "opacities", "colors")

    def __init__(self, positions, scales, rotations, opacities, colors, validate: bool = True):
        self.positions = np.ascontiguousarray(positions)
        self.scales = np.ascontiguousarray(scales)
        self.rotations = np.ascontiguousarray(rotations)
        self.opacities = np.ascontiguousarray(opacities)
        self.colors = np.ascontiguousarray(colors)
        if validate:
            self.validate()

    def __len__(self) -> int:
        return self.positions.shape[0]

    def validate(self) -> None:
        n = self.positions.shape[0]
        shapes = {
            "positions": (n, 3),
            "scales": (n, 3),
            "rotations": (n, 4),
            "opacities": (n,),
            "colors": (n, 3),
        }
        for name, shape in shapes.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")
        if n == 0:
            return
        if not np.all(self.scales > 0):
            raise ValueError("all scale components must be strictly positive")
        if not (np.all(self.opacities > 0) and np.all(self.opacities < 1)):
            raise ValueError("opacities must lie strictly inside (0, 1)")
        norms = np.linalg.norm(self.rotations.astype(np.float64), axis=1)
        if np.max(np.abs(norms - 1.0)) > QUAT_NORM_TOL:
            raise ValueError("rotation quaternions must be unit length")

    def gaussian(self, i: int) -> Gaussian3D:
        return Gaussian3D(
            self.positions[i], self.scales[i], self.rotations[i],
            float(self.opacities[i]), self.colors[i],
        )

    def subset(self, indices) -> "GaussianSet":
        return GaussianSet(
            self.positions[indices], self.scales[indices], self.rotations[indices],
            self.opacities[indices], self.colors[indices], validate=False,
        )

    def astype(self, dtype) -> "GaussianSet":
        return GaussianSet(
            self.positions.astype(dtype), self.scales.astype(dtype),
            self.rotations.astype(dtype), self.opacities.astype(dtype),
            self.colors.astype(dtype), validate=False,
        )

    def copy(self) -> "GaussianSet":
        return GaussianSet(
            self.positions.copy(), self.scales.copy(), self.rotations.copy(),
            self.opacities.copy(), self.colors.copy(), validate=False,
        )

    def equals(self, other: "GaussianSet") -> bool:
        """Bitwise equality of all columns."""
        return (
            np.array_equal(self.positions, other.positions)
            and np.array_equal(self.scales, other.scales)
            and np.array_equal(self.rotations, other.rotations)
            and np.array_equal(self.opacities, other.opacities)
            and np.array_equal(self.colors, other.colors)
        )

    @staticmethod
    def concatenate(sets: List["GaussianSet"]) -> "GaussianSet":
        if not sets:
            return empty_set()
        return GaussianSet(
            np.concatenate([s.positions for s in sets]),
            np.concatenate([s.scales for s in sets]),
            np.concatenate([s.rotations for s in sets]),
            np.concatenate([s.opacities for s in sets]),
            np.concatenate([s.colors for s in sets]),
            validate=False,
        )


def empty_set(dtype=np.float64) -> GaussianSet:
    return GaussianSet(
        np.empty((0, 3), dtype), np.empty((0, 3), dtype), np.empty((0, 4), dtype),
        np.empty((0,), dtype), np.empty((0, 3), dtype), validate=False,
    )


@dataclass(frozen=True)
class BoundingSphere:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64))
        object.__setattr__(self, "radius", float(self.radius))
        if self.center.shape != (3,) or not np.all(np.isfinite(self.center)):
            raise ValueError("sphere center must be a finite 3-vector")
        if not self.radius >= 0.0:
            raise ValueError("sphere radius must be >= 0")

    def contains(self, point: np.ndarray, tol: float = 1e-9) -> bool:
        return float(np.linalg.norm(np.asarray(point) - self.center)) <= self.radius + tol


@dataclass(frozen=True)
class Camera:
    """Pinhole camera: world->camera rotation (3,3) and translation (3,),
    pixel resolution and focal lengths in pixels. Camera space is x-right,
    y-up, z-forward; a point is in front when its camera-space z > 0.
    Principal point sits at ((width-1)/2, (height-1)/2) so integer pixel
    coordinates are sample centers."""

    rotation: np.ndarray
    translation: np.ndarray
    width: int
    height: int
    fx: float
    fy: float

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=np.float64))
        if self.rotation.shape != (3, 3) or self.translation.shape != (3,):
            raise ValueError("rotation must be (3,3) and translation (3,)")
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise ValueError("resolution must be at least 1x1")
        err = np.abs(self.rotation @ self.rotation.T - np.eye(3)).max()
        if err > ROT_ORTHO_TOL:
            raise ValueError("camera rotation must be orthonormal")

    @property
    def cx(self) -> float:
        return (self.width - 1) / 2.0

    @property
    def cy(self) -> float:
        return (self.height - 1) / 2.0

    def to_camera(self, points: np.ndarray) -> np.ndarray:
        """World points (...,3) -> camera space."""
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation

    def eye(self) -> np.ndarray:
        """Camera position in world space."""
        return -self.rotation.T @ self.translation

    def forward(self) -> np.ndarray:
        """World-space view direction (camera +z)."""
        return self.rotation[2].copy()

    def scaled(self, k: int) -> "Camera":
        """Same view at k-times resolution (supersampling)."""
        return Camera(self.rotation, self.translation, self.width * k, self.height * k,
                      self.fx * k, self.fy * k)


def look_at(eye, target, up=(0.0, 0.0, 1.0), width: int = 640, height: int = 480,
            fx: float | None = None, fy: float | None = None,
            fov_x: float | None = None) -> Camera:
    """Build a camera at `eye` whose +z axis points at `target`.

    Focal length comes from `fx`/`fy` when given, else from `fov_x`
    (fx = (width/2) / tan(fov_x/2)), else fov_x = pi/4.
    """
    eye = np.asarray(eye, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    up = np.asarray(up, dtype=np.float64)
    fwd = target - eye
    dist = np.linalg.norm(fwd)
    if dist == 0.0:
        raise ValueError("eye and target coincide")
    z = fwd / dist
    xaxis = np.cross(up, z)
    n = np.linalg.norm(xaxis)
    if n < 1e-12:
        raise ValueError("up vector is parallel to the view direction")
    x = xaxis / n
    y = np.cross(z, x)
    rot = np.stack([x, y, z])
    if fx is None:
        if fov_x is None:
            fov_x = np.pi / 4
        fx = (width / 2.0) / np.tan(fov_x / 2.0)
    if fy is None:
        fy = fx
    return Camera(rot, -rot @ eye, width, height, float(fx), float(fy))


@dataclass(frozen=True)
class Instance:
    """Rigid placement of an asset: uniform scale, rotation, then translation."""

    asset: str
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rotation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    uniform_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=np.float64))
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64))
        if self.translation.shape != (3,) or self.rotation.shape != (4,):
            raise ValueError("translation must be (3,) and rotation a quaternion")
        if not self.uniform_scale > 0:
            raise ValueError("uniform_scale must be > 0")
        if abs(np.linalg.norm(self.rotation) - 1.0) > QUAT_NORM_TOL:
            raise ValueError("instance rotation must be a unit quaternion")

    def matrix(self) -> np.ndarray:
        """4x4 affine matrix of the instance transform."""
        m = np.eye(4)
        m[:3, :3] = self.uniform_scale * quat_to_matrix(self.rotation)
        m[:3, 3] = self.translation
        return m

    def compose(self, inner: "Instance") -> "Instance":
        """Instance equivalent to applying `inner` first, then self."""
        rot = quat_normalize(quat_multiply(self.rotation, inner.rotation))
        r = self.uniform_scale * quat_to_matrix(self.rotation)
        return Instance(
            asset=inner.asset,
            translation=r @ inner.translation + self.translation,
            rotation=rot,
            uniform_scale=self.uniform_scale * inner.uniform_scale,
        )


IDENTITY_INSTANCE = Instance(asset="")


@dataclass
class Scene:
    """Composed world: asset id -> bundle path, plus placed instances."""

    assets: Dict[str, str]
    instances: List[Instance]

    def validate(self) -> None:
        for inst in self.instances:
            if inst.asset not in self.assets:
                raise KeyError(f"instance references unknown asset id {inst.asset!r}")


def _is_identity_rotation(q: np.ndarray) -> bool:
    return q[0] == 1.0 and q[1] == 0.0 and q[2] == 0.0 and q[3] == 0.0


def transform_gaussian(g: Gaussian3D, inst: Instance) -> Gaussian3D:
    """Apply an instance transform to a single Gaussian."""
    r = quat_to_matrix(inst.rotation)
    if _is_identity_rotation(inst.rotation):
        rotation = g.rotation  # exact: composing with identity changes nothing
    else:
        rotation = quat_renormalize(quat_multiply(inst.rotation, g.rotation))
    return Gaussian3D(
        position=inst.uniform_scale * (r @ g.position) + inst.translation,
        scale=inst.uniform_scale * g.scale,
        rotation=rotation,
        opacity=g.opacity,
        color=g.color,
    )


def transform_set(gs: GaussianSet, inst: Instance) -> GaussianSet:
    """Vectorized transform_gaussian over a whole set (returns float64 arrays)."""
    r = quat_to_matrix(inst.rotation)
    positions = inst.uniform_scale * (gs.positions.astype(np.float64) @ r.T) + inst.translation
    if _is_identity_rotation(inst.rotation):
        rotations = gs.rotations.astype(np.float64)
    else:
        rotations = quat_renormalize(quat_multiply(inst.rotation, gs.rotations.astype(np.float64)))
    return GaussianSet(
        positions,
        inst.uniform_scale * gs.scales.astype(np.float64),
        rotations,
        gs.opacities.astype(np.float64),
        gs.colors.astype(np.float64),
        validate=False,
    )


def transform_sphere(s: BoundingSphere, inst: Instance) -> BoundingSphere:
    """Apply an instance transform to a bounding sphere (similarity: radius scales)."""
    r = quat_to_matrix(inst.rotation)
    return BoundingSphere(
        center=inst.uniform_scale * (r @ s.center) + inst.translation,
        radius=inst.uniform_scale * s.radius,
    )
