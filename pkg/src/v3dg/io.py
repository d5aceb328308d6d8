"""Asset I/O: 3DGS point-cloud PLY files, built bundle files, scene JSON.

The bundle format is versioned and little-endian throughout: magic "V3DG",
a header with counts and build parameters, a packed cluster table, then the
columnar float32 Gaussian arrays (14 floats = 56 bytes per Gaussian).
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List

import numpy as np

from .model import GaussianSet, Instance, Scene

SH_C0 = 0.28209479177387814

BUNDLE_MAGIC = b"V3DG"
BUNDLE_VERSION = 1
_HEADER = struct.Struct("<4sIIIIqIIQ")
_CLUSTER_ROW = np.dtype([
    ("layer", "<u4"), ("offset", "<u8"), ("count", "<u4"),
    ("own_center", "<f4", (3,)), ("own_radius", "<f4"),
    ("parent_center", "<f4", (3,)), ("parent_radius", "<f4"),
])

PLY_FIELDS = ("x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity",
              "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3")


class AssetIOError(Exception):
    """Base for all asset I/O failures."""


class PlyFormatError(AssetIOError):
    pass


class PlyDataError(AssetIOError):
    pass


class BundleError(AssetIOError):
    pass


class BundleFormatError(BundleError):
    pass


class BundleTruncatedError(BundleError):
    pass


class BundleCorruptionError(BundleError):
    pass


class SceneError(AssetIOError):
    pass


class SceneReferenceError(SceneError):
    pass


class SceneValidationError(SceneError):
    pass


@dataclass(frozen=True)
class BundleParams:
    """Build parameters recorded in the bundle header."""

    n_gaussians_per_cluster: int
    n_clusters_per_group: int
    simplify_iterations: int
    seed: int


@dataclass
class Bundle:
    """Multi-layer cluster hierarchy for one asset.

    Gaussians of all layers are concatenated into one set; each cluster owns
    a contiguous (offset, count) range. Top-layer clusters carry a +inf
    parent radius so selection needs no special case.
    """

    params: BundleParams
    n_layers: int
    gaussians: GaussianSet
    layers: np.ndarray
    offsets: np.ndarray
    counts: np.ndarray
    own_centers: np.ndarray
    own_radii: np.ndarray
    parent_centers: np.ndarray
    parent_radii: np.ndarray
    version: int = BUNDLE_VERSION

    @property
    def n_clusters(self) -> int:
        return int(self.layers.shape[0])

    def layer_cluster_ids(self, layer: int) -> np.ndarray:
        return np.nonzero(self.layers == layer)[0]

    def layer_gaussian_count(self, layer: int) -> int:
        return int(self.counts[self.layers == layer].sum())

    def cluster_gaussians(self, cluster_id: int) -> GaussianSet:
        o = int(self.offsets[cluster_id])
        c = int(self.counts[cluster_id])
        return self.gaussians.subset(slice(o, o + c))

    def validate(self) -> None:
        """Check every structural invariant; raises ValueError on violation."""
        c = self.n_clusters
        n = len(self.gaussians)
        if c == 0:
            raise ValueError("bundle has no clusters")
        for name, arr, shape in (
            ("layers", self.layers, (c,)), ("offsets", self.offsets, (c,)),
            ("counts", self.counts, (c,)), ("own_centers", self.own_centers, (c, 3)),
            ("own_radii", self.own_radii, (c,)), ("parent_centers", self.parent_centers, (c, 3)),
            ("parent_radii", self.parent_radii, (c,)),
        ):
            if arr.shape != shape:
                raise ValueError(f"cluster table column {name} has shape {arr.shape}")
        order = np.argsort(self.offsets, kind="stable")
        offs = self.offsets[order].astype(np.int64)
        cnts = self.counts[order].astype(np.int64)
        if np.any(cnts < 1):
            raise ValueError("every cluster must hold at least one Gaussian")
        if offs[0] != 0 or np.any(offs[1:] != offs[:-1] + cnts[:-1]) or offs[-1] + cnts[-1] != n:
            raise ValueError("cluster ranges must be disjoint and cover the Gaussian set")
        if np.any(self.counts > self.params.n_gaussians_per_cluster):
            raise ValueError("cluster exceeds the configured Gaussians-per-cluster limit")
        if self.n_layers != int(self.layers.max()) + 1 or int(self.layers.min()) != 0:
            raise ValueError("layer indices must cover 0..n_layers-1")
        if np.any(self.own_radii[self.layers == 0] != 0.0):
            raise ValueError("layer-0 clusters must have zero own-sphere radius")
        if np.any(self.own_radii < 0):
            raise ValueError("own-sphere radii must be >= 0")
        non_top = np.isfinite(self.parent_radii)
        if np.any(~non_top & (self.layers != self.n_layers - 1)):
            raise ValueError("only top-layer clusters may carry the +inf parent sentinel")
        if np.any(non_top & (self.layers == self.n_layers - 1)):
            raise ValueError("top-layer clusters must carry the +inf parent sentinel")
        if np.any(self.parent_radii[non_top] <= self.own_radii[non_top]):
            raise ValueError("parent sphere radius must exceed own sphere radius")
        gap = np.linalg.norm(
            self.parent_centers[non_top].astype(np.float64)
            - self.own_centers[non_top].astype(np.float64), axis=1)
        if np.any(gap + self.own_radii[non_top] > self.parent_radii[non_top] + 1e-6):
            raise ValueError("parent sphere must enclose own sphere")
        self.gaussians.validate()

    def equals(self, other: "Bundle") -> bool:
        return (
            self.version == other.version
            and self.params == other.params
            and self.n_layers == other.n_layers
            and self.gaussians.equals(other.gaussians)
            and np.array_equal(self.layers, other.layers)
            and np.array_equal(self.offsets, other.offsets)
            and np.array_equal(self.counts, other.counts)
            and np.array_equal(self.own_centers, other.own_centers)
            and np.array_equal(self.own_radii, other.own_radii)
            and np.array_equal(self.parent_centers, other.parent_centers)
            and np.array_equal(self.parent_radii, other.parent_radii)
        )


def bundle_file_size(n_gaussians: int, n_clusters: int) -> int:
    """Exact on-disk size in bytes for a v1 bundle."""
    return _HEADER.size + _CLUSTER_ROW.itemsize * n_clusters + 56 * n_gaussians


def write_bundle(bundle: Bundle, path) -> None:
    """Serialize (atomically: write temp, rename on success)."""
    bundle.validate()
    path = Path(path)
    n = len(bundle.gaussians)
    header = _HEADER.pack(
        BUNDLE_MAGIC, BUNDLE_VERSION,
        bundle.params.n_gaussians_per_cluster, bundle.params.n_clusters_per_group,
        bundle.params.simplify_iterations, bundle.params.seed,
        bundle.n_layers, bundle.n_clusters, n,
    )
    table = np.empty(bundle.n_clusters, dtype=_CLUSTER_ROW)
    table["layer"] = bundle.layers
    table["offset"] = bundle.offsets
    table["count"] = bundle.counts
    table["own_center"] = bundle.own_centers
    table["own_radius"] = bundle.own_radii
    table["parent_center"] = bundle.parent_centers
    table["parent_radius"] = bundle.parent_radii
    gs = bundle.gaussians
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(table.tobytes())
        fh.write(np.ascontiguousarray(gs.positions, "<f4").tobytes())
        fh.write(np.ascontiguousarray(gs.scales, "<f4").tobytes())
        fh.write(np.ascontiguousarray(gs.rotations, "<f4").tobytes())
        fh.write(np.ascontiguousarray(gs.opacities, "<f4").tobytes())
        fh.write(np.ascontiguousarray(gs.colors, "<f4").tobytes())
    os.replace(tmp, path)


def read_bundle(path) -> Bundle:
    """Deserialize and re-validate a bundle file."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise BundleTruncatedError(f"{path}: file shorter than the bundle header")
    magic, version, npc, ncg, iters, seed, n_layers, n_clusters, n_gauss = \
        _HEADER.unpack_from(raw, 0)
    if magic != BUNDLE_MAGIC:
        raise BundleFormatError(f"{path}: bad magic {magic!r}")
    if version != BUNDLE_VERSION:
        raise BundleFormatError(f"{path}: unsupported bundle version {version}")
    expected = bundle_file_size(n_gauss, n_clusters)
    if len(raw) < expected:
        raise BundleTruncatedError(
            f"{path}: expected {expected} bytes, found {len(raw)}")
    if len(raw) > expected:
        raise BundleCorruptionError(f"{path}: {len(raw) - expected} trailing bytes")

    off = _HEADER.size
    table = np.frombuffer(raw, dtype=_CLUSTER_ROW, count=n_clusters, offset=off)
    off += _CLUSTER_ROW.itemsize * n_clusters

    def take(shape):
        nonlocal off
        size = int(np.prod(shape)) * 4
        arr = np.frombuffer(raw, dtype="<f4", count=int(np.prod(shape)), offset=off)
        off += size
        return arr.reshape(shape).copy()

    gs = GaussianSet(
        take((n_gauss, 3)), take((n_gauss, 3)), take((n_gauss, 4)),
        take((n_gauss,)), take((n_gauss, 3)), validate=False,
    )
    bundle = Bundle(
        params=BundleParams(npc, ncg, iters, seed),
        n_layers=n_layers,
        gaussians=gs,
        layers=table["layer"].astype(np.int32),
        offsets=table["offset"].astype(np.int64),
        counts=table["count"].astype(np.int32),
        own_centers=table["own_center"].copy(),
        own_radii=table["own_radius"].copy(),
        parent_centers=table["parent_center"].copy(),
        parent_radii=table["parent_radius"].copy(),
    )
    try:
        bundle.validate()
    except ValueError as exc:
        raise BundleCorruptionError(f"{path}: {exc}") from exc
    return bundle


def _parse_ply_header(raw: bytes):
    """Returns (n_vertices, [(name, type), ...], data_offset)."""
    end = raw.find(b"end_header\n")
    if not raw.startswith(b"ply") or end < 0:
        raise PlyFormatError("not a PLY file (missing 'ply'/'end_header')")
    data_offset = end + len(b"end_header\n")
    fmt = None
    n_vertices = None
    properties: List[tuple] = []
    in_vertex = False
    for line in raw[:end].decode("ascii", "replace").splitlines():
        tokens = line.split()
        if not tokens or tokens[0] in ("ply", "comment"):
            continue
        if tokens[0] == "format":
            fmt = tokens[1]
        elif tokens[0] == "element":
            in_vertex = tokens[1] == "vertex"
            if in_vertex:
                n_vertices = int(tokens[2])
        elif tokens[0] == "property" and in_vertex:
            properties.append((tokens[2], tokens[1]))
    if fmt != "binary_little_endian":
        raise PlyFormatError(f"unsupported PLY format {fmt!r}; need binary_little_endian")
    if n_vertices is None:
        raise PlyFormatError("PLY header has no vertex element")
    return n_vertices, properties, data_offset


_PLY_TYPES = {
    "float": "<f4", "float32": "<f4", "double": "<f8", "float64": "<f8",
    "uchar": "u1", "uint8": "u1", "char": "i1", "int8": "i1",
    "short": "<i2", "ushort": "<u2", "int": "<i4", "int32": "<i4",
    "uint": "<u4", "uint32": "<u4",
}


def load_ply(path) -> GaussianSet:
    """Parse a 3DGS point-cloud PLY and apply the storage activations:
    logistic opacity, exponential scales, normalized quaternions, and
    0.5 + SH_C0 * f_dc colors clamped at zero."""
    with open(path, "rb") as fh:
        blob = fh.read()
    n, properties, data_offset = _parse_ply_header(blob)
    names = [p[0] for p in properties]
    for field in PLY_FIELDS:
        if field not in names:
            raise PlyFormatError(f"{path}: missing required property {field!r}")
    try:
        dtype = np.dtype([(nm, _PLY_TYPES[ty]) for nm, ty in properties])
    except KeyError as exc:
        raise PlyFormatError(f"{path}: unsupported property type {exc}") from exc
    if len(blob) - data_offset < n * dtype.itemsize:
        raise PlyFormatError(f"{path}: vertex data truncated")
    raw = np.frombuffer(blob, dtype=dtype, count=n, offset=data_offset)

    def col(*fields):
        return np.stack([raw[f].astype(np.float64) for f in fields], axis=1)

    positions = col("x", "y", "z")
    with np.errstate(over="ignore"):
        opacities = 1.0 / (1.0 + np.exp(-raw["opacity"].astype(np.float64)))
        scales = np.exp(col("scale_0", "scale_1", "scale_2"))
    rotations = col("rot_0", "rot_1", "rot_2", "rot_3")
    norms = np.linalg.norm(rotations, axis=1, keepdims=True)
    bad_rot = ~np.isfinite(norms[:, 0]) | (norms[:, 0] == 0.0)
    colors = np.maximum(0.5 + SH_C0 * col("f_dc_0", "f_dc_1", "f_dc_2"), 0.0)

    finite = (
        np.isfinite(positions).all(axis=1) & np.isfinite(opacities)
        & np.isfinite(scales).all(axis=1) & ~bad_rot & np.isfinite(colors).all(axis=1)
        & (scales > 0.0).all(axis=1)
    )
    if not finite.all():
        row = int(np.nonzero(~finite)[0][0])
        raise PlyDataError(f"{path}: invalid value after activation at row {row}")
    rotations = rotations / norms

    gs = GaussianSet(
        positions.astype(np.float32), scales.astype(np.float32),
        rotations.astype(np.float32), opacities.astype(np.float32),
        colors.astype(np.float32), validate=False,
    )
    # Saturated raw opacities round to exactly 0/1 in float32; nudge inside
    # the open interval so the strict invariant holds.
    hi = np.nextafter(np.float32(1.0), np.float32(0.0))
    np.clip(gs.opacities, np.float32(1e-7), hi, out=gs.opacities)
    # Renormalization in float32 can drift; it stays far inside the 1e-6 gate.
    gs.validate()
    return gs


def write_ply(gs: GaussianSet, path) -> None:
    """Write a GaussianSet as a 3DGS-convention PLY (inverse activations)."""
    n = len(gs)
    opac = gs.opacities.astype(np.float64)
    raw_op = np.log(opac / (1.0 - opac))
    raw_scale = np.log(gs.scales.astype(np.float64))
    f_dc = (gs.colors.astype(np.float64) - 0.5) / SH_C0
    fields = ["x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2",
              "opacity", "scale_0", "scale_1", "scale_2",
              "rot_0", "rot_1", "rot_2", "rot_3"]
    data = np.zeros(n, dtype=[(f, "<f4") for f in fields])
    data["x"], data["y"], data["z"] = gs.positions.T.astype(np.float32)
    data["f_dc_0"], data["f_dc_1"], data["f_dc_2"] = f_dc.T.astype(np.float32)
    data["opacity"] = raw_op.astype(np.float32)
    data["scale_0"], data["scale_1"], data["scale_2"] = raw_scale.T.astype(np.float32)
    data["rot_0"], data["rot_1"], data["rot_2"], data["rot_3"] = \
        gs.rotations.T.astype(np.float32)
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {n}"]
    header += [f"property float {f}" for f in fields]
    header.append("end_header")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        fh.write(data.tobytes())
    os.replace(tmp, path)


def load_scene(path) -> Scene:
    """Parse a scene JSON: {"assets": {id: bundlePath}, "instances": [...]}.

    Instance fields default to identity rotation, unit scale and zero
    translation; bundle paths resolve relative to the scene file.
    """
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    assets_raw = doc.get("assets", {})
    if not isinstance(assets_raw, dict):
        raise SceneValidationError(f"{path}: 'assets' must be an object")
    assets: Dict[str, str] = {
        str(k): str((path.parent / v).resolve()) for k, v in assets_raw.items()
    }
    instances: List[Instance] = []
    for i, entry in enumerate(doc.get("instances", [])):
        asset = entry.get("asset")
        if asset is None:
            raise SceneValidationError(f"{path}: instance {i} has no asset id")
        if asset not in assets:
            raise SceneReferenceError(f"{path}: instance {i} references unknown asset {asset!r}")
        scale = float(entry.get("scale", 1.0))
        if scale <= 0:
            raise SceneValidationError(f"{path}: instance {i} scale must be > 0")
        rot = np.asarray(entry.get("rotationQuat", [1.0, 0.0, 0.0, 0.0]), dtype=np.float64)
        norm = np.linalg.norm(rot)
        if norm == 0 or not np.all(np.isfinite(rot)):
            raise SceneValidationError(f"{path}: instance {i} rotation is degenerate")
        instances.append(Instance(
            asset=str(asset),
            translation=np.asarray(entry.get("translation", [0.0, 0.0, 0.0]), dtype=np.float64),
            rotation=rot / norm,
            uniform_scale=scale,
        ))
    return Scene(assets=assets, instances=instances)


def write_scene(scene: Scene, path) -> None:
    doc = {
        "assets": dict(scene.assets),
        "instances": [
            {
                "asset": inst.asset,
                "translation": [float(v) for v in inst.translation],
                "rotationQuat": [float(v) for v in inst.rotation],
                "scale": float(inst.uniform_scale),
            }
            for inst in scene.instances
        ],
    }
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
    os.replace(tmp, path)
