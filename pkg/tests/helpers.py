"""Shared synthetic-data builders for the test suite."""

from __future__ import annotations

import numpy as np

from v3dg.model import GaussianSet


def random_set(n: int, seed: int, spread: float = 0.5, dtype=np.float64) -> GaussianSet:
    """Random valid GaussianSet clustered around the origin."""
    rng = np.random.default_rng(seed)
    q = rng.normal(size=(n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    return GaussianSet(
        positions=rng.normal(0.0, spread, (n, 3)).astype(dtype),
        scales=rng.uniform(0.02, 0.12, (n, 3)).astype(dtype),
        rotations=q.astype(dtype),
        opacities=rng.uniform(0.3, 0.8, n).astype(dtype),
        colors=rng.uniform(0.05, 1.0, (n, 3)).astype(dtype),
    )


def shell_asset(n: int, seed: int, radius: float = 1.0) -> GaussianSet:
    """Sphere-shell asset with a smooth, position-dependent color field.

    Gaussian scales track the inter-point spacing so the shell renders as a
    mostly-closed surface, which gives the simplification something real to
    preserve.
    """
    rng = np.random.default_rng(seed)
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    positions = radius * d
    spacing = radius * np.sqrt(4.0 * np.pi / n)
    scales = rng.uniform(0.8, 1.6, (n, 3)) * spacing
    q = rng.normal(size=(n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    colors = 0.55 + 0.35 * np.stack([
        np.sin(3.0 * d[:, 0]) * np.cos(2.0 * d[:, 1]),
        np.sin(2.5 * d[:, 1] + 1.0),
        np.cos(3.5 * d[:, 2]),
    ], axis=1)
    return GaussianSet(
        positions=positions.astype(np.float32),
        scales=scales.astype(np.float32),
        rotations=q.astype(np.float32),
        opacities=rng.uniform(0.55, 0.95, n).astype(np.float32),
        colors=np.clip(colors, 0.0, None).astype(np.float32),
    )
