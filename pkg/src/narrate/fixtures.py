"""Deterministic synthetic fixtures: analytic surfaces and a portrait stand-in.

Used by the test suite, the demo-assets CLI, and the studio's end-to-end
harness. Everything is seeded and reproducible.
"""

from __future__ import annotations

import numpy as np

from .raster import SRGB8, HeightField, NormalMap, RgbImage, normalize_vectors


def camera_grid(size: int):
    """Camera-frame coordinates of each pixel: x right, y up, origin center."""
    cy = cx = (size - 1) / 2.0
    cols = np.arange(size, dtype=np.float64)
    rows = np.arange(size, dtype=np.float64)
    x = cols[None, :] - cx
    y = cy - rows[:, None]
    return x + np.zeros((size, size)), y + np.zeros((size, size))


def sphere_cap(size: int = 256, mask_radius: float = 120.0,
               sphere_radius: float = 128.0):
    """Analytic spherical cap: unit normals and the exact height field."""
    x, y = camera_grid(size)
    rho2 = x * x + y * y
    mask = rho2 <= mask_radius ** 2
    z = np.sqrt(np.maximum(sphere_radius ** 2 - rho2, 0.0))
    normals = np.zeros((size, size, 3))
    normals[..., 0] = np.where(mask, x / sphere_radius, 0.0)
    normals[..., 1] = np.where(mask, y / sphere_radius, 0.0)
    normals[..., 2] = np.where(mask, z / sphere_radius, 0.0)
    return NormalMap(normals, mask), HeightField(np.where(mask, z, 0.0), mask)


def cylinder_field(size: int = 128, radius: float = 200.0) -> HeightField:
    """z = -x^2 / (2 r) over the full frame (axis vertical)."""
    x, _ = camera_grid(size)
    return HeightField(-x * x / (2.0 * radius))


def normals_from_height(z: np.ndarray, mask: np.ndarray) -> NormalMap:
    """Central-difference normals consistent with the integration convention."""
    p = np.zeros_like(z)
    q = np.zeros_like(z)
    p[:, 1:-1] = 0.5 * (z[:, 2:] - z[:, :-2])
    p[:, 0] = z[:, 1] - z[:, 0]
    p[:, -1] = z[:, -1] - z[:, -2]
    # row index runs against +y
    q[1:-1, :] = 0.5 * (z[:-2, :] - z[2:, :])
    q[0, :] = z[0, :] - z[1, :]
    q[-1, :] = z[-2, :] - z[-1, :]
    vec = np.stack([-p, -q, np.ones_like(z)], axis=-1)
    vec = normalize_vectors(vec)
    vec[~mask] = 0.0
    return NormalMap(vec, mask)


def portrait_fixture(size: int = 256):
    """Procedural portrait stand-in: smooth face-like relief, elliptical mask,
    and a detailed sRGB texture. Returns (image, normals, height, mask)."""
    x, y = camera_grid(size)
    s = size / 256.0
    mask = (x / (78 * s)) ** 2 + (y / (100 * s)) ** 2 <= 1.0

    def bump(cx_, cy_, sx, sy, amp):
        return amp * np.exp(-(((x - cx_ * s) / (sx * s)) ** 2
                              + ((y - cy_ * s) / (sy * s)) ** 2))

    z = (
        bump(0, 0, 70, 95, 26)            # skull dome
        + bump(0, -8, 14, 30, 9)          # nose ridge
        + bump(0, -30, 22, 12, 4)         # mouth mound
        + bump(-30, 28, 18, 8, 3)         # brows
        + bump(30, 28, 18, 8, 3)
        - bump(-28, 14, 11, 7, 2.5)       # eye sockets
        - bump(28, 14, 11, 7, 2.5)
    )
    z = np.where(mask, z * s, 0.0)
    height = HeightField(z, mask)
    normals = normals_from_height(z, mask)

    rng = np.random.default_rng(51)
    base = np.array([0.78, 0.60, 0.50])
    tex = np.ones((size, size, 3)) * base
    for _ in range(6):
        fx, fy = rng.uniform(1.5, 9.0, size=2)
        ph = rng.uniform(0, 2 * np.pi, size=2)
        amp = rng.uniform(0.02, 0.06)
        wave = np.sin(2 * np.pi * fx * x / size + ph[0]) * \
            np.cos(2 * np.pi * fy * y / size + ph[1])
        tex += amp * wave[..., None] * rng.uniform(0.4, 1.0, size=3)
    tex += rng.normal(0.0, 0.015, size=tex.shape)
    backdrop = np.array([0.22, 0.26, 0.33]) + 0.12 * (y[..., None] / size)
    tex = np.where(mask[..., None], tex, backdrop)
    tex = np.clip(tex, 0.02, 0.98)
    return RgbImage(tex, SRGB8), normals, height, mask
