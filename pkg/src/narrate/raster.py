"""Core raster value types shared by every pipeline stage.

All types wrap read-only numpy arrays; operations never mutate their
inputs, so values can be shared freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MAX_DIM = 8192

SRGB8 = "srgb8"
LINEAR = "linear"

# Unit-length tolerance for stored normals.
NORMAL_UNIT_TOL = 1e-4


class RasterError(ValueError):
    """Contract violation in raster-type construction or conversion."""


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


def _check_dims(width: int, height: int) -> None:
    if not (0 < width <= MAX_DIM and 0 < height <= MAX_DIM):
        raise RasterError(f"image dimensions {width}x{height} outside (0, {MAX_DIM}]")


@dataclass(frozen=True)
class RgbImage:
    """Row-major RGB raster, float64 pixels, shape (height, width, 3).

    ``color_space`` is ``"srgb8"`` (display-referred, channels in [0, 1])
    or ``"linear"`` (scene radiance, channels in [0, inf)).
    """

    pixels: np.ndarray
    color_space: str = SRGB8

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 3 or px.shape[2] != 3:
            raise RasterError(f"expected (H, W, 3) pixels, got {px.shape}")
        _check_dims(px.shape[1], px.shape[0])
        if self.color_space not in (SRGB8, LINEAR):
            raise RasterError(f"unknown color space tag {self.color_space!r}")
        object.__setattr__(self, "pixels", _freeze(px))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class Mask:
    """Per-pixel boolean validity grid."""

    bits: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bits, dtype=bool)
        if b.ndim != 2:
            raise RasterError(f"expected (H, W) mask, got {b.shape}")
        _check_dims(b.shape[1], b.shape[0])
        object.__setattr__(self, "bits", _freeze(b))

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]


@dataclass(frozen=True)
class NormalMap:
    """Per-pixel unit normals in camera space (+x right, +y up, +z toward camera).

    Masked pixels hold unit vectors to within ``NORMAL_UNIT_TOL``; unmasked
    pixels carry the (0, 0, 0) sentinel.
    """

    normals: np.ndarray
    mask: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        n = np.asarray(self.normals, dtype=np.float64)
        if n.ndim != 3 or n.shape[2] != 3:
            raise RasterError(f"expected (H, W, 3) normals, got {n.shape}")
        _check_dims(n.shape[1], n.shape[0])
        mask = self.mask
        if mask is None:
            mask = np.linalg.norm(n, axis=2) > 0.5
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != n.shape[:2]:
            raise RasterError("mask shape does not match normals")
        norms = np.linalg.norm(n[mask], axis=1)
        if norms.size and np.max(np.abs(norms - 1.0)) > NORMAL_UNIT_TOL:
            raise RasterError("masked normals are not unit length")
        n = n.copy()
        n[~mask] = 0.0
        object.__setattr__(self, "normals", _freeze(n))
        object.__setattr__(self, "mask", _freeze(mask))

    @property
    def width(self) -> int:
        return self.normals.shape[1]

    @property
    def height(self) -> int:
        return self.normals.shape[0]


@dataclass(frozen=True)
class HeightField:
    """Scalar depth grid in pixel units; z increases toward the camera."""

    z: np.ndarray
    mask: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        z = np.asarray(self.z, dtype=np.float64)
        if z.ndim != 2:
            raise RasterError(f"expected (H, W) height grid, got {z.shape}")
        _check_dims(z.shape[1], z.shape[0])
        mask = self.mask
        if mask is None:
            mask = np.ones(z.shape, dtype=bool)
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != z.shape:
            raise RasterError("mask shape does not match height grid")
        if not np.all(np.isfinite(z[mask])):
            raise RasterError("non-finite heights on masked pixels")
        object.__setattr__(self, "z", _freeze(z))
        object.__setattr__(self, "mask", _freeze(mask))

    @property
    def width(self) -> int:
        return self.z.shape[1]

    @property
    def height(self) -> int:
        return self.z.shape[0]


def normalize_vectors(v: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    """Scale trailing-axis 3-vectors to unit length; zero vectors stay zero.

    Bitwise idempotent: vectors already unit to within ``eps`` pass through.
    """
    norms = np.linalg.norm(v, axis=-1, keepdims=True)
    unit = np.abs(norms - 1.0) <= eps
    safe = np.where(norms > eps, norms, 1.0)
    return np.where(unit, v, np.where(norms > eps, v / safe, 0.0))


def srgb_to_linear(img: RgbImage) -> RgbImage:
    """Apply the sRGB EOTF per channel; the color-space tag flips to linear."""
    if img.color_space != SRGB8:
        raise RasterError("srgb_to_linear expects an srgb8-tagged image")
    c = img.pixels
    lin = np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)
    return RgbImage(lin, LINEAR)


def linear_to_srgb(img: RgbImage) -> RgbImage:
    """Inverse sRGB EOTF; values clip to [0, 1] on the way to display space."""
    if img.color_space != LINEAR:
        raise RasterError("linear_to_srgb expects a linear-tagged image")
    c = np.clip(img.pixels, 0.0, 1.0)
    srgb = np.where(c <= 0.0031308, 12.92 * c, 1.055 * c ** (1.0 / 2.4) - 0.055)
    return RgbImage(srgb, SRGB8)
