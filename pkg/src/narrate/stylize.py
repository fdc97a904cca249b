"""Shading-map relighting of styled images and curvature-driven hatching."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.ndimage as ndi

from .raster import LINEAR, HeightField, RgbImage

LUMA = np.array([0.2126, 0.7152, 0.0722])  # Rec.709


class StylizeError(ValueError):
    pass


@dataclass(frozen=True)
class ShadingMap:
    """Per-pixel relit/original ratio (linear space) with a validity mask."""

    values: np.ndarray  # (H, W, 3) >= 0
    valid: np.ndarray  # (H, W) bool

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        m = np.asarray(self.valid, dtype=bool)
        if v.ndim != 3 or v.shape[2] != 3 or m.shape != v.shape[:2]:
            raise StylizeError("shading map shapes are inconsistent")
        if not np.all(np.isfinite(v[m])):
            raise StylizeError("valid shading values must be finite")
        v = np.ascontiguousarray(v)
        v.flags.writeable = False
        m = np.ascontiguousarray(m)
        m.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "valid", m)


@dataclass(frozen=True)
class HatchParams:
    tone_levels: int = 6
    stroke_spacing: float = 3.0
    stroke_length: float = 12.0
    cross_threshold: int = 2  # tone indices at or below this cross-hatch
    curvature_sigma: float = 2.0

    def __post_init__(self):
        if self.tone_levels < 2:
            raise StylizeError("need at least two tone levels")
        if self.stroke_spacing <= 0 or self.stroke_length <= 0:
            raise StylizeError("spacing and length must be positive")


def shading_map(original: RgbImage, relit: RgbImage, eps: float = 1e-3) -> ShadingMap:
    """S = relit / max(original, eps); pixels darker than eps are invalid."""
    if original.color_space != LINEAR or relit.color_space != LINEAR:
        raise StylizeError("shading maps are computed in linear space")
    if original.pixels.shape != relit.pixels.shape:
        raise StylizeError("image dimensions differ")
    if eps <= 0:
        raise StylizeError("eps must be positive")
    denom = np.maximum(original.pixels, eps)
    values = relit.pixels / denom
    valid = np.min(original.pixels, axis=2) >= eps
    values = np.where(valid[..., None], values, 0.0)
    return ShadingMap(values, valid)


def apply_shading(s: ShadingMap, styled: RgbImage) -> RgbImage:
    """Multiply the styled image by the shading ratio on valid pixels;
    invalid pixels pass through unchanged."""
    if styled.color_space != LINEAR:
        raise StylizeError("styled image must be linear")
    if styled.pixels.shape != s.values.shape:
        raise StylizeError("image dimensions differ")
    out = np.where(s.valid[..., None], s.values * styled.pixels, styled.pixels)
    return RgbImage(out, LINEAR)


@dataclass(frozen=True)
class PrincipalField:
    """Per-pixel principal frame of the height surface.

    Directions are unit 2-vectors in image coordinates (x right, y down);
    |k1| >= |k2|. Umbilic pixels carry the deterministic frame
    e1=(1,0), e2=(0,1).
    """

    e1: np.ndarray  # (H, W, 2)
    e2: np.ndarray
    k1: np.ndarray  # (H, W)
    k2: np.ndarray
    umbilic: np.ndarray  # (H, W) bool
    valid: np.ndarray  # (H, W) bool


def principal_directions(height: HeightField, sigma: float = 2.0) -> PrincipalField:
    """Eigen-frame of the Gaussian-smoothed height Hessian.

    The Hessian uses central differences; pixels whose 3x3 neighborhood
    leaves the mask are invalid.
    """
    if not height.mask.any():
        raise StylizeError("height mask is empty")
    if sigma < 0:
        raise StylizeError("sigma must be nonnegative")
    m = height.mask.astype(np.float64)
    z = np.where(height.mask, height.z, 0.0)
    if sigma > 0:
        num = ndi.gaussian_filter(z * m, sigma, mode="nearest")
        den = ndi.gaussian_filter(m, sigma, mode="nearest")
        zs = np.where(den > 1e-9, num / np.maximum(den, 1e-9), 0.0)
    else:
        zs = z

    zxx = np.zeros_like(zs)
    zyy = np.zeros_like(zs)
    zxy = np.zeros_like(zs)
    zxx[:, 1:-1] = zs[:, 2:] - 2.0 * zs[:, 1:-1] + zs[:, :-2]
    zyy[1:-1, :] = zs[2:, :] - 2.0 * zs[1:-1, :] + zs[:-2, :]
    zxy[1:-1, 1:-1] = 0.25 * (
        zs[2:, 2:] - zs[2:, :-2] - zs[:-2, 2:] + zs[:-2, :-2]
    )
    valid = ndi.binary_erosion(height.mask, structure=np.ones((3, 3), bool),
                               border_value=0)

    a, b, c = zxx, zxy, zyy
    mean = 0.5 * (a + c)
    disc = np.sqrt(np.maximum(0.25 * (a - c) ** 2 + b * b, 0.0))
    lo = mean - disc
    hi = mean + disc
    k1 = np.where(np.abs(hi) >= np.abs(lo), hi, lo)
    k2 = np.where(np.abs(hi) >= np.abs(lo), lo, hi)
    umbilic = np.abs(hi - lo) < 1e-6

    # eigenvector of [[a, b], [b, c]] for eigenvalue k1: pick the better-
    # conditioned of (b, k1-a) and (k1-c, b)
    v1 = np.stack([b, k1 - a], axis=-1)
    v2 = np.stack([k1 - c, b], axis=-1)
    n1 = np.linalg.norm(v1, axis=-1)
    n2 = np.linalg.norm(v2, axis=-1)
    e1 = np.where((n1 >= n2)[..., None], v1, v2)
    norm = np.linalg.norm(e1, axis=-1, keepdims=True)
    e1 = np.where(norm > 1e-12, e1 / np.maximum(norm, 1e-12),
                  np.array([1.0, 0.0]))
    e1 = np.where(umbilic[..., None], np.array([1.0, 0.0]), e1)
    e2 = np.stack([-e1[..., 1], e1[..., 0]], axis=-1)
    return PrincipalField(e1, e2, np.where(valid, k1, 0.0),
                          np.where(valid, k2, 0.0), umbilic, valid)


def _luminance(img: RgbImage) -> np.ndarray:
    return np.clip(img.pixels, 0.0, None) @ LUMA


def _seed_rank(xs: np.ndarray, ys: np.ndarray, salt: int) -> np.ndarray:
    h = (xs.astype(np.uint64) * np.uint64(73856093)
         ^ ys.astype(np.uint64) * np.uint64(19349663)
         ^ np.uint64(salt) * np.uint64(83492791))
    h = (h * np.uint64(2654435761)) & np.uint64(0xFFFFFFFF)
    return h.astype(np.float64) / float(0x100000000)


def trace_hatch_strokes(height: HeightField, shading: RgbImage,
                        params: HatchParams | None = None):
    """Deterministic stroke polylines: seeds on a fixed grid activate as the
    local tone darkens; each active seed traces along e2 (and e1 past the
    cross-hatch threshold). Returns a list of (N, 2) float pixel paths."""
    params = params if params is not None else HatchParams()
    if (shading.width, shading.height) != (height.width, height.height):
        raise StylizeError("shading dimensions do not match height field")
    field = principal_directions(height, params.curvature_sigma)
    lum = _luminance(shading)
    k = params.tone_levels
    tone = np.clip(np.floor(lum * k).astype(np.int64), 0, k - 1)

    spacing = max(1, int(round(params.stroke_spacing)))
    half_steps = max(1, int(round(params.stroke_length / 2.0)))
    ys, xs = np.meshgrid(
        np.arange(spacing // 2, height.height, spacing),
        np.arange(spacing // 2, height.width, spacing),
        indexing="ij",
    )
    xs = xs.ravel()
    ys = ys.ravel()
    on_mask = height.mask[ys, xs] & field.valid[ys, xs]
    xs, ys = xs[on_mask], ys[on_mask]
    seed_tone = tone[ys, xs]
    density = (k - 1 - seed_tone) / (k - 1)
    main_on = _seed_rank(xs, ys, 0) < density
    crossable = seed_tone <= params.cross_threshold
    cross_density = np.where(
        crossable,
        (params.cross_threshold + 1 - seed_tone) / (params.cross_threshold + 1),
        0.0,
    )
    cross_on = _seed_rank(xs, ys, 1) < cross_density

    h, w = height.height, height.width

    def trace(x0: float, y0: float, along_e1: bool):
        pts = [(x0, y0)]
        for sign in (1.0, -1.0):
            x, y = float(x0), float(y0)
            prev = None
            for _ in range(half_steps):
                xi, yi = int(round(x)), int(round(y))
                if not (0 <= xi < w and 0 <= yi < h) or not field.valid[yi, xi]:
                    break
                d = field.e1[yi, xi] if along_e1 else field.e2[yi, xi]
                d = d * sign
                if prev is not None and d[0] * prev[0] + d[1] * prev[1] < 0:
                    d = -d
                x += d[0]
                y += d[1]
                prev = d
                if sign > 0:
                    pts.append((x, y))
                else:
                    pts.insert(0, (x, y))
        return np.asarray(pts)

    strokes = []
    for x0, y0, m_on, c_on in zip(xs, ys, main_on, cross_on):
        if m_on:
            strokes.append(trace(float(x0), float(y0), along_e1=False))
        if c_on:
            strokes.append(trace(float(x0), float(y0), along_e1=True))
    return strokes


def render_strokes(strokes, width: int, height: int) -> RgbImage:
    """1-px black strokes on a white canvas."""
    canvas = np.ones((height, width, 3))
    for path in strokes:
        xi = np.rint(path[:, 0]).astype(np.int64)
        yi = np.rint(path[:, 1]).astype(np.int64)
        ok = (xi >= 0) & (xi < width) & (yi >= 0) & (yi < height)
        canvas[yi[ok], xi[ok]] = 0.0
    return RgbImage(canvas, "srgb8")


def hatch(height: HeightField, shading: RgbImage,
          params: HatchParams | None = None) -> RgbImage:
    """Render the hatching for ``shading`` over the height surface."""
    strokes = trace_hatch_strokes(height, shading, params)
    return render_strokes(strokes, height.width, height.height)
