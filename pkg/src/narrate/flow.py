"""Backward dense motion fields and their composition."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .raster import RgbImage


class FlowError(ValueError):
    pass


@dataclass(frozen=True)
class MotionField:
    """Per-target-pixel absolute source coordinates (x, y), plus validity.

    ``src_width``/``src_height`` describe the source frame the coordinates
    index; entries may lie outside it (they stay valid unless flagged).
    """

    map: np.ndarray  # (H, W, 2) absolute source coords
    valid: np.ndarray  # (H, W) bool
    src_width: int
    src_height: int

    def __post_init__(self):
        m = np.asarray(self.map, dtype=np.float64)
        v = np.asarray(self.valid, dtype=bool)
        if m.ndim != 3 or m.shape[2] != 2:
            raise FlowError("map must be (H, W, 2)")
        if v.shape != m.shape[:2]:
            raise FlowError("valid mask does not match map")
        if not np.all(np.isfinite(m[v])):
            raise FlowError("valid flow entries must be finite")
        m = np.ascontiguousarray(m)
        m.flags.writeable = False
        v = np.ascontiguousarray(v)
        v.flags.writeable = False
        object.__setattr__(self, "map", m)
        object.__setattr__(self, "valid", v)

    @property
    def width(self) -> int:
        return self.map.shape[1]

    @property
    def height(self) -> int:
        return self.map.shape[0]


def identity_flow(width: int, height: int) -> MotionField:
    xs, ys = np.meshgrid(np.arange(width, dtype=np.float64),
                         np.arange(height, dtype=np.float64))
    return MotionField(np.stack([xs, ys], axis=-1),
                       np.ones((height, width), bool), width, height)


def _bilinear_gather(values: np.ndarray, valid: np.ndarray,
                     x: np.ndarray, y: np.ndarray):
    """Sample (H, W, C) values at float coords; a sample is good only when
    every corner it draws weight from is valid and inside the frame."""
    h, w = values.shape[:2]
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    fx = x - x0
    fy = y - y0
    out = np.zeros(x.shape + (values.shape[2],))
    good = np.ones(x.shape, bool)
    for dy, wy in ((0, 1 - fy), (1, fy)):
        for dx, wx in ((0, 1 - fx), (1, fx)):
            weight = wx * wy
            cx = x0 + dx
            cy = y0 + dy
            used = weight > 0
            inside = (cx >= 0) & (cx < w) & (cy >= 0) & (cy < h)
            ok = inside & (valid[np.clip(cy, 0, h - 1), np.clip(cx, 0, w - 1)])
            good &= ~used | ok
            cxc = np.clip(cx, 0, w - 1)
            cyc = np.clip(cy, 0, h - 1)
            out += np.where((used & ok)[..., None],
                            weight[..., None] * values[cyc, cxc], 0.0)
    return out, good


def compose_flow(outer: MotionField, inner: MotionField,
                 mode: str = "resample") -> MotionField:
    """Chain two backward fields.

    resample (default): result(x) = inner evaluated bilinearly at outer(x).
    additive: displacement sum at the same target pixel, kept for fidelity
    comparisons with pipelines that add flows directly.
    """
    if mode not in ("resample", "additive"):
        raise FlowError(f"unknown composition mode {mode!r}")
    if (outer.src_width, outer.src_height) != (inner.width, inner.height):
        raise FlowError(
            f"outer source frame {outer.src_width}x{outer.src_height} does not "
            f"match inner target frame {inner.width}x{inner.height}"
        )
    if mode == "additive":
        if (outer.width, outer.height) != (inner.width, inner.height):
            raise FlowError("additive mode needs equal target frames")
        ident = identity_flow(outer.width, outer.height).map
        total = outer.map + inner.map - ident
        return MotionField(total, outer.valid & inner.valid,
                           inner.src_width, inner.src_height)

    sx = outer.map[..., 0]
    sy = outer.map[..., 1]
    sampled, good = _bilinear_gather(inner.map, inner.valid, sx, sy)
    valid = outer.valid & good
    sampled = np.where(valid[..., None], sampled, 0.0)
    return MotionField(sampled, valid, inner.src_width, inner.src_height)


def warp_image(img: RgbImage, flow: MotionField, sampling: str = "bilinear"):
    """Pull-back warp: output(x) = img[flow(x)]. Returns (RgbImage, valid)."""
    if (flow.src_width, flow.src_height) != (img.width, img.height):
        raise FlowError("flow source frame does not match image")
    if sampling == "nearest":
        x = np.rint(flow.map[..., 0]).astype(np.int64)
        y = np.rint(flow.map[..., 1]).astype(np.int64)
        inside = (x >= 0) & (x < img.width) & (y >= 0) & (y < img.height)
        ok = flow.valid & inside
        out = np.zeros((flow.height, flow.width, 3))
        out[ok] = img.pixels[y[ok], x[ok]]
        return RgbImage(out, img.color_space), ok
    if sampling != "bilinear":
        raise FlowError(f"unknown sampling {sampling!r}")
    always = np.ones((img.height, img.width), bool)
    out, good = _bilinear_gather(img.pixels, always,
                                 flow.map[..., 0], flow.map[..., 1])
    ok = flow.valid & good
    out = np.where(ok[..., None], out, 0.0)
    return RgbImage(out, img.color_space), ok
