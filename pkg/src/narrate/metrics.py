"""Reference evaluation metrics: normal angular error and SSIM/PSNR/RMSE."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
import scipy.ndimage as ndi

from .raster import NormalMap, RgbImage

DEFAULT_THRESHOLDS = (5.0, 15.0, 25.0, 30.0)
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_SIGMA = 1.5
SSIM_WINDOW = 11
LUMA = np.array([0.2126, 0.7152, 0.0722])  # Rec.709


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class AngularErrorReport:
    thresholds_deg: tuple
    fractions: tuple  # fraction of pixels with error below each threshold
    mean_deg: float
    median_deg: float

    def __post_init__(self):
        fr = self.fractions
        if any(b < a for a, b in zip(fr, fr[1:])):
            raise MetricsError("fractions must be nondecreasing")
        if any(not (0.0 <= f <= 1.0) for f in fr):
            raise MetricsError("fractions must lie in [0, 1]")

    def to_json(self) -> str:
        return json.dumps(
            {
                "thresholds_deg": list(self.thresholds_deg),
                "fraction_below": {
                    f"{t:g}": f for t, f in zip(self.thresholds_deg, self.fractions)
                },
                "mean_deg": self.mean_deg,
                "median_deg": self.median_deg,
            },
            sort_keys=True,
        )


@dataclass(frozen=True)
class ImageQualityReport:
    ssim: float
    psnr_db: float  # math.inf when rmse == 0
    rmse: float

    def __post_init__(self):
        if not (-1.0 <= self.ssim <= 1.0):
            raise MetricsError("ssim must lie in [-1, 1]")
        if self.rmse < 0:
            raise MetricsError("rmse must be nonnegative")
        expected = math.inf if self.rmse == 0 else -20.0 * math.log10(self.rmse)
        if self.psnr_db != expected:
            raise MetricsError("psnr does not satisfy 20*log10(1/rmse)")

    def to_json(self) -> str:
        return json.dumps(
            {
                "ssim": self.ssim,
                "psnr_db": None if math.isinf(self.psnr_db) else self.psnr_db,
                "rmse": self.rmse,
            },
            sort_keys=True,
        )


def angular_error(a: NormalMap, b: NormalMap,
                  thresholds=DEFAULT_THRESHOLDS) -> AngularErrorReport:
    """Per-pixel angle between the two maps over their mask intersection."""
    if (a.width, a.height) != (b.width, b.height):
        raise MetricsError("normal map dimensions differ")
    both = a.mask & b.mask
    if not both.any():
        raise MetricsError("mask intersection is empty")
    dots = np.clip(np.sum(a.normals[both] * b.normals[both], axis=1), -1.0, 1.0)
    theta = np.degrees(np.arccos(dots))
    fractions = tuple(float(np.mean(theta < t)) for t in thresholds)
    return AngularErrorReport(tuple(float(t) for t in thresholds), fractions,
                              float(np.mean(theta)), float(np.median(theta)))


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    xs = np.arange(size) - half
    g = np.exp(-(xs ** 2) / (2.0 * sigma ** 2))
    k = np.outer(g, g)
    return k / k.sum()


def _ssim_luma(x: np.ndarray, y: np.ndarray, window: int, sigma: float) -> float:
    if x.shape[0] < window or x.shape[1] < window:
        raise MetricsError(f"images must be at least {window} px for SSIM")
    kernel = _gaussian_kernel(window, sigma)

    def filt(img):
        return ndi.correlate(img, kernel, mode="constant")

    pad = window // 2

    def crop(img):
        return img[pad:-pad, pad:-pad]

    mu_x = crop(filt(x))
    mu_y = crop(filt(y))
    xx = crop(filt(x * x)) - mu_x ** 2
    yy = crop(filt(y * y)) - mu_y ** 2
    xy = crop(filt(x * y)) - mu_x * mu_y
    c1 = SSIM_K1 ** 2
    c2 = SSIM_K2 ** 2
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * xy + c2)
    den = (mu_x ** 2 + mu_y ** 2 + c1) * (xx + yy + c2)
    return float(np.mean(num / den))


def image_quality(a: RgbImage, b: RgbImage,
                  window: int = SSIM_WINDOW) -> ImageQualityReport:
    """RMSE/PSNR over all channels, SSIM on the Rec.709 luma channel.

    Inputs must share dimensions and lie in [0, 1] (dynamic range 1).
    """
    if a.pixels.shape != b.pixels.shape:
        raise MetricsError("image dimensions differ")
    for img in (a, b):
        if img.pixels.min() < 0.0 or img.pixels.max() > 1.0:
            raise MetricsError("image values must lie in [0, 1]")
    diff = a.pixels - b.pixels
    rmse = float(np.sqrt(np.mean(diff * diff)))
    psnr = math.inf if rmse == 0.0 else -20.0 * math.log10(rmse)
    ssim = _ssim_luma(a.pixels @ LUMA, b.pixels @ LUMA, window, SSIM_SIGMA)
    return ImageQualityReport(ssim, psnr, rmse)
