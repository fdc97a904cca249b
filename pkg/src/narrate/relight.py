"""Analytic light maps and relit composition from a shared normal map.

Diffuse is Lambertian; speculars are normalized Phong lobes about the
reflection of the orthographic view direction (0, 0, 1). Everything runs
in linear radiance under the camera-space normal convention.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .raster import LINEAR, NormalMap, RgbImage, normalize_vectors
from .rasterize import RenderOutput

DEFAULT_EXPONENTS = (1.0, 8.0, 32.0, 128.0)
VIEW_DIR = np.array([0.0, 0.0, 1.0])


class RelightError(ValueError):
    pass


@dataclass(frozen=True)
class EnvironmentLight:
    """Either an equirectangular radiance map or a directional-light list.

    The lat-long map is indexed so its center texel looks along +z (toward
    the viewer); width must be exactly twice the height. Directional lights
    are (unit direction toward the light, RGB intensity) pairs in camera
    space.
    """

    latlong: RgbImage | None = None
    directions: np.ndarray | None = None  # (L, 3)
    intensities: np.ndarray | None = None  # (L, 3)

    def __post_init__(self):
        if (self.latlong is None) == (self.directions is None):
            raise RelightError("provide exactly one of latlong or directions")
        if self.latlong is not None:
            if self.latlong.color_space != LINEAR:
                raise RelightError("environment map must be linear radiance")
            if self.latlong.width != 2 * self.latlong.height:
                raise RelightError("lat-long map width must equal 2 * height")
            if np.min(self.latlong.pixels) < 0:
                raise RelightError("radiance must be nonnegative")
        else:
            d = np.asarray(self.directions, dtype=np.float64).reshape(-1, 3)
            i = np.asarray(self.intensities, dtype=np.float64).reshape(-1, 3)
            if d.shape != i.shape[:1] + (3,) or d.shape[0] != i.shape[0]:
                raise RelightError("directions and intensities must pair up")
            if np.max(np.abs(np.linalg.norm(d, axis=1) - 1.0)) > 1e-6:
                raise RelightError("light directions must be unit length")
            if np.min(i) < 0:
                raise RelightError("intensities must be nonnegative")
            object.__setattr__(self, "directions", d)
            object.__setattr__(self, "intensities", i)

    @staticmethod
    def from_directional(entries) -> "EnvironmentLight":
        """entries: iterable of (dx, dy, dz, r, g, b)."""
        arr = np.asarray(list(entries), dtype=np.float64).reshape(-1, 6)
        dirs = normalize_vectors(arr[:, :3])
        return EnvironmentLight(directions=dirs, intensities=arr[:, 3:])

    def scaled(self, alpha: float) -> "EnvironmentLight":
        if self.latlong is not None:
            return EnvironmentLight(
                latlong=RgbImage(self.latlong.pixels * alpha, LINEAR))
        return EnvironmentLight(directions=self.directions,
                                intensities=self.intensities * alpha)

    def rotated(self, rot: np.ndarray) -> "EnvironmentLight":
        """Re-express the light in a camera frame rotated by ``rot``.

        Directional lights rotate exactly; lat-long maps are resampled
        bilinearly (with azimuthal wrap).
        """
        if self.latlong is None:
            return EnvironmentLight(directions=self.directions @ rot.T,
                                    intensities=self.intensities)
        env = self.latlong
        h, w = env.height, env.width
        theta = (np.arange(h) + 0.5) * np.pi / h
        phi = (np.arange(w) + 0.5) * 2.0 * np.pi / w - np.pi
        sin_t = np.sin(theta)
        dirs = np.stack(
            [
                sin_t[:, None] * np.sin(phi)[None, :],
                np.cos(theta)[:, None] * np.ones(w)[None, :],
                sin_t[:, None] * np.cos(phi)[None, :],
            ],
            axis=-1,
        )
        # L_out(d) = L_in(rot^T d)
        src = dirs @ rot
        st = np.arccos(np.clip(src[..., 1], -1.0, 1.0))
        sp = np.arctan2(src[..., 0], src[..., 2])
        fi = st * h / np.pi - 0.5
        fj = (sp + np.pi) * w / (2.0 * np.pi) - 0.5
        i0 = np.floor(fi).astype(np.int64)
        j0 = np.floor(fj).astype(np.int64)
        wi = (fi - i0)[..., None]
        wj = (fj - j0)[..., None]
        i0c = np.clip(i0, 0, h - 1)
        i1c = np.clip(i0 + 1, 0, h - 1)
        j0w = j0 % w
        j1w = (j0 + 1) % w
        p = env.pixels
        out = ((1 - wi) * (1 - wj) * p[i0c, j0w] + (1 - wi) * wj * p[i0c, j1w]
               + wi * (1 - wj) * p[i1c, j0w] + wi * wj * p[i1c, j1w])
        return EnvironmentLight(latlong=RgbImage(out, LINEAR))


@dataclass(frozen=True)
class LightMaps:
    diffuse: RgbImage
    speculars: tuple  # ((exponent, RgbImage), ...)

    def __post_init__(self):
        exps = [s for s, _ in self.speculars]
        if any(b <= a for a, b in zip(exps, exps[1:])):
            raise RelightError("shininess exponents must strictly increase")


@dataclass(frozen=True)
class RelitComposition:
    diffuse_gain: float = 1.0
    specular_gains: tuple = field(default_factory=lambda: (0.25,) * 4)

    def __post_init__(self):
        if self.diffuse_gain < 0 or any(k < 0 for k in self.specular_gains):
            raise RelightError("gains must be nonnegative")


def _latlong_quadrature(env: RgbImage):
    """Texel directions and solid angles for an equirectangular map."""
    h, w = env.height, env.width
    theta = (np.arange(h) + 0.5) * np.pi / h  # polar from +y
    phi = (np.arange(w) + 0.5) * 2.0 * np.pi / w - np.pi  # 0 at map center
    sin_t = np.sin(theta)
    dirs = np.stack(
        [
            sin_t[:, None] * np.sin(phi)[None, :],
            np.cos(theta)[:, None] * np.ones(w)[None, :],
            sin_t[:, None] * np.cos(phi)[None, :],
        ],
        axis=-1,
    ).reshape(-1, 3)
    d_omega = (np.pi / h) * (2.0 * np.pi / w) * sin_t
    d_omega = np.repeat(d_omega, w)
    radiance = env.pixels.reshape(-1, 3)
    return dirs, radiance, d_omega


def _masked_dot(vectors: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Clamped cosine between per-pixel vectors (P, 3) and dirs (L, 3)."""
    return np.maximum(vectors @ dirs.T, 0.0)


# pixel-chunk size bounding the (chunk x texel) cosine matrices
_CHUNK = 4096


def diffuse_map(n: NormalMap, light: EnvironmentLight) -> RgbImage:
    """Lambertian irradiance over the mask; unmasked pixels are zero."""
    out = np.zeros((n.height, n.width, 3))
    vecs = n.normals[n.mask]
    if vecs.size:
        if light.directions is not None:
            cos = _masked_dot(vecs, light.directions)
            out[n.mask] = cos @ light.intensities
        else:
            dirs, radiance, d_omega = _latlong_quadrature(light.latlong)
            weighted = d_omega[:, None] * radiance / np.pi
            acc = np.empty((vecs.shape[0], 3))
            for lo in range(0, vecs.shape[0], _CHUNK):
                cos = _masked_dot(vecs[lo:lo + _CHUNK], dirs)
                acc[lo:lo + _CHUNK] = cos @ weighted
            out[n.mask] = acc
    return RgbImage(out, LINEAR)


def specular_maps(n: NormalMap, light: EnvironmentLight,
                  exponents=DEFAULT_EXPONENTS) -> tuple:
    """Normalized Phong lobes: reflect (0,0,1) about n, raise the clamped
    cosine to each exponent; lat-long lobes carry the (s+1)/2pi factor."""
    if any(s < 1 for s in exponents):
        raise RelightError("shininess exponents must be >= 1")
    h, w = n.height, n.width
    vecs = n.normals[n.mask]
    refl = 2.0 * (vecs @ VIEW_DIR)[:, None] * vecs - VIEW_DIR
    planes = [np.zeros((h, w, 3)) for _ in exponents]
    if refl.size:
        if light.directions is not None:
            cos = _masked_dot(refl, light.directions)
            for j, s in enumerate(exponents):
                planes[j][n.mask] = (cos ** s) @ light.intensities
        else:
            dirs, radiance, d_omega = _latlong_quadrature(light.latlong)
            weighted = d_omega[:, None] * radiance
            accs = [np.empty((refl.shape[0], 3)) for _ in exponents]
            for lo in range(0, refl.shape[0], _CHUNK):
                cos = _masked_dot(refl[lo:lo + _CHUNK], dirs)
                for j, s in enumerate(exponents):
                    accs[j][lo:lo + _CHUNK] = (cos ** s) @ weighted
            for j, s in enumerate(exponents):
                planes[j][n.mask] = accs[j] * ((s + 1.0) / (2.0 * np.pi))
    return tuple((float(s), RgbImage(p, LINEAR))
                 for s, p in zip(exponents, planes))


def light_maps(n: NormalMap, light: EnvironmentLight,
               exponents=DEFAULT_EXPONENTS) -> LightMaps:
    return LightMaps(diffuse_map(n, light), specular_maps(n, light, exponents))


def compose_relit(maps: LightMaps, albedo: RgbImage,
                  comp: RelitComposition | None = None) -> RgbImage:
    """albedo * (kd * diffuse) + sum_j k_j * specular_j, clamped at zero."""
    comp = comp if comp is not None else RelitComposition()
    if len(comp.specular_gains) != len(maps.speculars):
        raise RelightError(
            f"{len(comp.specular_gains)} gains for {len(maps.speculars)} lobes")
    if albedo.color_space != LINEAR:
        raise RelightError("albedo must be linear")
    if albedo.pixels.shape != maps.diffuse.pixels.shape:
        raise RelightError("albedo dimensions do not match light maps")
    out = albedo.pixels * (comp.diffuse_gain * maps.diffuse.pixels)
    for k, (_, smap) in zip(comp.specular_gains, maps.speculars):
        out = out + k * smap.pixels
    return RgbImage(np.maximum(out, 0.0), LINEAR)


def relight_view(fused_view: RenderOutput, albedo_view: RgbImage,
                 light: EnvironmentLight,
                 comp: RelitComposition | None = None,
                 exponents=DEFAULT_EXPONENTS) -> RgbImage:
    """Relight one view from its fused normal map; no per-view re-estimation.

    Inside coverage the relit composition replaces the color; outside, the
    input color passes through unchanged. The caller is responsible for
    expressing ``light`` in this view's camera frame.
    """
    color = fused_view.color
    if color.color_space != LINEAR:
        raise RelightError("fused view color must be linear for relighting")
    if albedo_view.pixels.shape != color.pixels.shape:
        raise RelightError("albedo dimensions do not match the view")
    maps = light_maps(fused_view.normal, light, exponents)
    relit = compose_relit(maps, albedo_view, comp)
    cov = fused_view.coverage.bits
    out = np.where(cov[..., None], relit.pixels, color.pixels)
    return RgbImage(out, LINEAR)
