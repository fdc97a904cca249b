import numpy as np
import pytest

from narrate.fixtures import (
    camera_grid,
    cylinder_field,
    normals_from_height,
    portrait_fixture,
    sphere_cap,
)
from narrate.raster import LINEAR, NormalMap, RgbImage, normalize_vectors

__all__ = [
    "camera_grid",
    "cylinder_field",
    "normals_from_height",
    "portrait_fixture",
    "sphere_cap",
]


def slanted_plane_normals(size: int, angle_deg: float, axis: str = "x") -> NormalMap:
    theta = np.radians(angle_deg)
    if axis == "x":
        n = np.array([-np.sin(theta), 0.0, np.cos(theta)])
    else:
        n = np.array([0.0, -np.sin(theta), np.cos(theta)])
    normals = np.broadcast_to(n, (size, size, 3)).copy()
    return NormalMap(normals, np.ones((size, size), bool))


def random_unit_normals(rng, size: int, frontal: bool = False) -> NormalMap:
    vec = rng.normal(size=(size, size, 3))
    if frontal:
        vec[..., 2] = np.abs(vec[..., 2]) + 0.5
    vec = normalize_vectors(vec)
    zero = np.linalg.norm(vec, axis=2) < 0.5
    vec[zero] = np.array([0.0, 0.0, 1.0])
    return NormalMap(vec, np.ones((size, size), bool))


def random_linear_image(rng, h: int, w: int, lo: float = 0.05,
                        hi: float = 1.0) -> RgbImage:
    return RgbImage(rng.uniform(lo, hi, size=(h, w, 3)), LINEAR)


def sphere_scene(size: int = 256, mask_radius: float = 120.0,
                 sphere_radius: float = 128.0):
    """Sphere-cap mesh lifted at metric scale so the world surface is a true
    spherical cap. Returns (normals, height, mesh, cam, texture)."""
    from narrate.camera import CameraPose
    from narrate.mesh import build_mesh

    normals, height = sphere_cap(size, mask_radius, sphere_radius)
    cam = CameraPose(width=size, height=size)
    scale = cam.radius / cam.focal
    mesh = build_mesh(height, normals, cam, edge_jump=4.0, scale=scale)
    texture, _, _, _ = portrait_fixture(size)
    return normals, height, mesh, cam, texture


def analytic_sphere_normals_at(xs: np.ndarray, ys: np.ndarray, size: int,
                               sphere_radius: float) -> np.ndarray:
    """Continuous sphere-cap normal at fractional source-pixel coords."""
    c = (size - 1) / 2.0
    x = xs - c
    y = c - ys
    z = np.sqrt(np.maximum(sphere_radius ** 2 - x * x - y * y, 0.0))
    return np.stack([x, y, z], axis=-1) / sphere_radius


@pytest.fixture
def rng():
    return np.random.default_rng(20260808)
