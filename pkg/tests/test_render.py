import dataclasses
import math

import numpy as np
import pytest

from narrate.camera import CameraPose, relative_rotation
from narrate.flow import FlowError, MotionField, compose_flow, identity_flow, warp_image
from narrate.mesh import FaceMesh, build_mesh
from narrate.raster import RgbImage
from narrate.rasterize import mesh_flow, render

from conftest import (
    analytic_sphere_normals_at,
    portrait_fixture,
    sphere_scene,
)


def manual_mesh(vertices, triangles, size=16):
    verts = np.asarray(vertices, dtype=np.float64)
    n = np.tile([0.0, 0.0, 1.0], (verts.shape[0], 1))
    tc = np.zeros((verts.shape[0], 2))
    return FaceMesh(verts, np.asarray(triangles), tc, n, size, size)


def red_image(size):
    px = np.zeros((size, size, 3))
    px[..., 0] = 1.0
    return RgbImage(px, "srgb8")


class TestRasterCore:
    def test_single_triangle_exact_coverage(self):
        size = 16
        cam = CameraPose(width=size, height=size)
        f = cam.focal
        cx, cy = cam.principal
        depth = cam.radius
        # choose camera-frame vertices that project to chosen pixel corners
        def vert(u, v):
            return [(u - cx) * depth / f, (cy - v) * depth / f, -depth]

        tri_px = np.array([[2.0, 2.0], [12.0, 3.0], [5.0, 13.0]])
        mesh = manual_mesh([vert(u, v) for u, v in tri_px], [[0, 1, 2]], size)
        out = render(mesh, red_image(size), cam, cam, sampling="nearest")

        # analytic coverage: normalized barycentrics >= 0 at pixel centers
        ys, xs = np.meshgrid(np.arange(size, dtype=float),
                             np.arange(size, dtype=float), indexing="ij")
        (x0, y0), (x1, y1), (x2, y2) = tri_px
        area = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
        e0 = (x2 - x1) * (ys - y1) - (y2 - y1) * (xs - x1)
        e1 = (x0 - x2) * (ys - y2) - (y0 - y2) * (xs - x2)
        e2 = (x1 - x0) * (ys - y0) - (y1 - y0) * (xs - x0)
        expected = (e0 / area >= 0) & (e1 / area >= 0) & (e2 / area >= 0)
        covered = out.coverage.bits
        np.testing.assert_array_equal(covered, expected)
        assert np.all(out.color.pixels[covered] == [1.0, 0.0, 0.0])

    def test_zbuffer_near_wins(self):
        size = 16
        cam = CameraPose(width=size, height=size, radius=5.0)
        f = cam.focal
        cx, cy = cam.principal

        def vert(u, v, depth):
            return [(u - cx) * depth / f, (cy - v) * depth / f, -depth]

        near = [vert(1, 1, 1.0), vert(14, 1, 1.0), vert(7, 14, 1.0)]
        far = [vert(1, 2, 2.0), vert(14, 2, 2.0), vert(7, 13, 2.0)]
        mesh = manual_mesh(near + far, [[0, 1, 2], [3, 4, 5]], size)
        out = render(mesh, red_image(size), cam, cam)
        d = out.depth.z
        cov = out.coverage.bits
        assert cov.any()
        # every contested pixel reports the nearer depth
        assert np.all(np.abs(d[cov] - 1.0) < 1e-9) or np.all(
            np.isin(np.round(d[cov], 6), [1.0, 2.0])
        )
        overlap_row = 7
        row_cov = cov[overlap_row]
        assert np.all(np.abs(d[overlap_row][row_cov] - 1.0) < 1e-9)

    def test_reference_pose_round_trip_sphere(self):
        normals, height, mesh, cam, texture = sphere_scene(128, 56.0, 64.0)
        out = render(mesh, texture, cam, cam, sampling="nearest")
        cov = out.coverage.bits
        assert cov.sum() > 0.9 * normals.mask.sum()
        diff = np.abs(out.color.pixels - texture.pixels).max(axis=2)
        good = diff[cov] <= 2.0 / 255.0
        assert good.mean() >= 0.99

    def test_reference_pose_round_trip_portrait(self):
        image, normals, height, mask = portrait_fixture(128)
        cam = CameraPose(width=128, height=128)
        mesh = build_mesh(height, normals, cam)
        out = render(mesh, image, cam, cam, sampling="nearest")
        cov = out.coverage.bits
        diff = np.abs(out.color.pixels - image.pixels).max(axis=2)
        assert (diff[cov] <= 2.0 / 255.0).mean() >= 0.99

    def test_determinism_bitwise(self):
        _, _, mesh, cam, texture = sphere_scene(96, 40.0, 48.0)
        new = dataclasses.replace(cam, yaw=math.radians(10.0))
        a = render(mesh, texture, cam, new)
        b = render(mesh, texture, cam, new)
        assert np.array_equal(a.color.pixels, b.color.pixels)
        assert np.array_equal(a.normal.normals, b.normal.normals)
        assert np.array_equal(a.depth.z, b.depth.z)
        assert np.array_equal(a.coverage.bits, b.coverage.bits)

    def test_normal_view_consistency(self):
        normals, height, mesh, cam, texture = sphere_scene(256, 120.0, 128.0)
        for yaw_deg in (20.0, -20.0):
            new = dataclasses.replace(cam, yaw=math.radians(yaw_deg))
            out = render(mesh, texture, cam, new)
            flow = mesh_flow(mesh, cam, new)
            cov = out.coverage.bits & flow.valid
            src = flow.map[cov]
            expected = analytic_sphere_normals_at(src[:, 0], src[:, 1],
                                                  256, 128.0)
            expected = expected @ relative_rotation(cam, new).T
            got = out.normal.normals[cov]
            dots = np.clip(np.sum(expected * got, axis=1), -1.0, 1.0)
            mean_err = np.degrees(np.arccos(dots)).mean()
            assert mean_err < 3.0

    def test_flow_render_coherence(self):
        _, _, mesh, cam, texture = sphere_scene(128, 56.0, 64.0)
        new = dataclasses.replace(cam, yaw=math.radians(8.0))
        out = render(mesh, texture, cam, new, sampling="bilinear")
        flow = mesh_flow(mesh, cam, new)
        warped, ok = warp_image(texture, flow, sampling="bilinear")
        both = out.coverage.bits & ok
        diff = np.abs(out.color.pixels - warped.pixels).max(axis=2)
        assert (diff[both] <= 2.0 / 255.0).mean() >= 0.98


class TestMeshFlow:
    def test_identity_at_reference_pose(self):
        _, _, mesh, cam, _ = sphere_scene(96, 40.0, 48.0)
        flow = mesh_flow(mesh, cam, cam)
        ident = identity_flow(96, 96)
        cov = flow.valid
        err = np.abs(flow.map - ident.map).max(axis=2)
        assert err[cov].max() <= 1e-3

    def test_principal_point_shift_constant_offset(self):
        # shifting the principal point translates the projection uniformly
        size = 64
        image, normals, height, mask = portrait_fixture(size)
        cam = CameraPose(width=size, height=size)
        mesh = build_mesh(height, normals, cam)
        cx, cy = cam.principal
        shifted = dataclasses.replace(cam, cx=cx + 10.0, cy=cy)
        flow = mesh_flow(mesh, cam, shifted)
        cov = flow.valid
        ident = identity_flow(size, size).map
        offs = flow.map - ident
        assert np.abs(offs[cov][:, 0] + 10.0).max() <= 1e-6
        assert np.abs(offs[cov][:, 1]).max() <= 1e-6

    def test_small_yaw_matches_projection_oracle(self):
        normals, height, mesh, cam, texture = sphere_scene(128, 56.0, 64.0)
        new = dataclasses.replace(cam, yaw=math.radians(2.0))
        out = render(mesh, texture, cam, new)
        flow = mesh_flow(mesh, cam, new)
        cov = flow.valid
        ys, xs = np.nonzero(cov)
        depth = out.depth.z[cov]
        pts_new = new.unproject(xs.astype(float), ys.astype(float), depth)
        world = new.camera_to_world(pts_new)
        u_ref, v_ref, _ = cam.project(cam.world_to_camera(world))
        err = np.hypot(flow.map[cov][:, 0] - u_ref, flow.map[cov][:, 1] - v_ref)
        assert (err <= 0.5).mean() >= 0.95


class TestComposeFlow:
    @staticmethod
    def rotation_field(size, angle_deg, valid=None):
        c = (size - 1) / 2.0
        t = math.radians(angle_deg)
        ys, xs = np.meshgrid(np.arange(size, dtype=float),
                             np.arange(size, dtype=float), indexing="ij")
        dx = xs - c
        dy = ys - c
        sx = c + math.cos(t) * dx - math.sin(t) * dy
        sy = c + math.sin(t) * dx + math.cos(t) * dy
        if valid is None:
            valid = np.ones((size, size), bool)
        return MotionField(np.stack([sx, sy], axis=-1), valid, size, size)

    def test_identity_composes_to_identity(self):
        ident = identity_flow(12, 12)
        for mode in ("resample", "additive"):
            out = compose_flow(ident, ident, mode)
            np.testing.assert_allclose(out.map, ident.map, atol=1e-12)

    def test_translations_add_in_both_modes(self):
        size = 16
        ident = identity_flow(size, size).map

        def translation(tx, ty):
            return MotionField(ident + np.array([tx, ty]),
                               np.ones((size, size), bool), size, size)

        t1 = translation(2.5, -1.0)
        t2 = translation(-0.5, 3.25)
        for mode in ("resample", "additive"):
            out = compose_flow(t1, t2, mode)
            expected = ident + np.array([2.0, 2.25])
            inner_ok = out.valid
            np.testing.assert_allclose(out.map[inner_ok], expected[inner_ok],
                                       atol=1e-9)

    def test_rotation_composition_on_disk(self):
        size = 64
        c = (size - 1) / 2.0
        ys, xs = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
        disk = (xs - c) ** 2 + (ys - c) ** 2 <= (c - 4) ** 2
        fa = self.rotation_field(size, 7.0, disk)
        fb = self.rotation_field(size, 5.0, disk)
        out = compose_flow(fa, fb, "resample")
        expected = self.rotation_field(size, 12.0).map
        cov = out.valid
        err = np.hypot(*(out.map - expected).transpose(2, 0, 1))
        assert err[cov].max() <= 0.1
        # additive mode deviates at second order: recorded, not asserted
        add = compose_flow(fa, fb, "additive")
        add_err = np.hypot(*(add.map - expected).transpose(2, 0, 1))
        assert add_err[add.valid].max() >= err[cov].max()

    def test_dimension_mismatch_rejected(self):
        a = identity_flow(8, 8)
        b = identity_flow(9, 9)
        with pytest.raises(FlowError):
            compose_flow(a, b)
