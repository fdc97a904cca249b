"""Software rasterizer: z-buffered, perspective-correct, deterministic.

Fragments are resolved by (pixel, depth, triangle-id) lexicographic order,
so the output never depends on triangle submission order or batching.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import CameraPose, relative_rotation
from .flow import MotionField
from .mesh import FaceMesh
from .raster import HeightField, Mask, NormalMap, RgbImage, normalize_vectors

_NEAR = 1e-9
_BUCKET_CAP = 64  # bbox edge above this rasterizes triangle-by-triangle


class RenderError(ValueError):
    pass


@dataclass(frozen=True)
class RenderOutput:
    """All layers share dimensions; ``depth`` holds positive camera-frame
    distances for the new view (smaller = nearer)."""

    color: RgbImage
    normal: NormalMap
    depth: HeightField
    coverage: Mask


def _project_mesh(mesh: FaceMesh, ref_cam: CameraPose, new_cam: CameraPose):
    world = ref_cam.camera_to_world(mesh.vertices)
    cam = new_cam.world_to_camera(world)
    u, v, depth = new_cam.project(cam)
    return u, v, depth


def _fragments_for(tri_ids, u, v, depth, tris, width, height):
    """Candidate fragments for a batch of triangles sharing one bbox size."""
    a, b, c = tris[tri_ids, 0], tris[tri_ids, 1], tris[tri_ids, 2]
    x0 = np.maximum(np.ceil(np.minimum.reduce([u[a], u[b], u[c]])), 0).astype(np.int64)
    y0 = np.maximum(np.ceil(np.minimum.reduce([v[a], v[b], v[c]])), 0).astype(np.int64)
    x1 = np.minimum(np.floor(np.maximum.reduce([u[a], u[b], u[c]])), width - 1).astype(np.int64)
    y1 = np.minimum(np.floor(np.maximum.reduce([v[a], v[b], v[c]])), height - 1).astype(np.int64)
    bw = int(np.max(x1 - x0 + 1)) if len(tri_ids) else 0
    bh = int(np.max(y1 - y0 + 1)) if len(tri_ids) else 0
    if bw <= 0 or bh <= 0:
        return None

    ox, oy = np.meshgrid(np.arange(bw), np.arange(bh))
    px = x0[:, None] + ox.ravel()[None, :]  # (T, K)
    py = y0[:, None] + oy.ravel()[None, :]
    in_bbox = (px <= x1[:, None]) & (py <= y1[:, None])

    ax, ay = u[a][:, None], v[a][:, None]
    bx, by = u[b][:, None], v[b][:, None]
    cx, cy = u[c][:, None], v[c][:, None]
    area = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
    e0 = (cx - bx) * (py - by) - (cy - by) * (px - bx)
    e1 = (ax - cx) * (py - cy) - (ay - cy) * (px - cx)
    e2 = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
    safe_area = np.where(np.abs(area) > 1e-12, area, 1.0)
    l0 = e0 / safe_area
    l1 = e1 / safe_area
    l2 = e2 / safe_area
    inside = (
        in_bbox
        & (np.abs(area) > 1e-12)
        & (l0 >= 0.0) & (l1 >= 0.0) & (l2 >= 0.0)
    )
    if not inside.any():
        return None

    t_sel, k_sel = np.nonzero(inside)
    ids = tri_ids[t_sel]
    l0s, l1s, l2s = l0[t_sel, k_sel], l1[t_sel, k_sel], l2[t_sel, k_sel]
    av, bv, cv = a[t_sel], b[t_sel], c[t_sel]
    inv_d = l0s / depth[av] + l1s / depth[bv] + l2s / depth[cv]
    frag_depth = 1.0 / inv_d
    pix = py[t_sel, k_sel] * width + px[t_sel, k_sel]
    weights = np.stack([l0s / depth[av], l1s / depth[bv], l2s / depth[cv]],
                       axis=1) * frag_depth[:, None]
    return pix, frag_depth, ids, np.stack([av, bv, cv], axis=1), weights


def _rasterize(mesh: FaceMesh, ref_cam: CameraPose, new_cam: CameraPose,
               width: int, height: int):
    """Returns (coverage, depth, weights, corner indices) resolved per pixel."""
    u, v, depth = _project_mesh(mesh, ref_cam, new_cam)
    tris = mesh.triangles
    front = np.all(depth[tris] > _NEAR, axis=1)
    candidates = np.nonzero(front)[0]

    frag_parts = []
    if candidates.size:
        a, b, c = tris[candidates].T
        bw = (np.maximum.reduce([u[a], u[b], u[c]])
              - np.minimum.reduce([u[a], u[b], u[c]]))
        bh = (np.maximum.reduce([v[a], v[b], v[c]])
              - np.minimum.reduce([v[a], v[b], v[c]]))
        ext = np.maximum(bw, bh)
        size_class = np.ceil(np.log2(np.maximum(ext, 1.0))).astype(np.int64)
        big = ext > _BUCKET_CAP
        for cls in np.unique(size_class[~big]):
            batch = candidates[~big & (size_class == cls)]
            # keep candidate-fragment tensors bounded
            step = max(1, int(4_000_000 // max(1, 4 ** int(cls))))
            for lo in range(0, batch.size, step):
                out = _fragments_for(batch[lo:lo + step], u, v, depth, tris,
                                     width, height)
                if out is not None:
                    frag_parts.append(out)
        for tid in candidates[big]:
            out = _fragments_for(np.array([tid]), u, v, depth, tris, width, height)
            if out is not None:
                frag_parts.append(out)

    if not frag_parts:
        empty = np.zeros((height, width), bool)
        return empty, np.zeros((height, width)), None, None

    pix = np.concatenate([f[0] for f in frag_parts])
    fdepth = np.concatenate([f[1] for f in frag_parts])
    fids = np.concatenate([f[2] for f in frag_parts])
    corners = np.concatenate([f[3] for f in frag_parts])
    weights = np.concatenate([f[4] for f in frag_parts])

    order = np.lexsort((fids, fdepth, pix))
    pix_sorted = pix[order]
    first = np.ones(pix_sorted.size, bool)
    first[1:] = pix_sorted[1:] != pix_sorted[:-1]
    win = order[first]

    coverage = np.zeros(height * width, bool)
    coverage[pix[win]] = True
    depth_plane = np.zeros(height * width)
    depth_plane[pix[win]] = fdepth[win]
    return (coverage.reshape(height, width), depth_plane.reshape(height, width),
            weights[win], (corners[win], pix[win]))


def _interpolate(corners_pix, weights, attr: np.ndarray, width: int, height: int):
    corners, pix = corners_pix
    vals = (weights[:, :, None] * attr[corners]).sum(axis=1)
    plane = np.zeros((height * width, attr.shape[1]))
    plane[pix] = vals
    return plane.reshape(height, width, attr.shape[1])


def _sample_texture(img: RgbImage, tex: np.ndarray, coverage: np.ndarray,
                    sampling: str) -> np.ndarray:
    h, w = img.pixels.shape[:2]
    out = np.zeros((tex.shape[0], tex.shape[1], 3))
    if sampling == "nearest":
        x = np.clip(np.rint(tex[..., 0]).astype(np.int64), 0, w - 1)
        y = np.clip(np.rint(tex[..., 1]).astype(np.int64), 0, h - 1)
        out[coverage] = img.pixels[y[coverage], x[coverage]]
        return out
    if sampling != "bilinear":
        raise RenderError(f"unknown sampling {sampling!r}")
    x = np.clip(tex[..., 0], 0.0, w - 1.0)
    y = np.clip(tex[..., 1], 0.0, h - 1.0)
    x0 = np.clip(np.floor(x).astype(np.int64), 0, w - 2) if w > 1 else np.zeros_like(x, np.int64)
    y0 = np.clip(np.floor(y).astype(np.int64), 0, h - 2) if h > 1 else np.zeros_like(y, np.int64)
    fx = (x - x0)[..., None]
    fy = (y - y0)[..., None]
    p = img.pixels
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    val = ((1 - fx) * (1 - fy) * p[y0, x0] + fx * (1 - fy) * p[y0, x1]
           + (1 - fx) * fy * p[y1, x0] + fx * fy * p[y1, x1])
    out[coverage] = val[coverage]
    return out


def _render_core(mesh: FaceMesh, ref_image: RgbImage, ref_cam: CameraPose,
                 new_cam: CameraPose, sampling: str, want_flow: bool):
    if mesh.num_triangles == 0:
        raise RenderError("mesh has no triangles")
    if (ref_image.width, ref_image.height) != (mesh.ref_width, mesh.ref_height):
        raise RenderError("reference image does not match mesh texcoord space")
    w, h = new_cam.width, new_cam.height
    coverage, depth, weights, corners_pix = _rasterize(mesh, ref_cam, new_cam, w, h)
    if weights is None:
        color = RgbImage(np.zeros((h, w, 3)), ref_image.color_space)
        out = RenderOutput(color, NormalMap(np.zeros((h, w, 3)), coverage),
                           HeightField(depth, coverage), Mask(coverage))
        flow = MotionField(np.zeros((h, w, 2)), coverage,
                           mesh.ref_width, mesh.ref_height) if want_flow else None
        return out, flow

    tex = _interpolate(corners_pix, weights, mesh.texcoords, w, h)
    nrm = _interpolate(corners_pix, weights, mesh.vertex_normals, w, h)

    rot = relative_rotation(ref_cam, new_cam)
    nrm = nrm @ rot.T
    norms = np.linalg.norm(nrm, axis=2)
    degenerate = coverage & (norms < 1e-8)
    if degenerate.any():
        # fall back to the winning triangle's first vertex normal
        corners, pix = corners_pix
        fallback = np.zeros((h * w, 3))
        fallback[pix] = mesh.vertex_normals[corners[:, 0]] @ rot.T
        nrm[degenerate] = fallback.reshape(h, w, 3)[degenerate]
    nrm = np.where(coverage[..., None], normalize_vectors(nrm), 0.0)

    color_pixels = _sample_texture(ref_image, tex, coverage, sampling)
    out = RenderOutput(
        RgbImage(color_pixels, ref_image.color_space),
        NormalMap(nrm, coverage),
        HeightField(depth, coverage),
        Mask(coverage),
    )
    flow = None
    if want_flow:
        flow = MotionField(np.where(coverage[..., None], tex, 0.0), coverage,
                           mesh.ref_width, mesh.ref_height)
    return out, flow


def render(mesh: FaceMesh, ref_image: RgbImage, ref_cam: CameraPose,
           new_cam: CameraPose, sampling: str = "bilinear") -> RenderOutput:
    """Rasterize the textured mesh into the new view.

    Color is sampled from the reference image at the interpolated texture
    coordinates; normals are the interpolated vertex normals rotated into
    the new camera frame and renormalized.
    """
    out, _ = _render_core(mesh, ref_image, ref_cam, new_cam, sampling, False)
    return out


def render_with_flow(mesh: FaceMesh, ref_image: RgbImage, ref_cam: CameraPose,
                     new_cam: CameraPose, sampling: str = "bilinear"):
    """Render and return the backward motion field from the same raster pass."""
    return _render_core(mesh, ref_image, ref_cam, new_cam, sampling, True)


def mesh_flow(mesh: FaceMesh, ref_cam: CameraPose, new_cam: CameraPose) -> MotionField:
    """Backward correspondence from the new view into the reference image:
    each covered pixel maps to its interpolated texture coordinate."""
    if mesh.num_triangles == 0:
        raise RenderError("mesh has no triangles")
    w, h = new_cam.width, new_cam.height
    coverage, _, weights, corners_pix = _rasterize(mesh, ref_cam, new_cam, w, h)
    if weights is None:
        return MotionField(np.zeros((h, w, 2)), coverage,
                           mesh.ref_width, mesh.ref_height)
    tex = _interpolate(corners_pix, weights, mesh.texcoords, w, h)
    tex = np.where(coverage[..., None], tex, 0.0)
    return MotionField(tex, coverage, mesh.ref_width, mesh.ref_height)
