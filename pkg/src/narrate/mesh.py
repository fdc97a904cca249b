"""Textured face mesh built by lifting a height field through a camera."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import CameraPose
from .raster import HeightField, NormalMap


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class FaceMesh:
    """Triangle mesh in the reference camera frame.

    ``texcoords`` are reference-image pixel coordinates (x=column, y=row);
    ``ref_width``/``ref_height`` record the reference image size they index.
    """

    vertices: np.ndarray  # (N, 3)
    triangles: np.ndarray  # (M, 3) int
    texcoords: np.ndarray  # (N, 2)
    vertex_normals: np.ndarray  # (N, 3)
    ref_width: int
    ref_height: int

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        t = np.asarray(self.triangles, dtype=np.int64)
        tc = np.asarray(self.texcoords, dtype=np.float64)
        vn = np.asarray(self.vertex_normals, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise MeshError("vertices must be (N, 3)")
        if t.ndim != 2 or t.shape[1] != 3:
            raise MeshError("triangles must be (M, 3)")
        if tc.shape != (v.shape[0], 2) or vn.shape != v.shape:
            raise MeshError("texcoords/vertex_normals do not match vertices")
        if t.size and (t.min() < 0 or t.max() >= v.shape[0]):
            raise MeshError("triangle indices out of range")
        if tc.size and (
            tc[:, 0].min() < -0.5 or tc[:, 0].max() > self.ref_width - 0.5
            or tc[:, 1].min() < -0.5 or tc[:, 1].max() > self.ref_height - 0.5
        ):
            raise MeshError("texcoords outside reference image bounds")
        norms = np.linalg.norm(vn, axis=1)
        if vn.size and np.max(np.abs(norms - 1.0)) > 1e-3:
            raise MeshError("vertex normals must be unit length")
        for name, arr in (("vertices", v), ("triangles", t),
                          ("texcoords", tc), ("vertex_normals", vn)):
            arr = np.ascontiguousarray(arr)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_triangles(self) -> int:
        return self.triangles.shape[0]


def build_mesh(height: HeightField, normals: NormalMap, ref_cam: CameraPose,
               edge_jump: float = 3.0, scale: float | None = None) -> FaceMesh:
    """Lift each masked pixel to the 3-D point that projects back onto it.

    A pixel at height z sits at camera depth radius - scale * z, so larger
    heights are nearer the viewer. ``scale`` converts height units to world
    units; by default the mask's bounding-box width spans 1.0 world unit.
    Quad cells split into two triangles; any triangle whose height spread
    exceeds ``edge_jump`` (same units as z) is dropped as a discontinuity.
    """
    if edge_jump <= 0:
        raise MeshError("edge_jump must be positive")
    mask = height.mask
    if not np.array_equal(mask, normals.mask):
        raise MeshError("height and normal masks differ")
    if not mask.any():
        raise MeshError("mask is empty")
    ys, xs = np.nonzero(mask)
    if scale is None:
        bbox_w = xs.max() - xs.min() + 1
        scale = 1.0 / float(bbox_w)

    index = np.full(mask.shape, -1, dtype=np.int64)
    index[mask] = np.arange(len(xs))

    z = height.z[mask]
    depth = ref_cam.radius - scale * z
    if np.any(depth <= 0):
        raise MeshError("height relief reaches the camera; reduce scale")
    verts = ref_cam.unproject(xs.astype(np.float64), ys.astype(np.float64), depth)
    texcoords = np.stack([xs, ys], axis=1).astype(np.float64)
    vnormals = normals.normals[mask]

    tris = []
    h, w = mask.shape
    i00 = index[:-1, :-1]
    i01 = index[:-1, 1:]
    i10 = index[1:, :-1]
    i11 = index[1:, 1:]
    m00, m01, m10, m11 = i00 >= 0, i01 >= 0, i10 >= 0, i11 >= 0

    def emit(ia, ib, ic, cell_ok):
        sel = np.nonzero(cell_ok)
        a, b, c = ia[sel], ib[sel], ic[sel]
        za, zb, zc = z[a], z[b], z[c]
        spread = np.maximum(za, np.maximum(zb, zc)) - np.minimum(za, np.minimum(zb, zc))
        keep = spread <= edge_jump
        tris.append(np.stack([a[keep], b[keep], c[keep]], axis=1))

    full = m00 & m01 & m10 & m11
    emit(i00, i10, i01, full)
    emit(i01, i10, i11, full)
    # three-corner cells keep their single triangle for cleaner silhouettes
    emit(i00, i10, i01, m00 & m10 & m01 & ~m11)
    emit(i00, i10, i11, m00 & m10 & m11 & ~m01)
    emit(i00, i11, i01, m00 & m11 & m01 & ~m10)
    emit(i01, i10, i11, m01 & m10 & m11 & ~m00)

    triangles = np.concatenate(tris, axis=0) if tris else np.zeros((0, 3), np.int64)
    return FaceMesh(verts, triangles, texcoords, vnormals, w, h)


def export_obj(mesh: FaceMesh, path: str) -> None:
    """Wavefront OBJ with v/vt/vn/f records; texcoords normalized to [0, 1]."""
    if mesh.num_vertices == 0 or mesh.num_triangles == 0:
        raise MeshError("cannot export an empty mesh")
    lines = []
    for x, y, zc in mesh.vertices:
        lines.append(f"v {x:.6f} {y:.6f} {zc:.6f}")
    for tx, ty in mesh.texcoords:
        u = (tx + 0.5) / mesh.ref_width
        v = 1.0 - (ty + 0.5) / mesh.ref_height
        lines.append(f"vt {u:.6f} {v:.6f}")
    for nx, ny, nz in mesh.vertex_normals:
        lines.append(f"vn {nx:.6f} {ny:.6f} {nz:.6f}")
    for a, b, c in mesh.triangles + 1:
        lines.append(f"f {a}/{a}/{a} {b}/{b}/{b} {c}/{c}/{c}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
