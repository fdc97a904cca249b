"""Gradient-domain fusion of a source region into a destination raster.

Solves the discrete Poisson equation for the correction f - destination,
with unknowns strictly inside the region and Dirichlet values taken from
the destination. When source and destination agree, the right-hand side is
identically zero and the destination is returned bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.ndimage as ndi
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .raster import Mask, NormalMap, RgbImage, normalize_vectors

_OFFSETS = ((0, 1), (0, -1), (1, 0), (-1, 0))

# regions at least this large solve via a shared sparse LU factorization
_DIRECT_THRESHOLD = 16384


class BlendError(ValueError):
    pass


class BlendConvergenceError(BlendError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (relative residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class BlendRequest:
    destination: "RgbImage | NormalMap"
    source: "RgbImage | NormalMap"
    region: Mask
    gradient_mode: str = "source"  # "source" | "mixed"

    def __post_init__(self):
        dst, src = self.destination, self.source
        if type(dst) is not type(src):
            raise BlendError("source and destination must be the same kind")
        if isinstance(dst, RgbImage) and dst.color_space != src.color_space:
            raise BlendError("source/destination color spaces differ")
        if (dst.width, dst.height) != (src.width, src.height) or \
           (dst.width, dst.height) != (self.region.width, self.region.height):
            raise BlendError("source/destination/region dimensions differ")
        if self.gradient_mode not in ("source", "mixed"):
            raise BlendError(f"unknown gradient mode {self.gradient_mode!r}")
        bits = self.region.bits
        if bits[0, :].any() or bits[-1, :].any() or \
           bits[:, 0].any() or bits[:, -1].any():
            raise BlendError("region must not touch the frame border")


def _planes(value) -> np.ndarray:
    return value.normals if isinstance(value, NormalMap) else value.pixels


def _solve_channel(region: np.ndarray, index: np.ndarray, A: sp.csr_matrix,
                   lu, dest: np.ndarray, src: np.ndarray, mode: str,
                   tol: float):
    """Poisson-solve one channel; returns the full-frame result plane."""
    py, px = np.nonzero(region)
    rhs = np.zeros(py.size)
    div_inf = np.zeros(py.size)
    for dy, dx in _OFFSETS:
        qy, qx = py + dy, px + dx
        gs = src[py, px] - src[qy, qx]
        gd = dest[py, px] - dest[qy, qx]
        v = gs if mode == "source" else np.where(np.abs(gd) > np.abs(gs), gd, gs)
        rhs += v - gd
        div_inf += v
    if not rhs.any():
        return dest.copy()

    b2 = np.linalg.norm(rhs)
    inf_cap = 10.0 * tol * np.max(np.abs(div_inf))

    def converged(res):
        ok2 = np.linalg.norm(res) <= tol * b2
        okinf = np.max(np.abs(res)) <= inf_cap if inf_cap > 0 else ok2
        return ok2 and okinf

    if lu is not None:
        x = lu.solve(rhs)
        if not converged(rhs - A @ x):
            rel = float(np.linalg.norm(rhs - A @ x) / b2)
            raise BlendConvergenceError("direct Poisson solve too inaccurate",
                                        rel)
    else:
        # Jacobi-preconditioned CG; must satisfy both the relative 2-norm
        # bound and the interior infinity-norm certificate.
        x = np.zeros_like(rhs)
        r = rhs.copy()
        z = 0.25 * r
        d = z.copy()
        rz = float(r @ z)
        max_iter = 20 * (region.shape[0] + region.shape[1]) + 200
        done = False
        for _ in range(max_iter):
            if converged(r):
                done = True
                break
            Ad = A @ d
            alpha = rz / float(d @ Ad)
            x = x + alpha * d
            r = r - alpha * Ad
            z = 0.25 * r
            rz_new = float(r @ z)
            d = z + (rz_new / rz) * d
            rz = rz_new
        if not done and not converged(rhs - A @ x):
            rel = float(np.linalg.norm(rhs - A @ x) / b2)
            raise BlendConvergenceError("Poisson blend failed to converge", rel)

    out = dest.copy()
    out[py, px] += x
    return out


def _laplacian(region: np.ndarray, index: np.ndarray) -> sp.csr_matrix:
    py, px = np.nonzero(region)
    n = py.size
    rows = [np.arange(n)]
    cols = [np.arange(n)]
    vals = [np.full(n, 4.0)]
    for dy, dx in _OFFSETS:
        qy, qx = py + dy, px + dx
        inside = region[qy, qx]
        rows.append(np.nonzero(inside)[0])
        cols.append(index[qy[inside], qx[inside]])
        vals.append(np.full(int(inside.sum()), -1.0))
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    )


def blend(req: BlendRequest, tol: float = 1e-8):
    """Fuse the source's gradients into the destination inside the region.

    Returns the same kind as the destination. Output is bit-identical to
    the destination outside the region; the region boundary is Dirichlet.
    Normal maps blend component-wise and renormalize; the result mask is
    the destination mask united with the region.
    """
    if tol <= 0:
        raise BlendError("tol must be positive")
    region = req.region.bits
    if not region.any():
        raise BlendError("region is empty")
    index = np.full(region.shape, -1, dtype=np.int64)
    index[region] = np.arange(int(region.sum()))
    A = _laplacian(region, index)
    # one LU factorization serves all three channels on large regions
    lu = spla.splu(A.tocsc()) if A.shape[0] >= _DIRECT_THRESHOLD else None

    dst = _planes(req.destination)
    src = _planes(req.source)
    out = np.stack(
        [
            _solve_channel(region, index, A, lu, dst[..., ch], src[..., ch],
                           req.gradient_mode, tol)
            for ch in range(3)
        ],
        axis=-1,
    )
    if isinstance(req.destination, NormalMap):
        mask = req.destination.mask | region
        vec = normalize_vectors(out)
        lengths = np.linalg.norm(out, axis=2)
        mask = mask & (lengths > 1e-6)
        vec = np.where(mask[..., None], vec, 0.0)
        return NormalMap(vec, mask)
    return RgbImage(out, req.destination.color_space)


def face_region(coverage: Mask, erode_r: int = 2) -> Mask:
    """Shrink a coverage mask into a safe blend region: erode by ``erode_r``
    (3x3 structuring element) and clear frame-border pixels."""
    if erode_r < 1:
        raise BlendError("erode_r must be >= 1")
    bits = ndi.binary_erosion(coverage.bits, structure=np.ones((3, 3), bool),
                              iterations=erode_r, border_value=0)
    bits = bits.copy()
    bits[0, :] = False
    bits[-1, :] = False
    bits[:, 0] = False
    bits[:, -1] = False
    if not bits.any():
        raise BlendError("erosion emptied the region")
    return Mask(bits)
