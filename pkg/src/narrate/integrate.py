"""Height-field reconstruction from a normal map by screened Poisson integration.

Minimizes sum over mask edges of (z_v - z_u - t_uv)^2 plus
lambda * sum_i w_i (z_i - d_i)^2 over sparse depth priors, with natural
boundary conditions at the mask edge. Grid axes follow the camera frame:
x right (columns), y up, so row index runs against +y.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.ndimage as ndi
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .raster import HeightField, Mask, NormalMap


class IntegrationError(ValueError):
    pass


class ConvergenceError(IntegrationError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (relative residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class DepthPrior:
    """Sparse depth anchors: arrays of pixel x (column), y (row), depth, weight."""

    x: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.intp))
    y: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.intp))
    depth: np.ndarray = field(default_factory=lambda: np.zeros(0))
    weight: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.intp)
        y = np.asarray(self.y, dtype=np.intp)
        d = np.asarray(self.depth, dtype=np.float64)
        w = np.asarray(self.weight, dtype=np.float64)
        if not (x.shape == y.shape == d.shape == w.shape) or x.ndim != 1:
            raise IntegrationError("prior arrays must be 1-d and equally sized")
        if w.size and np.min(w) < 0:
            raise IntegrationError("prior weights must be nonnegative")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "depth", d)
        object.__setattr__(self, "weight", w)

    def __len__(self) -> int:
        return self.x.size

    @staticmethod
    def empty() -> "DepthPrior":
        return DepthPrior()

    @staticmethod
    def from_points(points) -> "DepthPrior":
        """Build from an iterable of (x, y, depth, weight) tuples."""
        if not points:
            return DepthPrior()
        arr = np.asarray(points, dtype=np.float64)
        return DepthPrior(arr[:, 0].astype(np.intp), arr[:, 1].astype(np.intp),
                          arr[:, 2], arr[:, 3])


@dataclass(frozen=True)
class IntegrationConfig:
    prior_weight: float = 1.0
    nz_threshold: float = 0.1
    solver: str = "cg"  # "cg" | "direct"
    cg_tol: float = 1e-8
    cg_max_iter: int | None = None  # default 10 * (width + height)
    gauge: str = "mean_zero"  # "mean_zero" | "prior_anchored"

    def __post_init__(self):
        if not (0.0 < self.nz_threshold < 1.0):
            raise IntegrationError("nz_threshold must lie in (0, 1)")
        if self.prior_weight < 0:
            raise IntegrationError("prior_weight must be nonnegative")
        if self.cg_tol <= 0:
            raise IntegrationError("cg_tol must be positive")
        if self.solver not in ("cg", "direct"):
            raise IntegrationError(f"unknown solver {self.solver!r}")
        if self.gauge not in ("mean_zero", "prior_anchored"):
            raise IntegrationError(f"unknown gauge {self.gauge!r}")


def gradients_from_normals(n: NormalMap, tau: float = 0.1):
    """Target gradients p = -nx/nz, q = -ny/nz on the mask.

    Pixels with nz < tau are flagged in the returned clamped mask and get
    zero placeholder gradients; they contribute no data terms downstream.
    Returns (p, q, clamped) as (H, W) arrays.
    """
    if not n.mask.any():
        raise IntegrationError("normal map mask is empty")
    nz = n.normals[..., 2]
    clamped = n.mask & (nz < tau)
    ok = n.mask & ~clamped
    safe_nz = np.where(ok, nz, 1.0)
    p = np.where(ok, -n.normals[..., 0] / safe_nz, 0.0)
    q = np.where(ok, -n.normals[..., 1] / safe_nz, 0.0)
    return p, q, clamped


def discontinuity_pixels(n: NormalMap, tau: float = 0.1) -> Mask:
    """Pixels needing depth priors: grazing-normal zones (dilated by one)
    united with the one-pixel inner ring of the integration mask."""
    if not n.mask.any():
        raise IntegrationError("normal map mask is empty")
    nz = n.normals[..., 2]
    grazing = n.mask & (nz < tau)
    grown = ndi.binary_dilation(grazing, structure=np.ones((3, 3), bool))
    ring = n.mask & ~ndi.binary_erosion(
        n.mask, structure=np.ones((3, 3), bool), border_value=0
    )
    return Mask((grown & n.mask) | ring)


def _build_edges(mask: np.ndarray, usable: np.ndarray, p: np.ndarray, q: np.ndarray,
                 index: np.ndarray):
    """Forward-difference edges with midpoint-sampled targets.

    An edge contributes only when both endpoints are masked and neither is
    clamped; z targets: z(right) - z(left) = (p_u + p_v)/2 and, because row
    index runs against camera +y, z(below) - z(above) = -(q_u + q_v)/2.
    """
    rows = []
    cols = []
    vals = []
    targets = []
    # horizontal: u=(r,c), v=(r,c+1)
    hu = usable[:, :-1] & usable[:, 1:]
    uu = index[:, :-1][hu]
    vv = index[:, 1:][hu]
    t = 0.5 * (p[:, :-1][hu] + p[:, 1:][hu])
    rows.append(uu)
    cols.append(vv)
    targets.append(t)
    # vertical: u=(r,c), v=(r+1,c)
    vu = usable[:-1, :] & usable[1:, :]
    uu2 = index[:-1, :][vu]
    vv2 = index[1:, :][vu]
    t2 = -0.5 * (q[:-1, :][vu] + q[1:, :][vu])
    rows.append(uu2)
    cols.append(vv2)
    targets.append(t2)

    u_idx = np.concatenate(rows)
    v_idx = np.concatenate(cols)
    t_all = np.concatenate(targets)
    ne = u_idx.size
    nun = int(mask.sum())
    # G: one row per edge, -1 at u, +1 at v
    g_rows = np.repeat(np.arange(ne), 2)
    g_cols = np.stack([u_idx, v_idx], axis=1).ravel()
    g_vals = np.tile(np.array([-1.0, 1.0]), ne)
    G = sp.csr_matrix((g_vals, (g_rows, g_cols)), shape=(ne, nun))
    return G, t_all


def _assemble(n: NormalMap, prior: DepthPrior, cfg: IntegrationConfig):
    mask = n.mask
    p, q, clamped = gradients_from_normals(n, cfg.nz_threshold)
    usable = mask & ~clamped
    index = np.full(mask.shape, -1, dtype=np.int64)
    index[mask] = np.arange(int(mask.sum()))

    G, t = _build_edges(mask, usable, p, q, index)
    A = (G.T @ G).tocsr()
    b = G.T @ t

    lam = cfg.prior_weight
    if len(prior) and lam > 0:
        if np.any(prior.x < 0) or np.any(prior.x >= mask.shape[1]) or \
           np.any(prior.y < 0) or np.any(prior.y >= mask.shape[0]) or \
           not np.all(mask[prior.y, prior.x]):
            raise IntegrationError("prior pixels must lie inside the mask")
        rows = index[prior.y, prior.x]
        wdiag = np.zeros(A.shape[0])
        np.add.at(wdiag, rows, lam * prior.weight)
        A = A + sp.diags(wdiag)
        np.add.at(b, rows, lam * prior.weight * prior.depth)
    return A.tocsr(), b, index, mask


def _jacobi_cg(A: sp.csr_matrix, b: np.ndarray, tol: float, max_iter: int):
    """Jacobi-preconditioned CG; deterministic (fixed reduction order)."""
    diag = A.diagonal()
    inv_d = 1.0 / np.where(diag > 0, diag, 1.0)
    x = np.zeros_like(b)
    r = b - A @ x
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return x, 0.0
    z = inv_d * r
    d = z.copy()
    rz = float(r @ z)
    for _ in range(max_iter):
        if np.linalg.norm(r) <= tol * bnorm:
            return x, float(np.linalg.norm(r) / bnorm)
        Ad = A @ d
        dAd = float(d @ Ad)
        if dAd <= 0:
            break
        alpha = rz / dAd
        x = x + alpha * d
        r = r - alpha * Ad
        z = inv_d * r
        rz_new = float(r @ z)
        d = z + (rz_new / rz) * d
        rz = rz_new
    rel = float(np.linalg.norm(b - A @ x) / bnorm)
    if rel <= tol:
        return x, rel
    raise ConvergenceError("conjugate gradient failed to converge", rel)


def _solve_direct(A: sp.csr_matrix, b: np.ndarray, deficient_labels, labels_flat):
    """Sparse direct solve; gauge-deficient components get one pixel grounded."""
    n_unknowns = A.shape[0]
    keep = np.ones(n_unknowns, dtype=bool)
    for lbl in deficient_labels:
        members = np.nonzero(labels_flat == lbl)[0]
        keep[members[0]] = False
    if keep.all():
        return spla.spsolve(A.tocsc(), b)
    sub = A[keep][:, keep].tocsc()
    x = np.zeros(n_unknowns)
    x[keep] = spla.spsolve(sub, b[keep])
    return x


def integrate(n: NormalMap, prior: DepthPrior | None = None,
              cfg: IntegrationConfig | None = None) -> HeightField:
    """Solve the screened Poisson system and return the height field.

    Disconnected mask components are handled independently; components with
    no effective prior mass are gauge-deficient and get the mean-zero rule
    (prior_anchored requires lambda > 0 and at least one prior).
    """
    prior = prior if prior is not None else DepthPrior.empty()
    cfg = cfg if cfg is not None else IntegrationConfig()
    if cfg.gauge == "prior_anchored" and (cfg.prior_weight == 0 or len(prior) == 0):
        raise IntegrationError("prior_anchored gauge needs lambda > 0 and priors")

    A, b, index, mask = _assemble(n, prior, cfg)
    labels, n_comp = ndi.label(mask, structure=np.array([[0, 1, 0],
                                                         [1, 1, 1],
                                                         [0, 1, 0]]))
    labels_flat = labels[mask]

    # components whose total prior mass is zero keep a free constant
    prior_mass = np.zeros(n_comp + 1)
    if len(prior) and cfg.prior_weight > 0:
        np.add.at(prior_mass, labels[prior.y, prior.x], prior.weight)
    deficient = [lbl for lbl in range(1, n_comp + 1) if prior_mass[lbl] == 0.0]

    max_iter = cfg.cg_max_iter
    if max_iter is None:
        max_iter = 10 * (mask.shape[0] + mask.shape[1])

    if cfg.solver == "direct":
        x = _solve_direct(A, b, deficient, labels_flat)
    else:
        x, _ = _jacobi_cg(A, b, cfg.cg_tol, max_iter)

    for lbl in deficient:
        members = labels_flat == lbl
        x[members] -= x[members].mean()

    z = np.zeros(mask.shape)
    z[mask] = x
    return HeightField(z, mask)
