"""Brute-force reference implementations used only as test oracles.

Everything here is written with plain loops and dense linear algebra,
independent of the library's sparse/vectorized code paths.
"""

import math

import numpy as np


def dense_integration_solve(normals, mask, prior_pts, lam, tau):
    """Assemble the screened-Poisson normal equations by explicit loops and
    solve densely. prior_pts: list of (x, y, depth, weight).

    Returns the height grid; components without prior mass get their mean
    removed (matching the mean-zero gauge).
    """
    h, w = mask.shape
    idx = -np.ones((h, w), dtype=int)
    order = []
    for r in range(h):
        for c in range(w):
            if mask[r, c]:
                idx[r, c] = len(order)
                order.append((r, c))
    n = len(order)

    def usable(r, c):
        return mask[r, c] and normals[r, c, 2] >= tau

    rows = []
    rhs = []
    for r in range(h):
        for c in range(w):
            if not usable(r, c):
                continue
            nx, ny, nz = normals[r, c]
            p = -nx / nz
            q = -ny / nz
            if c + 1 < w and usable(r, c + 1):
                nx2, ny2, nz2 = normals[r, c + 1]
                p2 = -nx2 / nz2
                row = np.zeros(n)
                row[idx[r, c]] = -1.0
                row[idx[r, c + 1]] = 1.0
                rows.append(row)
                rhs.append(0.5 * (p + p2))
            if r + 1 < h and usable(r + 1, c):
                nx2, ny2, nz2 = normals[r + 1, c]
                q2 = -ny2 / nz2
                row = np.zeros(n)
                row[idx[r, c]] = -1.0
                row[idx[r + 1, c]] = 1.0
                rows.append(row)
                rhs.append(-0.5 * (q + q2))
    G = np.array(rows) if rows else np.zeros((0, n))
    t = np.array(rhs) if rhs else np.zeros(0)
    A = G.T @ G
    b = G.T @ t
    for (x, y, d, wgt) in prior_pts:
        j = idx[int(y), int(x)]
        A[j, j] += lam * wgt
        b[j] += lam * wgt * d

    z = np.linalg.lstsq(A, b, rcond=None)[0]

    # per-component gauge, 4-connectivity flood fill
    comp = -np.ones(n, dtype=int)
    ncomp = 0
    for start in range(n):
        if comp[start] >= 0:
            continue
        stack = [start]
        comp[start] = ncomp
        while stack:
            k = stack.pop()
            r, c = order[k]
            for dr, dc in ((0, 1), (0, -1), (1, 0), (-1, 0)):
                rr, cc = r + dr, c + dc
                if 0 <= rr < h and 0 <= cc < w and mask[rr, cc]:
                    j = idx[rr, cc]
                    if comp[j] < 0:
                        comp[j] = ncomp
                        stack.append(j)
        ncomp += 1
    prior_mass = np.zeros(ncomp)
    for (x, y, d, wgt) in prior_pts:
        prior_mass[comp[idx[int(y), int(x)]]] += lam * wgt
    for k in range(ncomp):
        if prior_mass[k] == 0.0:
            sel = comp == k
            z[sel] -= z[sel].mean()

    out = np.zeros((h, w))
    for j, (r, c) in enumerate(order):
        out[r, c] = z[j]
    return out


def dense_harmonic_solve(dest, region):
    """Dirichlet Laplace solve (v = 0) by dense linear algebra."""
    h, w = region.shape
    idx = -np.ones((h, w), dtype=int)
    order = []
    for r in range(h):
        for c in range(w):
            if region[r, c]:
                idx[r, c] = len(order)
                order.append((r, c))
    n = len(order)
    A = np.zeros((n, n))
    b = np.zeros(n)
    for j, (r, c) in enumerate(order):
        A[j, j] = 4.0
        for dr, dc in ((0, 1), (0, -1), (1, 0), (-1, 0)):
            rr, cc = r + dr, c + dc
            if region[rr, cc]:
                A[j, idx[rr, cc]] = -1.0
            else:
                b[j] += dest[rr, cc]
    x = np.linalg.solve(A, b)
    out = dest.copy()
    for j, (r, c) in enumerate(order):
        out[r, c] = x[j]
    return out


def angular_report_bruteforce(na, nb, mask_a, mask_b, thresholds):
    angles = []
    h, w = mask_a.shape
    for r in range(h):
        for c in range(w):
            if mask_a[r, c] and mask_b[r, c]:
                dot = 0.0
                for k in range(3):
                    dot += na[r, c, k] * nb[r, c, k]
                dot = min(1.0, max(-1.0, dot))
                angles.append(math.degrees(math.acos(dot)))
    angles = np.array(angles)
    fractions = [float(np.mean(angles < t)) for t in thresholds]
    return fractions, float(np.mean(angles)), float(np.median(angles))


def rmse_bruteforce(a, b):
    total = 0.0
    count = 0
    h, w, ch = a.shape
    for r in range(h):
        for c in range(w):
            for k in range(ch):
                d = a[r, c, k] - b[r, c, k]
                total += d * d
                count += 1
    return math.sqrt(total / count)


def ssim_bruteforce(a, b, window=11, sigma=1.5, k1=0.01, k2=0.03):
    """Windowed SSIM on Rec.709 luma, explicit loops over valid positions."""
    luma = np.array([0.2126, 0.7152, 0.0722])
    x = a @ luma
    y = b @ luma
    half = window // 2
    xs = np.arange(window) - half
    g = np.exp(-(xs ** 2) / (2.0 * sigma ** 2))
    kern = np.outer(g, g)
    kern /= kern.sum()
    c1 = k1 ** 2
    c2 = k2 ** 2
    h, w = x.shape
    vals = []
    for r in range(half, h - half):
        for c in range(half, w - half):
            wx = x[r - half:r + half + 1, c - half:c + half + 1]
            wy = y[r - half:r + half + 1, c - half:c + half + 1]
            mx = float((kern * wx).sum())
            my = float((kern * wy).sum())
            vx = float((kern * wx * wx).sum()) - mx * mx
            vy = float((kern * wy * wy).sum()) - my * my
            vxy = float((kern * wx * wy).sum()) - mx * my
            vals.append(((2 * mx * my + c1) * (2 * vxy + c2))
                        / ((mx * mx + my * my + c1) * (vx + vy + c2)))
    return float(np.mean(vals))
