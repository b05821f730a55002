"""Panel-pair integration kernels (numba and numpy versions).

Both versions take the same flat inputs:

``verts, tris, normals, areas``
    surface geometry;
``pairs`` (n, 5)
    ``(i, j, rule, perm_x, perm_y)`` with ``i <= j``;
``rx, ry`` (R, Qmax, 2), ``rw`` (R, Qmax), ``rnq`` (R,)
    stacked pair rules (zero-padded), points in the canonical panel order;
``phx, phy`` (R, Qmax, nloc), ``gx, gy`` (R, Qmax, nloc, 2)
    Lagrange values and reference gradients at those points;
``perms`` (6, 3), ``sigma`` (6, nloc)
    vertex permutations and the induced permutations of local nodes.

They fill the broken-Lagrange Galerkin matrices of the single layer, double
layer and (Maue-regularized) hypersingular operators.  Each unordered pair
owns the blocks (i, j) and (j, i), so writes never collide.
"""

from __future__ import annotations

import math

import numpy as np

from .backend import HAVE_NUMBA

FOUR_PI = 4.0 * math.pi


def _frames(p0, p1, p2):
    """Columns of J (J^T J)^{-1} for the map s -> p0 + s (p1-p0) + t (p2-p0)."""
    e1 = p1 - p0
    e2 = p2 - p0
    g11 = np.sum(e1 * e1, axis=-1)
    g12 = np.sum(e1 * e2, axis=-1)
    g22 = np.sum(e2 * e2, axis=-1)
    det = g11 * g22 - g12 * g12
    m1 = (g22[..., None] * e1 - g12[..., None] * e2) / det[..., None]
    m2 = (g11[..., None] * e2 - g12[..., None] * e1) / det[..., None]
    return m1, m2


def assemble_numpy(k, verts, tris, normals, areas, pairs, rx, ry, rw, rnq, phx, phy, gx, gy,
                   perms, sigma, V, K, W, chunk_points=1_500_000):
    nloc = phx.shape[2]
    ik = 1j * k
    for r in np.unique(pairs[:, 2]):
        sel = pairs[pairs[:, 2] == r]
        nq = rnq[r]
        xs, ys, w = rx[r, :nq], ry[r, :nq], rw[r, :nq]
        fx, fy = phx[r, :nq], phy[r, :nq]
        step = max(1, chunk_points // nq)
        for start in range(0, len(sel), step):
            blk = sel[start : start + step]
            i, j, px, py = blk[:, 0], blk[:, 1], blk[:, 3], blk[:, 4]
            X = verts[tris[i[:, None], perms[px]]]  # (P, 3, 3)
            Y = verts[tris[j[:, None], perms[py]]]
            x = X[:, None, 0] + xs[None, :, 0, None] * (X[:, None, 1] - X[:, None, 0]) \
                + xs[None, :, 1, None] * (X[:, None, 2] - X[:, None, 0])
            y = Y[:, None, 0] + ys[None, :, 0, None] * (Y[:, None, 1] - Y[:, None, 0]) \
                + ys[None, :, 1, None] * (Y[:, None, 2] - Y[:, None, 0])
            d = x - y
            rr = np.sqrt(np.sum(d * d, axis=-1))
            nx, ny = normals[i], normals[j]
            jac = (4.0 * areas[i] * areas[j])[:, None] * w[None, :]
            e = np.exp(ik * rr) / (FOUR_PI * rr) * jac
            f = e * (1.0 - ik * rr) / (rr * rr)
            kv = e
            ky = f * np.einsum("pqd,pd->pq", d, ny)
            kx = -f * np.einsum("pqd,pd->pq", d, nx)
            Vl = np.einsum("pq,qa,qb->pab", kv, fx, fy)
            Kl = np.einsum("pq,qa,qb->pab", ky, fx, fy)
            Ktl = np.einsum("pq,qa,qb->pab", kx, fx, fy)
            m1x, m2x = _frames(X[:, 0], X[:, 1], X[:, 2])
            m1y, m2y = _frames(Y[:, 0], Y[:, 1], Y[:, 2])
            cx = np.stack([np.cross(nx, m1x), np.cross(nx, m2x)], axis=1)  # (P, 2, 3)
            cy = np.stack([np.cross(ny, m1y), np.cross(ny, m2y)], axis=1)
            curl_x = np.einsum("qar,prd->pqad", gx[r, :nq], cx)
            curl_y = np.einsum("qbr,prd->pqbd", gy[r, :nq], cy)
            Wl = np.einsum("pq,pqad,pqbd->pab", kv, curl_x, curl_y)
            Wl -= (k * k * np.sum(nx * ny, axis=1))[:, None, None] * Vl
            I = i[:, None] * nloc + sigma[px]
            J = j[:, None] * nloc + sigma[py]
            rows, cols = I[:, :, None], J[:, None, :]
            V[rows, cols] = Vl
            K[rows, cols] = Kl
            W[rows, cols] = Wl
            off = i != j
            rows_t, cols_t = J[off][:, :, None], I[off][:, None, :]
            V[rows_t, cols_t] = Vl[off].transpose(0, 2, 1)
            K[rows_t, cols_t] = Ktl[off].transpose(0, 2, 1)
            W[rows_t, cols_t] = Wl[off].transpose(0, 2, 1)


if HAVE_NUMBA:
    import numba

    @numba.njit(parallel=True, cache=True, fastmath=False)
    def assemble_numba(k, verts, tris, normals, areas, pairs, rx, ry, rw, rnq, phx, phy, gx, gy,
                       perms, sigma, V, K, W):  # pragma: no cover - compiled
        nloc = phx.shape[2]
        ik = 1j * k
        npairs = pairs.shape[0]
        for n in numba.prange(npairs):
            i = pairs[n, 0]
            j = pairs[n, 1]
            r = pairs[n, 2]
            px = pairs[n, 3]
            py = pairs[n, 4]
            X = np.empty((3, 3))
            Y = np.empty((3, 3))
            for a in range(3):
                X[a] = verts[tris[i, perms[px, a]]]
                Y[a] = verts[tris[j, perms[py, a]]]
            nx = normals[i]
            ny = normals[j]
            nxy = nx[0] * ny[0] + nx[1] * ny[1] + nx[2] * ny[2]
            cx = np.empty((2, 3))
            cy = np.empty((2, 3))
            for side in range(2):
                P = X if side == 0 else Y
                nn = nx if side == 0 else ny
                e1 = P[1] - P[0]
                e2 = P[2] - P[0]
                g11 = np.sum(e1 * e1)
                g12 = np.sum(e1 * e2)
                g22 = np.sum(e2 * e2)
                det = g11 * g22 - g12 * g12
                m1 = (g22 * e1 - g12 * e2) / det
                m2 = (g11 * e2 - g12 * e1) / det
                c = cx if side == 0 else cy
                c[0, 0] = nn[1] * m1[2] - nn[2] * m1[1]
                c[0, 1] = nn[2] * m1[0] - nn[0] * m1[2]
                c[0, 2] = nn[0] * m1[1] - nn[1] * m1[0]
                c[1, 0] = nn[1] * m2[2] - nn[2] * m2[1]
                c[1, 1] = nn[2] * m2[0] - nn[0] * m2[2]
                c[1, 2] = nn[0] * m2[1] - nn[1] * m2[0]
            jac = 4.0 * areas[i] * areas[j]
            Vl = np.zeros((nloc, nloc), dtype=np.complex128)
            Kl = np.zeros((nloc, nloc), dtype=np.complex128)
            Ktl = np.zeros((nloc, nloc), dtype=np.complex128)
            Wl = np.zeros((nloc, nloc), dtype=np.complex128)
            curl_x = np.empty((nloc, 3))
            curl_y = np.empty((nloc, 3))
            for q in range(rnq[r]):
                s, t = rx[r, q, 0], rx[r, q, 1]
                u, v = ry[r, q, 0], ry[r, q, 1]
                d0 = (X[0, 0] + s * (X[1, 0] - X[0, 0]) + t * (X[2, 0] - X[0, 0])) - (
                    Y[0, 0] + u * (Y[1, 0] - Y[0, 0]) + v * (Y[2, 0] - Y[0, 0]))
                d1 = (X[0, 1] + s * (X[1, 1] - X[0, 1]) + t * (X[2, 1] - X[0, 1])) - (
                    Y[0, 1] + u * (Y[1, 1] - Y[0, 1]) + v * (Y[2, 1] - Y[0, 1]))
                d2 = (X[0, 2] + s * (X[1, 2] - X[0, 2]) + t * (X[2, 2] - X[0, 2])) - (
                    Y[0, 2] + u * (Y[1, 2] - Y[0, 2]) + v * (Y[2, 2] - Y[0, 2]))
                rr = math.sqrt(d0 * d0 + d1 * d1 + d2 * d2)
                e = np.exp(ik * rr) / (FOUR_PI * rr) * (jac * rw[r, q])
                f = e * (1.0 - ik * rr) / (rr * rr)
                ky = f * (d0 * ny[0] + d1 * ny[1] + d2 * ny[2])
                kx = -f * (d0 * nx[0] + d1 * nx[1] + d2 * nx[2])
                for a in range(nloc):
                    for dd in range(3):
                        curl_x[a, dd] = gx[r, q, a, 0] * cx[0, dd] + gx[r, q, a, 1] * cx[1, dd]
                        curl_y[a, dd] = gy[r, q, a, 0] * cy[0, dd] + gy[r, q, a, 1] * cy[1, dd]
                for a in range(nloc):
                    fa = phx[r, q, a]
                    for b in range(nloc):
                        fab = fa * phy[r, q, b]
                        Vl[a, b] += e * fab
                        Kl[a, b] += ky * fab
                        Ktl[a, b] += kx * fab
                        cc = (curl_x[a, 0] * curl_y[b, 0] + curl_x[a, 1] * curl_y[b, 1]
                              + curl_x[a, 2] * curl_y[b, 2])
                        Wl[a, b] += e * cc
            for a in range(nloc):
                I = i * nloc + sigma[px, a]
                for b in range(nloc):
                    J = j * nloc + sigma[py, b]
                    wab = Wl[a, b] - k * k * nxy * Vl[a, b]
                    V[I, J] = Vl[a, b]
                    K[I, J] = Kl[a, b]
                    W[I, J] = wab
                    if i != j:
                        V[J, I] = Vl[a, b]
                        K[J, I] = Ktl[a, b]
                        W[J, I] = wab
else:  # pragma: no cover
    assemble_numba = None
