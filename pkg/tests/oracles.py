"""Reference computations written independently of the package kernels."""

from __future__ import annotations

import numpy as np

from mortar_dgbem.quadrature import tet_rule, triangle_rule


def triangle_potential(tri, x):
    """Exact ∫_T 1/|x - y| dy for a flat triangle ``tri`` (3, 3) and points x (n, 3)."""
    tri = np.asarray(tri, float)
    x = np.atleast_2d(x)
    n = np.cross(tri[1] - tri[0], tri[2] - tri[0])
    n /= np.linalg.norm(n)
    d = (x - tri[0]) @ n
    rho = x - d[:, None] * n
    ad = np.abs(d)
    total = np.zeros(len(x))
    for i in range(3):
        a, b = tri[i], tri[(i + 1) % 3]
        lv = (b - a) / np.linalg.norm(b - a)
        u = np.cross(lv, n)  # outward in-plane edge normal for counter-clockwise vertices
        p0 = (a - rho) @ u
        lp = (b - rho) @ lv
        lm = (a - rho) @ lv
        r0sq = p0**2 + d**2
        rp = np.sqrt(r0sq + lp**2)
        rm = np.sqrt(r0sq + lm**2)
        with np.errstate(divide="ignore", invalid="ignore"):
            logterm = np.where(np.abs(p0) > 1e-14, p0 * np.log((rp + lp) / (rm + lm)), 0.0)
            atan = np.arctan2(p0 * lp, r0sq + ad * rp) - np.arctan2(p0 * lm, r0sq + ad * rm)
        total += logterm - ad * atan
    return total


def _subdivide(tri):
    a, b, c = tri
    ab, bc, ca = (a + b) / 2, (b + c) / 2, (c + a) / 2
    return [np.array(t) for t in ((a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca))]


def adaptive_triangle_integral(f, tri, tol=1e-13, degree=12, max_depth=12):
    """∫_T f over a flat triangle by recursive 4-way subdivision.

    A cell is accepted when the rule and the sum over its four children
    agree to ``tol`` (absolute, scaled by area); the children's sum is kept.
    """
    rule = triangle_rule(degree)

    def rule_on(t):
        x = t[0] + rule.points[:, :1] * (t[1] - t[0]) + rule.points[:, 1:] * (t[2] - t[0])
        area2 = np.linalg.norm(np.cross(t[1] - t[0], t[2] - t[0]))
        return area2 * np.sum(rule.weights * f(x))

    tri = np.asarray(tri, float)
    total_area = 0.5 * np.linalg.norm(np.cross(tri[1] - tri[0], tri[2] - tri[0]))
    stack = [(tri, rule_on(tri), 0)]
    result = 0.0
    while stack:
        t, coarse, depth = stack.pop()
        kids = _subdivide(t)
        vals = [rule_on(c) for c in kids]
        fine = sum(vals)
        area = 0.5 * np.linalg.norm(np.cross(t[1] - t[0], t[2] - t[0]))
        if abs(fine - coarse) <= tol * area / total_area or depth >= max_depth:
            result += fine
        else:
            stack.extend((c, v, depth + 1) for c, v in zip(kids, vals))
    return result


def laplace_sl_pair(tri_x, tri_y, tol=1e-13):
    """∫_{T_x} ∫_{T_y} 1 / (4π|x - y|) dy dx for constant densities."""
    tri_y = np.asarray(tri_y, float)
    return adaptive_triangle_integral(lambda x: triangle_potential(tri_y, x), tri_x, tol) / (4 * np.pi)


def brute_pair_integral(kernel, tri_x, tri_y, fx=None, fy=None, levels=(3, 4), degree=8):
    """Product quadrature on uniformly subdivided triangles with Richardson extrapolation.

    Sub-triangle pairs that touch are skipped, so this is only meaningful for
    bounded kernels; used for smooth corrections of the Helmholtz kernel.
    """
    rule = triangle_rule(degree)

    def split(t, lev):
        out = [np.asarray(t, float)]
        for _ in range(lev):
            out = [c for s in out for c in _subdivide(s)]
        return out

    def points(ts):
        xs, ws = [], []
        for t in ts:
            area2 = np.linalg.norm(np.cross(t[1] - t[0], t[2] - t[0]))
            xs.append(t[0] + rule.points[:, :1] * (t[1] - t[0]) + rule.points[:, 1:] * (t[2] - t[0]))
            ws.append(area2 * rule.weights)
        return np.concatenate(xs), np.concatenate(ws)

    vals = []
    for lev in levels:
        x, wx = points(split(tri_x, lev))
        y, wy = points(split(tri_y, lev))
        kx = np.ones(len(x)) if fx is None else fx(x)
        ky = np.ones(len(y)) if fy is None else fy(y)
        K = kernel(x[:, None, :], y[None, :, :])
        vals.append(np.einsum("i,ij,j->", wx * kx, K, wy * ky))
    # error of a bounded kernel with a kink ~ h^2: extrapolate once
    return (4 * vals[1] - vals[0]) / 3


# -- elementwise flux-form evaluation of the DG rows --------------------------------

_REF_TET = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], float)


def _diam(P):
    return max(np.linalg.norm(P[a] - P[b]) for a in range(4) for b in range(a + 1, 4))


def _eval_local(spaces, coeffs, t, x):
    """Value and gradient of a V_h function restricted to tet ``t`` at physical points x."""
    m = spaces.mesh
    P = m.vertices[m.tets[t]]
    J = np.column_stack([P[1] - P[0], P[2] - P[0], P[3] - P[0]])
    ref = np.linalg.solve(J, (x - P[0]).T).T
    c = np.asarray(coeffs)[spaces.v_dofs[t]]
    val = spaces.vbasis.eval(ref) @ c
    gref = np.einsum("qbr,b->qr", spaces.vbasis.grad(ref), c)
    return val, gref @ np.linalg.inv(J)


def dg_row_direct(spaces, k, params, u, v, m_h=None):
    """Row-one form ∑_K [∫∇u·conj∇v - k²u conj v - ∫_∂K (u - û) conj(∇v·n_K) - ∫_∂K ikσ̂·n_K conj v].

    Fluxes are built element by element from their definitions (averages,
    jumps and, on Γ, the impedance expressions with the mortar ``m_h``), so
    the mortar column -(m, δ(ik)^{-1}∇v·n + (1-δ)v) is included when m_h is
    given.  Deliberately written as plain loops over elements and faces.
    """
    mesh = spaces.mesh
    p = spaces.p
    ik = 1j * k
    vol_rule = tet_rule(2 * p + 2)
    face_rule = triangle_rule(2 * p + 2)
    faces = [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]]
    # neighbour search by sorted vertex triples
    owners = {}
    for t in range(mesh.n_tets):
        for f in faces:
            owners.setdefault(tuple(sorted(mesh.tets[t][f])), []).append(t)
    surf = spaces.surface
    tri_of = {tuple(sorted(surf.mesh_vertex[tri])): i for i, tri in enumerate(surf.triangles)}
    total = 0.0 + 0.0j
    for t in range(mesh.n_tets):
        P = mesh.vertices[mesh.tets[t]]
        J = np.column_stack([P[1] - P[0], P[2] - P[0], P[3] - P[0]])
        x = P[0] + vol_rule.points @ J.T
        uu, gu = _eval_local(spaces, u, t, x)
        vv, gv = _eval_local(spaces, v, t, x)
        w = vol_rule.weights * abs(np.linalg.det(J))
        total += np.sum(w * (np.sum(gu * gv.conj(), axis=1) - k**2 * uu * vv.conj()))
        hK = _diam(P)
        for lf, f in enumerate(faces):
            key = tuple(sorted(mesh.tets[t][f]))
            Q = P[f]
            cr = np.cross(Q[1] - Q[0], Q[2] - Q[0])
            area = 0.5 * np.linalg.norm(cr)
            n = cr / np.linalg.norm(cr)
            if n @ (Q[0] - P[lf]) < 0:
                n = -n
            xf = Q[0] + face_rule.points[:, :1] * (Q[1] - Q[0]) + face_rule.points[:, 1:] * (Q[2] - Q[0])
            wf = 2 * area * face_rule.weights
            u1, g1 = _eval_local(spaces, u, t, xf)
            v1, gv1 = _eval_local(spaces, v, t, xf)
            nb = [s for s in owners[key] if s != t]
            if nb:
                t2 = nb[0]
                hF = min(hK, _diam(mesh.vertices[mesh.tets[t2]]))
                alpha = params.a * p**2 / (k * hF)
                beta = params.b * k * hF / p
                u2, g2 = _eval_local(spaces, u, t2, xf)
                jump_u = (u1 - u2)[:, None] * n
                jump_g = (g1 - g2) @ n
                u_hat = 0.5 * (u1 + u2) - beta / ik * jump_g
                ik_sigma = 0.5 * (g1 + g2) - ik * alpha * jump_u
            else:
                delta = min(params.d * k * hK / p**2, 0.5)
                tri = tri_of[key]
                mm = np.zeros(len(xf), complex)
                if m_h is not None:
                    tv = surf.vertices[surf.triangles[tri]]
                    A2 = np.column_stack([tv[1] - tv[0], tv[2] - tv[0]])
                    sref = np.linalg.lstsq(A2, (xf - tv[0]).T, rcond=None)[0].T
                    mm = spaces.eval_w(m_h, [tri], sref)[0]
                dn = g1 @ n
                u_hat = u1 + delta * (-dn / ik - u1 + mm / ik)
                ik_sigma = g1 - (1 - delta) * (g1 + ik * u1[:, None] * n - mm[:, None] * n)
            total -= np.sum(wf * (u1 - u_hat) * (gv1 @ n).conj())
            total -= np.sum(wf * (ik_sigma @ n) * v1.conj())
    return complex(total)


def trace_row_direct(spaces, k, params, u, m_h, lam):
    """⟨-δ(ik)^{-1}∇u·n + (1-δ)u + δ(ik)^{-1}m, λ⟩ by quadrature on every surface triangle."""
    mesh = spaces.mesh
    surf = spaces.surface
    p = spaces.p
    ik = 1j * k
    rule = triangle_rule(2 * p + 2)
    total = 0.0 + 0.0j
    for tri in range(surf.n_triangles):
        t = surf.parent_tet[tri]
        hK = _diam(mesh.vertices[mesh.tets[t]])
        delta = min(params.d * k * hK / p**2, 0.5)
        tv = surf.vertices[surf.triangles[tri]]
        x = tv[0] + rule.points[:, :1] * (tv[1] - tv[0]) + rule.points[:, 1:] * (tv[2] - tv[0])
        w = 2 * surf.areas[tri] * rule.weights
        uu, gu = _eval_local(spaces, u, t, x)
        dn = gu @ surf.normals[tri]
        mm = spaces.eval_w(m_h, [tri], rule.points)[0]
        ll = spaces.eval_w(lam, [tri], rule.points)[0]
        total += np.sum(w * (-delta / ik * dn + (1 - delta) * uu + delta / ik * mm) * ll.conj())
    return complex(total)


def T_direct(spaces, k, params, bem, x, y):
    """T_h(x, y) composed from the DG flux form, the trace row and primitive BEM blocks."""
    u, m, z = x
    v, lam, vt = y
    ik = 1j * k
    B = lambda kind, a, b: bem.block(kind, a, b).matrix  # noqa: E731
    half = lambda a, b: 0.5 * B("M", a, b)  # noqa: E731
    A_zz = half("Z", "Z") + B("K'", "Z", "Z") + ik * B("V", "Z", "Z")
    A_zw = half("Z", "W") + B("K'", "Z", "W") + ik * B("V", "Z", "W")
    Bk = -B("W", "Z", "Z") - ik * (half("Z", "Z") - B("K", "Z", "Z"))
    row2 = -np.vdot(vt, (Bk + ik * A_zz) @ z - A_zw @ m)
    X = (half("W", "Z") + B("K", "W", "Z")) @ z - B("V", "W", "W") @ m + ik * B("V", "W", "Z") @ z
    row3 = trace_row_direct(spaces, k, params, u, m, lam) - np.vdot(lam, X)
    return dg_row_direct(spaces, k, params, u, v, m) + row2 + row3
