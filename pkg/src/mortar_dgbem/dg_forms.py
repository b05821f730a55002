"""Interior-penalty DG forms for the impedance Helmholtz problem in Ω.

Matrix convention: ``A[i, j] = form(phi_j, phi_i)`` with the test function
conjugated, so that ``form(u_h, v_h) = v^H A u`` for coefficient vectors.
All bases are real, so conjugation only acts on complex scalar factors.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .fields import as_field
from .quadrature import tet_rule, triangle_rule
from .spaces import DiscreteSpaces


class DeltaRangeError(ValueError):
    """The boundary weight δ left (0, 1/2]."""


class DeltaClippedWarning(UserWarning):
    pass


@dataclass(frozen=True)
class FluxParameters:
    """Scalings of the face weights α = a p²/(k𝗁), β = b k𝗁/p, δ = d k𝗁/p².

    ``delta_policy`` decides what happens when δ > 1/2 on some boundary face:
    ``"clip"`` caps it at 1/2 and warns, ``"raise"`` raises DeltaRangeError.
    ``d = 0`` switches the δ-terms off (test mode).
    """

    a: float = 10.0
    b: float = 0.1
    d: float = 0.1
    delta_policy: str = "clip"

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0 or self.d < 0:
            raise ValueError("need a > 0, b > 0, d >= 0")
        if self.delta_policy not in ("clip", "raise"):
            raise ValueError("delta_policy must be 'clip' or 'raise'")

    def with_(self, **kw) -> "FluxParameters":
        return replace(self, **kw)

    def alpha(self, face_h, p, k):
        return self.a * p**2 / (k * np.asarray(face_h))

    def beta(self, face_h, p, k):
        return self.b * k * np.asarray(face_h) / p

    def delta(self, face_h, p, k):
        raw = self.d * k * np.asarray(face_h, dtype=float) / p**2
        if np.any(raw > 0.5):
            msg = f"delta up to {raw.max():.3g} > 1/2 (d={self.d}, k={k:.4g}, p={p})"
            if self.delta_policy == "raise":
                raise DeltaRangeError(msg)
            warnings.warn(msg + "; clipped to 1/2", DeltaClippedWarning, stacklevel=2)
            raw = np.minimum(raw, 0.5)
        return raw


def _coeff(c, x):
    if c is None:
        return np.ones(x.shape[:-1])
    if np.isscalar(c):
        return np.full(x.shape[:-1], c)
    return np.asarray(c(x.reshape(-1, 3))).reshape(x.shape[:-1])


class FaceQuadrature:
    """Quadrature data on interior and boundary faces of a mesh."""

    def __init__(self, spaces: DiscreteSpaces, interior_degree: int, boundary_degree: int):
        mesh = spaces.mesh
        r = triangle_rule(interior_degree)
        tm, lm, tp, _ = mesh.interior_faces.T
        fv = mesh.vertices[mesh.face_vertices(tm, lm)]
        self.i_points = (
            fv[:, None, 0]
            + r.points[None, :, 0, None] * (fv[:, None, 1] - fv[:, None, 0])
            + r.points[None, :, 1, None] * (fv[:, None, 2] - fv[:, None, 0])
        )
        n, area = mesh.outward_normals(tm, lm)
        self.i_normal = n
        self.i_weights = 2.0 * area[:, None] * r.weights[None, :]
        q = len(r)
        flat = self.i_points.reshape(-1, 3)
        self.i_ref_minus = mesh.to_reference(np.repeat(tm, q), flat).reshape(-1, q, 3)
        self.i_ref_plus = mesh.to_reference(np.repeat(tp, q), flat).reshape(-1, q, 3)
        self.i_tets = (tm, tp)
        self.i_h = mesh.face_h[: mesh.n_interior_faces]

        rb = triangle_rule(boundary_degree)
        s = spaces.surface
        tri = np.arange(s.n_triangles)
        self.b_surface_ref = rb.points
        self.b_points = spaces.surface_points(tri, rb.points)
        self.b_weights = 2.0 * s.areas[:, None] * rb.weights[None, :]
        self.b_normal = s.normals
        self.b_ref = spaces.trace_reference(tri, self.b_points)
        self.b_tets = s.parent_tet
        self.b_h = mesh.face_h[mesh.n_interior_faces :]


def _basis_at(spaces: DiscreteSpaces, tet_ids, ref):
    """Values (F, Q, nb) and physical gradients (F, Q, nb, 3) of V_h shape functions."""
    f, q = ref.shape[:2]
    flat = ref.reshape(-1, 3)
    phi = spaces.vbasis.eval(flat).reshape(f, q, -1)
    g = spaces.vbasis.grad(flat).reshape(f, q, -1, 3)
    g = np.einsum("fqbr,frs->fqbs", g, spaces.mesh.inv_jacobians[tet_ids])
    return phi, g


def _coo(row_dofs, col_dofs, vals, shape):
    rows = np.broadcast_to(row_dofs[:, :, None], vals.shape).ravel()
    cols = np.broadcast_to(col_dofs[:, None, :], vals.shape).ravel()
    return sp.coo_matrix((vals.ravel(), (rows, cols)), shape=shape).tocsr()


@dataclass
class DGMatrixSet:
    """Sparse DG and coupling blocks (rows = test space, cols = trial space)."""

    A_vol: sp.csr_matrix
    A_ifaces: sp.csr_matrix
    A_bdry: sp.csr_matrix
    C_mv: sp.csr_matrix  # V_h test, W_h trial
    C_um_u: sp.csr_matrix  # W_h test, V_h trial
    C_um_m: sp.csr_matrix  # W_h test, W_h trial
    delta: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray

    @property
    def A(self) -> sp.csr_matrix:
        return (self.A_vol + self.A_ifaces + self.A_bdry).tocsr()


class DGAssembler:
    """Builds every DG-side block for one (spaces, k, params) triple."""

    def __init__(self, spaces: DiscreteSpaces, k: float, params: FluxParameters | None = None,
                 nu=None, n=None, degree: int | None = None):
        self.spaces = spaces
        self.k = float(k)
        self.params = params or FluxParameters()
        self.nu = nu
        self.n = n
        p = spaces.p
        self.degree = degree or 2 * p + 2
        self.fq = FaceQuadrature(spaces, self.degree, self.degree + 1)
        self.alpha = self.params.alpha(self.fq.i_h, p, self.k)
        self.beta = self.params.beta(self.fq.i_h, p, self.k)
        self.delta = self.params.delta(self.fq.b_h, p, self.k) if self.params.d > 0 else np.zeros(
            len(self.fq.b_h))

    # -- pieces ------------------------------------------------------------------
    def _volume(self):
        sp_ = self.spaces
        m = sp_.mesh
        rule = tet_rule(self.degree)
        x = m.vertices[m.tets[:, 0]][:, None, :] + np.einsum("tij,qj->tqi", m.jacobians, rule.points)
        wdet = rule.weights[None, :] * m.det[:, None]
        nu = _coeff(self.nu, x)
        kn2 = (self.k * _coeff(self.n, x)) ** 2
        phi = sp_.vbasis.eval(rule.points)
        g = np.einsum("qbr,trs->tqbs", sp_.vbasis.grad(rule.points), m.inv_jacobians)
        stiff = np.einsum("tq,tqis,tqjs->tij", wdet * nu, g, g)
        mass = np.einsum("tq,qi,qj->tij", wdet * kn2, phi, phi)
        return stiff, mass

    def _interior_side_data(self):
        fq = self.fq
        tm, tp = fq.i_tets
        pm, gm = _basis_at(self.spaces, tm, fq.i_ref_minus)
        pp, gp = _basis_at(self.spaces, tp, fq.i_ref_plus)
        n = fq.i_normal[:, None, None, :]
        dnm = np.sum(gm * n, axis=-1)
        dnp = np.sum(gp * n, axis=-1)
        nu = _coeff(self.nu, fq.i_points)
        return (pm, gm, dnm), (pp, gp, dnp), nu

    def _boundary_side_data(self):
        fq = self.fq
        phi, g = _basis_at(self.spaces, fq.b_tets, fq.b_ref)
        dn = np.einsum("fqbs,fs->fqb", g, fq.b_normal)
        psi = self.spaces.wbasis.eval(fq.b_surface_ref)
        return phi, dn, psi

    # -- matrices -----------------------------------------------------------------
    def assemble(self) -> DGMatrixSet:
        sp_ = self.spaces
        k = self.k
        ik = 1j * k
        nv, nw = sp_.n_v, sp_.n_w
        vd, wd = sp_.v_dofs, sp_.w_dofs

        stiff, mass = self._volume()
        A_vol = _coo(vd, vd, (stiff - mass).astype(complex), (nv, nv))

        fq = self.fq
        (pm, _, dnm), (pp, _, dnp), nu = self._interior_side_data()
        sides = {0: (pm, dnm, 1.0, fq.i_tets[0]), 1: (pp, dnp, -1.0, fq.i_tets[1])}
        w = fq.i_weights * nu
        wa = w * self.alpha[:, None]
        wb = w * self.beta[:, None]
        blocks = []
        for s_test in (0, 1):
            phi_i, dn_i, sg_i, t_i = sides[s_test]
            for s_trial in (0, 1):
                phi_j, dn_j, sg_j, t_j = sides[s_trial]
                val = -np.einsum("fq,fqj,fqi->fij", w, sg_j * phi_j, 0.5 * dn_i)
                val -= np.einsum("fq,fqj,fqi->fij", w, 0.5 * dn_j, sg_i * phi_i)
                val = val.astype(complex)
                val -= (sg_i * sg_j / ik) * np.einsum("fq,fqj,fqi->fij", wb, dn_j, dn_i)
                val += (sg_i * sg_j * ik) * np.einsum("fq,fqj,fqi->fij", wa, phi_j, phi_i)
                blocks.append(_coo(vd[t_i], vd[t_j], val, (nv, nv)))
        A_ifaces = sum(blocks[1:], blocks[0]).tocsr()

        phi, dn, psi = self._boundary_side_data()
        tb = fq.b_tets
        wq = fq.b_weights
        dl = self.delta[:, None]
        val = -np.einsum("fq,fqj,fqi->fij", wq * dl / ik, dn, dn)
        val -= np.einsum("fq,fqj,fqi->fij", wq * dl, phi, dn)
        val -= np.einsum("fq,fqj,fqi->fij", wq * dl, dn, phi)
        val = val + np.einsum("fq,fqj,fqi->fij", wq * (1 - dl) * ik, phi, phi)
        A_bdry = _coo(vd[tb], vd[tb], val, (nv, nv))

        # -(m, δ(ik)^{-1} ∂_n v + (1-δ) v): the conjugate of 1/(ik) is -1/(ik)
        cmv = np.einsum("fq,qj,fqi->fij", wq * dl / ik, psi, dn)
        cmv = cmv - np.einsum("fq,qj,fqi->fij", wq * (1 - dl), psi, phi)
        C_mv = _coo(vd[tb], wd, cmv, (nv, nw))
        cu = -np.einsum("fq,fqj,qi->fij", wq * dl / ik, dn, psi)
        cu = cu + np.einsum("fq,fqj,qi->fij", wq * (1 - dl), phi, psi)
        C_um_u = _coo(wd, vd[tb], cu, (nw, nv))
        cm = np.einsum("fq,qj,qi->fij", wq * dl / ik, psi, psi)
        C_um_m = _coo(wd, wd, cm, (nw, nw))
        return DGMatrixSet(A_vol, A_ifaces, A_bdry, C_mv, C_um_u, C_um_m,
                           self.delta, self.alpha, self.beta)

    def norm_pieces(self) -> dict[str, sp.csr_matrix]:
        """Real symmetric matrices of the squared DG-norm terms."""
        sp_ = self.spaces
        k = self.k
        nv = sp_.n_v
        vd = sp_.v_dofs
        stiff, mass = self._volume()
        out = {"grad": _coo(vd, vd, stiff, (nv, nv))}
        # |kn|^2 mass for real n; refractive index may be complex
        m = sp_.mesh
        rule = tet_rule(self.degree)
        x = m.vertices[m.tets[:, 0]][:, None, :] + np.einsum("tij,qj->tqi", m.jacobians, rule.points)
        kn2 = np.abs(self.k * _coeff(self.n, x)) ** 2
        phi_q = sp_.vbasis.eval(rule.points)
        out["mass"] = _coo(vd, vd, np.einsum("tq,qi,qj->tij", rule.weights[None] * m.det[:, None] * kn2,
                                             phi_q, phi_q), (nv, nv))

        fq = self.fq
        (pm, gm, dnm), (pp, gp, dnp), nu = self._interior_side_data()
        sides = ((pm, gm, dnm, 1.0, fq.i_tets[0]), (pp, gp, dnp, -1.0, fq.i_tets[1]))
        w = fq.i_weights * nu
        parts = {"jump_grad": [], "jump": [], "avg_grad": []}
        for phi_i, g_i, dn_i, s_i, t_i in sides:
            for phi_j, g_j, dn_j, s_j, t_j in sides:
                jg = s_i * s_j * np.einsum("fq,fqj,fqi->fij", w * self.beta[:, None] / k, dn_j, dn_i)
                jj = s_i * s_j * np.einsum("fq,fqj,fqi->fij", w * self.alpha[:, None] * k, phi_j, phi_i)
                ag = 0.25 * np.einsum("fq,fqjs,fqis->fij", w / (self.alpha[:, None] * k), g_j, g_i)
                parts["jump_grad"].append(_coo(vd[t_i], vd[t_j], jg, (nv, nv)))
                parts["jump"].append(_coo(vd[t_i], vd[t_j], jj, (nv, nv)))
                parts["avg_grad"].append(_coo(vd[t_i], vd[t_j], ag, (nv, nv)))
        for name, mats in parts.items():
            out[name] = sum(mats[1:], mats[0]).tocsr()

        phi, dn, _ = self._boundary_side_data()
        tb = fq.b_tets
        dl = self.delta[:, None]
        wq = fq.b_weights
        out["bnd_grad"] = _coo(vd[tb], vd[tb], np.einsum("fq,fqj,fqi->fij", wq * dl / k, dn, dn), (nv, nv))
        out["bnd"] = _coo(vd[tb], vd[tb], np.einsum("fq,fqj,fqi->fij", wq * (1 - dl) * k, phi, phi), (nv, nv))
        out["bnd_sq"] = _coo(vd[tb], vd[tb],
                             np.einsum("fq,fqj,fqi->fij", wq * (1 - dl) ** 2 * k, phi, phi), (nv, nv))
        return out


DG_TERMS = ("grad", "mass", "jump_grad", "jump", "bnd_grad", "bnd")


def assemble_interior(spaces, mesh, nu, n, k, params):
    """Volume and interior-face blocks; ``mesh`` must be ``spaces.mesh``."""
    if mesh is not spaces.mesh:
        raise ValueError("spaces were built on a different mesh")
    ms = DGAssembler(spaces, k, params, nu=nu, n=n).assemble()
    return ms.A_vol, ms.A_ifaces


def assemble_boundary(spaces, mesh, k, params):
    if mesh is not spaces.mesh:
        raise ValueError("spaces were built on a different mesh")
    return DGAssembler(spaces, k, params).assemble().A_bdry


def assemble_coupling(spaces, mesh, k, params):
    """Returns ``C_mv`` (V_h x W_h) and ``(C_um_u, C_um_m)`` (W_h rows)."""
    if mesh is not spaces.mesh:
        raise ValueError("spaces were built on a different mesh")
    ms = DGAssembler(spaces, k, params).assemble()
    return ms.C_mv, (ms.C_um_u, ms.C_um_m)


# -- norms -----------------------------------------------------------------------

def dg_norm(u, spaces: DiscreteSpaces, k: float, params: FluxParameters | None = None,
            variant: str = "DG", nu=None, n=None) -> float:
    """DG or DG+ norm of a V_h vector or of any elementwise field."""
    if variant not in ("DG", "DG+"):
        raise ValueError("variant must be 'DG' or 'DG+'")
    asm = DGAssembler(spaces, k, params, nu=nu, n=n)
    terms = dg_norm_terms(asm, as_field(spaces, u))
    total = sum(terms[t] for t in DG_TERMS)
    if variant == "DG+":
        total += terms["avg_grad"]
    return float(np.sqrt(max(total, 0.0)))


def dg_norm_terms(asm: DGAssembler, field, degree: int | None = None) -> dict[str, float]:
    """Squared DG-norm contributions of a field, by direct quadrature."""
    sp_ = asm.spaces
    field = as_field(sp_, field)
    m = sp_.mesh
    k = asm.k
    rule = tet_rule(degree or asm.degree + 2)
    tets = np.arange(m.n_tets)
    ref = np.broadcast_to(rule.points, (m.n_tets,) + rule.points.shape)
    x = m.vertices[m.tets[:, 0]][:, None, :] + np.einsum("tij,qj->tqi", m.jacobians, rule.points)
    val, grad = field(tets, ref, x)
    w = rule.weights[None, :] * m.det[:, None]
    nu = _coeff(asm.nu, x)
    n = _coeff(asm.n, x)
    out = {
        "grad": np.sum(w * nu * np.sum(np.abs(grad) ** 2, axis=-1)),
        "mass": np.sum(w * np.abs(k * n * val) ** 2),
    }
    fq = asm.fq
    tm, tp = fq.i_tets
    vm, gm = field(tm, fq.i_ref_minus, fq.i_points)
    vp, gp = field(tp, fq.i_ref_plus, fq.i_points)
    nrm = fq.i_normal[:, None, :]
    wi = fq.i_weights * _coeff(asm.nu, fq.i_points)
    jump_grad = np.sum((gm - gp) * nrm, axis=-1)
    out["jump_grad"] = np.sum(wi * asm.beta[:, None] / k * np.abs(jump_grad) ** 2)
    out["jump"] = np.sum(wi * asm.alpha[:, None] * k * np.abs(vm - vp) ** 2)
    out["avg_grad"] = np.sum(wi / (asm.alpha[:, None] * k) * np.sum(np.abs(0.5 * (gm + gp)) ** 2, axis=-1))
    vb, gb = field(fq.b_tets, fq.b_ref, fq.b_points)
    dn = np.sum(gb * fq.b_normal[:, None, :], axis=-1)
    dl = asm.delta[:, None]
    out["bnd_grad"] = np.sum(fq.b_weights * dl / k * np.abs(dn) ** 2)
    out["bnd"] = np.sum(fq.b_weights * (1 - dl) * k * np.abs(vb) ** 2)
    out["bnd_sq"] = np.sum(fq.b_weights * (1 - dl) ** 2 * k * np.abs(vb) ** 2)
    return {key: float(v) for key, v in out.items()}


# -- fluxes ----------------------------------------------------------------------

def combined_flux_identity_check(spaces: DiscreteSpaces, k: float, params: FluxParameters,
                                 u_h, m_h, face: int, ref_pts) -> np.ndarray:
    """``ik σ̂·n + ik û - m`` at reference points of a boundary face.

    ``face`` is a global face id (boundary faces follow the interior ones);
    ``ref_pts`` (Q, 2) are reference coordinates of the surface triangle.
    """
    mesh = spaces.mesh
    ni = mesh.n_interior_faces
    if not ni <= face < ni + mesh.n_boundary_faces:
        raise ValueError("combined flux identity is defined on boundary faces only")
    tri = face - ni
    ref_pts = np.atleast_2d(ref_pts)
    delta = params.delta(mesh.face_h[face : face + 1], spaces.p, k)[0] if params.d > 0 else 0.0
    x = spaces.surface_points([tri], ref_pts)
    tref = spaces.trace_reference([tri], x)
    u, g = spaces.eval_v(u_h, [spaces.surface.parent_tet[tri]], tref, grad=True)
    u, g = u[0], g[0]
    m = spaces.eval_w(m_h, [tri], ref_pts)[0]
    nrm = spaces.surface.normals[tri]
    ik = 1j * k
    ik_sigma = g - (1 - delta) * (g + ik * u[:, None] * nrm - m[:, None] * nrm)
    u_hat = u + delta * (-(g @ nrm) / ik - u + m / ik)
    return ik_sigma @ nrm + ik * u_hat - m


def interior_fluxes(spaces: DiscreteSpaces, k: float, params: FluxParameters, u_h, face: int,
                    ref_pts, first: int = 0):
    """(ik σ̂, û) on an interior face, with side ``first`` taken as K¹ in the jump formulas."""
    mesh = spaces.mesh
    if not 0 <= face < mesh.n_interior_faces:
        raise ValueError("not an interior face")
    tm, lm, tp, _ = mesh.interior_faces[face]
    ref_pts = np.atleast_2d(ref_pts)
    fv = mesh.vertices[mesh.face_vertices([tm], [lm])[0]]
    x = fv[0] + ref_pts[:, :1] * (fv[1] - fv[0]) + ref_pts[:, 1:2] * (fv[2] - fv[0])
    n, _ = mesh.outward_normals([tm], [lm])
    h = mesh.face_h[face]
    alpha = params.alpha(h, spaces.p, k)
    beta = params.beta(h, spaces.p, k)
    side = []
    for t, sgn in ((tm, 1.0), (tp, -1.0)):
        ref = mesh.to_reference(np.full(len(x), t), x)[None]
        v, g = spaces.eval_v(u_h, [t], ref, grad=True)
        side.append((v[0], g[0], sgn * n[0]))
    if first == 1:
        side = side[::-1]
    (v1, g1, n1), (v2, g2, n2) = side
    jump_v = v1[:, None] * n1 + v2[:, None] * n2
    jump_g = g1 @ n1 + g2 @ n2
    ik = 1j * k
    ik_sigma = 0.5 * (g1 + g2) - ik * alpha * jump_v
    u_hat = 0.5 * (v1 + v2) - beta / ik * jump_g
    return ik_sigma, u_hat


# -- coercivity -------------------------------------------------------------------

def trace_constants(spaces: DiscreteSpaces) -> np.ndarray:
    """Smallest C with ||∇v||_{∂K} <= C ||∇v||_K on P_p(K), per element."""
    m = spaces.mesh
    rule = tet_rule(2 * spaces.p)
    frule = triangle_rule(2 * spaces.p)
    from .mesh import TET_FACES

    gref_vol = spaces.vbasis.grad(rule.points)[:, 1:]  # drop the constant mode
    out = np.empty(m.n_tets)
    ref_vertices = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], float)
    face_data = []
    for f in TET_FACES:
        rv = ref_vertices[f]
        pts = rv[0] + frule.points[:, :1] * (rv[1] - rv[0]) + frule.points[:, 1:] * (rv[2] - rv[0])
        face_data.append((f, pts, spaces.vbasis.grad(pts)[:, 1:]))
    for t in range(m.n_tets):
        ij = m.inv_jacobians[t]
        g = gref_vol @ ij
        A = m.det[t] * np.einsum("q,qis,qjs->ij", rule.weights, g, g)
        B = np.zeros_like(A)
        verts = m.vertices[m.tets[t]]
        for f, _, gf in face_data:
            pv = verts[f]
            area2 = np.linalg.norm(np.cross(pv[1] - pv[0], pv[2] - pv[0]))
            gg = gf @ ij
            B += area2 * np.einsum("q,qis,qjs->ij", frule.weights, gg, gg)
        out[t] = np.sqrt(scipy.linalg.eigh(B, A, eigvals_only=True)[-1])
    return out


@dataclass
class CoercivityReport:
    a_min: float
    d_used: float
    eps: float
    margins: np.ndarray  # (LHS - RHS) / scale per sample
    passed: bool


def weakened_coercivity_check(spaces: DiscreteSpaces, k: float, eps: float = 0.1,
                              n_samples: int = 200, seed: int = 0,
                              params: FluxParameters | None = None, slack: float = 1e-10,
                              nu_bounds: tuple[float, float] = (1.0, 1.0)) -> CoercivityReport:
    """Sample the weakened coercivity bound with α raised to the admissible minimum.

    The penalty scale is raised to ``aleph * h * C_trace^2 / p^2`` with
    ``aleph = 2 nu_max / (eps nu_min)``, and d is lowered until
    ``2 max δ/(1-δ) <= eps/2``.
    """
    params = params or FluxParameters()
    p = spaces.p
    mesh = spaces.mesh
    aleph = 2 * nu_bounds[1] / (eps * nu_bounds[0])
    ct2 = trace_constants(spaces) ** 2
    tm, _, tp, _ = mesh.interior_faces.T
    hf = mesh.face_h[: mesh.n_interior_faces]
    a_min = float(np.max(aleph * hf * np.maximum(ct2[tm], ct2[tp]) / p**2))
    delta_max = eps / (4 + eps)
    d_max = delta_max * p**2 / (k * mesh.face_h[mesh.n_interior_faces :].max())
    prm = params.with_(a=max(params.a, a_min), d=min(params.d, d_max), delta_policy="raise")
    asm = DGAssembler(spaces, k, prm)
    A = asm.assemble().A
    pieces = asm.norm_pieces()
    rng = np.random.default_rng(seed)
    margins = []
    for i in range(n_samples):
        v = rng.standard_normal(spaces.n_v)
        if i % 2:
            v = v + 1j * rng.standard_normal(spaces.n_v)
        form = np.vdot(v, A @ v)
        q = {name: float(np.real(np.vdot(v, M @ v))) for name, M in pieces.items()}
        lhs = form.real + eps * form.imag
        face_terms = q["jump_grad"] + q["jump"] + q["bnd_grad"]
        rhs_strong = 0.5 * q["grad"] - q["mass"] + 0.5 * eps * (face_terms + q["bnd"])
        scale = abs(lhs) + sum(abs(x) for x in q.values())
        margins.append((lhs - rhs_strong) / scale)
    margins = np.array(margins)
    return CoercivityReport(a_min, prm.d, eps, margins, bool(np.all(margins >= -slack)))
