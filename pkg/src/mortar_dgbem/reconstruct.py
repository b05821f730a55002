"""Discontinuous-to-continuous reconstruction 𝒫 = 𝒫₂ ∘ 𝒫₁ on a refined submesh.

Each parent tetrahedron is cut by the edgewise (Freudenthal) subdivision with
``n = ℓ²`` segments per edge into ``n³`` congruent-volume subtets.  Applying
the subdivision in the frame where the parent vertices are sorted by global
index makes the induced face triangulations agree on shared faces, so the
submesh is conforming without any closure step.

𝒫₁ maps a broken H¹ field to Ṽ_h, the piecewise linears on the submesh that
are continuous inside each parent: nodal values are averages, over the
incident subtets of the parent, of local L2 projections onto P₁ (a Clément
type quasi-interpolant).  𝒫₂ averages the parent copies of each submesh
vertex (Oswald operator), giving a globally continuous P₁ function.

Because parents are affine, every linear map above is a fixed reference
matrix per vertex ordering class, which keeps ℓ = 3 on 3000 parents cheap.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .fields import Field
from .mesh import TET_FACES, Mesh
from .quadrature import tet_rule, triangle_rule
from .spaces import DiscreteSpaces


# -- reference subdivision -----------------------------------------------------------

@dataclass(frozen=True)
class _Reference:
    n: int
    bary: np.ndarray      # (nloc, 4) integer barycentrics (sum n) in the sorted frame
    subtets: np.ndarray   # (n³, 4) lattice indices
    mass: np.ndarray      # (nloc, nloc) P1 mass on the unit-determinant parent
    stiff: np.ndarray     # (3, 3, nloc, nloc): ∑_s |s| ∂_a λ ∂_b λ in sorted-frame coordinates
    face_nodes: tuple     # per sorted-frame vertex j: lattice ids with a_j = 0
    face_tris: tuple      # per j: (m, 3) lattice ids of the subtriangles on that face


@lru_cache(maxsize=None)
def edgewise_reference(n: int) -> _Reference:
    """Freudenthal subdivision of the simplex scaled by ``n`` into ``n³`` subtets."""
    if n < 1:
        raise ValueError("subdivision count must be >= 1")
    # staircase coordinates n >= x1 >= x2 >= x3 >= 0
    pts = [(x1, x2, x3) for x1 in range(n + 1) for x2 in range(x1 + 1) for x3 in range(x2 + 1)]
    index = {p: i for i, p in enumerate(pts)}
    sub = []
    for c in itertools.product(range(n), repeat=3):
        for perm in itertools.permutations(range(3)):
            x = list(c)
            verts = [tuple(x)]
            for axis in perm:
                x[axis] += 1
                verts.append(tuple(x))
            if all(v in index for v in verts):
                sub.append([index[v] for v in verts])
    sub = np.array(sub, dtype=np.int64)
    X = np.array(pts, dtype=np.int64)
    bary = np.column_stack([n - X[:, 0], X[:, 0] - X[:, 1], X[:, 1] - X[:, 2], X[:, 2]])
    assert len(sub) == n**3

    # geometry of the subtets in the sorted reference frame (ξ = a[1:] / n)
    xi = bary[:, 1:] / n
    J = np.stack([xi[sub[:, i]] - xi[sub[:, 0]] for i in (1, 2, 3)], axis=2)
    det = np.abs(np.linalg.det(J))
    # gradients of the four barycentrics of each subtet w.r.t. ξ
    inv = np.linalg.inv(J)  # rows: gradients of λ1..λ3
    g = np.concatenate([-inv.sum(axis=1, keepdims=True), inv], axis=1)  # (s, 4, 3)
    vol = det / 6.0
    nloc = len(pts)
    local_mass = (np.eye(4) + 1.0) / 20.0
    mass = np.zeros((nloc, nloc))
    stiff = np.zeros((3, 3, nloc, nloc))
    rows = np.repeat(sub[:, :, None], 4, axis=2)
    cols = np.repeat(sub[:, None, :], 4, axis=1)
    np.add.at(mass, (rows, cols), vol[:, None, None] * local_mass)
    for a in range(3):
        for b in range(3):
            np.add.at(stiff[a, b], (rows, cols), vol[:, None, None] * g[:, :, None, a] * g[:, None, :, b])

    face_nodes, face_tris = [], []
    for j in range(4):
        on = bary[:, j] == 0
        face_nodes.append(np.flatnonzero(on))
        tris = set()
        for s in sub:
            f = [v for v in s if on[v]]
            if len(f) == 3:
                tris.add(tuple(sorted(f)))
        face_tris.append(np.array(sorted(tris), dtype=np.int64))
    return _Reference(n, bary, sub, mass, stiff, tuple(face_nodes), tuple(face_tris))


# -- submesh ---------------------------------------------------------------------

@dataclass
class Submesh:
    """Refined mesh 𝒯̃_h and the parent-local numbering of Ṽ_h."""

    parent: Mesh
    ell: int
    ref: _Reference
    order: np.ndarray        # (T, 4) parent local vertex indices sorted by global id
    vertex_ids: np.ndarray   # (T, nloc) global submesh vertex of each parent lattice node
    vertices: np.ndarray     # (nv, 3)
    _tets: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.ref.n

    @property
    def n_local(self) -> int:
        return len(self.ref.bary)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_tilde(self) -> int:
        """Dimension of Ṽ_h (parent-wise copies of the lattice nodes)."""
        return self.parent.n_tets * self.n_local

    @property
    def tets(self) -> np.ndarray:
        """(T·n³, 4) global vertex ids; subtets of parent K are rows K·n³ ... (K+1)·n³ - 1."""
        if self._tets is None:
            self._tets = self.vertex_ids[:, self.ref.subtets].reshape(-1, 4)
        return self._tets

    @property
    def subtet_parent(self) -> np.ndarray:
        return np.repeat(np.arange(self.parent.n_tets), self.n**3)

    def sorted_jacobians(self) -> np.ndarray:
        """Jacobians of the parents in the sorted-vertex frame."""
        m = self.parent
        P = m.vertices[np.take_along_axis(m.tets, self.order, axis=1)]
        return np.stack([P[:, i] - P[:, 0] for i in (1, 2, 3)], axis=2)

    def subtet_diameters(self) -> np.ndarray:
        P = self.vertices[self.tets]
        d = np.zeros(len(P))
        for a, b in itertools.combinations(range(4), 2):
            d = np.maximum(d, np.linalg.norm(P[:, a] - P[:, b], axis=1))
        return d

    def conformity_defects(self) -> int:
        """Number of submesh faces that are neither on ∂Ω nor shared by exactly two subtets."""
        faces = np.sort(self.tets[:, TET_FACES].reshape(-1, 3), axis=1)
        _, counts = np.unique(faces, axis=0, return_counts=True)
        singles = np.sum(counts == 1)
        expected_boundary = self.parent.n_boundary_faces * self.n**2
        return int(np.sum(counts > 2) + abs(singles - expected_boundary))


def build_submesh(mesh: Mesh, ell: int) -> Submesh:
    """Edgewise subdivision with ``ℓ²`` segments per parent edge."""
    ell = int(ell)
    if ell < 1:
        raise ValueError("ℓ must be a positive integer")
    ref = edgewise_reference(ell * ell)
    n = ref.n
    order = np.argsort(mesh.tets, axis=1, kind="stable")
    gv = np.take_along_axis(mesh.tets, order, axis=1)  # sorted global ids
    a = ref.bary
    # canonical key of a lattice node: its nonzero (vertex, multiplicity) pairs in sorted order
    T, L = mesh.n_tets, len(a)
    ids = np.where(a[None] > 0, gv[:, None, :], -1)
    mult = np.broadcast_to(a[None], ids.shape)
    # move zero entries to the end while keeping the order of the nonzero ones
    pos = np.argsort(a == 0, axis=1, kind="stable")
    ids = np.take_along_axis(ids, np.broadcast_to(pos[None], ids.shape), axis=2)
    mult = np.take_along_axis(mult, np.broadcast_to(pos[None], ids.shape), axis=2)
    keys = np.concatenate([ids, mult], axis=2).reshape(T * L, 8)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    vertex_ids = inverse.reshape(T, L)
    # coordinates from any representative
    first = np.full(len(uniq), -1)
    first[inverse.ravel()[::-1]] = np.arange(T * L)[::-1]
    P = mesh.vertices[gv]  # (T, 4, 3)
    coords = np.einsum("la,tad->tld", a / n, P).reshape(T * L, 3)
    return Submesh(mesh, ell, ref, order, vertex_ids, coords[first])


# -- 𝒫₁ ----------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _p1_sampling(n: int, degree: int):
    """Points and weights for the subtet moments ∫ v λ_i, plus the averaging map.

    Returns (bary_q (S·Q, 4) sorted-frame barycentrics of all subtet points,
    lam (S·Q, 4) subtet barycentrics at those points, w (Q,), A (nloc, S·4)) where
    ``A`` turns normalized moments ⟨v λ_i⟩_s into averaged nodal values.
    """
    ref = edgewise_reference(n)
    rule = tet_rule(degree)
    lam_q = np.column_stack([1 - rule.points.sum(axis=1), rule.points])  # (Q, 4)
    a = ref.bary / n
    corners = a[ref.subtets]  # (S, 4, 4)
    bary_q = np.einsum("qi,sia->sqa", lam_q, corners).reshape(-1, 4)
    S = len(ref.subtets)
    nloc = len(ref.bary)
    # local projection: c = 20 (I - J/5) ⟨v λ⟩ with ⟨·⟩ the subtet average
    proj = 20.0 * (np.eye(4) - 0.2)
    counts = np.bincount(ref.subtets.ravel(), minlength=nloc).astype(float)
    A = np.zeros((nloc, S * 4))
    for s in range(S):
        for i in range(4):
            A[ref.subtets[s, i], s * 4:(s + 1) * 4] += proj[i] / counts[ref.subtets[s, i]]
    return bary_q, lam_q, rule.weights, A


def _parent_reference(sub: Submesh, K, bary_sorted) -> np.ndarray:
    """Reference coordinates (len(K), Q, 3) in each parent's own vertex order."""
    inv = np.argsort(sub.order[K], axis=1)  # local vertex j sits at sorted position inv[j]
    b = np.take(bary_sorted, inv, axis=1)  # (Q, len(K), 4)
    return np.ascontiguousarray(b.transpose(1, 0, 2)[:, :, 1:])


def _moments_matrix(sub: Submesh, spaces: DiscreteSpaces, degree: int):
    """Per-parent maps modal coefficients -> Ṽ_h lattice values, grouped by vertex order."""
    bary_q, lam_q, w, A = _p1_sampling(sub.n, degree)
    S = sub.n**3
    Q = len(w)
    out = {}
    classes, inverse = np.unique(sub.order, axis=0, return_inverse=True)
    for c, perm in enumerate(classes):
        b = np.zeros((len(bary_q), 4))
        b[:, perm] = bary_q
        phi = spaces.vbasis.eval(b[:, 1:])  # (S·Q, nb)
        # normalized moments 6 ∑_q w_q v λ_i (subtet average of v λ_i)
        mom = 6.0 * np.einsum("q,qi,sqb->sib", w, lam_q, phi.reshape(S, Q, -1)).reshape(S * 4, -1)
        out[c] = A @ mom
    return inverse.ravel(), out


def apply_P1(v, submesh: Submesh, spaces: DiscreteSpaces | None = None, degree: int | None = None,
             chunk: int = 256) -> np.ndarray:
    """Quasi-interpolant into Ṽ_h; returns lattice values of shape (T, nloc).

    ``v`` is a V_h coefficient vector (``spaces`` required) or a Field.
    """
    T = submesh.parent.n_tets
    if not isinstance(v, Field):
        if spaces is None:
            raise ValueError("a coefficient vector needs its DiscreteSpaces")
        deg = degree or spaces.p + 1
        cls, maps = _moments_matrix(submesh, spaces, deg)
        c = np.asarray(v).reshape(T, spaces.nb_v)
        out = np.empty((T, submesh.n_local), dtype=np.result_type(c.dtype, float))
        for k, R in maps.items():
            sel = cls == k
            out[sel] = c[sel] @ R.T
        return out
    deg = degree or 4
    bary_q, lam_q, w, A = _p1_sampling(submesh.n, deg)
    S, Q = submesh.n**3, len(w)
    m = submesh.parent
    out = None
    for lo in range(0, T, chunk):
        K = np.arange(lo, min(T, lo + chunk))
        ref = _parent_reference(submesh, K, bary_q)
        phys = m.vertices[m.tets[K, 0]][:, None, :] + np.einsum("tij,tqj->tqi", m.jacobians[K], ref)
        val, _ = v(K, ref, phys)
        mom = 6.0 * np.einsum("q,qi,tsq->tsi", w, lam_q, val.reshape(len(K), S, Q)).reshape(len(K), -1)
        res = mom @ A.T
        if out is None:
            out = np.empty((T, submesh.n_local), dtype=res.dtype)
        out[K] = res
    return out


# -- 𝒫₂ ----------------------------------------------------------------------------

def apply_P2(vt, submesh: Submesh) -> np.ndarray:
    """Oswald averaging: value at each submesh vertex = mean over its parent copies."""
    vt = np.asarray(vt).reshape(submesh.parent.n_tets, submesh.n_local)
    ids = submesh.vertex_ids.ravel()
    cnt = np.bincount(ids, minlength=submesh.n_vertices)
    if np.iscomplexobj(vt):
        s = np.bincount(ids, vt.real.ravel(), submesh.n_vertices) + 1j * np.bincount(
            ids, vt.imag.ravel(), submesh.n_vertices)
    else:
        s = np.bincount(ids, vt.ravel(), submesh.n_vertices)
    return s / cnt


def gather(vc, submesh: Submesh) -> np.ndarray:
    """Continuous vertex values -> parent-local lattice values (an element of Ṽ_h)."""
    return np.asarray(vc)[submesh.vertex_ids]


# -- norms of Ṽ_h functions -----------------------------------------------------------

def tilde_l2_sq(U, submesh: Submesh) -> np.ndarray:
    """Per-parent ‖u‖²_{0,K} for lattice values U (T, nloc)."""
    det = submesh.parent.det
    # quadratic forms: clip round-off below zero
    return det * np.maximum(np.real(np.einsum("ti,ij,tj->t", U.conj(), submesh.ref.mass, U)), 0.0)


def tilde_grad_sq(U, submesh: Submesh) -> np.ndarray:
    """Per-parent ‖∇u‖²_{0,K} for lattice values U (T, nloc)."""
    J = submesh.sorted_jacobians()
    Ji = np.linalg.inv(J)
    G = np.einsum("tai,tbi->tab", Ji, Ji)  # J⁻¹ J⁻ᵀ
    det = np.abs(np.linalg.det(J))
    SU = np.einsum("abij,tj->tabi", submesh.ref.stiff, U)
    return det * np.maximum(np.real(np.einsum("tab,ti,tabi->t", G, U.conj(), SU)), 0.0)


def tilde_jump_sq(U, submesh: Submesh) -> np.ndarray:
    """Per interior parent face ‖[u]‖²_{0,F} for a Ṽ_h function (lattice values)."""
    m = submesh.parent
    ref = submesh.ref
    tm, lm, tp, lp = m.interior_faces.T
    # sorted-frame index of the vertex opposite each local face
    jm = np.argmax(submesh.order[tm] == lm[:, None], axis=1)
    jp = np.argmax(submesh.order[tp] == lp[:, None], axis=1)
    _, area = m.outward_normals(tm, lm)
    out = np.zeros(len(tm))
    tri_mass = (np.eye(3) + 1.0) / 12.0
    n2 = ref.n**2
    for a in range(4):
        for b in range(4):
            sel = np.flatnonzero((jm == a) & (jp == b))
            if len(sel) == 0:
                continue
            nodes_m, nodes_p = ref.face_nodes[a], ref.face_nodes[b]
            gm = submesh.vertex_ids[tm[sel]][:, nodes_m]
            gp = submesh.vertex_ids[tp[sel]][:, nodes_p]
            om, op = np.argsort(gm, axis=1), np.argsort(gp, axis=1)
            vm = np.take_along_axis(U[tm[sel]][:, nodes_m], om, axis=1)
            vp = np.take_along_axis(U[tp[sel]][:, nodes_p], op, axis=1)
            d = vm - vp  # aligned by global vertex id
            # triangles of face a in minus-side lattice ids -> positions in the sorted order
            pos_of = np.empty((len(sel), len(ref.bary)), dtype=np.int64)
            rank = np.argsort(om, axis=1)
            pos_of[:, nodes_m] = rank
            tri_pos = pos_of[:, ref.face_tris[a]]  # (F, ntri, 3)
            dt = np.take_along_axis(d[:, None, :], tri_pos.reshape(len(sel), 1, -1), axis=2)
            dt = dt.reshape(len(sel), -1, 3)
            e = np.real(np.einsum("fti,ij,ftj->f", dt.conj(), tri_mass, dt))
            out[sel] = area[sel] / n2 * e
    return out


# -- the composite operator and its three estimates ---------------------------------

@dataclass
class ReconstructionResult:
    values: np.ndarray            # continuous P1 coefficients on the submesh vertices
    tilde: np.ndarray             # 𝒫₁ v as lattice values (T, nloc)
    ratios: dict                  # "A", "B", "C": LHS / RHS of the three estimates
    terms: dict = field(default_factory=dict)


def _dg_terms(v, spaces: DiscreteSpaces, degree: int):
    """‖v‖², ‖∇_h v‖², ‖h∇_h v‖² per element and ‖[v]‖² per interior face."""
    from .dg_forms import FaceQuadrature

    m = spaces.mesh
    rule = tet_rule(degree)
    tets = np.arange(m.n_tets)
    ref = np.broadcast_to(rule.points, (m.n_tets,) + rule.points.shape)
    val, grad = spaces.eval_v(v, tets, ref, grad=True)
    w = rule.weights[None] * m.det[:, None]
    l2 = np.sum(w * np.abs(val) ** 2, axis=1)
    h1 = np.sum(w * np.sum(np.abs(grad) ** 2, axis=2), axis=1)
    fq = FaceQuadrature(spaces, degree, 1)
    tm, tp = fq.i_tets
    vm = spaces.eval_v(v, tm, fq.i_ref_minus)
    vp = spaces.eval_v(v, tp, fq.i_ref_plus)
    jump = np.sum(fq.i_weights * np.abs(vm - vp) ** 2, axis=1)
    return l2, h1, jump, fq.i_h


def _boundary_defect_sq(v, P, submesh: Submesh, spaces: DiscreteSpaces, degree: int) -> np.ndarray:
    """Per boundary face ‖v - 𝒫v‖²_{0,F} with 𝒫v linear on each face subtriangle."""
    m = submesh.parent
    ref = submesh.ref
    n = ref.n
    bt, bl = m.boundary_faces.T
    jb = np.argmax(submesh.order[bt] == bl[:, None], axis=1)
    _, area = m.outward_normals(bt, bl)
    rule = triangle_rule(degree)
    lam = np.column_stack([1 - rule.points.sum(axis=1), rule.points])  # (Q, 3)
    out = np.zeros(len(bt))
    for a in range(4):
        sel = np.flatnonzero(jb == a)
        if len(sel) == 0:
            continue
        tris = ref.face_tris[a]  # (m, 3) lattice ids
        bq = np.einsum("qi,mia->mqa", lam, ref.bary[tris] / n).reshape(-1, 4)
        K = bt[sel]
        r = _parent_reference(submesh, K, bq)
        vv = spaces.eval_v(v, K, r).reshape(len(sel), len(tris), -1)
        pv = np.einsum("fmi,qi->fmq", P[submesh.vertex_ids[K][:, tris]], lam)
        e = np.sum(rule.weights[None, None] * np.abs(vv - pv) ** 2, axis=(1, 2))
        out[sel] = 2.0 * area[sel] / n**2 * e
    return out


def reconstruct(v, spaces: DiscreteSpaces, ell: int, submesh: Submesh | None = None,
                degree: int | None = None) -> ReconstructionResult:
    """𝒫v = 𝒫₂(𝒫₁ v) for a V_h coefficient vector, with the three estimate ratios.

    A: ‖∇𝒫v‖ / (‖∇_h v‖ + ‖𝗁^{-1/2} ℓ [v]‖_{F_I})
    B: ‖𝒫v‖ / (‖𝗁 ℓ^{-2} ∇_h v‖ + ‖v‖ + ‖𝗁^{1/2} ℓ^{-1} [v]‖_{F_I})
    C: ‖𝗁^{-1/2} ℓ (v - 𝒫v)‖_{0,Γ} / (‖∇_h v‖ + ‖𝗁^{-1/2} ℓ [v]‖_{F_I})
    """
    sub = submesh if submesh is not None else build_submesh(spaces.mesh, ell)
    if sub.ell != ell or sub.parent is not spaces.mesh:
        raise ValueError("submesh does not match the mesh and ℓ")
    deg = degree or 2 * spaces.p + 2
    vt = apply_P1(v, sub, spaces)
    P = apply_P2(vt, sub)
    PU = gather(P, sub)
    m = spaces.mesh
    l2, h1, jump, hf = _dg_terms(v, spaces, deg)
    grad_v = np.sqrt(h1.sum())
    jump_hi = ell * np.sqrt(np.sum(jump / hf))
    jump_lo = np.sqrt(np.sum(jump * hf)) / ell
    lhs_a = np.sqrt(tilde_grad_sq(PU, sub).sum())
    lhs_b = np.sqrt(tilde_l2_sq(PU, sub).sum())
    hb = m.face_h[m.n_interior_faces:]
    lhs_c = ell * np.sqrt(np.sum(_boundary_defect_sq(v, P, sub, spaces, deg) / hb))
    rhs_a = grad_v + jump_hi
    rhs_b = np.sqrt(np.sum(m.h**2 * h1)) / ell**2 + np.sqrt(l2.sum()) + jump_lo
    tiny = np.finfo(float).tiny

    def ratio(a, b):
        return float(a / b) if b > tiny else (0.0 if a <= tiny else np.inf)

    terms = {"grad_Pv": lhs_a, "Pv": lhs_b, "bnd_defect": lhs_c, "grad_v": grad_v,
             "jump_weighted": jump_hi, "rhs_A": rhs_a, "rhs_B": rhs_b}
    ratios = {"A": ratio(lhs_a, rhs_a), "B": ratio(lhs_b, rhs_b), "C": ratio(lhs_c, rhs_a)}
    return ReconstructionResult(P, vt, ratios, terms)


def p1_approximation_ratio(v, spaces: DiscreteSpaces, submesh: Submesh) -> float:
    """‖v - 𝒫₁v‖ / ‖𝗁 ℓ^{-2} ∇_h v‖ evaluated by subtet quadrature."""
    deg = 2 * spaces.p + 2
    vt = apply_P1(v, submesh, spaces)
    bary_q, lam_q, w, _ = _p1_sampling(submesh.n, deg)
    S, Q = submesh.n**3, len(w)
    m = spaces.mesh
    err = 0.0
    for lo in range(0, m.n_tets, 128):
        K = np.arange(lo, min(m.n_tets, lo + 128))
        ref = _parent_reference(submesh, K, bary_q)
        val = spaces.eval_v(v, K, ref).reshape(len(K), S, Q)
        pv = np.einsum("tsi,qi->tsq", vt[K][:, submesh.ref.subtets], lam_q)
        # each subtet has volume det_K / (6 n³); rule weights sum to 1/6
        err += np.sum(m.det[K, None, None] / S * w[None, None] * np.abs(val - pv) ** 2)
    _, h1, _, _ = _dg_terms(v, spaces, deg)
    den = np.sqrt(np.sum(m.h**2 * h1)) / submesh.ell**2
    return float(np.sqrt(err) / den) if den > 0 else 0.0


def p2_approximation_ratio(vt, submesh: Submesh) -> float:
    """‖ṽ - 𝒫₂ṽ‖ / ‖𝗁^{1/2} ℓ^{-1} [ṽ]‖_{F_I} for lattice values ṽ."""
    vt = np.asarray(vt).reshape(submesh.parent.n_tets, submesh.n_local)
    d = vt - gather(apply_P2(vt, submesh), submesh)
    num = np.sqrt(tilde_l2_sq(d, submesh).sum())
    m = submesh.parent
    hf = m.face_h[: m.n_interior_faces]
    den = np.sqrt(np.sum(hf * tilde_jump_sq(vt, submesh))) / submesh.ell
    return float(num / den) if den > 0 else 0.0
