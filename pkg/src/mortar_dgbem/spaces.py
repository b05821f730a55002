"""Global discrete spaces: broken volume P_p, broken surface P_{p-1}, continuous surface P_p."""

from __future__ import annotations

import numpy as np

from .basis import dim_tet, dim_tri, lagrange_nodes, lagrange_triangle, lattice, modal_basis
from .mesh import Mesh, SurfaceMesh, extract_surface
from .quadrature import tet_rule, triangle_rule


def _z_dof_map(surface: SurfaceMesh, p: int) -> tuple[np.ndarray, int]:
    lat = lattice(p)
    nloc = len(lat)
    nv = surface.n_vertices
    ne = len(surface.edges)
    n_int = (p - 1) * (p - 2) // 2
    tris = surface.triangles
    dofs = np.empty((surface.n_triangles, nloc), dtype=np.int64)
    edge_base = nv
    face_base = nv + ne * (p - 1)
    int_count = 0
    for a, node in enumerate(lat):
        nz = np.flatnonzero(node)
        if len(nz) == 1:
            dofs[:, a] = tris[:, nz[0]]
        elif len(nz) == 2:
            i, j = nz
            e_local = 3 - i - j  # edge opposite the missing vertex
            edge = surface.triangle_edges[:, e_local]
            gi, gj = tris[:, i], tris[:, j]
            # position counted from the lower global vertex
            pos = np.where(gi < gj, node[j], node[i])
            dofs[:, a] = edge_base + edge * (p - 1) + (pos - 1)
        else:
            dofs[:, a] = face_base + np.arange(surface.n_triangles) * n_int + int_count
            int_count += 1
    return dofs, face_base + surface.n_triangles * n_int


class DiscreteSpaces:
    """V_h (broken P_p on tets), W_h (broken P_{p-1} on Γ_h), Z_h (continuous P_p on Γ_h).

    V_h and W_h use reference-orthonormal modal bases; Z_h uses the nodal
    Lagrange basis at equispaced nodes.
    """

    def __init__(self, mesh: Mesh, p: int, surface: SurfaceMesh | None = None):
        if p < 1:
            raise ValueError("polynomial degree p must be >= 1")
        self.mesh = mesh
        self.p = p
        self.surface = surface if surface is not None else extract_surface(mesh)
        self.vbasis = modal_basis(3, p)
        self.wbasis = modal_basis(2, p - 1)
        self.zbasis = lagrange_triangle(p)
        self.nb_v = dim_tet(p)
        self.nb_w = dim_tri(p - 1)
        self.nb_z = dim_tri(p)
        self.n_v = mesh.n_tets * self.nb_v
        self.n_w = self.surface.n_triangles * self.nb_w
        self.z_dofs, self.n_z = _z_dof_map(self.surface, p)
        self.v_dofs = np.arange(self.n_v).reshape(mesh.n_tets, self.nb_v)
        self.w_dofs = np.arange(self.n_w).reshape(self.surface.n_triangles, self.nb_w)
        # W basis written in the local Lagrange P_p basis (exact: P_{p-1} in P_p)
        self.w_in_lagrange = self.wbasis.eval(lagrange_nodes(p))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.n_v, self.n_w, self.n_z

    # -- geometry on the surface -------------------------------------------------
    def surface_points(self, tri_ids, ref_pts) -> np.ndarray:
        """Physical points (len(tri_ids), Q, 3) for triangle reference points (Q, 2)."""
        s = self.surface
        p = s.vertices[s.triangles[np.asarray(tri_ids)]]
        return (
            p[:, None, 0]
            + ref_pts[None, :, 0, None] * (p[:, None, 1] - p[:, None, 0])
            + ref_pts[None, :, 1, None] * (p[:, None, 2] - p[:, None, 0])
        )

    def trace_reference(self, tri_ids, phys) -> np.ndarray:
        """Reference coordinates in the parent tets of surface points (T, Q, 3)."""
        tri_ids = np.asarray(tri_ids)
        t = self.surface.parent_tet[tri_ids]
        q = phys.shape[1]
        ref = self.mesh.to_reference(np.repeat(t, q), phys.reshape(-1, 3))
        return ref.reshape(len(tri_ids), q, 3)

    # -- evaluation -------------------------------------------------------------
    def eval_v(self, coeffs, tet_ids, ref_pts, grad: bool = False):
        """Evaluate a V_h function at per-tet reference points (T, Q, 3)."""
        tet_ids = np.asarray(tet_ids)
        c = np.asarray(coeffs)[self.v_dofs[tet_ids]]
        t, q = ref_pts.shape[:2]
        phi = self.vbasis.eval(ref_pts.reshape(-1, 3)).reshape(t, q, -1)
        val = np.einsum("tqb,tb->tq", phi, c)
        if not grad:
            return val
        g = self.vbasis.grad(ref_pts.reshape(-1, 3)).reshape(t, q, -1, 3)
        g = np.einsum("tqbr,trs->tqbs", g, self.mesh.inv_jacobians[tet_ids])
        return val, np.einsum("tqbs,tb->tqs", g, c)

    def eval_w(self, coeffs, tri_ids, ref_pts) -> np.ndarray:
        c = np.asarray(coeffs)[self.w_dofs[np.asarray(tri_ids)]]
        return c @ self.wbasis.eval(ref_pts).T

    def eval_z(self, coeffs, tri_ids, ref_pts) -> np.ndarray:
        c = np.asarray(coeffs)[self.z_dofs[np.asarray(tri_ids)]]
        return c @ self.zbasis.eval(ref_pts).T

    # -- interpolation ------------------------------------------------------------
    def interpolate_v(self, f, degree: int | None = None) -> np.ndarray:
        """Elementwise L2 projection of ``f(points (n,3)) -> (n,)`` onto V_h."""
        rule = tet_rule(degree or 2 * self.p + 2)
        m = self.mesh
        x = m.vertices[m.tets[:, 0]][:, None, :] + np.einsum("tij,qj->tqi", m.jacobians, rule.points)
        vals = np.asarray(f(x.reshape(-1, 3))).reshape(m.n_tets, -1)
        phi = self.vbasis.eval(rule.points)
        return np.einsum("tq,q,qb->tb", vals, rule.weights, phi).ravel()

    def interpolate_w(self, f, degree: int | None = None) -> np.ndarray:
        """Trianglewise L2 projection onto W_h; ``f(points, normals)``."""
        rule = triangle_rule(degree or 2 * self.p + 2)
        tri = np.arange(self.surface.n_triangles)
        x = self.surface_points(tri, rule.points)
        nrm = np.repeat(self.surface.normals[:, None, :], len(rule), axis=1)
        vals = np.asarray(f(x.reshape(-1, 3), nrm.reshape(-1, 3))).reshape(len(tri), -1)
        phi = self.wbasis.eval(rule.points)
        return np.einsum("tq,q,qb->tb", vals, rule.weights, phi).ravel()

    def interpolate_z(self, f) -> np.ndarray:
        """Nodal interpolation onto Z_h; ``f(points)`` on Γ."""
        nodes = lagrange_nodes(self.p)
        x = self.surface_points(np.arange(self.surface.n_triangles), nodes)
        vals = np.asarray(f(x.reshape(-1, 3))).reshape(x.shape[:2])
        out = np.empty(self.n_z, dtype=vals.dtype)
        out[self.z_dofs] = vals
        return out


class SurfaceSpaces:
    """W_h and Z_h on a bare surface triangulation (no volume mesh needed)."""

    def __init__(self, surface: SurfaceMesh, p: int):
        if p < 1:
            raise ValueError("polynomial degree p must be >= 1")
        self.surface = surface
        self.p = p
        self.wbasis = modal_basis(2, p - 1)
        self.zbasis = lagrange_triangle(p)
        self.nb_w = dim_tri(p - 1)
        self.nb_z = dim_tri(p)
        self.n_w = surface.n_triangles * self.nb_w
        self.z_dofs, self.n_z = _z_dof_map(surface, p)
        self.w_dofs = np.arange(self.n_w).reshape(surface.n_triangles, self.nb_w)
        self.w_in_lagrange = self.wbasis.eval(lagrange_nodes(p))

    surface_points = DiscreteSpaces.surface_points
    eval_w = DiscreteSpaces.eval_w
    eval_z = DiscreteSpaces.eval_z
    interpolate_w = DiscreteSpaces.interpolate_w
    interpolate_z = DiscreteSpaces.interpolate_z


def make_spaces(mesh: Mesh, p: int) -> DiscreteSpaces:
    return DiscreteSpaces(mesh, p)


def interpolate(space: DiscreteSpaces, which: str, f):
    """Interpolate into ``which`` in {"V", "W", "Z"}."""
    if which == "V":
        return space.interpolate_v(f)
    if which == "W":
        return space.interpolate_w(lambda x, n: f(x))
    if which == "Z":
        return space.interpolate_z(f)
    raise ValueError(f"unknown space {which!r}")
