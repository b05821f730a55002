"""Tetrahedral meshes of polyhedral domains and their boundary triangulations.

The structured family used throughout is the Kuhn (Freudenthal) split of a
uniform hexahedral grid of the cube ``(-a, a)^3``: every grid cell is cut
into six tetrahedra sharing the main diagonal, and refinement level ``L``
uses ``2**L`` cells per direction.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# local face f of a tet is the face opposite local vertex f
TET_FACES = np.array([[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]])


class MeshError(ValueError):
    pass


def _tet_diameters(vertices: np.ndarray, tets: np.ndarray) -> np.ndarray:
    pts = vertices[tets]
    h = np.zeros(len(tets))
    for a, b in itertools.combinations(range(4), 2):
        h = np.maximum(h, np.linalg.norm(pts[:, a] - pts[:, b], axis=1))
    return h


class Mesh:
    """Conforming affine tetrahedral mesh with face connectivity.

    Faces are numbered globally: interior faces first (``0 .. n_interior-1``),
    then boundary faces.  For an interior face the "minus" tet is the one with
    the lower index; its outward normal is the face normal used in jumps.
    """

    def __init__(self, vertices, tets, refinement_level: int = 0):
        vertices = np.ascontiguousarray(vertices, dtype=float)
        tets = np.ascontiguousarray(tets, dtype=np.int64)
        if tets.ndim != 2 or tets.shape[1] != 4:
            raise MeshError("tets must be an (n, 4) index array")
        jac = np.stack(
            [vertices[tets[:, i]] - vertices[tets[:, 0]] for i in (1, 2, 3)], axis=2
        )
        det = np.linalg.det(jac)
        flip = det < 0
        if np.any(flip):
            tets = tets.copy()
            tets[flip, 2], tets[flip, 3] = tets[flip, 3], tets[flip, 2].copy()
            jac[flip] = jac[flip][:, :, [0, 2, 1]]
            det[flip] = -det[flip]
        if np.any(det <= 1e-14 * np.max(np.abs(det))):
            raise MeshError("degenerate tetrahedron")

        self.vertices = vertices
        self.tets = tets
        self.refinement_level = int(refinement_level)
        self.jacobians = jac
        self.det = det
        self.inv_jacobians = np.linalg.inv(jac)
        self.volumes = det / 6.0
        self.h = _tet_diameters(vertices, tets)
        self._build_faces()

    @property
    def n_tets(self) -> int:
        return len(self.tets)

    def _build_faces(self):
        nt = self.n_tets
        local = np.repeat(np.arange(4)[None, :], nt, axis=0).ravel()
        owner = np.repeat(np.arange(nt), 4)
        fverts = self.tets[:, TET_FACES].reshape(-1, 3)
        keys = np.sort(fverts, axis=1)
        _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.ravel()
        if np.any(counts > 2):
            raise MeshError("non-manifold mesh: a face is shared by more than two tets")

        order = np.argsort(inverse, kind="stable")
        inv_sorted = inverse[order]
        starts = np.r_[0, np.flatnonzero(np.diff(inv_sorted)) + 1]
        sizes = np.diff(np.r_[starts, len(order)])

        pair_starts = starts[sizes == 2]
        first = order[pair_starts]
        second = order[pair_starts + 1]
        # lower tet index is the minus side
        swap = owner[first] > owner[second]
        first, second = np.where(swap, second, first), np.where(swap, first, second)
        tm, lm = owner[first], local[first]
        tp, lp = owner[second], local[second]
        vm = self.tets[tm][np.arange(len(tm))[:, None], TET_FACES[lm]]
        vp = self.tets[tp][np.arange(len(tp))[:, None], TET_FACES[lp]]
        perm = np.argmax(vm[:, :, None] == vp[:, None, :], axis=2)
        order_i = np.lexsort((lm, tm))
        self.interior_faces = np.column_stack([tm, lm, tp, lp])[order_i]
        self.interior_perm = perm[order_i]

        single = order[starts[sizes == 1]]
        bf = np.column_stack([owner[single], local[single]])
        self.boundary_faces = bf[np.lexsort((bf[:, 1], bf[:, 0]))]

        hmin = np.minimum(self.h[self.interior_faces[:, 0]], self.h[self.interior_faces[:, 2]])
        self.face_h = np.r_[hmin, self.h[self.boundary_faces[:, 0]]]

    @property
    def n_interior_faces(self) -> int:
        return len(self.interior_faces)

    @property
    def n_boundary_faces(self) -> int:
        return len(self.boundary_faces)

    def face_vertices(self, tet_ids, local_faces) -> np.ndarray:
        """Vertex ids (in the tet's local order) of the given faces."""
        tet_ids = np.asarray(tet_ids)
        return self.tets[tet_ids[:, None], TET_FACES[np.asarray(local_faces)]]

    def outward_normals(self, tet_ids, local_faces) -> tuple[np.ndarray, np.ndarray]:
        """Unit outward normals and areas of faces seen from their tets."""
        tet_ids = np.asarray(tet_ids)
        local_faces = np.asarray(local_faces)
        fv = self.vertices[self.face_vertices(tet_ids, local_faces)]
        cross = np.cross(fv[:, 1] - fv[:, 0], fv[:, 2] - fv[:, 0])
        area2 = np.linalg.norm(cross, axis=1)
        n = cross / area2[:, None]
        opposite = self.vertices[self.tets[tet_ids, local_faces]]
        sign = np.sign(np.einsum("ij,ij->i", n, fv[:, 0] - opposite))
        return n * sign[:, None], 0.5 * area2

    def inradii(self) -> np.ndarray:
        pts = self.vertices[self.tets]
        area = np.zeros(self.n_tets)
        for f in TET_FACES:
            c = np.cross(pts[:, f[1]] - pts[:, f[0]], pts[:, f[2]] - pts[:, f[0]])
            area += 0.5 * np.linalg.norm(c, axis=1)
        return 3.0 * self.volumes / area

    def to_reference(self, tet_ids, points) -> np.ndarray:
        """Map physical points (n, 3) in tets ``tet_ids`` to reference coordinates."""
        tet_ids = np.asarray(tet_ids)
        d = points - self.vertices[self.tets[tet_ids, 0]]
        return np.einsum("nij,nj->ni", self.inv_jacobians[tet_ids], d)

    def dump(self, path) -> None:
        """Write the ``v x y z`` / ``t i j k l`` debugging format."""
        lines = [f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in self.vertices]
        lines += [f"t {a} {b} {c} {d}" for a, b, c, d in self.tets]
        Path(path).write_text("\n".join(lines) + "\n")


def mesh_size(mesh: Mesh, face: int) -> float:
    """Mesh-size function on a face: min of adjacent diameters, or h_K on Γ."""
    if not 0 <= face < len(mesh.face_h):
        raise MeshError(f"unknown face id {face}")
    return float(mesh.face_h[face])


def build_cube_mesh(half_width: float = 1.0, refinement_level: int = 0) -> Mesh:
    """Kuhn tetrahedralization of ``(-a, a)^3`` with ``2**level`` cells per axis."""
    if refinement_level < 0:
        raise ValueError("refinement_level must be >= 0")
    n = 2**refinement_level
    g = np.linspace(-half_width, half_width, n + 1)
    X, Y, Z = np.meshgrid(g, g, g, indexing="ij")
    vertices = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])

    def vid(i, j, k):
        return (i * (n + 1) + j) * (n + 1) + k

    i, j, k = np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij")
    i, j, k = i.ravel(), j.ravel(), k.ravel()
    tets = []
    for perm in itertools.permutations(range(3)):
        off = np.zeros(3, dtype=int)
        corners = [vid(i, j, k)]
        for axis in perm:
            off[axis] += 1
            corners.append(vid(i + off[0], j + off[1], k + off[2]))
        tets.append(np.column_stack(corners))
    tets = np.stack(tets, axis=1).reshape(-1, 4)
    return Mesh(vertices, tets, refinement_level)


@dataclass
class SurfaceMesh:
    """Flat triangulation of a closed surface with outward normals.

    ``vertices`` is compact; ``mesh_vertex`` maps back to the volume mesh
    (or is ``None`` for stand-alone surfaces).
    """

    vertices: np.ndarray
    triangles: np.ndarray
    parent_tet: np.ndarray | None = None
    parent_face: np.ndarray | None = None
    mesh_vertex: np.ndarray | None = None
    normals: np.ndarray = field(init=False)
    areas: np.ndarray = field(init=False)

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=float)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int64)
        p = self.vertices[self.triangles]
        cross = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
        a2 = np.linalg.norm(cross, axis=1)
        self.normals = cross / a2[:, None]
        self.areas = 0.5 * a2
        self._build_edges()

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    def _build_edges(self):
        loc = np.array([[1, 2], [2, 0], [0, 1]])  # edge e opposite local vertex e
        e = np.sort(self.triangles[:, loc].reshape(-1, 2), axis=1)
        edges, inverse, counts = np.unique(e, axis=0, return_inverse=True, return_counts=True)
        if np.any(counts != 2):
            raise MeshError("surface is not closed: every edge must bound exactly two triangles")
        self.edges = edges
        self.triangle_edges = inverse.reshape(-1, 3)

    @property
    def diameters(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        return np.max(
            [np.linalg.norm(p[:, a] - p[:, b], axis=1) for a, b in ((0, 1), (1, 2), (2, 0))], axis=0
        )

    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)


def extract_surface(mesh: Mesh) -> SurfaceMesh:
    """Boundary triangles of ``mesh`` oriented with outward normals."""
    bt, bl = mesh.boundary_faces[:, 0], mesh.boundary_faces[:, 1]
    fv = mesh.face_vertices(bt, bl)
    n, _ = mesh.outward_normals(bt, bl)
    p = mesh.vertices[fv]
    cross = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    flip = np.einsum("ij,ij->i", cross, n) < 0
    fv = fv.copy()
    fv[flip, 1], fv[flip, 2] = fv[flip, 2], fv[flip, 1].copy()
    used, tris = np.unique(fv, return_inverse=True)
    return SurfaceMesh(
        vertices=mesh.vertices[used],
        triangles=tris.reshape(-1, 3),
        parent_tet=bt.copy(),
        parent_face=bl.copy(),
        mesh_vertex=used,
    )
