"""Galerkin boundary element matrices for the Helmholtz layer operators.

All four operators are first assembled on the broken Lagrange space of
degree p on the surface triangles (local nodal basis per triangle, no
continuity), which contains both W_h and Z_h.  Blocks on W_h / Z_h are then
obtained by exact restriction ``P_test^T M P_trial``.

Operator conventions (x: test point, y: trial point, n outward):

* ``V``  : G(x, y)
* ``K``  : dG/dn(y)
* ``K'`` : dG/dn(x)
* ``W``  : Maue form  G (curl u . curl v) - k^2 G (n_x . n_y) u v

with G(x, y) = exp(ik|x-y|) / (4 pi |x-y|).  Entries are bilinear
(``M[i, j] = <op phi_j, psi_i>``); the bases are real, so this is the same as
conjugating the test function.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import _bem_kernels as kern
from .backend import configure_threads, use_numba
from .basis import lagrange_triangle
from .quadrature import triangle_rule
from .singular import PERMUTATIONS, classify_pair, lattice_permutations, singular_panel_rule

log = logging.getLogger(__name__)

OPERATOR_KINDS = ("V", "K", "K'", "W", "B", "A'", "M")


class SpaceMismatchError(ValueError):
    pass


def helmholtz_kernel(k: float, x, y):
    """G_k(x, y) for point arrays (..., 3)."""
    r = np.linalg.norm(np.asarray(x) - np.asarray(y), axis=-1)
    return np.exp(1j * k * r) / (4 * np.pi * r)


def helmholtz_kernel_dny(k: float, x, y, ny):
    """Normal derivative of G_k(x, y) with respect to y in direction ny."""
    d = np.asarray(x) - np.asarray(y)
    r = np.linalg.norm(d, axis=-1)
    return np.exp(1j * k * r) * (1 - 1j * k * r) * np.sum(d * ny, axis=-1) / (4 * np.pi * r**3)


def helmholtz_kernel_dnx(k: float, x, y, nx):
    d = np.asarray(x) - np.asarray(y)
    r = np.linalg.norm(d, axis=-1)
    return -np.exp(1j * k * r) * (1 - 1j * k * r) * np.sum(d * nx, axis=-1) / (4 * np.pi * r**3)


@dataclass(frozen=True)
class BemQuadrature:
    """Orders (Gauss points per direction) of the panel-pair rules.

    Regular pairs are graded by centroid distance / larger panel diameter:
    below ``near_ratio`` they use ``near``, below ``far_ratio`` ``mid``,
    otherwise ``far``.  Singular pairs use ``singular`` points per cube
    dimension.  Orders left as ``None`` are chosen from p and the number of
    wavelengths per panel, kappa = k * (largest panel diameter), so that the
    oscillation of exp(ik|x-y|) stays resolved.
    """

    singular: int | None = None
    near: int | None = None
    mid: int | None = None
    far: int | None = None
    near_ratio: float = 1.5
    far_ratio: float = 4.0
    max_auto_singular: int = 18  # 18^4 * 6 points per pair already needs ~170 MB per table

    def resolve(self, p: int, kappa: float) -> dict:
        singular = max(p + 3, 6, int(np.ceil(4 + 0.85 * kappa)))
        if singular > self.max_auto_singular and self.singular is None:
            log.warning("singular order %d capped at %d (kappa = %.1f: panels span several "
                        "wavelengths)", singular, self.max_auto_singular, kappa)
            singular = self.max_auto_singular
        auto = {
            "singular": singular,
            "near": max(p + 8, int(np.ceil(5 + 0.8 * kappa))),
            "mid": max(p + 6, int(np.ceil(4 + 0.6 * kappa))),
            "far": max(p + 4, int(np.ceil(3 + 0.5 * kappa))),
        }
        return {key: getattr(self, key) or val for key, val in auto.items()}

    def scaled(self, p: int, kappa: float, factor: float) -> "BemQuadrature":
        """Explicit rule set with every resolved order multiplied by ``factor``."""
        o = self.resolve(p, kappa)
        up = {key: int(np.ceil(v * factor)) for key, v in o.items()}
        return BemQuadrature(**up, near_ratio=self.near_ratio, far_ratio=self.far_ratio)


RULE_NAMES = ("identical", "shared_edge", "shared_vertex", "near", "mid", "far")


def classify_pairs(surface, quad: BemQuadrature) -> np.ndarray:
    """All unordered panel pairs ``(i, j, rule, perm_x, perm_y)`` with ``i <= j``."""
    nt = surface.n_triangles
    tris = surface.triangles
    inc = sp.csr_matrix((np.ones(3 * nt), (np.repeat(np.arange(nt), 3), tris.ravel())),
                        shape=(nt, surface.n_vertices))
    shared = (inc @ inc.T).tocoo()
    touching = shared.row <= shared.col
    ti, tj = shared.row[touching], shared.col[touching]
    sing = []
    for a, b in zip(ti, tj):
        kind, px, py = classify_pair(tris[a], tris[b])
        sing.append((a, b, RULE_NAMES.index(kind), px, py))
    sing = np.array(sing, dtype=np.int64).reshape(-1, 5)

    iu, ju = np.triu_indices(nt, 1)
    touch_mask = np.zeros((nt, nt), dtype=bool)
    touch_mask[ti, tj] = True
    keep = ~touch_mask[iu, ju]
    iu, ju = iu[keep], ju[keep]
    c = surface.centroids()
    diam = surface.diameters
    ratio = np.linalg.norm(c[iu] - c[ju], axis=1) / np.maximum(diam[iu], diam[ju])
    rule = np.where(ratio < quad.near_ratio, 3, np.where(ratio < quad.far_ratio, 4, 5))
    reg = np.column_stack([iu, ju, rule, np.zeros_like(iu), np.zeros_like(iu)]).astype(np.int64)
    return np.vstack([sing, reg])


def _rule_tables(p: int, orders: dict):
    rules = [singular_panel_rule(k, orders["singular"]) for k in RULE_NAMES[:3]]
    rules += [singular_panel_rule("disjoint", orders[n]) for n in ("near", "mid", "far")]
    qmax = max(len(r) for r in rules)
    basis = lagrange_triangle(p)
    nloc = len(basis)
    R = len(rules)
    rx = np.zeros((R, qmax, 2))
    ry = np.zeros((R, qmax, 2))
    rw = np.zeros((R, qmax))
    phx = np.zeros((R, qmax, nloc))
    phy = np.zeros((R, qmax, nloc))
    gx = np.zeros((R, qmax, nloc, 2))
    gy = np.zeros((R, qmax, nloc, 2))
    rnq = np.array([len(r) for r in rules], dtype=np.int64)
    for a, r in enumerate(rules):
        n = len(r)
        rx[a, :n], ry[a, :n], rw[a, :n] = r.x_points, r.y_points, r.weights
        phx[a, :n], phy[a, :n] = basis.eval(r.x_points), basis.eval(r.y_points)
        gx[a, :n], gy[a, :n] = basis.grad(r.x_points), basis.grad(r.y_points)
    return rx, ry, rw, rnq, phx, phy, gx, gy


def assemble_lagrange(surface, p: int, k: float, quad: BemQuadrature | None = None,
                      backend: str | None = None):
    """Broken-Lagrange matrices ``(V, K, W)`` of size (n_tri * nloc)^2.

    ``K'`` on the same space is exactly ``K.T``: both are read off the same
    quadrature points of each unordered pair.
    """
    quad = quad or BemQuadrature()
    if backend is None:
        backend = "numba" if use_numba() else "numpy"
    nloc = (p + 1) * (p + 2) // 2
    n = surface.n_triangles * nloc
    pairs = classify_pairs(surface, quad)
    orders = quad.resolve(p, k * surface.diameters.max())
    tables = _rule_tables(p, orders)
    sigma = lattice_permutations(p)
    V = np.zeros((n, n), dtype=complex)
    K = np.zeros((n, n), dtype=complex)
    W = np.zeros((n, n), dtype=complex)
    args = (float(k), surface.vertices, surface.triangles, surface.normals, surface.areas, pairs,
            *tables, PERMUTATIONS, sigma, V, K, W)
    t0 = time.perf_counter()
    if backend == "numba":
        configure_threads()
        kern.assemble_numba(*args)
    elif backend == "numpy":
        kern.assemble_numpy(*args)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    log.info("BEM assembly (%s): %d triangles, p=%d, %d pairs, orders %s in %.2fs", backend,
             surface.n_triangles, p, len(pairs), orders, time.perf_counter() - t0)
    return V, K, W


@dataclass
class OperatorBlock:
    """Dense matrix tagged with test space, trial space and operator kind."""

    matrix: np.ndarray
    test: str
    trial: str
    kind: str
    k: float = 0.0

    def __post_init__(self):
        if self.test not in ("W", "Z") or self.trial not in ("W", "Z"):
            raise SpaceMismatchError("BEM blocks live on W_h or Z_h")

    @property
    def shape(self):
        return self.matrix.shape

    def __matmul__(self, x):
        return self.matrix @ x


@dataclass
class BemOperators:
    """Cached BEM blocks for one surface discretisation and wave number.

    ``spaces`` is anything exposing ``surface``, ``p``, ``z_dofs``, ``n_z``,
    ``n_w``, ``nb_w`` and ``w_in_lagrange`` (DiscreteSpaces or SurfaceSpaces).
    """

    spaces: object
    k: float
    quad: BemQuadrature = field(default_factory=BemQuadrature)
    backend: str | None = None

    def __post_init__(self):
        s = self.spaces
        self.p = s.p
        self.nloc = (s.p + 1) * (s.p + 2) // 2
        nt = s.surface.n_triangles
        nl = nt * self.nloc
        self.n_lagrange = nl
        rows = np.arange(nl)
        self.P = {
            "Z": sp.csr_matrix((np.ones(nl), (rows, s.z_dofs.ravel())), shape=(nl, s.n_z)),
            "W": sp.block_diag([s.w_in_lagrange] * nt, format="csr"),
        }
        self._lagrange = None
        self._blocks = {}

    # -- raw matrices ------------------------------------------------------------
    @property
    def lagrange(self):
        if self._lagrange is None:
            self._lagrange = assemble_lagrange(self.spaces.surface, self.p, self.k, self.quad,
                                               self.backend)
        return self._lagrange

    def lagrange_mass(self) -> sp.csr_matrix:
        rule = triangle_rule(2 * self.p)
        phi = lagrange_triangle(self.p).eval(rule.points)
        local = np.einsum("q,qa,qb->ab", rule.weights, phi, phi)
        areas = self.spaces.surface.areas
        return sp.block_diag([2 * a * local for a in areas], format="csr")

    def _project(self, M, test, trial):
        Pt, Ps = self.P[test], self.P[trial]
        if sp.issparse(M):
            return (Pt.T @ M @ Ps).toarray()
        return np.asarray(Pt.T @ np.asarray(Ps.T @ M.T).T)

    # -- blocks -------------------------------------------------------------------
    def block(self, kind: str, test: str, trial: str) -> OperatorBlock:
        key = (kind, test, trial)
        if key in self._blocks:
            return self._blocks[key]
        if kind == "W" and (test != "Z" or trial != "Z"):
            raise SpaceMismatchError("the Maue form needs continuous test and trial spaces (Z_h)")
        if kind == "M":
            mat = self._project(self.lagrange_mass(), test, trial)
        elif kind in ("V", "K", "K'", "W"):
            V, K, W = self.lagrange
            src = {"V": V, "K": K, "K'": K.T, "W": W}[kind]
            mat = self._project(src, test, trial)
        elif kind == "B":
            if test != "Z" or trial != "Z":
                raise SpaceMismatchError("B_k acts on Z_h x Z_h")
            ik = 1j * self.k
            mat = (-self.block("W", "Z", "Z").matrix
                   - ik * (0.5 * self.block("M", "Z", "Z").matrix - self.block("K", "Z", "Z").matrix))
        elif kind == "A'":
            if test != "Z":
                raise SpaceMismatchError("A'_k is tested against Z_h")
            mat = (0.5 * self.block("M", test, trial).matrix + self.block("K'", test, trial).matrix
                   + 1j * self.k * self.block("V", test, trial).matrix)
        else:
            raise ValueError(f"unknown operator kind {kind!r}")
        tag = kind if self.k != 0 or kind in ("M", "B", "A'") else kind + "_0"
        blk = OperatorBlock(np.asarray(mat, dtype=complex), test, trial, tag, self.k)
        self._blocks[key] = blk
        return blk


def _ops(spaces, k, quad=None, backend=None, cache=None):
    if cache is not None:
        return cache
    return BemOperators(spaces, k, quad or BemQuadrature(), backend)


def assemble_V(spaces, k, test="W", trial="W", ops: BemOperators | None = None) -> OperatorBlock:
    return _ops(spaces, k, cache=ops).block("V", test, trial)


def assemble_K(spaces, k, test="W", trial="Z", ops: BemOperators | None = None) -> OperatorBlock:
    return _ops(spaces, k, cache=ops).block("K", test, trial)


def assemble_Kprime(spaces, k, test="Z", trial="W", ops: BemOperators | None = None) -> OperatorBlock:
    return _ops(spaces, k, cache=ops).block("K'", test, trial)


def assemble_W(spaces, k, test="Z", trial="Z", ops: BemOperators | None = None) -> OperatorBlock:
    return _ops(spaces, k, cache=ops).block("W", test, trial)


def assemble_combined(ops: BemOperators):
    """``B_k`` on Z x Z and ``A'_k`` with trial Z and trial W (test Z)."""
    return ops.block("B", "Z", "Z"), ops.block("A'", "Z", "Z"), ops.block("A'", "Z", "W")
