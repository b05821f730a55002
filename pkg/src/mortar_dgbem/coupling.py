"""The 3 x 3 block mortar system, manufactured right-hand sides and the global form T_h.

Unknowns are ordered (u_h in V_h, m_h in W_h, u_h^ext in Z_h).  Rows:

1. DG interior equation, tested with V_h:
   ``A u + C_mv m``
2. exterior boundary integral equation, tested with Z_h:
   ``-<(B_k + ik A'_k) u_ext - A'_k m, v~>``
3. trace matching, tested with W_h:
   ``<-δ(ik)^{-1} ∂_n u + (1-δ) u + δ(ik)^{-1} m, λ> - <X_h, λ>``
   with ``X_h = (1/2 + K_k) u_ext - V_k (m - ik u_ext)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .bem import BemOperators, BemQuadrature
from .dg_forms import DGAssembler, DGMatrixSet, FluxParameters
from .fields import AnalyticField
from .quadrature import tet_rule
from .spaces import DiscreteSpaces


# -- manufactured solution ------------------------------------------------------------

@dataclass(frozen=True)
class ManufacturedProblem:
    """u⁻ = sin(kx) cos(ky) inside, u⁺ = exp(ikr)/r outside (nonzero jumps on Γ)."""

    k: float

    def u_int(self, x):
        x = np.asarray(x)
        return np.sin(self.k * x[..., 0]) * np.cos(self.k * x[..., 1])

    def grad_int(self, x):
        x = np.asarray(x)
        k = self.k
        g = np.zeros(x.shape, dtype=float)
        g[..., 0] = k * np.cos(k * x[..., 0]) * np.cos(k * x[..., 1])
        g[..., 1] = -k * np.sin(k * x[..., 0]) * np.sin(k * x[..., 1])
        return g

    def laplacian_int(self, x):
        return -2 * self.k**2 * self.u_int(x)

    def source(self, x):
        """f = -Δu⁻ - k²u⁻ = k² sin(kx) cos(ky)."""
        return self.k**2 * self.u_int(x)

    def u_ext(self, x):
        r = np.linalg.norm(np.asarray(x), axis=-1)
        return np.exp(1j * self.k * r) / r

    def grad_ext(self, x):
        x = np.asarray(x)
        r = np.linalg.norm(x, axis=-1)
        return (np.exp(1j * self.k * r) * (1j * self.k * r - 1) / r**3)[..., None] * x

    def laplacian_ext(self, x):
        return -self.k**2 * self.u_ext(x)

    # traces on Γ (n: outward normal)
    def g_D(self, x):
        return self.u_int(x) - self.u_ext(x)

    def g_N(self, x, n):
        return np.sum((self.grad_int(x) - self.grad_ext(x)) * n, axis=-1)

    def g1(self, x, n):
        return self.g_N(x, n) + 1j * self.k * self.g_D(x)

    def mortar(self, x, n):
        """Exact mortar m = γ₁⁺u + ik γ₀⁺u."""
        return np.sum(self.grad_ext(x) * n, axis=-1) + 1j * self.k * self.u_ext(x)

    def interior_field(self) -> AnalyticField:
        return AnalyticField(self.u_int, self.grad_int)


# -- the system ------------------------------------------------------------------

@dataclass
class SolutionTriple:
    u: np.ndarray
    m: np.ndarray
    z: np.ndarray

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.u, self.m, self.z])


@dataclass
class MortarSystem:
    blocks: dict  # (row, col) -> matrix, rows/cols 0..2 in (V, W, Z) order
    dims: tuple[int, int, int]
    k: float
    rhs: np.ndarray | None = None
    dg: DGMatrixSet | None = None
    bem: BemOperators | None = None
    _matrix: sp.csr_matrix | None = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return sum(self.dims)

    @property
    def matrix(self) -> sp.csr_matrix:
        if self._matrix is None:
            grid = [[None] * 3 for _ in range(3)]
            for (r, c), M in self.blocks.items():
                grid[r][c] = sp.csr_matrix(M)
            for i, n in enumerate(self.dims):
                if grid[i][i] is None:
                    grid[i][i] = sp.csr_matrix((n, n), dtype=complex)
            self._matrix = sp.bmat(grid, format="csr").astype(complex)
        return self._matrix

    def offsets(self):
        return np.cumsum((0,) + self.dims)

    def split(self, x) -> SolutionTriple:
        o = self.offsets()
        return SolutionTriple(x[o[0]:o[1]], x[o[1]:o[2]], x[o[2]:o[3]])

    def apply(self, x) -> np.ndarray:
        return self.matrix @ x


def assemble_system(spaces: DiscreteSpaces, dg: DGMatrixSet, bem: BemOperators, k: float,
                    params: FluxParameters | None = None) -> MortarSystem:
    """Place DG, coupling and BEM blocks according to the three equations."""
    n_v, n_w, n_z = spaces.dims
    if dg.A_vol.shape != (n_v, n_v) or dg.C_mv.shape != (n_v, n_w) or dg.C_um_u.shape != (n_w, n_v):
        raise ValueError("DG blocks do not match the discrete spaces")
    if bem.spaces.n_w != n_w or bem.spaces.n_z != n_z or bem.k != k:
        raise ValueError("BEM operators do not match the discrete spaces or wave number")
    ik = 1j * k
    blk = lambda kind, a, b: bem.block(kind, a, b).matrix  # noqa: E731
    A_zz = blk("B", "Z", "Z") + ik * blk("A'", "Z", "Z")
    blocks = {
        (0, 0): dg.A,
        (0, 1): dg.C_mv,
        (1, 1): dg.C_um_m.toarray() + blk("V", "W", "W"),
        (1, 0): dg.C_um_u,
        (1, 2): -(0.5 * blk("M", "W", "Z") + blk("K", "W", "Z")) - ik * blk("V", "W", "Z"),
        (2, 1): blk("A'", "Z", "W"),
        (2, 2): -A_zz,
    }
    # rows of the dict are indexed by test space: 0 -> V, 1 -> W, 2 -> Z
    return MortarSystem(blocks, (n_v, n_w, n_z), k, dg=dg, bem=bem)


def build_rhs(problem: ManufacturedProblem, spaces: DiscreteSpaces, k: float,
              params: FluxParameters | None = None, asm: DGAssembler | None = None):
    """(b₁, b₂, b₃) with the jump corrections of the manufactured solution.

    b₁(v) = (f, v) + ∫ (1-δ) g₁ v - ∫ δ(ik)^{-1} g₁ ∂_n v,   b₂ = 0,
    b₃(λ) = <g_D - δ(ik)^{-1} g₁, λ>.
    """
    asm = asm or DGAssembler(spaces, k, params)
    m = spaces.mesh
    p = spaces.p
    rule = tet_rule(2 * p + 4)
    x = m.vertices[m.tets[:, 0]][:, None, :] + np.einsum("tij,qj->tqi", m.jacobians, rule.points)
    f = problem.source(x)
    phi = spaces.vbasis.eval(rule.points)
    b1 = np.einsum("tq,q,t,qb->tb", f, rule.weights, m.det, phi).astype(complex)

    fq = asm.fq
    from .dg_forms import _basis_at

    phib, gb = _basis_at(spaces, fq.b_tets, fq.b_ref)
    dn = np.einsum("fqbs,fs->fqb", gb, fq.b_normal)
    nrm = np.broadcast_to(fq.b_normal[:, None, :], fq.b_points.shape)
    g1 = problem.g1(fq.b_points, nrm)
    gD = problem.g_D(fq.b_points)
    dl = asm.delta[:, None]
    ik = 1j * k
    wq = fq.b_weights
    bnd = np.einsum("fq,fqb->fb", wq * (1 - dl) * g1, phib) - np.einsum("fq,fqb->fb", wq * dl * g1 / ik, dn)
    np.add.at(b1, fq.b_tets, bnd)
    psi = spaces.wbasis.eval(fq.b_surface_ref)
    b3 = np.einsum("fq,qb->fb", wq * (gD - dl * g1 / ik), psi).ravel()
    b2 = np.zeros(spaces.n_z, dtype=complex)
    return b1.ravel(), b2, b3


def rhs_vector(b) -> np.ndarray:
    """Stack ``(b₁, b₂, b₃)`` in the (V, W, Z) row order, i.e. b₁, b₃, b₂."""
    b1, b2, b3 = b
    return np.concatenate([b1, b3, b2])


def interpolate_exact(problem: ManufacturedProblem, spaces: DiscreteSpaces) -> SolutionTriple:
    """L2 projections of u⁻ and m, nodal interpolant of γ₀⁺u."""
    return SolutionTriple(
        spaces.interpolate_v(problem.u_int, degree=2 * spaces.p + 4),
        spaces.interpolate_w(problem.mortar, degree=2 * spaces.p + 4),
        spaces.interpolate_z(problem.u_ext),
    )


def evaluate_T(x, y, system: MortarSystem) -> complex:
    """T_h(x, y) for stacked coefficient vectors; antilinear in ``y``."""
    x = x.stacked() if isinstance(x, SolutionTriple) else np.asarray(x)
    y = y.stacked() if isinstance(y, SolutionTriple) else np.asarray(y)
    return complex(np.vdot(y, system.matrix @ x))


def gram_matrix(system: MortarSystem, asm: DGAssembler) -> sp.csr_matrix:
    """Block-diagonal Gram matrix of the discrete test norms.

    V_h: DG+ norm; W_h: h^{1/2}-weighted L2 (H^{-1/2} surrogate);
    Z_h: h^{-1/2}-weighted L2 (H^{1/2} surrogate), h = max h_K.
    """
    pieces = asm.norm_pieces()
    N_v = sum(pieces[t] for t in ("grad", "mass", "jump_grad", "jump", "bnd_grad", "bnd", "avg_grad"))
    h = asm.spaces.mesh.h.max()
    M_w = system.bem.block("M", "W", "W").matrix.real
    M_z = system.bem.block("M", "Z", "Z").matrix.real
    return sp.block_diag([N_v, h * sp.csr_matrix(M_w), sp.csr_matrix(M_z) / h], format="csc")


def dual_norm(r, N) -> float:
    """sqrt(r^H N^{-1} r) for a Hermitian positive definite Gram matrix N."""
    from scipy.sparse.linalg import splu

    lu = splu(sp.csc_matrix(N, dtype=float))
    r = np.asarray(r, dtype=complex)
    sol = lu.solve(np.ascontiguousarray(r.real)) + 1j * lu.solve(np.ascontiguousarray(r.imag))
    return float(np.sqrt(abs(np.vdot(r, sol))))


@dataclass
class ConsistencyReport:
    total: float
    rows: tuple[float, float, float]
    relative: float


def consistency_residual(system: MortarSystem, problem: ManufacturedProblem, spaces: DiscreteSpaces,
                         asm: DGAssembler) -> ConsistencyReport:
    """Dual-norm size of A x_I - b for the interpolated exact triple."""
    if system.rhs is None:
        system.rhs = rhs_vector(build_rhs(problem, spaces, system.k, asm=asm))
    xi = interpolate_exact(problem, spaces).stacked()
    r = system.apply(xi) - system.rhs
    N = gram_matrix(system, asm)
    o = system.offsets()
    rows = tuple(dual_norm(r[o[i]:o[i + 1]], N[o[i]:o[i + 1], o[i]:o[i + 1]]) for i in range(3))
    total = float(np.sqrt(sum(v**2 for v in rows)))
    return ConsistencyReport(total, rows, total / dual_norm(system.rhs, N))


def garding_smoke_test(system: MortarSystem, asm: DGAssembler, eps: float = 0.1,
                       n_samples: int = 100, seed: int = 0) -> dict:
    """Smallest C making (Re + εIm)T(y,y) + ‖kn v‖² + C(‖λ‖² + ‖ṽ‖²) > 0 on random triples."""
    rng = np.random.default_rng(seed)
    pieces = asm.norm_pieces()
    h = asm.spaces.mesh.h.max()
    M_w = system.bem.block("M", "W", "W").matrix.real * h
    M_z = system.bem.block("M", "Z", "Z").matrix.real / h
    need = []
    values = []
    for _ in range(n_samples):
        y = rng.standard_normal(system.size) + 1j * rng.standard_normal(system.size)
        t = evaluate_T(y, y, system)
        parts = system.split(y)
        mass = np.real(np.vdot(parts.u, pieces["mass"] @ parts.u))
        surf = np.real(np.vdot(parts.m, M_w @ parts.m) + np.vdot(parts.z, M_z @ parts.z))
        val = t.real + eps * t.imag + mass
        values.append(val)
        need.append(max(0.0, -val / surf))
    return {"C_min": float(max(need)), "eps": eps, "samples": n_samples,
            "min_without_C": float(min(values))}


def build_problem(mesh, p: int, k: float, params: FluxParameters | None = None,
                  quad: BemQuadrature | None = None, backend: str | None = None):
    """Spaces, DG assembler, BEM operators and the full system with manufactured RHS."""
    params = params or FluxParameters()
    spaces = DiscreteSpaces(mesh, p)
    asm = DGAssembler(spaces, k, params)
    dg = asm.assemble()
    bem = BemOperators(spaces, k, quad or BemQuadrature(), backend)
    system = assemble_system(spaces, dg, bem, k, params)
    problem = ManufacturedProblem(k)
    system.rhs = rhs_vector(build_rhs(problem, spaces, k, asm=asm))
    return spaces, asm, system, problem
