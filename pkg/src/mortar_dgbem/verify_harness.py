"""Relative error measures, convergence rates and the invariant ledger."""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .bem import BemOperators, BemQuadrature
from .coupling import (ManufacturedProblem, MortarSystem, SolutionTriple, build_problem,
                       consistency_residual)
from .dg_forms import (DGAssembler, FluxParameters, combined_flux_identity_check, dg_norm_terms,
                       weakened_coercivity_check, DG_TERMS)
from .fields import AnalyticField, DiscreteField
from .linalg_solve import solve_lu
from .mesh import build_cube_mesh
from .quadrature import tet_rule, triangle_rule
from .spaces import DiscreteSpaces

ERROR_COLUMNS = ("l2", "h1", "m", "phi")


@dataclass
class ErrorReport:
    k: float
    p: int
    level: int
    h: float
    l2: float        # ‖u - u_h‖₀ / ‖u‖₀
    h1: float        # ‖∇_h(u - u_h)‖₀ / ‖∇u‖₀
    m: float         # h^{1/2} ‖m - m_h‖₀,Γ / ‖m‖₀,Γ
    phi: float       # h^{-1/2} ‖u_ext - u_h^ext‖₀,Γ / ‖u_ext‖₀,Γ
    m_raw: float
    phi_raw: float
    dg: float        # ‖u - u_h‖_DG / ‖u‖_DG

    def column(self, name: str) -> float:
        return float(getattr(self, name))

    def as_dict(self) -> dict:
        return asdict(self)


def _rel(num_sq, den_sq) -> float:
    return float(np.sqrt(num_sq / den_sq)) if den_sq > 0 else float(np.sqrt(num_sq))


def compute_errors(solution: SolutionTriple, problem: ManufacturedProblem, spaces: DiscreteSpaces,
                   k: float | None = None, params: FluxParameters | None = None,
                   degree: int | None = None) -> ErrorReport:
    """The four relative errors of the experiment plus the relative DG-norm error.

    Reference norms use quadrature of order 2p + 4 against the analytic fields;
    the weights use the global mesh size h = max h_K.
    """
    k = problem.k if k is None else k
    m = spaces.mesh
    p = spaces.p
    deg = degree or 2 * p + 4
    rule = tet_rule(deg)
    tets = np.arange(m.n_tets)
    x = m.vertices[m.tets[:, 0]][:, None, :] + np.einsum("tij,qj->tqi", m.jacobians, rule.points)
    ref = np.broadcast_to(rule.points, (m.n_tets,) + rule.points.shape)
    uh, gh = spaces.eval_v(solution.u, tets, ref, grad=True)
    u = problem.u_int(x)
    g = problem.grad_int(x)
    w = rule.weights[None] * m.det[:, None]
    l2 = _rel(np.sum(w * np.abs(u - uh) ** 2), np.sum(w * np.abs(u) ** 2))
    h1 = _rel(np.sum(w * np.sum(np.abs(g - gh) ** 2, -1)), np.sum(w * np.sum(np.abs(g) ** 2, -1)))

    r2 = triangle_rule(deg)
    s = spaces.surface
    tri = np.arange(s.n_triangles)
    xs = spaces.surface_points(tri, r2.points)
    ws = 2.0 * s.areas[:, None] * r2.weights[None]
    nrm = np.broadcast_to(s.normals[:, None, :], xs.shape)
    mm = problem.mortar(xs, nrm)
    mh = spaces.eval_w(solution.m, tri, r2.points)
    ue = problem.u_ext(xs)
    zh = spaces.eval_z(solution.z, tri, r2.points)
    m_raw = _rel(np.sum(ws * np.abs(mm - mh) ** 2), np.sum(ws * np.abs(mm) ** 2))
    phi_raw = _rel(np.sum(ws * np.abs(ue - zh) ** 2), np.sum(ws * np.abs(ue) ** 2))
    h = float(m.h.max())

    asm = DGAssembler(spaces, k, params or FluxParameters())
    exact = AnalyticField(problem.u_int, problem.grad_int)
    err_terms = dg_norm_terms(asm, exact - DiscreteField(spaces, solution.u), degree=deg)
    ref_terms = dg_norm_terms(asm, exact, degree=deg)
    dg = _rel(sum(err_terms[t] for t in DG_TERMS), sum(ref_terms[t] for t in DG_TERMS))
    return ErrorReport(float(k), p, m.refinement_level, h, l2, h1, math.sqrt(h) * m_raw,
                       phi_raw / math.sqrt(h), m_raw, phi_raw, dg)


# -- rates ------------------------------------------------------------------------

@dataclass
class EOCTable:
    levels: list
    rates: dict  # column -> list of rates per consecutive pair (nan where undefined)

    def final(self, column: str) -> float:
        return self.rates[column][-1] if self.rates[column] else float("nan")

    def format(self) -> str:
        cols = list(self.rates)
        lines = ["levels  " + "  ".join(f"{c:>7}" for c in cols)]
        for i in range(len(self.levels) - 1):
            vals = "  ".join(f"{self.rates[c][i]:7.3f}" for c in cols)
            lines.append(f"{self.levels[i]}->{self.levels[i + 1]}    {vals}")
        return "\n".join(lines)


def eoc(e_coarse: float, e_fine: float, h_coarse: float = 2.0, h_fine: float = 1.0,
        reference: float = 1.0) -> float:
    """log(e_c / e_f) / log(h_c / h_f); nan when either error is at round-off level."""
    floor = 10 * np.finfo(float).eps * reference
    if not (e_coarse > floor and e_fine > floor):
        return float("nan")
    return float(np.log(e_coarse / e_fine) / np.log(h_coarse / h_fine))


def eoc_table(reports: list[ErrorReport], columns=ERROR_COLUMNS) -> EOCTable:
    reports = sorted(reports, key=lambda r: r.level)
    rates = {c: [] for c in columns}
    for a, b in zip(reports[:-1], reports[1:]):
        for c in columns:
            rates[c].append(eoc(a.column(c), b.column(c), a.h, b.h))
    return EOCTable([r.level for r in reports], rates)


# -- one run ----------------------------------------------------------------------

@dataclass
class RunResult:
    errors: ErrorReport
    solve: object
    size: int
    seconds: float


def run_case(k: float, p: int, level: int, params: FluxParameters | None = None,
             solver: str = "lu", gmres_tol: float = 1e-10, gmres_restart: int = 100,
             quad: BemQuadrature | None = None, backend: str | None = None) -> RunResult:
    """Assemble, solve and measure errors for one (k, p, level)."""
    from .linalg_solve import solve_gmres

    t0 = time.perf_counter()
    mesh = build_cube_mesh(1.0, level)
    spaces, asm, system, problem = build_problem(mesh, p, k, params, quad, backend)
    if solver == "lu":
        sol, rep = solve_lu(system)
    elif solver == "gmres":
        sol, rep = solve_gmres(system, restart=gmres_restart, tol=gmres_tol)
    else:
        raise ValueError(f"unknown solver {solver!r}")
    err = compute_errors(sol, problem, spaces, k, asm.params)
    return RunResult(err, rep, system.size, time.perf_counter() - t0)


# -- invariant ledger -----------------------------------------------------------------

@dataclass
class LedgerEntry:
    name: str
    value: float
    threshold: float
    passed: bool
    detail: str = ""

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        extra = f"  ({self.detail})" if self.detail else ""
        return f"[{verdict}] {self.name}: {self.value:.3e} vs {self.threshold:.1e}{extra}"


@dataclass
class InvariantLedger:
    entries: list = field(default_factory=list)

    def add(self, name, value, threshold, passed, detail=""):
        self.entries.append(LedgerEntry(name, float(value), float(threshold), bool(passed), detail))

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def failures(self):
        return [e for e in self.entries if not e.passed]

    def format(self) -> str:
        return "\n".join(e.line() for e in self.entries)


def _flux_identity(spaces, k, params, rng, n_points=200):
    mesh = spaces.mesh
    u = rng.standard_normal(spaces.n_v) + 1j * rng.standard_normal(spaces.n_v)
    mh = rng.standard_normal(spaces.n_w) + 1j * rng.standard_normal(spaces.n_w)
    worst = 0.0
    faces = rng.integers(0, mesh.n_boundary_faces, size=max(1, n_points // 5))
    for f in faces:
        r = rng.random((5, 2))
        r = np.where(r.sum(axis=1, keepdims=True) > 1, 1 - r, r)
        res = combined_flux_identity_check(spaces, k, params, u, mh, mesh.n_interior_faces + f, r)
        worst = max(worst, float(np.max(np.abs(res))))
    return worst


def run_invariant_suite(levels=(0, 1), ps=(1,), ks=(math.sqrt(3) * math.pi,), seed: int = 0,
                        params: FluxParameters | None = None,
                        log=None) -> InvariantLedger:
    """Structural, BEM and consistency invariants on the cube family.

    Deterministic for a fixed ``seed``; ``log`` receives progress lines.
    """
    params = params or FluxParameters()
    ledger = InvariantLedger()
    say = log or (lambda s: None)
    rng = np.random.default_rng(seed)
    levels = sorted(levels)
    for k in ks:
        for p in ps:
            consistency = []
            for level in levels:
                tag = f"k={k:.4g} p={p} level={level}"
                say(f"assembling {tag}")
                spaces, asm, system, problem = build_problem(build_cube_mesh(1.0, level), p, k, params)
                flux = _flux_identity(spaces, k, asm.params, rng)
                ledger.add(f"flux identity {tag}", flux, 1e-13, flux <= 1e-13)
                absent = all(b not in system.blocks for b in ((0, 2), (2, 0)))
                ledger.add(f"block sparsity {tag}", 0.0 if absent else 1.0, 0.0, absent,
                           "no direct V_h <-> Z_h coupling")
                bem = system.bem
                for kind, test in (("V", "W"), ("W", "Z")):
                    M = bem.block(kind, test, test).matrix
                    err = np.abs(M - M.T).max() / np.abs(M).max()
                    ledger.add(f"{kind} complex symmetric {tag}", err, 1e-10, err <= 1e-10)
                K = bem.block("K", "W", "Z").matrix
                Kp = bem.block("K'", "Z", "W").matrix
                err = np.abs(K - Kp.T).max() / np.abs(K).max()
                ledger.add(f"K/K' transpose {tag}", err, 1e-10, err <= 1e-10)
                if level == levels[0]:
                    bem0 = BemOperators(spaces, 0.0, bem.quad)
                    V0 = bem0.block("V", "W", "W").matrix.real
                    lam = np.linalg.eigvalsh(0.5 * (V0 + V0.T)).min()
                    ledger.add(f"V_0 positive definite {tag}", lam, 0.0, lam > 0, "min eigenvalue")
                    W0 = bem0.block("W", "Z", "Z").matrix.real
                    ev, vec = np.linalg.eigh(0.5 * (W0 + W0.T))
                    scale = np.abs(ev).max()
                    small = int(np.sum(ev < 1e-8 * scale))
                    one = np.ones(len(ev)) / np.sqrt(len(ev))
                    corr = abs(vec[:, 0] @ one)
                    ok = small == 1 and corr > 0.999 and ev[0] > -1e-8 * scale
                    ledger.add(f"W_0 kernel = constants {tag}", corr, 0.999, ok,
                               f"{small} eigenvalue(s) below 1e-8 max")
                sol, rep = solve_lu(system, check=None)
                ledger.add(f"LU residual {tag}", rep.residual, 1e-10, rep.residual <= 1e-10,
                           f"condition ~ {rep.condition:.2e}")
                cr = consistency_residual(system, problem, spaces, asm)
                consistency.append(cr.total)
                say(f"  consistency residual {cr.total:.3e}")
            for (la, a), (lb, b) in zip(zip(levels, consistency), zip(levels[1:], consistency[1:])):
                ledger.add(f"consistency decrease k={k:.4g} p={p} {la}->{lb}", a / b, 2.0, a / b >= 2.0)
    spaces = DiscreteSpaces(build_cube_mesh(1.0, levels[0]), ps[0])
    cr = weakened_coercivity_check(spaces, ks[0], eps=0.1, n_samples=200, seed=seed, params=params)
    ledger.add("weakened coercivity (200 samples)", cr.margins.min(), -1e-10, cr.passed,
               f"a raised to {max(cr.a_min, params.a):.3g}")
    return ledger
