"""Direct (LU) and iterative (restarted GMRES) solution of the mortar system."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SingularSystemError(np.linalg.LinAlgError):
    """A pivot is zero to working precision."""

    def __init__(self, message: str, pivot: float):
        super().__init__(message)
        self.pivot = pivot


class ConvergenceError(RuntimeError):
    """GMRES stopped without reaching the tolerance."""

    def __init__(self, message: str, trace):
        super().__init__(message)
        self.trace = list(trace)


@dataclass
class SolveReport:
    residual: float  # ||Ax - b|| / ||b||, recomputed after the solve
    method: str
    iterations: int | None = None
    condition: float | None = None
    min_pivot: float | None = None
    trace: list = field(default_factory=list)


def _unpack(system, b):
    if hasattr(system, "matrix"):
        A = system.matrix
        if b is None:
            b = system.rhs
        return A, b, system
    return system, b, None


def _relres(A, x, b) -> float:
    nb = np.linalg.norm(b)
    r = np.linalg.norm(A @ x - b)
    return float(r / nb) if nb > 0 else float(r)


def _wrap(x, owner):
    return owner.split(x) if owner is not None else x


def solve_lu(system, b=None, pivot_tol: float | None = None, check: float | None = 1e-10):
    """LU with partial pivoting; sparse matrices go through SuperLU.

    ``system`` is a MortarSystem (its ``rhs`` is used when ``b`` is None) or a
    matrix.  Raises SingularSystemError when the smallest pivot falls below
    ``pivot_tol`` (default n * eps * max pivot).  When ``check`` is set, a
    residual above it is also reported as near-singularity.
    """
    A, b, owner = _unpack(system, b)
    b = np.asarray(b, dtype=complex)
    n = A.shape[0]
    if A.shape != (n, n) or b.shape[0] != n:
        raise ValueError("LU needs a square system with matching right-hand side")
    if sp.issparse(A):
        Acsc = sp.csc_matrix(A, dtype=complex)
        try:
            lu = spla.splu(Acsc, permc_spec="COLAMD")
        except RuntimeError as exc:  # exactly singular
            raise SingularSystemError(f"LU failed: {exc}", 0.0) from exc
        piv = np.abs(lu.U.diagonal())
        x = lu.solve(b)
        solve = lu.solve
        solve_h = lambda v: lu.solve(v, trans="H")  # noqa: E731
        norm1 = spla.norm(Acsc, 1)
    else:
        A = np.asarray(A, dtype=complex)
        lu_piv = scipy.linalg.lu_factor(A, check_finite=True)
        piv = np.abs(np.diag(lu_piv[0]))
        solve = lambda v: scipy.linalg.lu_solve(lu_piv, v)  # noqa: E731
        solve_h = lambda v: scipy.linalg.lu_solve(lu_piv, v, trans=2)  # noqa: E731
        norm1 = np.linalg.norm(A, 1)
        x = None
    tol = pivot_tol if pivot_tol is not None else n * np.finfo(float).eps * piv.max()
    if piv.min() <= tol:
        raise SingularSystemError(f"pivot {piv.min():.3e} below {tol:.3e}", float(piv.min()))
    if x is None:
        x = solve(b)
    inv_op = spla.LinearOperator((n, n), matvec=solve, rmatvec=solve_h, dtype=complex)
    cond = float(norm1 * spla.onenormest(inv_op))
    res = _relres(A, x, b)
    report = SolveReport(res, "lu", condition=cond, min_pivot=float(piv.min()))
    if check is not None and not res <= check:
        raise SingularSystemError(f"residual {res:.3e} after LU (condition ~ {cond:.3e})",
                                  float(piv.min()))
    return _wrap(x, owner), report


def solve_gmres(system, b=None, restart: int = 100, tol: float = 1e-10, maxit: int | None = None,
                x0=None):
    """Unpreconditioned restarted GMRES; ``maxit`` counts inner iterations (default 10 N)."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    A, b, owner = _unpack(system, b)
    b = np.asarray(b, dtype=complex)
    n = A.shape[0]
    maxit = 10 * n if maxit is None else int(maxit)
    restart = max(1, min(restart, n, maxit))
    trace: list[float] = []
    nb = np.linalg.norm(b)
    if nb == 0:
        return _wrap(np.zeros(n, dtype=complex), owner), SolveReport(0.0, "gmres", 0)
    x, info = spla.gmres(A, b, x0=x0, rtol=tol, atol=0.0, restart=restart,
                         maxiter=int(np.ceil(maxit / restart)),
                         callback=lambda r: trace.append(float(r)), callback_type="pr_norm")
    res = _relres(A, x, b)
    if info < 0:
        raise ConvergenceError("GMRES breakdown", trace)
    if info > 0 or res > tol * (1 + 1e-6):
        raise ConvergenceError(f"GMRES did not reach {tol:g} in {len(trace)} iterations "
                               f"(relative residual {res:.3e})", trace)
    return _wrap(x, owner), SolveReport(res, "gmres", iterations=len(trace), trace=trace)
