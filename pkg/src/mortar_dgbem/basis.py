"""Polynomial shape functions on the reference triangle and tetrahedron."""

from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np

from .quadrature import tet_rule, triangle_rule


def dim_tet(p: int) -> int:
    return (p + 1) * (p + 2) * (p + 3) // 6


def dim_tri(p: int) -> int:
    return (p + 1) * (p + 2) // 2


def _exponents(dim: int, p: int) -> np.ndarray:
    exps = [e for e in itertools.product(range(p + 1), repeat=dim) if sum(e) <= p]
    exps.sort(key=lambda e: (sum(e), tuple(-x for x in e)))
    return np.array(exps, dtype=int).reshape(-1, dim)


def _monomials(points: np.ndarray, exps: np.ndarray) -> np.ndarray:
    return np.prod(points[:, None, :] ** exps[None, :, :], axis=2)


def _monomial_grads(points: np.ndarray, exps: np.ndarray) -> np.ndarray:
    q, dim = points.shape
    out = np.empty((q, len(exps), dim))
    for d in range(dim):
        e = exps.copy()
        coef = e[:, d].astype(float)
        e[:, d] = np.maximum(e[:, d] - 1, 0)
        out[:, :, d] = coef[None, :] * _monomials(points, e)
    return out


class PolynomialBasis:
    """Shape functions written as ``monomials @ coeffs``."""

    def __init__(self, dim: int, degree: int, coeffs: np.ndarray):
        self.dim = dim
        self.degree = degree
        self.exps = _exponents(dim, degree)
        self.coeffs = coeffs

    def __len__(self):
        return self.coeffs.shape[1]

    def eval(self, points) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return _monomials(points, self.exps) @ self.coeffs

    def grad(self, points) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return np.einsum("qmd,mb->qbd", _monomial_grads(points, self.exps), self.coeffs)


@lru_cache(maxsize=None)
def modal_basis(dim: int, p: int) -> PolynomialBasis:
    """L2-orthonormal basis of P_p on the reference simplex (dim 2 or 3)."""
    exps = _exponents(dim, p)
    rule = (triangle_rule if dim == 2 else tet_rule)(2 * p)
    m = _monomials(rule.points, exps)
    coeffs = np.eye(len(exps))
    for _ in range(2):  # second pass removes the Cholesky round-off
        v = m @ coeffs
        gram = (v * rule.weights[:, None]).T @ v
        coeffs = coeffs @ np.linalg.inv(np.linalg.cholesky(gram)).T
    return PolynomialBasis(dim, p, coeffs)


def lattice(p: int) -> np.ndarray:
    """Barycentric integer lattice of the degree-p triangle, vertices first.

    Rows are ``(i0, i1, i2)`` with ``i0 + i1 + i2 = p``; order: the three
    vertices, then edge nodes (edge opposite vertex 0, 1, 2), then interior.
    """
    nodes = [c for c in itertools.product(range(p + 1), repeat=3) if sum(c) == p]

    def rank(c):
        nz = sum(1 for x in c if x > 0)
        if nz == 1:
            return (0, c.index(p))
        if nz == 2:
            return (1, c.index(0), -c[(c.index(0) + 1) % 3])
        return (2, tuple(-x for x in c))

    nodes.sort(key=rank)
    return np.array(nodes, dtype=int).reshape(-1, 3)


@lru_cache(maxsize=None)
def lagrange_triangle(p: int) -> PolynomialBasis:
    """Nodal basis of P_p on the reference triangle at equispaced nodes."""
    lat = lattice(p)
    nodes = lat[:, 1:] / p
    exps = _exponents(2, p)
    vdm = _monomials(nodes, exps)
    return PolynomialBasis(2, p, np.linalg.inv(vdm))


def lagrange_nodes(p: int) -> np.ndarray:
    return lattice(p)[:, 1:] / p
