"""Collapsed Gauss-Jacobi rules on the reference triangle and tetrahedron.

Reference triangle: ``{x, y >= 0, x + y <= 1}`` (area 1/2).
Reference tetrahedron: ``{x, y, z >= 0, x + y + z <= 1}`` (volume 1/6).
All weights are positive.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray
    degree: int

    def __len__(self):
        return len(self.weights)


@lru_cache(maxsize=None)
def gauss_jacobi01(n: int, alpha: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """n-point rule for ``int_0^1 f(t) (1-t)^alpha dt``."""
    x, w = roots_jacobi(n, alpha, 0)
    return (x + 1.0) / 2.0, w / 2.0 ** (alpha + 1)


def _npoints(degree: int) -> int:
    return max(1, (degree + 2) // 2)


@lru_cache(maxsize=None)
def line_rule(degree: int) -> QuadratureRule:
    t, w = gauss_jacobi01(_npoints(degree))
    return QuadratureRule(t[:, None], w, degree)


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> QuadratureRule:
    n = _npoints(degree)
    a, wa = gauss_jacobi01(n, 1)
    b, wb = gauss_jacobi01(n, 0)
    A, B = np.meshgrid(a, b, indexing="ij")
    pts = np.column_stack([A.ravel(), ((1 - A) * B).ravel()])
    return QuadratureRule(pts, np.outer(wa, wb).ravel(), degree)


@lru_cache(maxsize=None)
def tet_rule(degree: int) -> QuadratureRule:
    n = _npoints(degree)
    a, wa = gauss_jacobi01(n, 2)
    b, wb = gauss_jacobi01(n, 1)
    c, wc = gauss_jacobi01(n, 0)
    A, B, C = np.meshgrid(a, b, c, indexing="ij")
    pts = np.column_stack([A.ravel(), ((1 - A) * B).ravel(), ((1 - A) * (1 - B) * C).ravel()])
    w = (wa[:, None, None] * wb[None, :, None] * wc[None, None, :]).ravel()
    return QuadratureRule(pts, w, degree)


def tensor_pair_rule(rule_x: QuadratureRule, rule_y: QuadratureRule):
    """Product rule on triangle x triangle: (points_x, points_y, weights)."""
    nx, ny = len(rule_x), len(rule_y)
    px = np.repeat(rule_x.points, ny, axis=0)
    py = np.tile(rule_y.points, (nx, 1))
    return px, py, np.outer(rule_x.weights, rule_y.weights).ravel()
