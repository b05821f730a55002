"""Regularized quadrature for panel pairs of a flat triangulation.

Weakly singular double integrals over triangle pairs that touch (same panel,
common edge, common vertex) are rewritten with the Sauter-Schwab coordinate
transformations, which cancel the 1/|x-y| singularity by a Jacobian and leave a
smooth integrand on the unit 4-cube.  Points are returned in the standard
reference triangle ``{s, t >= 0, s + t <= 1}`` so they can be fed straight into
the shape functions; the weights integrate over reference x reference
(measure 1/4) and must be scaled by ``(2|T_x|)(2|T_y|)``.

Vertex conventions: for a common edge both panels are listed with the shared
edge as local vertices 0 -> 1 in the same direction; for a common vertex it is
local vertex 0 of both.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .basis import lattice
from .quadrature import gauss_jacobi01, triangle_rule

KINDS = ("identical", "shared_edge", "shared_vertex", "disjoint")

# all vertex permutations of a triangle; index 0 is the identity
PERMUTATIONS = np.array(list(itertools.permutations(range(3))), dtype=np.int64)


@dataclass(frozen=True)
class PanelPairRule:
    x_points: np.ndarray  # (Q, 2)
    y_points: np.ndarray  # (Q, 2)
    weights: np.ndarray  # (Q,)
    kind: str

    def __len__(self):
        return len(self.weights)


def _ss_to_standard(p):
    """(x1, x2) on {0 <= x2 <= x1 <= 1} -> standard reference (s, t)."""
    return np.stack([p[..., 0] - p[..., 1], p[..., 1]], axis=-1)


def _identical(xi, e1, e2, e3):
    w = xi**3 * e1**2 * e2
    one = np.ones_like(xi)
    pairs = [
        ((one, 1 - e1 + e1 * e2), (1 - e1 * e2 * e3, 1 - e1)),
        ((1 - e1 * e2 * e3, 1 - e1), (one, 1 - e1 + e1 * e2)),
        ((one, e1 * (1 - e2 + e2 * e3)), (1 - e1 * e2, e1 * (1 - e2))),
        ((1 - e1 * e2, e1 * (1 - e2)), (one, e1 * (1 - e2 + e2 * e3))),
        ((1 - e1 * e2 * e3, e1 * (1 - e2 * e3)), (one, e1 * (1 - e2))),
        ((one, e1 * (1 - e2)), (1 - e1 * e2 * e3, e1 * (1 - e2 * e3))),
    ]
    return pairs, [w] * 6


def _shared_edge(xi, e1, e2, e3):
    # with x2 = x1 u, y2 = y1 v and y1 = x1 (1 - w) (region y1 <= x1) the
    # singularity sits at the corner u = v = w = 0; split by the largest of
    # the three and Duffy-collapse.  The region x1 < y1 is the mirror image.
    a, b, c = e1, e2, e3
    one = np.ones_like(xi)
    half = [
        ((one, a * b), (1 - a, (1 - a) * a * c), a**2 * (1 - a)),
        ((one, a), (1 - a * b, (1 - a * b) * a * c), a**2 * (1 - a * b)),
        ((one, a * c), (1 - a * b, (1 - a * b) * a), a**2 * (1 - a * b)),
    ]
    pairs, jac = [], []
    for xa, ya, j in half:
        pairs += [(xa, ya), (ya, xa)]
        jac += [xi**3 * j] * 2
    return pairs, jac


def _shared_vertex(xi, e1, e2, e3):
    one = np.ones_like(xi)
    w = xi**3 * e2
    pairs = [
        ((one, e1), (e2, e2 * e3)),
        ((e2, e2 * e3), (one, e1)),
    ]
    return pairs, [w, w]


_MAPS = {"identical": _identical, "shared_edge": _shared_edge, "shared_vertex": _shared_vertex}


@lru_cache(maxsize=None)
def singular_panel_rule(kind: str, order: int) -> PanelPairRule:
    """Panel-pair rule with ``order`` Gauss points per cube dimension.

    For ``"disjoint"`` this is the product of two collapsed triangle rules
    with ``order`` points per direction.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown panel-pair kind {kind!r}")
    if order < 1:
        raise ValueError("order must be >= 1")
    if kind == "disjoint":
        r = triangle_rule(2 * order - 2)
        nx = len(r)
        return PanelPairRule(np.repeat(r.points, nx, axis=0), np.tile(r.points, (nx, 1)),
                             np.outer(r.weights, r.weights).ravel(), kind)
    g, w = gauss_jacobi01(order, 0)
    grids = np.meshgrid(g, g, g, g, indexing="ij")
    xi, e1, e2, e3 = (a.ravel() for a in grids)
    w4 = np.einsum("i,j,k,l->ijkl", w, w, w, w).ravel()
    pairs, jac = _MAPS[kind](xi, e1, e2, e3)
    xs, ys, ws = [], [], []
    for (xa, ya), jw in zip(pairs, jac):
        xs.append(_ss_to_standard(xi[:, None] * np.stack(xa, axis=-1)))
        ys.append(_ss_to_standard(xi[:, None] * np.stack(ya, axis=-1)))
        ws.append(w4 * jw)
    return PanelPairRule(np.concatenate(xs), np.concatenate(ys), np.concatenate(ws), kind)


def classify_pair(tri_x, tri_y) -> tuple[str, int, int]:
    """Kind of a panel pair plus permutation indices putting shared vertices first.

    ``tri_x``, ``tri_y`` are global vertex triples.  Returns
    ``(kind, perm_x, perm_y)`` with indices into :data:`PERMUTATIONS`.
    """
    tx, ty = list(tri_x), list(tri_y)
    shared = [v for v in tx if v in ty]
    if len(shared) == 3:
        if tx != ty:
            # same panel listed with another vertex order
            return "identical", 0, _perm_index([ty.index(v) for v in tx])
        return "identical", 0, 0
    if len(shared) == 2:
        u, v = shared
        ax = [tx.index(u), tx.index(v)]
        ay = [ty.index(u), ty.index(v)]
        return "shared_edge", _perm_index(ax + [3 - sum(ax)]), _perm_index(ay + [3 - sum(ay)])
    if len(shared) == 1:
        ax = tx.index(shared[0])
        ay = ty.index(shared[0])
        px = [ax] + [i for i in range(3) if i != ax]
        py = [ay] + [i for i in range(3) if i != ay]
        return "shared_vertex", _perm_index(px), _perm_index(py)
    return "disjoint", 0, 0


def _perm_index(perm) -> int:
    for i, p in enumerate(PERMUTATIONS):
        if list(p) == list(perm):
            return i
    raise ValueError(perm)


@lru_cache(maxsize=None)
def lattice_permutations(p: int) -> np.ndarray:
    """``sigma[perm, a]``: local Lagrange index (original order) of canonical node ``a``.

    Canonical ordering lists the panel's vertices as ``tri[PERMUTATIONS[perm]]``.
    """
    lat = lattice(p)
    index = {tuple(c): i for i, c in enumerate(lat)}
    out = np.empty((len(PERMUTATIONS), len(lat)), dtype=np.int64)
    for pi, perm in enumerate(PERMUTATIONS):
        for a, c in enumerate(lat):
            orig = [0, 0, 0]
            for j in range(3):
                orig[perm[j]] = c[j]
            out[pi, a] = index[tuple(orig)]
    return out
