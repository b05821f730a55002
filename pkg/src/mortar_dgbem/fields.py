"""Elementwise-evaluable scalar fields on a tetrahedral mesh.

A field is called as ``field(tet_ids, ref, phys)`` with per-tet reference
points ``ref`` (T, Q, 3) and matching physical points ``phys`` (T, Q, 3); it
returns values (T, Q) and gradients (T, Q, 3).  Evaluating per element is
what lets broken (discontinuous) fields and analytic fields share the same
norm and form code.
"""

from __future__ import annotations

import numpy as np


class Field:
    def __call__(self, tet_ids, ref, phys):
        raise NotImplementedError

    def __sub__(self, other: "Field") -> "Field":
        return _Combination(self, other, -1.0)

    def __add__(self, other: "Field") -> "Field":
        return _Combination(self, other, 1.0)


class _Combination(Field):
    def __init__(self, a: Field, b: Field, sign: float):
        self.a, self.b, self.sign = a, b, sign

    def __call__(self, tet_ids, ref, phys):
        va, ga = self.a(tet_ids, ref, phys)
        vb, gb = self.b(tet_ids, ref, phys)
        return va + self.sign * vb, ga + self.sign * gb


class DiscreteField(Field):
    """A V_h coefficient vector."""

    def __init__(self, spaces, coeffs):
        self.spaces = spaces
        self.coeffs = np.asarray(coeffs)

    def __call__(self, tet_ids, ref, phys):
        return self.spaces.eval_v(self.coeffs, tet_ids, ref, grad=True)


class AnalyticField(Field):
    """Smooth field given by ``value(x)`` and ``gradient(x)`` on point arrays (n, 3)."""

    def __init__(self, value, gradient):
        self.value = value
        self.gradient = gradient

    def __call__(self, tet_ids, ref, phys):
        x = phys.reshape(-1, 3)
        v = np.asarray(self.value(x)).reshape(phys.shape[:2])
        g = np.asarray(self.gradient(x)).reshape(phys.shape)
        return v, g


def as_field(spaces, u) -> Field:
    if isinstance(u, Field):
        return u
    return DiscreteField(spaces, u)
