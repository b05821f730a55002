import numpy as np
import pytest

from mortar_dgbem.fields import AnalyticField
from mortar_dgbem.mesh import Mesh, build_cube_mesh
from mortar_dgbem.reconstruct import (apply_P1, apply_P2, build_submesh, gather,
                                      p1_approximation_ratio, p2_approximation_ratio,
                                      reconstruct, tilde_grad_sq, tilde_jump_sq, tilde_l2_sq)
from mortar_dgbem.spaces import DiscreteSpaces


@pytest.fixture(scope="module")
def spaces1():
    return DiscreteSpaces(build_cube_mesh(1.0, 1), 1)


def _two_tets():
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 1, 1]], float)
    return Mesh(v, [[0, 1, 2, 3], [1, 2, 3, 4]])


def _lattice_points(sub):
    return sub.vertices[sub.vertex_ids]  # (T, nloc, 3)


def test_ell_one_is_parent_mesh(cube1):
    sub = build_submesh(cube1, 1)
    assert len(sub.tets) == cube1.n_tets
    assert sub.n_vertices == len(cube1.vertices)
    assert np.allclose(np.sort(sub.vertices, axis=0), np.sort(cube1.vertices, axis=0))


@pytest.mark.parametrize("ell", [2, 3])
def test_subtet_counts(cube0, ell):
    sub = build_submesh(cube0, ell)
    assert len(sub.tets) == cube0.n_tets * ell**6
    if ell == 2:
        assert len(sub.tets) // cube0.n_tets == 64


@pytest.mark.parametrize("level,ell", [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3)])
def test_conformity_and_sizes(level, ell):
    m = build_cube_mesh(1.0, level)
    sub = build_submesh(m, ell)
    assert sub.conformity_defects() == 0
    d = sub.subtet_diameters() / (m.h[sub.subtet_parent] / ell**2)
    assert d.min() >= 0.5 and d.max() <= 2.0
    # each subtet lies inside its parent
    c = sub.vertices[sub.tets].mean(axis=1)
    ref = m.to_reference(sub.subtet_parent, c)
    lam = np.column_stack([1 - ref.sum(axis=1), ref])
    assert lam.min() > 0
    vol = np.abs(np.linalg.det(np.stack([sub.vertices[sub.tets[:, i]] - sub.vertices[sub.tets[:, 0]]
                                         for i in (1, 2, 3)], axis=2))) / 6
    assert np.isclose(vol.sum(), 8.0) and vol.min() > 0


def test_bad_ell(cube0):
    with pytest.raises(ValueError):
        build_submesh(cube0, 0)


@pytest.mark.parametrize("ell", [1, 2, 3])
def test_p1_reproduces_constants(spaces1, ell):
    sub = build_submesh(spaces1.mesh, ell)
    one = spaces1.interpolate_v(lambda x: np.ones(len(x)))
    assert np.allclose(apply_P1(one, sub, spaces1), 1.0, atol=1e-13)


@pytest.mark.parametrize("ell", [1, 2])
def test_p1_reproduces_parentwise_linears(spaces1, ell, rng):
    m = spaces1.mesh
    coef = rng.standard_normal((m.n_tets, 4))  # different affine function on every parent

    def value(tets, ref, phys):
        c = coef[np.asarray(tets)]
        v = c[:, None, 0] + np.einsum("tqi,ti->tq", phys, c[:, 1:])
        g = np.broadcast_to(c[:, None, 1:], phys.shape)
        return v, g

    from mortar_dgbem.fields import Field

    class Pw(Field):
        def __call__(self, tets, ref, phys):
            return value(tets, ref, phys)

    sub = build_submesh(m, ell)
    P = _lattice_points(sub)
    expected = coef[:, None, 0] + np.einsum("tli,ti->tl", P, coef[:, 1:])
    assert np.allclose(apply_P1(Pw(), sub), expected, atol=1e-12)
    # the same through V_h coefficients (p = 1 spans the parent-wise linears)
    vh = np.concatenate([spaces1.interpolate_v(lambda x, c=c: c[0] + x @ c[1:])[:4] for c in coef[:1]])
    assert vh.shape == (4,)


def test_p1_from_coefficients_matches_field(spaces1, rng):
    sub = build_submesh(spaces1.mesh, 2)
    v = rng.standard_normal(spaces1.n_v)
    from mortar_dgbem.fields import DiscreteField
    a = apply_P1(v, sub, spaces1)
    b = apply_P1(DiscreteField(spaces1, v), sub)
    assert np.allclose(a, b, atol=1e-12)
    with pytest.raises(ValueError):
        apply_P1(v, sub)


def test_p2_fixed_point(spaces1, rng):
    sub = build_submesh(spaces1.mesh, 2)
    vc = rng.standard_normal(sub.n_vertices)
    assert np.allclose(apply_P2(gather(vc, sub), sub), vc, atol=1e-14)


def test_p2_two_parent_average():
    m = _two_tets()
    sub = build_submesh(m, 1)
    vt = np.zeros((2, sub.n_local))
    vt[1] = 1.0
    out = apply_P2(vt, sub)
    shared = {1, 2, 3}
    for node, x in enumerate(sub.vertices):
        gid = int(np.flatnonzero(np.all(np.isclose(m.vertices, x), axis=1))[0])
        assert out[node] == (0.5 if gid in shared else (0.0 if gid == 0 else 1.0))


def test_p2_multi_parent_average(cube1):
    sub = build_submesh(cube1, 1)
    vt = np.repeat(np.arange(cube1.n_tets, dtype=float)[:, None], sub.n_local, axis=1)
    out = apply_P2(vt, sub)
    for node in range(sub.n_vertices):
        parents = np.flatnonzero(np.any(sub.vertex_ids == node, axis=1))
        assert out[node] == pytest.approx(parents.mean())


def test_linearity(spaces1, rng):
    sub = build_submesh(spaces1.mesh, 2)
    v, w = rng.standard_normal((2, spaces1.n_v))
    a, b = 1.7, -0.4 + 2j
    lhs = reconstruct(a * v + b * w, spaces1, 2, submesh=sub).values
    rhs = a * reconstruct(v, spaces1, 2, submesh=sub).values + b * reconstruct(w, spaces1, 2, submesh=sub).values
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * np.max(np.abs(rhs))


def test_continuous_linear_fixed_point(spaces1):
    f = lambda x: 0.5 - x[:, 0] + 2 * x[:, 1] + x[:, 2]  # noqa: E731
    v = spaces1.interpolate_v(f)
    res = reconstruct(v, spaces1, 1)
    sub = build_submesh(spaces1.mesh, 1)
    assert np.allclose(res.values, f(sub.vertices), atol=1e-12)
    assert res.terms["bnd_defect"] < 1e-12
    assert res.terms["jump_weighted"] < 1e-12


def test_zero_field(spaces1):
    res = reconstruct(np.zeros(spaces1.n_v), spaces1, 2)
    assert np.all(res.values == 0)
    assert res.ratios == {"A": 0.0, "B": 0.0, "C": 0.0}


def test_reconstruction_is_continuous(spaces1, rng):
    sub = build_submesh(spaces1.mesh, 2)
    res = reconstruct(rng.standard_normal(spaces1.n_v), spaces1, 2, submesh=sub)
    U = gather(res.values, sub)
    assert np.max(tilde_jump_sq(U, sub)) <= 1e-24
    assert np.max(tilde_jump_sq(res.tilde, sub)) > 1e-6  # 𝒫₁v keeps the parent jumps


def test_tilde_norms_of_linear(cube1):
    sub = build_submesh(cube1, 2)
    f = lambda x: 1 + 2 * x[..., 0] - x[..., 1]  # noqa: E731
    U = f(_lattice_points(sub))
    assert tilde_l2_sq(U, sub).sum() == pytest.approx(8 + 8 * (4 + 1) / 3, rel=1e-12)
    assert tilde_grad_sq(U, sub).sum() == pytest.approx(8 * 5, rel=1e-12)


def _random_p2(level, rng):
    s = DiscreteSpaces(build_cube_mesh(1.0, level), 2)
    return s, rng.standard_normal(s.n_v)


@pytest.mark.parametrize("ell", [1, 2])
def test_p1_approximation_ratio_stable(ell, rng):
    r = []
    for level in (1, 2):
        s, v = _random_p2(level, rng)
        r.append(max(p1_approximation_ratio(rng.standard_normal(s.n_v), s, build_submesh(s.mesh, ell))
                     for _ in range(3)))
    assert max(r) / min(r) < 2.0


@pytest.mark.parametrize("ell", [1, 2])
def test_p2_approximation_ratio_stable(ell, rng):
    r = []
    for level in (1, 2):
        m = build_cube_mesh(1.0, level)
        sub = build_submesh(m, ell)
        r.append(max(p2_approximation_ratio(rng.standard_normal((m.n_tets, sub.n_local)), sub)
                     for _ in range(3)))
    assert max(r) / min(r) < 2.0


def test_estimate_ratios_do_not_grow(rng):
    """The uniform constant of the three estimates: no growth from level 1 to level 2."""
    worst = {}
    for level in (1, 2):
        s = DiscreteSpaces(build_cube_mesh(1.0, level), 1)
        sub = build_submesh(s.mesh, 2)
        rs = [reconstruct(rng.standard_normal(s.n_v), s, 2, submesh=sub).ratios for _ in range(5)]
        worst[level] = {e: max(r[e] for r in rs) for e in "ABC"}
    for e in "ABC":
        assert worst[2][e] <= 2.0 * worst[1][e]
        assert 0 < worst[1][e] < 10


def test_analytic_field_reconstruction(spaces1):
    fld = AnalyticField(lambda x: x[..., 0] * x[..., 1], lambda x: np.stack(
        [x[..., 1], x[..., 0], 0 * x[..., 0]], -1))
    sub = build_submesh(spaces1.mesh, 3)
    vt = apply_P1(fld, sub)
    exact = np.prod(_lattice_points(sub)[..., :2], axis=-1)
    # quadratic, so only O(h̃²) close
    assert np.max(np.abs(vt - exact)) < 0.05
