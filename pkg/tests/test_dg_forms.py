import warnings

import numpy as np
import pytest

from conftest import K1, crandn
from mortar_dgbem.dg_forms import (DeltaClippedWarning, DeltaRangeError, DGAssembler,
                                   FluxParameters, assemble_boundary, assemble_coupling,
                                   assemble_interior, combined_flux_identity_check, dg_norm,
                                   dg_norm_terms, interior_fluxes, trace_constants,
                                   weakened_coercivity_check)
from mortar_dgbem.mesh import build_cube_mesh
from mortar_dgbem.spaces import DiscreteSpaces
from oracles import dg_row_direct, trace_row_direct

SAFE = FluxParameters(10.0, 0.1, 0.1, "raise")  # δ = 0.1 k h / p² stays below 1/2 for k = 1


def _setup(mesh, p, k, params):
    s = DiscreteSpaces(mesh, p)
    asm = DGAssembler(s, k, params)
    return s, asm, asm.assemble()


def _ones(s):
    return s.interpolate_v(lambda x: np.ones(len(x)))


def _ones_w(s):
    return s.interpolate_w(lambda x, n: np.ones(len(x)))


@pytest.mark.parametrize("level,p,k", [(0, 1, K1), (0, 2, K1), (0, 3, 2.0), (1, 1, K1)])
def test_dual_path_row_one(level, p, k, rng):
    mesh = build_cube_mesh(1.0, level)
    params = FluxParameters()
    s, asm, dg = _setup(mesh, p, k, params)
    for _ in range(3):
        u, v, m = crandn(rng, s.n_v), crandn(rng, s.n_v), crandn(rng, s.n_w)
        direct = dg_row_direct(s, k, params, u, v, m)
        assembled = np.vdot(v, dg.A @ u + dg.C_mv @ m)
        assert abs(direct - assembled) <= 1e-12 * abs(direct)
        # without the mortar column only Σ a_h^K + b_h^Γ remains
        direct0 = dg_row_direct(s, k, params, u, v)
        assert abs(direct0 - np.vdot(v, dg.A @ u)) <= 1e-12 * abs(direct0)


@pytest.mark.parametrize("p", [1, 2])
def test_dual_path_trace_row(cube0, p, rng):
    params = FluxParameters()
    s, asm, dg = _setup(cube0, p, K1, params)
    u, m, lam = crandn(rng, s.n_v), crandn(rng, s.n_w), crandn(rng, s.n_w)
    direct = trace_row_direct(s, K1, params, u, m, lam)
    assembled = np.vdot(lam, dg.C_um_u @ u + dg.C_um_m @ m)
    assert abs(direct - assembled) <= 1e-12 * abs(direct)


def test_dual_path_without_delta(cube0, rng):
    params = FluxParameters(d=0.0)
    s, asm, dg = _setup(cube0, 2, K1, params)
    u, v = crandn(rng, s.n_v), crandn(rng, s.n_v)
    direct = dg_row_direct(s, K1, params, u, v)
    assert abs(direct - np.vdot(v, dg.A @ u)) <= 1e-12 * abs(direct)


@pytest.mark.parametrize("p", [1, 2])
def test_constant_volume_form(cube1, p):
    s, asm, dg = _setup(cube1, p, K1, FluxParameters())
    one = _ones(s)
    val = np.vdot(one, (dg.A_vol + dg.A_ifaces) @ one)
    assert val == pytest.approx(-K1**2 * 8.0, rel=1e-12)


def test_continuous_linear_has_no_interior_face_terms(cube1):
    s, asm, dg = _setup(cube1, 1, K1, FluxParameters())
    u = s.interpolate_v(lambda x: 0.3 + x[:, 0] - 2 * x[:, 1] + 0.5 * x[:, 2])
    v = s.interpolate_v(lambda x: -1.0 + 0.7 * x[:, 1] + x[:, 2])
    # {∇u}·[v] survives for discontinuous v, so both arguments are continuous here
    for a, b in ((u, u), (u, v), (v, u)):
        assert abs(np.vdot(b, dg.A_ifaces @ a)) <= 1e-12 * abs(dg.A_ifaces).max()


def test_boundary_form_of_constant(cube0):
    k = 1.0
    s, asm, dg = _setup(cube0, 1, k, SAFE)
    assert np.ptp(asm.delta) == 0  # all boundary tets share one diameter
    d = asm.delta[0]
    one = _ones(s)
    assert np.vdot(one, dg.A_bdry @ one) == pytest.approx((1 - d) * 1j * k * 24.0, rel=1e-12)


def test_boundary_form_delta_to_zero(cube0, rng):
    k = 1.0
    s, _, dg0 = _setup(cube0, 2, k, FluxParameters(d=0.0))
    u, v = crandn(rng, s.n_v), crandn(rng, s.n_v)
    # d = 0 is exactly ik (u, v)_Γ
    fq = DGAssembler(s, k).fq
    uu = s.eval_v(u, fq.b_tets, fq.b_ref)
    vv = s.eval_v(v, fq.b_tets, fq.b_ref)
    ref = 1j * k * np.sum(fq.b_weights * uu * vv.conj())
    assert np.vdot(v, dg0.A_bdry @ u) == pytest.approx(ref, rel=1e-12)
    # and small d approaches it linearly
    gaps = []
    for d in (1e-2, 1e-3, 1e-4):
        _, _, dg = _setup(cube0, 2, k, FluxParameters(d=d))
        gaps.append(abs(np.vdot(v, dg.A_bdry @ u) - ref))
    assert gaps[0] > 5 * gaps[1] > 25 * gaps[2]


def test_coupling_examples(cube0):
    k = 1.0
    s, asm, dg = _setup(cube0, 1, k, SAFE)
    d = asm.delta[0]
    one_v, one_w = _ones(s), _ones_w(s)
    assert np.vdot(one_v, dg.C_mv @ one_w) == pytest.approx(-(1 - d) * 24.0, rel=1e-12)
    assert np.vdot(one_w, dg.C_um_m @ one_w) == pytest.approx(d / (1j * k) * 24.0, rel=1e-12)


def test_coupling_without_delta(cube0, rng):
    s, asm, dg = _setup(cube0, 2, K1, FluxParameters(d=0.0))
    one_v, one_w = _ones(s), _ones_w(s)
    assert np.vdot(one_v, dg.C_mv @ one_w) == pytest.approx(-24.0, rel=1e-12)
    assert abs(dg.C_um_m).max() == 0
    # the third row reduces to <u, λ>
    assert np.vdot(one_w, dg.C_um_u @ one_v) == pytest.approx(24.0, rel=1e-12)


def test_block_shapes(cube0):
    s, asm, dg = _setup(cube0, 2, K1, FluxParameters())
    nv, nw, _ = s.dims
    for M in (dg.A_vol, dg.A_ifaces, dg.A_bdry):
        assert M.shape == (nv, nv)
    assert dg.C_mv.shape == (nv, nw)
    assert dg.C_um_u.shape == (nw, nv)
    assert dg.C_um_m.shape == (nw, nw)


def test_wrappers_agree(cube0):
    params = FluxParameters()
    s, asm, dg = _setup(cube0, 1, K1, params)
    A_vol, A_if = assemble_interior(s, cube0, None, None, K1, params)
    C_mv, (C_u, C_m) = assemble_coupling(s, cube0, K1, params)
    assert abs(A_vol - dg.A_vol).max() == 0 and abs(A_if - dg.A_ifaces).max() == 0
    assert abs(assemble_boundary(s, cube0, K1, params) - dg.A_bdry).max() == 0
    assert abs(C_mv - dg.C_mv).max() == 0 and abs(C_u - dg.C_um_u).max() == 0
    with pytest.raises(ValueError):
        assemble_boundary(s, build_cube_mesh(1.0, 0), K1, params)


@pytest.mark.parametrize("p", [1, 2, 3])
def test_complex_symmetry(cube1, p, rng):
    s, asm, dg = _setup(cube1, p, K1, FluxParameters())
    A = dg.A
    assert abs(A - A.T).max() <= 1e-12 * abs(A).max()
    u, v = crandn(rng, s.n_v), crandn(rng, s.n_v)
    # a(u, v) = a(conj v, conj u) for the conjugate-test pairing
    assert np.vdot(v, A @ u) == pytest.approx(np.vdot(u.conj(), A @ v.conj()), rel=1e-12)
    # real part of the form matrix is Hermitian, the ik-weighted parts are i times real symmetric
    H = (A + A.conj().T) / 2
    S = (A - A.conj().T) / 2
    assert abs(H.imag).max() <= 1e-12 * abs(A).max()
    assert abs(S.real).max() <= 1e-12 * abs(A).max()


def test_delta_policies(cube0):
    s = DiscreteSpaces(cube0, 1)
    with pytest.raises(DeltaRangeError):
        DGAssembler(s, K1, FluxParameters(delta_policy="raise"))
    with pytest.warns(DeltaClippedWarning):
        asm = DGAssembler(s, K1, FluxParameters())
    assert asm.delta.max() == 0.5
    with pytest.raises(ValueError):
        FluxParameters(a=-1)
    with pytest.raises(ValueError):
        FluxParameters(delta_policy="ignore")


def test_parameter_scalings(cube1):
    s = DiscreteSpaces(cube1, 2)
    prm = FluxParameters(10, 0.1, 0.1)
    asm = DGAssembler(s, 1.5, prm)
    hf = cube1.face_h
    ni = cube1.n_interior_faces
    assert np.allclose(asm.alpha, 10 * 4 / (1.5 * hf[:ni]))
    assert np.allclose(asm.beta, 0.1 * 1.5 * hf[:ni] / 2)
    assert np.allclose(asm.delta, 0.1 * 1.5 * hf[ni:] / 4)
    assert np.all(asm.alpha > 0) and np.all(asm.beta > 0)
    assert np.all((asm.delta > 0) & (asm.delta <= 0.5))


def test_flux_identity_at_many_points(cube1, rng):
    params = FluxParameters()
    s = DiscreteSpaces(cube1, 2)
    u, m = crandn(rng, s.n_v), crandn(rng, s.n_w)
    ni = cube1.n_interior_faces
    worst = 0.0
    for face in rng.integers(ni, ni + cube1.n_boundary_faces, 100):
        pts = rng.dirichlet(np.ones(3), size=10)[:, :2]
        r = combined_flux_identity_check(s, K1, params, u, m, int(face), pts)
        worst = max(worst, np.abs(r).max())
    assert worst <= 1e-13 * (1 + np.abs(u).max()) * K1


def test_flux_identity_special_cases(cube0):
    params = FluxParameters()
    s = DiscreteSpaces(cube0, 1)
    ni = cube0.n_interior_faces
    pts = np.array([[0.2, 0.3], [0.1, 0.8]])
    r = combined_flux_identity_check(s, K1, params, np.zeros(s.n_v), _ones_w(s), ni, pts)
    assert np.abs(r).max() <= 1e-14
    r = combined_flux_identity_check(s, K1, params, np.arange(s.n_v, dtype=float),
                                     np.zeros(s.n_w), ni + 3, pts)
    assert np.abs(r).max() <= 1e-12
    with pytest.raises(ValueError):
        combined_flux_identity_check(s, K1, params, np.zeros(s.n_v), np.zeros(s.n_w), 0, pts)


def test_interior_flux_single_valued(cube1, rng):
    params = FluxParameters()
    s = DiscreteSpaces(cube1, 2)
    u = crandn(rng, s.n_v)
    pts = rng.dirichlet(np.ones(3), size=6)[:, :2]
    for face in rng.integers(0, cube1.n_interior_faces, 25):
        s0, u0 = interior_fluxes(s, K1, params, u, int(face), pts, first=0)
        s1, u1 = interior_fluxes(s, K1, params, u, int(face), pts, first=1)
        scale = np.abs(s0).max() + np.abs(u0).max()
        assert np.abs(s0 - s1).max() <= 1e-13 * scale
        assert np.abs(u0 - u1).max() <= 1e-13 * scale
    with pytest.raises(ValueError):
        interior_fluxes(s, K1, params, u, cube1.n_interior_faces, pts)


def test_dg_norm_examples(cube1):
    k = 1.0
    s = DiscreteSpaces(cube1, 1)
    asm = DGAssembler(s, k, SAFE)
    assert dg_norm(np.zeros(s.n_v), s, k, SAFE) == 0.0
    one = _ones(s)
    fq = asm.fq
    bnd = k * np.sum(fq.b_weights * (1 - asm.delta[:, None]))
    assert dg_norm(one, s, k, SAFE) ** 2 == pytest.approx(k**2 * 8.0 + bnd, rel=1e-12)
    lin = s.interpolate_v(lambda x: 1 + x[:, 0] + 2 * x[:, 2])
    t = dg_norm_terms(asm, lin)
    assert t["jump"] < 1e-24 and t["jump_grad"] < 1e-24
    plus, plain = dg_norm(lin, s, k, SAFE, "DG+"), dg_norm(lin, s, k, SAFE, "DG")
    avg = np.sum(fq.i_weights / (asm.alpha[:, None] * k)) * 5.0  # |∇v|² = 1 + 4
    assert plus**2 - plain**2 == pytest.approx(avg, rel=1e-10)
    with pytest.raises(ValueError):
        dg_norm(one, s, k, SAFE, "H1")


def test_dg_norm_positive_on_random_vectors(cube0, rng):
    s = DiscreteSpaces(cube0, 2)
    asm = DGAssembler(s, K1)
    pieces = asm.norm_pieces()
    for _ in range(5):
        v = crandn(rng, s.n_v)
        direct = dg_norm(v, s, K1)
        matrix = np.sqrt(sum(np.vdot(v, pieces[t] @ v).real
                             for t in ("grad", "mass", "jump_grad", "jump", "bnd_grad", "bnd")))
        assert direct > 0
        assert direct == pytest.approx(matrix, rel=1e-11)


def test_trace_constants_scale_like_inverse_h():
    c0 = trace_constants(DiscreteSpaces(build_cube_mesh(1.0, 0), 2))
    c1 = trace_constants(DiscreteSpaces(build_cube_mesh(1.0, 1), 2))
    assert np.allclose(c1.max() ** 2, 2 * c0.max() ** 2, rtol=1e-10)


@pytest.mark.parametrize("level,p", [(0, 1), (0, 2), (1, 1)])
def test_weakened_coercivity(level, p):
    with warnings.catch_warnings():
        warnings.simplefilter("error", DeltaClippedWarning)
        rep = weakened_coercivity_check(DiscreteSpaces(build_cube_mesh(1.0, level), p), K1,
                                        eps=0.1, n_samples=200, seed=3)
    assert rep.passed
    assert rep.a_min > 0
    assert len(rep.margins) == 200
