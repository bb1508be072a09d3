import numpy as np
import pytest
from numpy.testing import assert_allclose

from gdopt.gd import coercivity_constant
from gdopt.mesh import build_uniform_triangular
from gdopt.neumann import (DiffusionField, NeumannProblem, assemble_penalty,
                           assemble_stiffness, error_norms, load_vector,
                           shift_to_average, solve_neumann)
from gdopt.schemes import BUILDERS, build_conforming_p1, build_scheme

ALL_SCHEMES = sorted(BUILDERS)
IDENTITY = DiffusionField.isotropic(1.0)


@pytest.mark.parametrize("kind", ALL_SCHEMES)
def test_stiffness_annihilates_constants(kind):
    gd = build_scheme(kind, build_uniform_triangular(2))
    K = assemble_stiffness(gd, IDENTITY)
    scale = np.abs(K.toarray()).max()
    assert np.abs(K @ gd.one).max() <= 1e-12 * scale


def test_p1_stiffness_against_hand_assembly():
    # independent reassembly of the two-triangle unit square: per triangle,
    # barycentric gradients from a direct 3x3 solve, local matrix
    # area * G G^T, summed into the 4x4 system
    mesh = build_uniform_triangular(1)
    gd = build_conforming_p1(mesh)
    K = assemble_stiffness(gd, IDENTITY).toarray()
    expected = np.zeros((4, 4))
    for tri in mesh.triangles:
        pts = mesh.vertices[tri]
        coeffs = np.linalg.inv(np.column_stack([np.ones(3), pts]))
        grads = coeffs[1:, :]
        area = 0.5 * abs(np.cross(pts[1] - pts[0], pts[2] - pts[0]))
        expected[np.ix_(tri, tri)] += area * grads.T @ grads
    assert_allclose(K, expected, atol=1e-14)
    assert np.all(np.diag(K) > 0.0)
    assert np.abs(K.sum(axis=1)).max() <= 1e-14


def test_stiffness_linearity_in_diffusion():
    gd = build_conforming_p1(build_uniform_triangular(2))
    K1 = assemble_stiffness(gd, IDENTITY).toarray()
    K100 = assemble_stiffness(gd, DiffusionField.isotropic(100.0)).toarray()
    assert_allclose(K100, 100.0 * K1, rtol=1e-13)


def test_penalty_rank_one_behaviour():
    gd = build_conforming_p1(build_uniform_triangular(2))
    pen = assemble_penalty(gd, 0.5)
    m = gd.avg_vector
    assert_allclose(pen.matvec(gd.one), 0.5 * m, atol=1e-14)
    rng = np.random.default_rng(1)
    v = rng.standard_normal(gd.ndof)
    v -= gd.average(v) * gd.one / gd.average(gd.one)
    assert np.abs(pen.matvec(v)).max() <= 1e-13
    zero = assemble_penalty(gd, 0.0)
    assert np.abs(zero.matvec(rng.standard_normal(gd.ndof))).max() == 0.0


def test_zero_source_gives_zero_solution(cosine):
    gd = build_conforming_p1(build_uniform_triangular(3))
    problem = NeumannProblem(gd, IDENTITY, np.zeros(gd.qweights.size), rho=1.0)
    psi = solve_neumann(problem)
    assert np.abs(psi).max() <= 1e-13


@pytest.mark.parametrize("kind", ALL_SCHEMES)
def test_manufactured_cosine_l2_rate(kind, cosine):
    base, grad, lap = cosine
    errs = []
    for n in (8, 16):
        gd = build_scheme(kind, build_uniform_triangular(n))
        problem = NeumannProblem(gd, IDENTITY, lambda x: -lap(x), rho=1.0)
        psi = solve_neumann(problem)
        if kind in ("p1", "ncp1"):
            l2, _ = error_norms(gd, psi, base, grad)
        else:
            from gdopt.postprocess import interpolant_w_mesh
            l2 = float(gd.norm_l2(gd.reconstruct(psi)
                                  - interpolant_w_mesh(base, gd)))
        errs.append(l2)
    assert 3.5 <= errs[0] / errs[1] <= 4.5


def test_manufactured_cosine_h1_rate(cosine):
    base, grad, lap = cosine
    errs = []
    for n in (8, 16):
        gd = build_conforming_p1(build_uniform_triangular(n))
        problem = NeumannProblem(gd, IDENTITY, lambda x: -lap(x), rho=1.0)
        psi = solve_neumann(problem)
        _, h1 = error_norms(gd, psi, base, grad)
        errs.append(h1)
    assert 1.8 <= errs[0] / errs[1] <= 2.2


def test_solution_mean_vanishes(cosine):
    _, _, lap = cosine
    for rho in (1e-4, 1.0):
        gd = build_conforming_p1(build_uniform_triangular(4))
        problem = NeumannProblem(gd, IDENTITY, lambda x: -lap(x), rho=rho)
        psi = solve_neumann(problem)
        fnorm = gd.norm_l2(problem.source)
        assert abs(gd.average(psi)) <= 1e-9 * fnorm


@pytest.mark.parametrize("kind", ALL_SCHEMES)
def test_penalty_weight_equivalence(kind, cosine):
    # any positive penalty yields the same solution once the incompatible
    # source mean is projected out
    _, _, lap = cosine
    gd = build_scheme(kind, build_uniform_triangular(4))
    solutions = []
    for rho in (1e-4, 1e-2, 1.0):
        problem = NeumannProblem(gd, IDENTITY, lambda x: -lap(x), rho=rho)
        solutions.append(solve_neumann(problem))
    scale = np.abs(solutions[-1]).max()
    for psi in solutions[:-1]:
        assert np.abs(psi - solutions[-1]).max() <= 1e-8 * max(scale, 1.0)


def test_stability_bounds(cosine):
    _, _, lap = cosine
    for n in (2, 4, 8):
        gd = build_conforming_p1(build_uniform_triangular(n))
        cd = coercivity_constant(gd)
        problem = NeumannProblem(gd, IDENTITY, lambda x: -lap(x), rho=1.0)
        psi = solve_neumann(problem)
        mean = (gd.qweights @ problem.source) / gd.domain_measure
        fnorm = gd.norm_l2(problem.source - mean)
        grad_norm = np.sqrt(gd.qweights
                            @ (gd.reconstruct_gradient(psi) ** 2).sum(axis=1))
        assert grad_norm <= (1.0 + 1e-8) * cd * fnorm
        assert gd.norm_l2(gd.reconstruct(psi)) <= (1.0 + 1e-8) * cd ** 2 * fnorm


def test_galerkin_residual(cosine):
    _, _, lap = cosine
    gd = build_conforming_p1(build_uniform_triangular(4))
    rho = 1.0
    problem = NeumannProblem(gd, IDENTITY, lambda x: -lap(x), rho=rho)
    psi = solve_neumann(problem)
    K = assemble_stiffness(gd, IDENTITY)
    mean = (gd.qweights @ problem.source) / gd.domain_measure
    load = load_vector(gd, problem.source - mean)
    m = gd.avg_vector
    residual = K @ psi + rho * m * (m @ psi) - load
    assert np.abs(residual).max() <= 1e-10 * np.linalg.norm(load)


def test_shift_to_average():
    gd = build_conforming_p1(build_uniform_triangular(2))
    assert np.abs(shift_to_average(gd, gd.one, 0.0)).max() <= 1e-14
    rng = np.random.default_rng(2)
    v = rng.standard_normal(gd.ndof)
    assert_allclose(shift_to_average(gd, v, gd.average(v)), v, atol=1e-14)
    w = shift_to_average(gd, shift_to_average(gd, v, 0.3), -0.2)
    assert_allclose(w, shift_to_average(gd, v, -0.2), atol=1e-13)
    assert gd.average(w) == pytest.approx(-0.2, abs=1e-13)
    g_before = gd.reconstruct_gradient(v)
    g_after = gd.reconstruct_gradient(w)
    assert_allclose(g_after, g_before, atol=1e-14)


def test_error_norms_trivial_cases():
    mesh = build_uniform_triangular(3)
    gd = build_conforming_p1(mesh)
    func = lambda x: 0.4 * x[:, 0] - 1.1 * x[:, 1] + 0.3
    grad = lambda x: np.tile([0.4, -1.1], (len(x), 1))
    v = func(mesh.vertices)
    l2, h1 = error_norms(gd, v, func, grad)
    assert l2 <= 1e-13 and h1 <= 1e-13
    zero = lambda x: np.zeros(len(x))
    zero_grad = lambda x: np.zeros((len(x), 2))
    l2, h1 = error_norms(gd, gd.one, zero, zero_grad)
    assert l2 == pytest.approx(1.0, rel=1e-13)
    assert h1 <= 1e-13


def test_source_mean_warning():
    gd = build_conforming_p1(build_uniform_triangular(2))
    with pytest.warns(UserWarning):
        NeumannProblem(gd, IDENTITY, np.ones(gd.qweights.size), rho=1.0)


def test_diffusion_field_validates_symmetry():
    bad = DiffusionField(
        lambda pts: np.tile([[1.0, 0.5], [0.0, 1.0]], (len(pts), 1, 1)),
        1.0, 1.0)
    with pytest.raises(ValueError):
        bad.evaluate(np.zeros((3, 2)))
    good = DiffusionField.constant([[2.0, 0.5], [0.5, 1.0]])
    a11, a12, a22 = good.evaluate(np.zeros((2, 2)))
    assert a11[0] == 2.0 and a12[0] == 0.5 and a22[0] == 1.0
