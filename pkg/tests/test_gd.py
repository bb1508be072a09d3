import numpy as np
import pytest
from numpy.testing import assert_allclose

from gdopt.gd import (coercivity_constant, interpolation_error,
                      limit_conformity_defect, quality_measures)
from gdopt.mesh import build_uniform_triangular
from gdopt.schemes import BUILDERS, build_conforming_p1, build_scheme

ALL_SCHEMES = sorted(BUILDERS)


@pytest.mark.parametrize("kind", ALL_SCHEMES)
@pytest.mark.parametrize("n", [2, 4, 8])
def test_gd_axioms(kind, n):
    gd = build_scheme(kind, build_uniform_triangular(n))
    assert gd.check()
    assert np.abs(gd.reconstruct(gd.one) - 1.0).max() <= 1e-12
    assert np.abs(gd.reconstruct_gradient(gd.one)).max() <= 1e-12


@pytest.mark.parametrize("kind", ALL_SCHEMES)
def test_discrete_norm_is_positive_on_basis(kind):
    gd = build_scheme(kind, build_uniform_triangular(2))
    for i in range(gd.ndof):
        e = np.zeros(gd.ndof)
        e[i] = 1.0
        assert gd.discrete_norm(e) > 0.0


def test_norm_of_one_and_zero():
    gd = build_conforming_p1(build_uniform_triangular(3))
    assert gd.discrete_norm(gd.one) == pytest.approx(1.0, abs=1e-12)
    assert gd.discrete_norm(np.zeros(gd.ndof)) == 0.0


def test_norm_of_shifted_linear():
    # nodal values of x - 1/2: unit gradient, zero mean
    mesh = build_uniform_triangular(4)
    gd = build_conforming_p1(mesh)
    v = mesh.vertices[:, 0] - 0.5
    assert gd.average(v) == pytest.approx(0.0, abs=1e-14)
    assert gd.discrete_norm(v) == pytest.approx(1.0, rel=1e-13)


def test_average_identities():
    gd = build_conforming_p1(build_uniform_triangular(3))
    assert gd.average(gd.one) == pytest.approx(1.0, abs=1e-14)
    rng = np.random.default_rng(0)
    v = rng.standard_normal(gd.ndof)
    w = v - gd.average(v) * gd.one
    assert gd.average(w) == pytest.approx(0.0, abs=1e-13)


def test_ncp1_interpolant_average_is_quadrature_small(cosine):
    base, _, _ = cosine
    mesh = build_uniform_triangular(4)
    gd = build_scheme("ncp1", mesh)
    v = base(mesh.face_midpoints)
    # the interpolated cosine has zero exact mean; the discrete average only
    # carries the quadrature defect, of the order of h**2
    assert abs(gd.average(v)) <= mesh.h ** 2


def test_reconstruct_rejects_wrong_length():
    gd = build_conforming_p1(build_uniform_triangular(2))
    with pytest.raises(ValueError):
        gd.reconstruct(np.zeros(gd.ndof + 1))


def test_quality_measures_constant_field():
    gd = build_conforming_p1(build_uniform_triangular(3))
    const = lambda x: np.full(len(x), 3.7)
    zero_grad = lambda x: np.zeros((len(x), 2))
    zero_div = lambda x: np.zeros(len(x))
    cd, sd, wd = quality_measures(gd, const, zero_grad, zero_grad, zero_div)
    assert sd <= 1e-10
    assert wd <= 1e-10
    assert cd > 0.0


def _cosine_measures(kind, n, cosine):
    base, grad, lap = cosine
    gd = build_scheme(kind, build_uniform_triangular(n))
    return quality_measures(gd, base, grad, grad, lap)


def test_interpolation_error_halves(cosine):
    _, sd1, _ = _cosine_measures("p1", 4, cosine)
    _, sd2, _ = _cosine_measures("p1", 8, cosine)
    assert 1.7 <= sd1 / sd2 <= 2.3


def test_limit_conformity_halves(cosine):
    _, _, wd1 = _cosine_measures("p1", 4, cosine)
    _, _, wd2 = _cosine_measures("p1", 8, cosine)
    assert 1.7 <= wd1 / wd2 <= 2.3


@pytest.mark.parametrize("kind", ["p1", "ncp1"])
def test_coercivity_bounded_along_family(kind):
    cds = [coercivity_constant(build_scheme(kind, build_uniform_triangular(n)))
           for n in (2, 4, 8, 16)]
    assert max(cds) <= 1.2 * min(cds)


def test_ws_defect_halves_for_all_schemes(cosine):
    base, grad, lap = cosine
    for kind in ALL_SCHEMES:
        gd1 = build_scheme(kind, build_uniform_triangular(4))
        gd2 = build_scheme(kind, build_uniform_triangular(8))
        ws1 = (interpolation_error(gd1, base, grad)
               + limit_conformity_defect(gd1, grad, lap))
        ws2 = (interpolation_error(gd2, base, grad)
               + limit_conformity_defect(gd2, grad, lap))
        assert 1.6 <= ws1 / ws2 <= 2.4, kind


def test_quadrature_layout_consistency():
    for kind in ALL_SCHEMES:
        gd = build_scheme(kind, build_uniform_triangular(3))
        per_cell = np.zeros(gd.mesh.num_cells)
        np.add.at(per_cell, gd.qcell, gd.qweights)
        assert_allclose(per_cell, gd.mesh.cell_measures, rtol=1e-13)
        assert np.all(gd.qweights > 0.0)
