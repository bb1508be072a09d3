import numpy as np
import pytest

from gdopt.cli import cosine_fields
from gdopt.postprocess import ExactSolution


@pytest.fixture(scope="session")
def cosine():
    """Manufactured field 2 cos(pi x) cos(pi y) with gradient and Laplacian."""
    base, grad, lap = cosine_fields()
    return base, grad, lap


@pytest.fixture(scope="session")
def exact_ex1(cosine):
    base, grad, _ = cosine
    return ExactSolution.with_zero_mean_control(base, grad, base, grad,
                                                -1.0, 1.0, fine_n=512)


@pytest.fixture(scope="session")
def exact_ex3(cosine):
    base, grad, _ = cosine
    return ExactSolution.with_zero_mean_control(base, grad, base, grad,
                                                -0.5, 1.0, fine_n=512)


def normalized_problem_data(gd, source, desired):
    """Shift callables so their means vanish on the quadrature of ``gd``.

    Inputs to the control problem are required pre-normalized; manufactured
    callables only have zero means up to quadrature error, so property tests
    remove that defect exactly.
    """
    omega = gd.domain_measure

    def shifted(func):
        mean = (gd.qweights @ func(gd.qpoints)) / omega
        return lambda x, _f=func, _m=mean: np.asarray(_f(x)) - _m

    return shifted(source), shifted(desired)
