import numpy as np
import pytest

from brsnis import (benchmark_mixture, make_gaussian_mixture,
                    mixture_test_function, mixture_truth)


@pytest.fixture(scope="session")
def mixture2():
    """The two-dimensional benchmark mixture: (spec, model, f, truth)."""
    spec = benchmark_mixture(2)
    return spec, make_gaussian_mixture(spec), mixture_test_function(spec), \
        mixture_truth(spec)


@pytest.fixture(scope="session")
def gauss_student_1d():
    """Standard Gaussian target under a Student t3 proposal, dimension 1."""
    from brsnis import MixtureSpec
    spec = MixtureSpec(
        means=np.zeros((2, 1)),
        cov_scale=1.0,
        weight=0.5,
        student_dof=3.0,
        rect_a=np.array([[-1.0, 1.0]]),
        rect_b=np.array([[2.0, 3.0]]),
    )
    return spec, make_gaussian_mixture(spec), mixture_test_function(spec), \
        mixture_truth(spec)
