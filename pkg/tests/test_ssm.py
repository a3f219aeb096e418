import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from mambalab import ContinuousSSM, Method, Rng, discretize, hippo, matrix_exp
from mambalab.errors import InvalidDimensionError, InvariantViolation, SingularMatrixError
from mambalab.experiments import convergence_study, exact_constant_input_output, scalar_system


def test_hippo_small():
    np.testing.assert_array_equal(hippo(1), [[-1.0]])
    np.testing.assert_allclose(hippo(2), [[-1, 0], [-math.sqrt(3), -2]], atol=1e-12)
    assert abs(hippo(3)[2, 1] - (-3.8729833)) < 1e-7


def test_hippo_zero_dim():
    with pytest.raises(InvalidDimensionError):
        hippo(0)


@pytest.mark.parametrize("n", [1, 5, 17, 64])
def test_hippo_structure(n):
    A = hippo(n)
    assert np.all(np.triu(A, 1) == 0)
    assert np.all(np.diag(A) < 0)
    i, j = 5 % n, 2 % n
    if i > j:
        assert A[i, j] == -math.sqrt((2 * i + 1) * (2 * j + 1))


SCALAR = ContinuousSSM([[-1.0]], [1.0], [1.0])


@pytest.mark.parametrize("method,abar,bbar", [
    ("euler", 0.9, 0.1),
    ("bilinear", 0.9047619, 0.0952381),
    ("zoh", 0.9048374, 0.0951626),
    ("zoh_approx", 0.9048374, 0.1),
])
def test_discretize_scalar(method, abar, bbar):
    d = discretize(SCALAR, 0.1, method)
    assert abs(d.Abar[0, 0] - abar) < 1e-7
    assert abs(d.Bbar[0] - bbar) < 1e-7
    assert d.method is Method(method)


def test_discretize_closed_forms():
    d = discretize(SCALAR, 0.1, Method.BILINEAR)
    assert abs(d.Abar[0, 0] - 0.95 / 1.05) < 1e-15
    d = discretize(SCALAR, 0.1, Method.ZOH)
    assert abs(d.Bbar[0] - (1 - math.exp(-0.1))) < 1e-15


def test_cbar_is_c_for_every_method():
    rng = Rng(9)
    for _ in range(20):
        n = rng.integers(1, 6)
        A = rng.normal(0, 1, (n, n)) - 3 * np.eye(n)
        sys = ContinuousSSM(A, rng.normal(0, 1, n), rng.normal(0, 1, n))
        for m in Method:
            d = discretize(sys, rng.uniform(0.01, 0.5), m)
            assert np.array_equal(d.Cbar, sys.C)


def test_zoh_singular_A_is_an_error():
    sys = ContinuousSSM([[0.0, 0.0], [0.0, -1.0]], [1.0, 1.0], [1.0, 1.0])
    with pytest.raises(SingularMatrixError, match="zoh"):
        discretize(sys, 0.1, "zoh")
    # the first-order path stays available
    d = discretize(sys, 0.1, "zoh_approx")
    np.testing.assert_allclose(d.Bbar, [0.1, 0.1])


def test_bilinear_singular_left_factor():
    # I - dt/2 A vanishes for A = 2/dt
    with pytest.raises(SingularMatrixError, match="bilinear"):
        discretize(ContinuousSSM([[20.0]], [1.0], [1.0]), 0.1, "bilinear")


def test_bad_inputs():
    with pytest.raises(InvariantViolation):
        discretize(SCALAR, 0.0, "euler")
    with pytest.raises(ValueError):
        discretize(SCALAR, 0.1, "rk4")
    with pytest.raises(InvariantViolation):
        ContinuousSSM([[1.0, 0.0]], [1.0], [1.0])


def test_matrix_exp_examples():
    np.testing.assert_array_equal(matrix_exp(np.zeros((3, 3))), np.eye(3))
    assert abs(matrix_exp([[-1.0]], 0.1)[0, 0] - 0.9048374) < 1e-7
    np.testing.assert_allclose(matrix_exp(np.diag([-1.0, -2.0])), np.diag([math.exp(-1), math.exp(-2)]),
                               rtol=1e-14, atol=0)


def test_matrix_exp_against_scipy():
    rng = Rng(21)
    for _ in range(50):
        n = rng.integers(1, 9)
        A = rng.normal(0, 2.0, (n, n))
        dt = rng.uniform(0.01, 2.0)
        ref = scipy.linalg.expm(A * dt)
        np.testing.assert_allclose(matrix_exp(A, dt), ref, rtol=1e-10, atol=1e-12 * np.abs(ref).max())


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3))
def test_matrix_exp_semigroup(s, t):
    A = hippo(4) * 0.3
    np.testing.assert_allclose(matrix_exp(A, s) @ matrix_exp(A, t), matrix_exp(A, s + t),
                               rtol=1e-9, atol=1e-11)


def test_exact_output_scalar():
    # y(T) = 1 - e^{-T} for A=-1 and unit step
    assert abs(exact_constant_input_output(scalar_system(), 1.0) - (1 - math.exp(-1))) < 1e-15


def test_convergence_orders():
    rep = convergence_study([0.1, 0.05, 0.025], 1.0)
    assert rep.ok
    assert all(1.8 <= r <= 2.2 for r in rep.euler_ratios)
    assert all(3.6 <= r <= 4.4 for r in rep.bilinear_ratios)
    assert all(3.5 <= r <= 4.5 for r in rep.gap_ratios)
    assert max(rep.errors["zoh"]) < 1e-12


def test_convergence_orders_on_hippo_system():
    sys = ContinuousSSM(hippo(3), [1.0, 0.5, 0.25], [1.0, 1.0, 1.0])
    rep = convergence_study([0.05, 0.025, 0.0125], 1.0, sys)
    assert rep.ok
