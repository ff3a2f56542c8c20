import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from tgvd import grid, sparse


def fields(channels=0, max_side=7):
    def build(shape):
        full = shape if channels == 0 else (channels,) + shape
        return arrays(np.float64, full, elements=st.floats(-10, 10))
    return st.tuples(st.integers(2, max_side), st.integers(2, max_side)).flatmap(build)


def test_d1_column_example():
    u = np.array([[0.0, 0.0], [1.0, 1.0], [3.0, 3.0]])
    np.testing.assert_array_equal(grid.d1(u)[:, 0], [1.0, 2.0, 0.0])


def test_constant_field_has_zero_derivatives():
    u = np.full((5, 4), 2.5)
    assert not grid.d1(u).any() and not grid.d2(u).any()
    assert not grid.hessian(u).any()


def test_d2_is_transposed_d1(rng):
    u = rng.standard_normal((6, 6))
    np.testing.assert_allclose(grid.d2(u.T), grid.d1(u).T)


def test_last_row_and_column_vanish(rng):
    u = rng.standard_normal((5, 7))
    assert not grid.d1(u)[-1].any()
    assert not grid.d2(u)[:, -1].any()


def test_rejects_bad_fields():
    with pytest.raises(ValueError):
        grid.check_scalar(np.zeros((1, 5)))
    with pytest.raises(ValueError):
        grid.check_scalar(np.array([[0.0, np.nan], [1.0, 1.0]]))
    with pytest.raises(ValueError):
        grid.check_scalar(np.zeros(4))


def test_symgrad_duplicates_off_diagonal(rng):
    q = grid.symgrad(rng.standard_normal((2, 5, 6)))
    np.testing.assert_array_equal(q[1], q[2])


def test_hessian_of_quadratic_interior():
    i, j = np.meshgrid(np.arange(8.0), np.arange(8.0), indexing="ij")
    H = grid.hessian(i * i + 3 * i * j)
    # interior second differences of a quadratic are exact
    np.testing.assert_allclose(H[0][:6, :6], 2.0)
    np.testing.assert_allclose(H[1][:6, :6], 3.0)
    np.testing.assert_allclose(H[3][:6, :6], 0.0)


def test_divergence_is_negative_adjoint(rng):
    p = rng.standard_normal((2, 4, 5))
    np.testing.assert_allclose(grid.divergence(p), -grid.grad_adjoint(p))


@settings(max_examples=40, deadline=None)
@given(fields(0), st.data())
def test_grad_adjoint_identity(u, data):
    p = data.draw(arrays(np.float64, (2,) + u.shape, elements=st.floats(-10, 10)))
    lhs = grid.inner(grid.grad(u), p)
    rhs = grid.inner(u, grid.grad_adjoint(p))
    assert abs(lhs - rhs) <= 1e-9 * (1 + abs(lhs))


@settings(max_examples=40, deadline=None)
@given(fields(2), st.data())
def test_symgrad_adjoint_identity(v, data):
    q = data.draw(arrays(np.float64, (4,) + v.shape[1:], elements=st.floats(-10, 10)))
    lhs = grid.inner(grid.symgrad(v), q)
    rhs = grid.inner(v, grid.symgrad_adjoint(q))
    assert abs(lhs - rhs) <= 1e-9 * (1 + abs(lhs))


def test_jacobian_adjoint_identity(rng):
    v = rng.standard_normal((2, 5, 6))
    q = rng.standard_normal((4, 5, 6))
    assert np.isclose(grid.inner(grid.jacobian(v), q), grid.inner(v, grid.jacobian_adjoint(q)))


def test_symgrad_is_symmetrized_jacobian(rng):
    v = rng.standard_normal((2, 4, 4))
    J = grid.jacobian(v)
    E = grid.symgrad(v)
    np.testing.assert_allclose(E[1], 0.5 * (J[1] + J[2]))
    np.testing.assert_allclose(E[[0, 3]], J[[0, 3]])


def test_matrix_free_matches_assembled(rng):
    M, N = 6, 9
    u = rng.standard_normal((M, N))
    v = rng.standard_normal((2, M, N))
    np.testing.assert_allclose(grid.d1(u).ravel(), sparse.assemble_d(1, M, N) @ u.ravel())
    np.testing.assert_allclose(grid.d2(u).ravel(), sparse.assemble_d(2, M, N) @ u.ravel())
    np.testing.assert_allclose(grid.grad(u).ravel(), sparse.assemble_grad(M, N) @ u.ravel())
    np.testing.assert_allclose(grid.symgrad(v).ravel(), sparse.assemble_symgrad(M, N) @ v.ravel())
    np.testing.assert_allclose(grid.hessian(u).ravel(), sparse.assemble_hessian(M, N) @ u.ravel())


def test_laplacian_is_minus_div_grad(rng):
    u = rng.standard_normal((5, 5))
    np.testing.assert_allclose(grid.laplacian(u), grid.divergence(grid.grad(u)))


def test_mixed_norms():
    x = np.zeros((2, 2, 2))
    x[:, 0, 0] = (3.0, 4.0)
    x[:, 1, 1] = (0.0, -1.0)
    assert grid.mixed_norm_l1(x) == pytest.approx(6.0)
    assert grid.mixed_norm_linf(x) == pytest.approx(5.0)
    np.testing.assert_allclose(grid.pointwise_magnitude(x), [[5.0, 0.0], [0.0, 1.0]])
    assert grid.norm_l2(x) == pytest.approx(np.sqrt(26.0))
