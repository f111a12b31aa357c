import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from proxsure.errors import DimensionMismatchError, SingularSystemError
from proxsure.operators import (
    StepParams,
    adjoint_gap,
    apply_operator,
    apply_step,
    circular_operator,
    dense_operator,
    dft_operator,
    gradient_step,
    gram_matrix,
    identity_operator,
    least_squares_step,
    operator_matrix,
    step_matrices,
)


def all_operators(n=8):
    rng = np.random.default_rng(7)
    return [
        identity_operator(n),
        dense_operator(rng.standard_normal((5, n))),
        circular_operator(np.array([0.5, 0.3, 0.2]), n=n),
        dft_operator(n, [1, 2]),
    ]


def test_identity_forward():
    op = identity_operator(2)
    assert np.array_equal(apply_operator(op, np.array([1.0, 2.0])), [1.0, 2.0])
    assert op.m == op.n == 2


def test_dense_forward_adjoint():
    op = dense_operator([[1.0, 0.0]])
    assert np.allclose(apply_operator(op, np.array([3.0, 4.0])), [3.0])
    assert np.allclose(apply_operator(op, np.array([3.0]), "adjoint"), [3.0, 0.0])


def test_delta_kernel_is_identity():
    n = 6
    kernel = np.zeros(n)
    kernel[0] = 1.0
    op = circular_operator(kernel, n=n)
    u = np.random.default_rng(0).standard_normal(n)
    assert np.allclose(apply_operator(op, u), u)


@pytest.mark.parametrize("op", all_operators(), ids=lambda o: o.kind)
def test_adjoint_consistency(op):
    rng = np.random.default_rng(3)
    for _ in range(5):
        assert adjoint_gap(op, rng) <= 1e-10


def test_dft_gram_is_projection():
    op = dft_operator(8, [1, 3])
    G = gram_matrix(op)
    assert np.allclose(G @ G, G, atol=1e-12)
    assert np.allclose(G, G.T, atol=1e-12)


def test_dimension_mismatch_names_sizes():
    op = identity_operator(4)
    with pytest.raises(DimensionMismatchError) as err:
        apply_operator(op, np.zeros(5))
    assert "4" in str(err.value) and "5" in str(err.value)


def test_gradient_step_alpha_zero_is_noop():
    op = dense_operator([[1.0, 0.0]])
    x = np.array([1.0, 1.0])
    assert np.array_equal(gradient_step(x, np.array([3.0]), op, 0.0), x)


def test_gradient_step_identity_full_step():
    op = identity_operator(2)
    y = np.array([5.0, -1.0])
    assert np.allclose(gradient_step(np.array([1.0, 1.0]), y, op, 1.0), y)


def test_gradient_step_hand_example():
    # 0.5*(3,0) + (I - 0.5*diag(1,0))*(1,1) = (2,1)
    op = dense_operator([[1.0, 0.0]])
    out = gradient_step(np.array([1.0, 1.0]), np.array([3.0]), op, 0.5)
    assert np.allclose(out, [2.0, 1.0])


def test_ls_step_mixing_identity_alpha_one():
    op = identity_operator(2)
    y = np.array([2.0, 3.0])
    out = least_squares_step(np.array([0.0, 0.0]), y, op, 1.0, kind="mixing")
    assert np.allclose(out, y)


def test_ls_step_mixing_alpha_zero_is_noop():
    op = dense_operator([[1.0, 0.0]])
    x = np.array([1.0, -2.0])
    out = least_squares_step(x, np.array([3.0]), op, 0.0, kind="mixing")
    assert np.allclose(out, x)


def test_ls_step_deblur_hand_example():
    op = identity_operator(2)
    out = least_squares_step(
        np.array([0.0, 0.0]), np.array([2.0, 4.0]), op, 1.0, kind="deblur"
    )
    assert np.allclose(out, [1.0, 2.0])


def test_ls_step_singular_system():
    op = dense_operator([[1.0, 0.0], [1.0, 0.0]])
    with pytest.raises(SingularSystemError):
        least_squares_step(
            np.zeros(2), np.array([1.0, 1.0]), op, 1e-14, kind="deblur"
        )


def test_step_params_validation():
    with pytest.raises(ValueError):
        StepParams("ls", 1.5)
    with pytest.raises(ValueError):
        StepParams("deblur", 0.0)
    with pytest.raises(ValueError):
        StepParams("unknown", 0.1)


@pytest.mark.parametrize("op", all_operators(), ids=lambda o: o.kind)
@pytest.mark.parametrize("step", [
    StepParams("gradient", 0.3),
    StepParams("ls", 0.5),
    StepParams("deblur", 0.7),
])
def test_step_matrices_match_apply_step(op, step):
    rng = np.random.default_rng(11)
    G_x, G_y = step_matrices(op, step)
    x = rng.standard_normal(op.n)
    y = rng.standard_normal(op.m)
    assert np.allclose(G_x @ x + G_y @ y, apply_step(x, y, op, step), atol=1e-10)


def test_operator_matrix_matches_apply():
    for op in all_operators():
        M = operator_matrix(op)
        u = np.random.default_rng(1).standard_normal(op.n)
        assert np.allclose(M @ u, apply_operator(op, u), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(
    st.integers(min_value=2, max_value=12),
    st.integers(min_value=0, max_value=2**31 - 1),
)
def test_circular_adjoint_property(n, seed):
    rng = np.random.default_rng(seed)
    kernel = rng.standard_normal(min(3, n))
    op = circular_operator(kernel, n=n)
    assert adjoint_gap(op, rng) <= 1e-10


def test_batched_apply_matches_loop():
    op = circular_operator(np.array([0.5, 0.25, 0.25]), n=6)
    rng = np.random.default_rng(2)
    U = rng.standard_normal((4, 6))
    batched = apply_operator(op, U)
    for i in range(4):
        assert np.allclose(batched[i], apply_operator(op, U[i]))
