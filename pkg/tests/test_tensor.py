import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hydranet import tensor as T
from hydranet.tensor import ContractError, DegenerateRowError, DomainError, ShapeError, Tensor

finite = st.floats(-5, 5, allow_nan=False, allow_infinity=False)


def vec(n_min=1, n_max=8):
    return st.integers(n_min, n_max).flatmap(lambda n: arrays(np.float64, n, elements=finite))


# ------------------------------------------------------------ elementwise


def test_elementwise_scalar_values():
    assert T.exp(Tensor(0.0)).item() == 1.0
    assert T.silu(Tensor(0.0)).item() == 0.0
    assert T.softplus(Tensor(0.0)).item() == pytest.approx(0.693147, abs=1e-6)
    assert T.apply_elementwise(Tensor([1.0, -2.0]), "negate").data.tolist() == [-1.0, 2.0]
    assert T.apply_elementwise(Tensor([1.0, -2.0]), "scale", 3.0).data.tolist() == [3.0, -6.0]


def test_log_domain_error_names_index():
    with pytest.raises(DomainError, match=r"\(1, 0\)"):
        T.log(Tensor([[1.0, 2.0], [0.0, 3.0]]))


def test_scale_requires_constant():
    with pytest.raises((ContractError, TypeError, ValueError)):
        T.apply_elementwise(Tensor([1.0]), "scale")


# ----------------------------------------------------------------- matmul


def test_matmul_examples():
    m = Tensor([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(T.matmul(Tensor(np.eye(2)), m).data, m.data)
    assert T.matmul(m, Tensor([[1.0], [1.0]])).data.tolist() == [[3.0], [7.0]]


def test_matmul_shape_error_names_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


# ------------------------------------------------------------ cumsum/segsum


def test_cumsum_examples():
    assert T.cumsum(Tensor([0.0, 0.0, 0.0]), 0).data.tolist() == [0, 0, 0]
    assert T.cumsum(Tensor([1.0, 2.0, 3.0]), 0).data.tolist() == [1, 3, 6]
    with pytest.raises(ShapeError):
        T.cumsum(Tensor(np.ones((2, 2))), 5)


@given(vec())
def test_cumsum_differences_reproduce_input(a):
    c = T.cumsum(Tensor(a), 0).data
    np.testing.assert_allclose(np.diff(np.r_[0.0, c]), a, atol=1e-12)


def test_segsum_examples():
    assert T.segsum_exp(Tensor([0.0, 0.0])).data.tolist() == [[1, 0], [1, 1]]
    np.testing.assert_allclose(T.segsum_exp(Tensor([-1.0, -2.0])).data, [[1, 0], [math.exp(-2), 1]], atol=1e-12)
    assert T.segsum_exp(Tensor([-3.0])).data.tolist() == [[1.0]]


@given(vec().map(lambda a: -np.abs(a)))
def test_segsum_lower_triangular_unit_diagonal(a):
    L = T.segsum_exp(Tensor(a)).data
    n = a.size
    assert np.all(np.triu(L, 1) == 0)
    assert np.all(np.diag(L) == 1)
    lower = L[np.tril_indices(n)]
    assert np.all((lower > 0) & (lower <= 1))
    for i in range(n):
        for j in range(i + 1):
            assert L[i, j] == pytest.approx(math.exp(a[j + 1 : i + 1].sum()), rel=1e-12)


def test_segsum_exponent_clamped():
    L = T.segsum_exp(Tensor([0.0, 500.0])).data
    assert np.isfinite(L).all()
    assert L[1, 0] == pytest.approx(math.exp(80.0))


# ---------------------------------------------------------------- softmax


def test_softmax_examples():
    np.testing.assert_allclose(T.softmax_masked(Tensor([1.0, 1.0, 1.0, 1.0]), -1).data, 0.25)
    out = T.softmax_masked(Tensor([0.0, 0.0]), -1, np.array([True, False])).data
    assert out.tolist() == [1.0, 0.0]
    np.testing.assert_allclose(T.softmax_masked(Tensor([10.0, 0.0]), -1).data, [0.9999546, 0.0000454], atol=1e-7)


def test_softmax_fully_masked_row():
    with pytest.raises(DegenerateRowError):
        T.softmax_masked(Tensor(np.zeros((2, 2))), -1, np.array([[True, False], [False, False]]))


@settings(max_examples=50)
@given(arrays(np.float64, (4, 5), elements=st.floats(-50, 50)), arrays(bool, (4, 5)))
def test_softmax_rows_sum_to_one_and_masked_zero(logits, mask):
    mask[:, 0] = True
    out = T.softmax_masked(Tensor(logits), -1, mask).data
    np.testing.assert_allclose(out.sum(-1), 1.0, atol=1e-12)
    assert np.all(out[~mask] == 0.0)


# --------------------------------------------------------------- backward


def test_backward_sum_gives_ones():
    x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    T.backward(T.tsum(x))
    assert np.array_equal(x.grad, np.ones((2, 3)))
    assert len(T.current_tape()) == 0


def test_backward_exp_at_zero():
    x = Tensor([0.0], requires_grad=True)
    T.backward(T.tsum(T.exp(x)))
    assert x.grad.tolist() == [1.0]


def test_backward_rejects_non_scalar():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(ContractError):
        T.backward(x * 2.0)
    T.current_tape().clear()


def test_broadcast_gradient_is_reduced():
    a = Tensor(np.ones((3, 4)), requires_grad=True)
    b = Tensor(np.ones(4), requires_grad=True)
    T.backward(T.tsum(a * b))
    assert b.grad.shape == (4,)
    assert b.grad.tolist() == [3.0] * 4


def test_no_grad_records_nothing():
    x = Tensor([1.0], requires_grad=True)
    with T.no_grad():
        y = T.exp(x)
    assert not y.requires_grad
    assert len(T.current_tape()) == 0


# -------------------------------------------------------------- grad_check


def test_grad_check_square():
    x = Tensor([1.0, 2.0])
    err = T.grad_check(lambda v: T.tsum(v * v), x)
    assert err < 1e-6


def test_grad_check_segsum():
    assert T.grad_check(lambda v: T.tsum(T.segsum_exp(v)), Tensor([-0.3, -1.2, -0.1])) < 1e-4


def test_grad_check_constant():
    assert T.grad_check(lambda v: T.tsum(v * 0.0) + 3.0, Tensor([1.0, 2.0])) == 0.0


@settings(max_examples=20, deadline=None)
@given(arrays(np.float64, (3, 4), elements=st.floats(-2, 2)))
@pytest.mark.parametrize("op", ["exp", "sigmoid", "softplus", "silu"])
def test_elementwise_gradients_random(op, a):
    w = np.linspace(-1, 1, 12).reshape(3, 4)
    fn = T.ELEMENTWISE[op]
    assert T.grad_check(lambda v: T.tsum(fn(v) * w), Tensor(a.copy())) <= 1e-4


@settings(max_examples=20, deadline=None)
@given(arrays(np.float64, (2, 5), elements=st.floats(-3, 0)))
def test_segsum_gradient_random(a):
    w = np.arange(50.0).reshape(2, 5, 5) / 50
    assert T.grad_check(lambda v: T.tsum(T.segsum_exp(v) * w), Tensor(a.copy())) <= 1e-4


@settings(max_examples=20, deadline=None)
@given(arrays(np.float64, (3, 4), elements=st.floats(-4, 4)))
def test_softmax_gradient_random(a):
    w = np.arange(12.0).reshape(3, 4)
    mask = np.array([[1, 1, 0, 1], [1, 0, 0, 0], [1, 1, 1, 1]], dtype=bool)
    assert T.grad_check(lambda v: T.tsum(T.softmax_masked(v, -1, mask) * w), Tensor(a.copy())) <= 1e-4


@settings(max_examples=20, deadline=None)
@given(arrays(np.float64, (2, 3), elements=st.floats(-2, 2)), arrays(np.float64, (3, 4), elements=st.floats(-2, 2)))
def test_matmul_einsum_gradient_random(a, b):
    # closed form for sum((a @ b)^2); exact oracle at any input scale
    ga, gb = 2 * (a @ b) @ b.T, 2 * a.T @ (a @ b)
    for op in (lambda x, y: T.matmul(x, y), lambda x, y: T.einsum("ij,jk->ik", x, y)):
        x, y = Tensor(a.copy(), requires_grad=True), Tensor(b.copy(), requires_grad=True)
        T.backward(T.tsum(op(x, y) ** 2))
        np.testing.assert_allclose(x.grad, ga, rtol=1e-12, atol=1e-300)
        np.testing.assert_allclose(y.grad, gb, rtol=1e-12, atol=1e-300)


@settings(max_examples=20, deadline=None)
@given(arrays(np.float64, (2, 3), elements=st.floats(0.1, 2)), arrays(np.float64, (3, 4), elements=st.floats(0.1, 2)))
def test_matmul_einsum_finite_difference(a, b):
    # positive entries keep every gradient entry well away from 0 so central
    # differences resolve it
    assert T.grad_check(lambda x, y: T.tsum(T.matmul(x, y) ** 2), [Tensor(a.copy()), Tensor(b.copy())]) <= 1e-4
    assert T.grad_check(lambda x, y: T.tsum(T.einsum("ij,jk->ik", x, y) ** 2), [Tensor(a.copy()), Tensor(b.copy())]) <= 1e-4
    assert T.grad_check(lambda x, y: T.tsum(T.einsum("ij,jk->ik", x, y) ** 2), [Tensor(a.copy()), Tensor(b.copy())]) <= 1e-4


# ---------------------------------------------------------------- dropout


def test_dropout_seeded_and_disabled_at_eval():
    x = Tensor(np.ones((50, 20)))
    a = T.dropout(x, 0.1, np.random.default_rng(0), training=True).data
    b = T.dropout(x, 0.1, np.random.default_rng(0), training=True).data
    assert np.array_equal(a, b)
    assert set(np.unique(a)) <= {0.0, 1.0 / 0.9}
    assert np.array_equal(T.dropout(x, 0.1, np.random.default_rng(0), training=False).data, x.data)


def test_determinism_bitwise():
    a = np.random.default_rng(0).normal(size=(4, 4))
    outs = [T.softmax_masked(T.einsum("ij,jk->ik", Tensor(a), Tensor(a)), -1).data for _ in range(2)]
    assert np.array_equal(outs[0], outs[1])
