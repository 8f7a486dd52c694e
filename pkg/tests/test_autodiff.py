from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pita import autodiff as ad
from pita.autodiff import Tape
from pita.errors import ContractError, ShapeError

from conftest import fd_grad, rel_err

finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


def test_matmul_identity_and_projector():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(ad.matmul(np.eye(2), a), a)
    out = ad.matmul(np.array([[1.0, 0.0], [0.0, 0.0]]), np.array([[5.0, 6.0], [7.0, 8.0]]))
    np.testing.assert_array_equal(out, [[5, 6], [0, 0]])


def test_matmul_gradient_is_column_sums(rng):
    a0, b0 = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
    tape = Tape()
    a, b = tape.leaf(a0), tape.constant(b0)
    g = tape.backward(ad.sum(a @ b))[a]
    expected = np.tile(b0.sum(axis=1), (3, 1))
    np.testing.assert_allclose(g, expected, rtol=1e-12)
    assert rel_err(g, fd_grad(lambda x: (x @ b0).sum(), a0)) < 1e-8


def test_matmul_shape_mismatch():
    with pytest.raises(ShapeError):
        ad.matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_elementwise_local_values():
    tape = Tape()
    x = tape.leaf(0.0)
    y = ad.tanh(x)
    assert y.value == 0.0
    assert tape.backward(y)[x] == 1.0

    tape = Tape()
    x = tape.leaf(np.pi / 2)
    y = ad.sin(x)
    assert y.value == 1.0
    assert abs(tape.backward(y)[x]) < 1e-15


def test_square_gradient_is_twice_input(rng):
    v = rng.normal(size=7)
    tape = Tape()
    x = tape.leaf(v)
    g = tape.backward(ad.sum(ad.square(x)))[x]
    np.testing.assert_array_equal(g, 2 * v)
    assert rel_err(g, fd_grad(lambda z: np.sum(z * z), v)) < 1e-8


def test_elementwise_dispatch_and_unknown_kind():
    a, b = np.array([1.0, 2.0]), np.array([3.0, 5.0])
    np.testing.assert_array_equal(ad.elementwise("add", a, b), [4, 7])
    np.testing.assert_array_equal(ad.elementwise("sub", a, b), [-2, -3])
    np.testing.assert_array_equal(ad.elementwise("mul", a, b), [3, 10])
    np.testing.assert_array_equal(ad.elementwise("square", b), [9, 25])
    with pytest.raises(ContractError):
        ad.elementwise("exp", a)
    with pytest.raises(ShapeError):
        ad.add(np.ones(2), np.ones(3))


def test_backward_identity_root():
    tape = Tape()
    x = tape.leaf(3.5)
    assert tape.backward(x)[x] == 1.0


def test_backward_requires_scalar_root():
    tape = Tape()
    x = tape.leaf(np.ones(3))
    with pytest.raises(ContractError):
        tape.backward(x)


def test_unreachable_node_gets_zero_adjoint():
    tape = Tape()
    x, y = tape.leaf(np.ones(2)), tape.leaf(np.ones(3))
    grads = tape.backward(ad.sum(x))
    np.testing.assert_array_equal(grads[y], np.zeros(3))


def test_operand_ids_precede_consumer():
    tape = Tape()
    x = tape.leaf(np.ones((2, 2)))
    y = ad.tanh(x @ x) + x
    z = ad.sum(y * y)
    for i in range(len(tape)):
        node = ad.Node(tape, i)
        assert all(j < i for j in tape.operands(node))
    assert z.id == len(tape) - 1


def _mlp_loss(arrays, x, target, tape=None):
    """Three-layer tanh MLP with squared-error loss."""
    h = x
    for k in range(0, len(arrays), 2):
        h = ad.add_bias(ad.matmul(h, arrays[k]), arrays[k + 1])
        if k < len(arrays) - 2:
            h = ad.tanh(h)
    return ad.sum(ad.square(ad.sub(h, target)))


def test_three_layer_mlp_matches_finite_differences(rng):
    shapes = [(4, 6), (6,), (6, 5), (5,), (5, 3), (3,)]
    params = [rng.normal(scale=0.5, size=s) for s in shapes]
    x, target = rng.normal(size=(8, 4)), rng.normal(size=(8, 3))
    tape = Tape()
    leaves = [tape.leaf(p) for p in params]
    grads = tape.backward(_mlp_loss(leaves, tape.constant(x), target))
    for k, p in enumerate(params):

        def f(v, k=k):
            trial = list(params)
            trial[k] = v
            return float(_mlp_loss(trial, x, target))

        assert rel_err(grads[leaves[k]], fd_grad(f, p)) < 1e-5


def test_shared_subexpression_accumulates(rng):
    v = rng.normal(size=5)
    t1 = Tape()
    x1 = t1.leaf(v)
    s = ad.sin(x1)
    g_shared = t1.backward(ad.sum(s * s + s))[x1]

    t2 = Tape()
    x2 = t2.leaf(v)
    g_dup = t2.backward(ad.sum(ad.sin(x2) * ad.sin(x2) + ad.sin(x2)))[x2]
    np.testing.assert_allclose(g_shared, g_dup, rtol=1e-14)


def test_determinism(rng):
    v, w = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))

    def run():
        tape = Tape()
        x, W = tape.leaf(v), tape.leaf(w)
        loss = ad.sum(ad.cos(x @ W) * ad.tanh(x @ W))
        g = tape.backward(loss)
        return loss.value.tobytes(), g[x].tobytes(), g[W].tobytes()

    assert run() == run()


def test_indexing_stack_and_reshape_gradients(rng):
    v = rng.normal(size=(2, 6))

    def f(x):
        parts = [ad.getitem(x, (slice(None), i)) for i in (0, 2, 5)]
        st_ = ad.stack(parts, axis=-1)
        return ad.sum(ad.square(ad.reshape(st_, (3, 2))) * 1.5) + ad.mean(ad.shift(ad.scale(x, 2.0), 1.0))

    tape = Tape()
    x = tape.leaf(v)
    g = tape.backward(f(x))[x]
    assert rel_err(g, fd_grad(lambda z: float(f(z)), v)) < 1e-8


def test_getitem_rejects_advanced_indexing():
    tape = Tape()
    x = tape.leaf(np.arange(5.0))
    with pytest.raises(ContractError):
        ad.getitem(x, np.array([0, 2]))


def test_operands_from_different_tapes_rejected():
    a, b = Tape().leaf(1.0), Tape().leaf(2.0)
    with pytest.raises(ContractError):
        a + b


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (3, 2), elements=finite), arrays(np.float64, (2, 4), elements=finite))
def test_gradient_property_composed_graph(av, bv):
    def f(a):
        return ad.sum(ad.cos(ad.matmul(ad.tanh(a), bv)) * ad.sin(ad.matmul(a, bv)))

    tape = Tape()
    a = tape.leaf(av)
    g = tape.backward(f(a))[a]
    assert rel_err(g, fd_grad(lambda z: float(f(z)), av)) < 1e-4


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (4,), elements=finite), arrays(np.float64, (4,), elements=finite))
def test_values_stay_finite(av, bv):
    tape = Tape()
    a, b = tape.leaf(av), tape.leaf(bv)
    out = ad.sum(ad.tanh(a * b) - ad.square(ad.cos(a)) + ad.relu(b))
    grads = tape.backward(out)
    assert np.isfinite(out.value) and np.all(np.isfinite(grads[a])) and np.all(np.isfinite(grads[b]))
