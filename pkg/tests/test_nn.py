import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from stkd.nn import Affine, Network, ReLU, ShapeError, StaleStateError, log_softmax, softmax

from conftest import random_net
from oracles import central_difference, max_rel_error, mlp_loop, softmax_mp


def test_identity_affine_passes_input_through():
    net = Network([Affine(np.eye(2), np.zeros(2))])
    np.testing.assert_array_equal(net(np.array([[3.0, 4.0]])), [[3.0, 4.0]])


def test_relu_definition():
    np.testing.assert_array_equal(ReLU().forward(np.array([-1.0, 0.0, 2.0])), [0.0, 0.0, 2.0])


def test_two_layer_forward_matches_loop_oracle(rng):
    net = random_net(rng, [5, 7, 3])
    x = rng.standard_normal((4, 5))
    np.testing.assert_allclose(net(x), mlp_loop(net, x), rtol=0, atol=1e-12)


def test_forward_is_bit_deterministic(rng):
    net = random_net(rng, [4, 6, 6, 3])
    x = rng.standard_normal((8, 4))
    a, b = net(x), net.forward(x).logits
    assert a.tobytes() == b.tobytes() == net(x.copy()).tobytes()


def test_shape_mismatch_names_layer(rng):
    net = random_net(rng, [3, 4, 2])
    with pytest.raises(ShapeError, match="layer 0"):
        net(np.zeros((2, 5)))
    with pytest.raises(ShapeError, match="layer 2"):
        Network([Affine(np.eye(3), np.zeros(3)), ReLU(), Affine(np.ones((2, 4)), np.zeros(2))])


def test_affine_rejects_inconsistent_bias():
    with pytest.raises(ShapeError):
        Affine(np.ones((3, 2)), np.zeros(2))


def test_backward_needs_fresh_trace(rng):
    net = random_net(rng, [2, 3, 2])
    with pytest.raises(StaleStateError):
        net.backward(None, np.zeros((1, 2)))
    trace = net.forward(np.ones((1, 2)))
    net.bump()
    with pytest.raises(StaleStateError):
        net.backward(trace, np.zeros((1, 2)))
    other = random_net(rng, [2, 3, 2])
    with pytest.raises(StaleStateError):
        other.backward(net.forward(np.ones((1, 2))), np.zeros((1, 2)))


def test_zero_upstream_gradient_gives_zero_param_grads(rng):
    net = random_net(rng, [3, 5, 2])
    trace = net.forward(rng.standard_normal((4, 3)))
    gx, grads = net.backward(trace, np.zeros((4, 2)))
    assert gx.shape == (4, 3)
    assert all(not g.any() for g in grads)
    assert [g.shape for g in grads] == [p.shape for p in net.parameters()]


def test_scalar_affine_weight_gradient_is_input():
    net = Network([Affine(np.array([[0.7]]), np.array([0.1]))])
    trace = net.forward(np.array([[2.5]]))
    _, (gw, gb) = net.backward(trace, np.ones((1, 1)))
    assert gw[0, 0] == 2.5 and gb[0] == 1.0


@pytest.mark.parametrize("sizes", [[3, 4], [4, 6, 3], [5, 8, 6, 4], [2, 16, 16, 5]])
def test_backward_matches_finite_differences(rng, sizes):
    net = random_net(rng, sizes)
    x = rng.standard_normal((6, sizes[0]))
    probe = rng.standard_normal((6, sizes[-1]))  # loss = sum(probe * logits)
    trace = net.forward(x)
    gx, grads = net.backward(trace, probe)
    f = lambda: float(np.sum(probe * net(x)))
    numeric = central_difference(f, net.parameters())
    (numeric_x,) = central_difference(f, [x])
    assert max_rel_error(grads, numeric) <= 1e-5
    assert max_rel_error([gx], [numeric_x]) <= 1e-5


def test_softmax_uniform_and_stable():
    np.testing.assert_allclose(softmax(np.zeros((1, 3))), [[1 / 3] * 3], rtol=0, atol=1e-15)
    p = softmax(np.array([[1000.0, 0.0, 0.0]]))
    assert np.all(np.isfinite(p))
    np.testing.assert_allclose(p, [[1.0, 0.0, 0.0]], atol=1e-300)


def test_softmax_matches_high_precision_oracle():
    np.testing.assert_allclose(softmax(np.array([[1.0, 2.0, 3.0]]))[0], softmax_mp([1, 2, 3]),
                               rtol=0, atol=1e-12)


def test_softmax_rejects_nan():
    with pytest.raises(ValueError):
        softmax(np.array([[0.0, np.nan]]))


finite_logits = arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 8)),
                       elements=st.floats(-1e3, 1e3, allow_nan=False))


@given(finite_logits)
@settings(max_examples=200, deadline=None)
def test_softmax_rows_sum_to_one(z):
    p = softmax(z)
    assert np.all(np.abs(p.sum(axis=1) - 1.0) <= 1e-12)
    assert np.all((p >= 0) & (p <= 1))
    np.testing.assert_allclose(np.exp(log_softmax(z)), p, atol=1e-15)


def test_penultimate_is_input_of_final_affine(rng):
    net = random_net(rng, [3, 4, 2])
    x = rng.standard_normal((5, 3))
    h = net.penultimate(x)
    last = net.layers[-1]
    np.testing.assert_array_equal(h @ last.weight.T + last.bias, net(x))
    assert h.min() >= 0  # after the ReLU


def test_init_respects_fan_in_bound():
    net = Network.mlp(16, [64], 3, np.random.default_rng(0))
    w0, b0, w1, b1 = net.parameters()
    assert np.abs(w0).max() <= 1 / 4 and np.abs(b0).max() <= 1 / 4
    assert np.abs(w1).max() <= 1 / 8
