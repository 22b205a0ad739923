import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dfr.errors import ConfigurationError, DimensionError, ParameterError
from dfr.nn import functional as F
from dfr.nn import layers as L
from dfr.nn.grad import backward, numerical_grad
from dfr.nn.optim import Adam, AdamState, adam_step
from dfr.nn.tensor import Tensor, conv2d, dense, mae_loss, maxpool2d, relu

from gradcheck import gradient_check, small_network
from oracles import conv2d_loops, dense_loops, maxpool_loops, random_conv_case


# -- forward examples ---------------------------------------------------------


def test_conv_one_by_one_kernel_scales():
    out = conv2d(np.array([[[1.0, 2.0], [3.0, 4.0]]]), np.array([[[[2.0]]]]), np.zeros(1)).data
    np.testing.assert_array_equal(out, [[[2, 4], [6, 8]]])


def test_conv_ones():
    out = conv2d(np.ones((1, 3, 3)), np.ones((1, 1, 2, 2)), np.zeros(1)).data
    np.testing.assert_array_equal(out, np.full((1, 2, 2), 4.0))


def test_conv_strided_padded_matches_loops():
    rng = np.random.default_rng(0)
    x, w, b = rng.normal(size=(1, 2, 5, 5)), rng.normal(size=(3, 2, 3, 3)), rng.normal(size=3)
    out, _ = F.conv2d_forward(x, w, b, stride=2, padding=1)
    assert out.shape == (1, 3, 3, 3)
    np.testing.assert_allclose(out, conv2d_loops(x, w, b, 2, 1), rtol=0, atol=1e-12)


def test_conv_rejects_channel_mismatch():
    with pytest.raises(DimensionError):
        conv2d(np.ones((2, 4, 4)), np.ones((1, 3, 3, 3)), np.zeros(1))


def test_conv_rejects_kernel_larger_than_input():
    with pytest.raises(DimensionError):
        conv2d(np.ones((1, 2, 2)), np.ones((1, 1, 3, 3)), np.zeros(1))


def test_maxpool_examples():
    assert maxpool2d(np.array([[[1.0, 2.0], [3.0, 4.0]]]), 2, 2).data.tolist() == [[[4.0]]]
    np.testing.assert_array_equal(maxpool2d(np.full((2, 4, 4), 7.0), 2, 2).data, np.full((2, 2, 2), 7.0))


def test_maxpool_random_matches_loops():
    x = np.random.default_rng(1).normal(size=(1, 1, 6, 6))
    out, _ = F.maxpool2d_forward(x, 2, 2)
    np.testing.assert_array_equal(out, maxpool_loops(x, 2, 2))


@pytest.mark.parametrize("size,stride", [(0, 1), (2, 0)])
def test_maxpool_rejects_bad_parameters(size, stride):
    with pytest.raises(ParameterError):
        maxpool2d(np.ones((1, 4, 4)), size, stride)


def test_relu_examples():
    assert relu(np.array([-1.0, 0.0, 2.0])).data.tolist() == [0, 0, 2]
    assert not relu(-np.arange(1.0, 5.0)).data.any()
    x = np.arange(1.0, 5.0)
    np.testing.assert_array_equal(relu(x).data, x)


def test_dense_examples():
    x = np.array([1.0, -2.0, 3.0])
    np.testing.assert_array_equal(dense(x, np.eye(3), np.zeros(3)).data, x)
    b = np.array([0.5, -1.5])
    np.testing.assert_array_equal(dense(x, np.zeros((2, 3)), b).data, b)
    rng = np.random.default_rng(2)
    w, b = rng.normal(size=(3, 4)), rng.normal(size=3)
    v = rng.normal(size=4)
    expected = [sum(w[o, i] * v[i] for i in range(4)) + b[o] for o in range(3)]
    np.testing.assert_allclose(dense(v, w, b).data, expected, rtol=0, atol=1e-12)


def test_dense_rejects_mismatch():
    with pytest.raises(DimensionError):
        dense(np.ones(3), np.ones((2, 4)), np.zeros(2))


def test_mae_examples():
    assert float(mae_loss(np.array([1.0, 2.0]), np.array([1.0, 2.0])).data) == 0.0
    assert float(mae_loss(np.array([0.0, 0.0]), np.array([3.0, 4.0])).data) == 3.5
    assert float(mae_loss(np.array([1.0, 2.0, 3.0]), np.array([2.0, 2.0, 5.0])).data) == 1.0


def test_mae_rejects_empty():
    with pytest.raises(ParameterError):
        mae_loss(np.zeros(0), np.zeros(0))


finite = st.floats(-1e3, 1e3, allow_nan=False)


@given(arrays(np.float64, 6, elements=finite), arrays(np.float64, 6, elements=finite))
def test_mae_is_a_symmetric_nonnegative_distance(a, b):
    ab = float(mae_loss(a, b).data)
    assert ab >= 0
    assert ab == float(mae_loss(b, a).data)
    assert float(mae_loss(a, a).data) == 0.0


# -- nested-loop oracles over random shapes -------------------------------------


def test_layers_match_loop_oracles_on_100_random_shapes():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        x, w, b, stride, padding = random_conv_case(rng)
        out, _ = F.conv2d_forward(x, w, b, stride, padding)
        np.testing.assert_allclose(out, conv2d_loops(x, w, b, stride, padding), rtol=0, atol=1e-12)

        size = int(rng.integers(1, 4))
        pstride = int(rng.integers(1, 3))
        xp = rng.normal(size=(int(rng.integers(1, 3)), int(rng.integers(1, 4)),
                              int(rng.integers(size, 9)), int(rng.integers(size, 9))))
        pooled, _ = F.maxpool2d_forward(xp, size, pstride)
        np.testing.assert_allclose(pooled, maxpool_loops(xp, size, pstride), rtol=0, atol=1e-12)

        m, k = int(rng.integers(1, 8)), int(rng.integers(1, 8))
        xd, wd, bd = rng.normal(size=(int(rng.integers(1, 4)), k)), rng.normal(size=(m, k)), rng.normal(size=m)
        np.testing.assert_allclose(F.dense_forward(xd, wd, bd), dense_loops(xd, wd, bd), rtol=0, atol=1e-12)


# -- gradients ------------------------------------------------------------------


def test_finite_difference_examples():
    x = np.array([3.0])
    assert numerical_grad(lambda: float(x[0] ** 2), [x])[0][0] == pytest.approx(6.0, abs=1e-6)
    assert numerical_grad(lambda: float(5 * x[0]), [x])[0][0] == pytest.approx(5.0, abs=1e-9)
    with pytest.raises(ParameterError):
        numerical_grad(lambda: 0.0, [x], eps=0)


def test_single_dense_bias_gradient_is_sign_over_n():
    net = L.Sequential([L.dense(4)], (3,), seed=3)
    x = np.array([[0.5, -1.0, 2.0]])
    pred = net.predict(x)[0]
    target = pred + np.array([1.0, -2.0, 0.5, -0.1])
    grads = backward(net, x, target[None])
    np.testing.assert_array_equal(grads[1], np.sign(pred - target) / 4)


def test_zero_network_gives_zero_gradient_on_symmetric_weights():
    net = L.Sequential([L.dense(2)], (2,), seed=0)
    for p in net.parameters():
        p.data[...] = 0.0
    grads = backward(net, np.array([[1.0, -1.0], [-1.0, 1.0]]), np.zeros((2, 2)))
    assert not any(g.any() for g in grads)


def test_mae_gradient_at_tie_is_zero():
    pred = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    mae_loss(pred, np.array([1.0, 0.0])).backward()
    np.testing.assert_array_equal(pred.grad, [0.0, 0.5])


def test_backward_matches_finite_differences_on_three_conv_network():
    rng = np.random.default_rng(5)
    net = small_network()
    x = rng.uniform(0, 1, size=(2, 1, 32, 32))
    target = rng.uniform(0, 1, size=(2, 40))
    worst, skipped, total = gradient_check(net, x, target)
    assert worst <= 1e-3
    assert skipped < 0.05 * total


def test_backward_matches_finite_differences_on_two_conv_toy():
    rng = np.random.default_rng(6)
    net = L.Sequential(
        [L.conv(2, kernel=3, stride=2, padding=1), L.relu(), L.conv(3, kernel=2, padding=0), L.relu(),
         L.flatten(), L.dense(5)],
        (2, 8, 8), seed=1, dtype=np.float64,
    )
    x = rng.normal(size=(3, 2, 8, 8))
    target = rng.normal(size=(3, 5))
    worst, skipped, total = gradient_check(net, x, target)
    assert worst <= 1e-3
    assert skipped < 0.05 * total


# -- layers and containers ------------------------------------------------------


def test_layer_spec_validation():
    with pytest.raises(ConfigurationError):
        L.LayerSpec("pool")
    with pytest.raises(ConfigurationError):
        L.conv(4, kernel=0)
    with pytest.raises(ConfigurationError):
        L.dense(0)
    assert L.conv(8).describe() == "conv(kernel=3,out_channels=8,padding=1,stride=1)"


def test_sequential_rejects_collapsing_shapes():
    with pytest.raises(ConfigurationError):
        L.Sequential([L.conv(2, kernel=3, padding=0), L.maxpool(2), L.maxpool(2)], (1, 4, 4))


def test_sequential_is_seeded():
    a, b = small_network(4), small_network(4)
    assert all(np.array_equal(p.data, q.data) for p, q in zip(a.parameters(), b.parameters()))
    c = small_network(5)
    assert not np.array_equal(a.parameters()[0].data, c.parameters()[0].data)


def test_he_uniform_bounds():
    net = L.Sequential([L.flatten(), L.dense(50)], (1, 10, 10), seed=0)
    w = net.parameters()[0].data
    assert np.abs(w).max() <= np.sqrt(6 / 100)
    assert np.abs(w).max() > 0.9 * np.sqrt(6 / 100)


def test_forward_outputs_stay_finite():
    net = small_network()
    out = net.predict(np.random.default_rng(0).uniform(0, 1, (3, 1, 32, 32)))
    assert out.shape == (3, 40) and np.isfinite(out).all()


# -- Adam -----------------------------------------------------------------------


def test_adam_zero_gradient_is_identity():
    p = [np.array([1.5, -2.0])]
    state = AdamState()
    adam_step(p, [np.zeros(2)], state)
    np.testing.assert_array_equal(p[0], [1.5, -2.0])
    assert state.t == 1


@pytest.mark.parametrize("g", [0.3, -7.0, 1e-3])
def test_adam_first_step_closed_form(g):
    p = [np.array([0.0])]
    state = AdamState()
    adam_step(p, [np.array([g])], state)
    expected = -1e-3 * g / (abs(g) + 1e-8)
    assert p[0][0] == pytest.approx(expected, rel=1e-9)
    assert p[0][0] == pytest.approx(-1e-3 * np.sign(g), rel=1e-4)


def test_adam_two_steps_by_hand():
    lr, b1, b2, eps = 0.01, 0.9, 0.999, 1e-8
    p = [np.array([1.0])]
    state = AdamState(lr=lr)
    g1, g2 = 0.5, -0.2
    adam_step(p, [np.array([g1])], state)
    adam_step(p, [np.array([g2])], state)
    m1, v1 = (1 - b1) * g1, (1 - b2) * g1 * g1
    x1 = 1.0 - lr * (m1 / (1 - b1)) / (np.sqrt(v1 / (1 - b2)) + eps)
    m2, v2 = b1 * m1 + (1 - b1) * g2, b2 * v1 + (1 - b2) * g2 * g2
    x2 = x1 - lr * (m2 / (1 - b1 ** 2)) / (np.sqrt(v2 / (1 - b2 ** 2)) + eps)
    assert p[0][0] == pytest.approx(x2, rel=1e-12)
    assert state.t == 2
    assert state.m[0].shape == p[0].shape


def test_adam_rejects_mismatched_lists():
    with pytest.raises(DimensionError):
        adam_step([np.zeros(2)], [], AdamState())


def test_dense_regressor_learns_linear_map():
    rng = np.random.default_rng(8)
    x = rng.uniform(-1, 1, size=(10, 3))
    y = x @ np.array([[2.0], [-1.0], [0.5]]) + 0.3
    net = L.Sequential([L.dense(1)], (3,), seed=0)
    opt = Adam(net.parameters(), lr=0.01)
    first = float(mae_loss(net(x), y).data)
    for _ in range(500):
        opt.zero_grad()
        loss = mae_loss(net(x), y)
        loss.backward()
        opt.step()
    final = float(mae_loss(net(x), y).data)
    assert final <= 0.1 * first


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 3), st.integers(1, 3), st.integers(0, 1), st.integers(3, 7))
def test_conv_output_size_agrees_with_forward(k, stride, padding, size):
    x = np.zeros((1, 1, size, size))
    out, _ = F.conv2d_forward(x, np.zeros((1, 1, k, k)), np.zeros(1), stride, padding)
    assert out.shape[2] == F.conv_output_size(size, k, stride, padding) >= 1
