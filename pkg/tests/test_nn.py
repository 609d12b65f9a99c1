import numpy as np
import pytest

from neuralfc.nn import MLP, Adam, adam_step, mlp_backward, mlp_forward, param_count


def naive_forward(weights, biases, x):
    """Triple-loop reference forward pass."""
    h = list(x)
    for k, (w, b) in enumerate(zip(weights, biases)):
        out = []
        for r in range(len(b)):
            acc = b[r]
            for c in range(len(h)):
                acc += w[r][c] * h[c]
            out.append(acc if k == len(weights) - 1 else max(acc, 0.0))
        h = out
    return np.array(h)


def test_zero_weights_give_bias():
    net = MLP((3, 2))
    net.biases[0][...] = (0.5, -1.5)
    out, _ = mlp_forward(net, np.array([1.0, 2.0, 3.0], dtype=np.float32))
    np.testing.assert_array_equal(out, [0.5, -1.5])


def test_identity_layer():
    net = MLP((4, 4), dtype=np.float64)
    net.weights[0][...] = np.eye(4)
    x = np.array([1.0, -2.0, 3.0, 0.25])
    np.testing.assert_array_equal(mlp_forward(net, x)[0], x)


def test_forward_matches_naive_oracle():
    rng = np.random.default_rng(0)
    net = MLP((15, 64, 32, 4), dtype=np.float64).init(rng)
    for _ in range(5):
        x = rng.normal(size=15)
        np.testing.assert_allclose(mlp_forward(net, x)[0], naive_forward(net.weights, net.biases, x), atol=1e-12)


def test_params_are_views():
    net = MLP((3, 5, 2))
    assert net.params.size == param_count((3, 5, 2)) == 3 * 5 + 5 + 5 * 2 + 2
    net.weights[1][0, 0] = 7.0
    assert 7.0 in net.params


def test_zero_grad_output():
    rng = np.random.default_rng(1)
    net = MLP((5, 8, 3), dtype=np.float64).init(rng)
    _, cache = mlp_forward(net, rng.normal(size=(4, 5)))
    g, gx = mlp_backward(net, cache, np.zeros((4, 3)))
    assert not g.any() and not gx.any()


def test_linear_layer_gradient_is_outer_product():
    rng = np.random.default_rng(2)
    net = MLP((3, 2), dtype=np.float64).init(rng)
    x = rng.normal(size=3)
    go = np.array([0.7, -1.1])
    _, cache = mlp_forward(net, x)
    g, _ = mlp_backward(net, cache, go)
    view = MLP((3, 2), g)
    np.testing.assert_array_equal(view.weights[0], np.outer(go, x))
    np.testing.assert_array_equal(view.biases[0], go)


def _central_difference(f, p, h=1e-5):
    out = np.zeros_like(p)
    for i in range(p.size):
        old = p[i]
        p[i] = old + h
        up = f()
        p[i] = old - h
        down = f()
        p[i] = old
        out[i] = (up - down) / (2 * h)
    return out


@pytest.mark.parametrize("seed", range(20))
def test_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    depth = rng.integers(1, 4)
    dims = tuple(rng.integers(1, 9, size=depth + 1))
    net = MLP(dims, dtype=np.float64).init(rng)
    x = rng.normal(size=(3, dims[0]))
    # push pre-activations away from the ReLU kink so central differences stay valid
    for b in net.biases[:-1]:
        b += np.sign(b) * 0.05
    c = rng.normal(size=(3, dims[-1]))

    def loss():
        return float(np.sum(c * mlp_forward(net, x)[0]))

    _, cache = mlp_forward(net, x)
    g, gx = mlp_backward(net, cache, c)
    num = _central_difference(loss, net.params)
    scale = np.maximum(np.abs(num), np.abs(g)).clip(min=1e-6)
    assert np.max(np.abs(g - num) / scale) < 1e-4

    def loss_x():
        return float(np.sum(c * mlp_forward(net, x)[0]))

    num_x = _central_difference(loss_x, x.reshape(-1)).reshape(x.shape)
    np.testing.assert_allclose(gx, num_x, rtol=1e-4, atol=1e-7)


def test_adam_zero_gradient_is_noop():
    p = np.array([1.0, -2.0])
    m, v = np.zeros(2), np.zeros(2)
    adam_step(p, np.zeros(2), m, v, 1, 0.1)
    np.testing.assert_array_equal(p, [1.0, -2.0])


def test_adam_first_step_magnitude_is_lr():
    for g in (3.0, -0.02, 1e-3):
        p = np.array([0.0])
        adam_step(p, np.array([g]), np.zeros(1), np.zeros(1), 1, 1e-3)
        assert abs(p[0]) == pytest.approx(1e-3 * abs(g) / (abs(g) + 1e-8), rel=1e-12)
        assert np.sign(p[0]) == -np.sign(g)
        if abs(g) >= 0.01:
            assert abs(p[0]) == pytest.approx(1e-3, rel=1e-6)


def test_adam_two_steps_by_hand():
    lr, b1, b2, eps = 0.01, 0.9, 0.999, 1e-8
    p = np.array([0.5])
    m, v = np.zeros(1), np.zeros(1)
    adam_step(p, np.array([0.2]), m, v, 1, lr, b1, b2, eps)
    adam_step(p, np.array([-0.4]), m, v, 2, lr, b1, b2, eps)
    # by hand
    m1, v1 = 0.1 * 0.2, 0.001 * 0.04
    x1 = 0.5 - lr * (m1 / 0.1) / (np.sqrt(v1 / 0.001) + eps)
    m2 = 0.9 * m1 + 0.1 * -0.4
    v2 = 0.999 * v1 + 0.001 * 0.16
    x2 = x1 - lr * (m2 / (1 - 0.81)) / (np.sqrt(v2 / (1 - 0.999**2)) + eps)
    assert p[0] == pytest.approx(x2, abs=1e-12)


def test_adam_class_counts_steps():
    opt = Adam(3, lr=0.1, dtype=np.float64)
    p = np.ones(3)
    opt.step(p, np.ones(3))
    opt.step(p, np.ones(3))
    assert opt.t == 2
    np.testing.assert_allclose(p, 0.8)
