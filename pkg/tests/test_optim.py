import numpy as np

from splitlab import nn


def test_sgd_single_step():
    w = np.array([1.0])
    nn.sgd_step(w, np.array([2.0]), lr=0.1)
    assert np.allclose(w, 0.8)


def test_adam_first_step_magnitude_is_lr():
    # bias correction makes the first step ~lr regardless of gradient scale
    for scale in (1e-6, 1.0, 1e6):
        opt = nn.Adam(lr=0.01)
        params = {"w": np.zeros(1)}
        opt.step(params, {"w": np.full(1, scale)})
        assert abs(abs(params["w"][0]) - 0.01) < 0.01 * 0.02


def _reference_adam_quadratic(lr, steps):
    # independent re-derivation straight from the update equations
    m = v = 0.0
    w = 1.0
    for t in range(1, steps + 1):
        g = 2.0 * w
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        m_hat = m / (1 - 0.9**t)
        v_hat = v / (1 - 0.999**t)
        w -= lr * m_hat / (np.sqrt(v_hat) + 1e-8)
    return w


def test_adam_trajectory_matches_reference_on_quadratic():
    lr, steps = 0.15, 100
    opt = nn.Adam(lr=lr)
    params = {"w": np.array([1.0])}
    for _ in range(steps):
        opt.step(params, {"w": 2.0 * params["w"]})
    ref = _reference_adam_quadratic(lr, steps)
    assert abs(params["w"][0] - ref) < 1e-12
    assert abs(params["w"][0]) < 1e-3


def test_one_iteration_decreases_loss_on_separable_pair():
    # 2-point toy set, eta=0.01: loss decreases strictly within 50 steps
    rng = np.random.default_rng(0)
    spec = nn.default_model_spec(1, 32, num_classes=2, channels=4)
    params = nn.init_client_params(spec, rng)
    w, b = nn.init_linear_params(spec, rng)
    x = np.zeros((2, 1, 32))
    x[0, 0, 8:12] = 2.0
    x[1, 0, 20:24] = -2.0
    y = np.array([0, 1])
    losses = []
    for _ in range(50):
        probs, cache = nn.forward_local(x, spec, params, w, b)
        losses.append(nn.cross_entropy(probs, y))
        grad = nn.ce_softmax_grad(probs, y)
        client_grads, gw, gb = nn.backward_local(grad, spec, cache)
        for name in params:
            nn.sgd_step(params[name], client_grads[name], lr=0.01)
        nn.sgd_step(w, gw, lr=0.01)
        nn.sgd_step(b, gb, lr=0.01)
    final_probs, _ = nn.forward_local(x, spec, params, w, b)
    losses.append(nn.cross_entropy(final_probs, y))
    assert all(b < a for a, b in zip(losses, losses[1:]))
