import numpy as np
import pytest

from rkpinn import nn


def flatten(grads):
    w_grads, b_grads = grads
    return np.concatenate([g.ravel() for g in (*w_grads, *b_grads)])


def get_params(params):
    return np.concatenate([a.ravel() for a in (*params.weights, *params.biases)])


def set_params(params, vec):
    out = params.copy()
    pos = 0
    for arr in (*out.weights, *out.biases):
        arr[...] = vec[pos:pos + arr.size].reshape(arr.shape)
        pos += arr.size
    return out


@pytest.fixture
def small_net():
    return nn.glorot_init([3, 5, 4, 2], seed=7)


def test_forward_hand_computed():
    # 2 -> 2 -> 1: y = w2 tanh(w1 x + b1) + b2
    params = nn.MlpParameters(
        weights=[np.array([[1.0, -2.0], [0.5, 0.0]]), np.array([[3.0, -1.0]])],
        biases=[np.array([0.1, -0.2]), np.array([0.05])])
    x = np.array([0.3, 0.7])
    h = np.tanh(np.array([1.0 * 0.3 - 2.0 * 0.7 + 0.1, 0.5 * 0.3 - 0.2]))
    expected = 3.0 * h[0] - 1.0 * h[1] + 0.05
    assert nn.forward(params, x) == pytest.approx([expected], rel=1e-14)


def test_forward_batch_matches_single(small_net):
    xs = np.random.default_rng(0).normal(size=(6, 3))
    batched = nn.forward(small_net, xs)
    for i in range(6):
        assert np.allclose(batched[i], nn.forward(small_net, xs[i]))


def test_backward_matches_finite_differences(small_net):
    rng = np.random.default_rng(1)
    x = rng.normal(size=(4, 3))
    cot = rng.normal(size=(4, 2))
    grads, _ = nn.backward(small_net, x, cot)
    analytic = flatten(grads)

    theta = get_params(small_net)
    eps = 1e-6
    fd = np.empty_like(theta)
    for j in range(theta.size):
        dp = np.zeros_like(theta)
        dp[j] = eps
        hi = np.sum(cot * nn.forward(set_params(small_net, theta + dp), x))
        lo = np.sum(cot * nn.forward(set_params(small_net, theta - dp), x))
        fd[j] = (hi - lo) / (2 * eps)
    assert np.max(np.abs(analytic - fd)) < 1e-7


def test_backward_input_gradient(small_net):
    x = np.array([0.2, -0.4, 0.9])
    cot = np.array([1.0, -0.5])
    _, input_grad = nn.backward(small_net, x, cot)
    eps = 1e-6
    for j in range(3):
        dx = np.zeros(3)
        dx[j] = eps
        fd = (cot @ nn.forward(small_net, x + dx)
              - cot @ nn.forward(small_net, x - dx)) / (2 * eps)
        assert abs(input_grad[j] - fd) < 1e-8


def test_forward_tangent_matches_finite_differences(small_net):
    x = np.array([0.1, 0.5, -0.3])
    for direction in range(3):
        y, ydot = nn.forward_tangent(small_net, x, direction)
        assert np.allclose(y, nn.forward(small_net, x))
        eps = 1e-7
        dx = np.zeros(3)
        dx[direction] = eps
        fd = (nn.forward(small_net, x + dx) - nn.forward(small_net, x - dx)) / (2 * eps)
        assert np.max(np.abs(ydot - fd)) < 1e-7


def test_tangent_backward_matches_finite_differences(small_net):
    # gradient of <cp, y> + <ct, dy/dx0> with respect to every parameter
    rng = np.random.default_rng(2)
    x = rng.normal(size=(3, 3))
    cp = rng.normal(size=(3, 2))
    ct = rng.normal(size=(3, 2))
    analytic = flatten(nn.tangent_backward(small_net, x, 0, cp, ct))

    def objective(p):
        y, ydot = nn.forward_tangent(p, x, 0)
        return np.sum(cp * y) + np.sum(ct * ydot)

    theta = get_params(small_net)
    eps = 1e-6
    fd = np.empty_like(theta)
    for j in range(theta.size):
        dp = np.zeros_like(theta)
        dp[j] = eps
        fd[j] = (objective(set_params(small_net, theta + dp))
                 - objective(set_params(small_net, theta - dp))) / (2 * eps)
    assert np.max(np.abs(analytic - fd)) < 1e-6


def test_tangent_backward_reduces_to_backward(small_net):
    # with zero tangent cotangent the result is plain reverse mode
    rng = np.random.default_rng(3)
    x = rng.normal(size=(5, 3))
    cp = rng.normal(size=(5, 2))
    a = flatten(nn.tangent_backward(small_net, x, 1, cp, np.zeros_like(cp)))
    b = flatten(nn.backward(small_net, x, cp)[0])
    assert np.max(np.abs(a - b)) < 1e-12


def test_glorot_init_deterministic_and_bounded():
    a = nn.glorot_init([4, 50, 8], seed=11)
    b = nn.glorot_init([4, 50, 8], seed=11)
    c = nn.glorot_init([4, 50, 8], seed=12)
    for wa, wb in zip(a.weights, b.weights):
        assert np.array_equal(wa, wb)
    assert not np.array_equal(a.weights[0], c.weights[0])
    lim = np.sqrt(6.0 / (4 + 50))
    assert np.max(np.abs(a.weights[0])) <= lim
    for bias in a.biases:
        assert np.all(bias == 0.0)
    assert a.layer_sizes == [4, 50, 8]


def test_glorot_needs_hidden_layer():
    with pytest.raises(ValueError):
        nn.glorot_init([4, 8], seed=0)


def test_mlp_shape_validation():
    with pytest.raises(ValueError):
        nn.MlpParameters([np.zeros((3, 2)), np.zeros((2, 4))],
                         [np.zeros(3), np.zeros(2)])


def test_adam_first_step_is_signed_lr():
    # with zero state, the first update is -lr * sign(g) up to epsilon terms
    params = nn.MlpParameters([np.array([[1.0, 2.0]])], [np.array([0.5])])
    grads = ([np.array([[0.3, -0.2]])], [np.array([4.0])])
    state = nn.AdamState.zeros_like(params)
    new, new_state = nn.adam_step(params, grads, state, lr=0.01)
    assert new.weights[0].ravel() == pytest.approx([1.0 - 0.01, 2.0 + 0.01], abs=1e-6)
    assert new.biases[0] == pytest.approx([0.5 - 0.01], abs=1e-6)
    assert new_state.step_count == 1


def test_adam_rejects_nonfinite_gradient():
    params = nn.MlpParameters([np.ones((1, 1))], [np.zeros(1)])
    grads = ([np.array([[np.nan]])], [np.zeros(1)])
    with pytest.raises(ValueError):
        nn.adam_step(params, grads, nn.AdamState.zeros_like(params), 0.01)


def test_adam_descends_on_quadratic():
    # minimize |W|^2 via adam; gradient = 2W
    params = nn.MlpParameters([np.array([[3.0, -2.0]])], [np.array([1.0])])
    state = nn.AdamState.zeros_like(params)
    for i in range(500):
        grads = ([2.0 * params.weights[0]], [2.0 * params.biases[0]])
        params, state = nn.adam_step(params, grads, state, 0.05)
    assert np.max(np.abs(params.weights[0])) < 1e-3
    assert abs(params.biases[0][0]) < 1e-3


def test_lr_schedule_values():
    assert nn.lr_schedule(0) == pytest.approx(0.05)
    assert nn.lr_schedule(100) == pytest.approx(0.05 * 0.995)
    assert nn.lr_schedule(200) == pytest.approx(0.05 * 0.995 ** 2)
    assert nn.lr_schedule(100_000) == pytest.approx(0.05 * 0.995 ** 1000)


def test_checkpoint_roundtrip_exact(tmp_path, small_net):
    path = tmp_path / "model.json"
    nn.save_checkpoint(path, small_net, config_hash="abc", extra={"note": 1})
    loaded = nn.load_checkpoint(path)
    for wa, wb in zip(small_net.weights, loaded.weights):
        assert np.array_equal(wa, wb)
    for ba, bb in zip(small_net.biases, loaded.biases):
        assert np.array_equal(ba, bb)
    doc = nn.load_checkpoint_dict(path)
    assert doc["config_hash"] == "abc"
    assert doc["note"] == 1


def test_checkpoint_rejects_unknown_version(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"format_version": 99}')
    with pytest.raises(ValueError):
        nn.load_checkpoint_dict(path)


def test_config_hash_stable_and_order_insensitive():
    a = nn.config_hash({"x": 1, "y": [1, 2]})
    b = nn.config_hash({"y": [1, 2], "x": 1})
    c = nn.config_hash({"x": 2, "y": [1, 2]})
    assert a == b
    assert a != c
    assert len(a) == 64
