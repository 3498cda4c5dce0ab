import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from weldnet import nn
from weldnet.checkpoint import CheckpointError, load_net, save_net
from weldnet.nn import (
    AdamWState, MlpNet, MlpSpec, PlateauSchedule, ResidualNet, ShapeError, StaleCacheError,
    adamw_step, identity_net, mlp_backward, mlp_forward, mlp_init, mse_loss, plateau_update,
)

from oracles import fd_check


def scalar_loop_forward(net, x):
    """Straight-line evaluation of the affine/relu chain, one scalar at a time."""
    h = list(x)
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        out = []
        for j in range(w.shape[1]):
            s = b[j]
            for i in range(w.shape[0]):
                s += h[i] * w[i, j]
            out.append(s if l == len(net.weights) - 1 else max(s, 0.0))
        h = out
    return np.array(h)


def test_init_shapes_and_determinism():
    net = mlp_init(MlpSpec(1, (1,), 1), seed=0)
    assert [w.shape for w in net.weights] == [(1, 1), (1, 1)]
    assert all(np.array_equal(b, [0.0]) for b in net.biases)
    big = MlpSpec(512, (500, 500, 500), 5)
    assert len(mlp_init(big, 3).weights) == 4
    assert max(big.hidden_widths) == 500
    a, b = mlp_init(MlpSpec(4, (8, 8), 3), 11), mlp_init(MlpSpec(4, (8, 8), 3), 11)
    for p, q in zip(a.params, b.params):
        assert p.tobytes() == q.tobytes()
    for w in a.weights:
        assert np.all(np.abs(w) <= math.sqrt(1 / w.shape[0]))


def test_invalid_spec():
    with pytest.raises(ValueError):
        MlpSpec(0, (3,), 1)


def test_identity_construction():
    net = identity_net(2)
    x = np.array([[0.7, -0.3]])
    np.testing.assert_array_equal(net(x), x)


def test_zero_weights_return_last_bias():
    net = mlp_init(MlpSpec(3, (4,), 2), 0)
    for w in net.weights:
        w[:] = 0
    net.biases[-1][:] = [1.5, -2.0]
    out = net(np.random.default_rng(0).normal(size=(5, 3)))
    np.testing.assert_array_equal(out, np.tile([1.5, -2.0], (5, 1)))


def test_forward_matches_scalar_loop():
    net = mlp_init(MlpSpec(3, (5,), 2), seed=4)
    net.biases[0][:] = np.linspace(-0.2, 0.2, 5)
    xs = np.array([[0.1, -1.0, 2.0], [0.0, 0.0, 0.0], [-0.5, 0.3, 0.9]])
    out = net(xs)
    for x, o in zip(xs, out):
        np.testing.assert_allclose(o, scalar_loop_forward(net, x), rtol=1e-14, atol=1e-15)


def test_forward_shape_error():
    net = mlp_init(MlpSpec(3, (5,), 2), 0)
    with pytest.raises(ShapeError):
        net(np.zeros((2, 4)))


def test_backward_zero_grad():
    net = mlp_init(MlpSpec(3, (5, 4), 2), 0)
    _, cache = net.forward(np.ones((3, 3)))
    grads, gin = net.backward(cache, np.zeros((3, 2)))
    assert all(not g.any() for g in grads) and not gin.any()


def test_backward_hand_chain_rule():
    # relu(w x + b) as a 1-1-1 net whose output layer is the identity
    net = MlpNet(MlpSpec(1, (1,), 1), [np.array([[2.0]]), np.array([[1.0]])],
                 [np.array([-1.0]), np.array([0.0])])
    out, cache = net.forward(np.array([[1.0]]))
    assert out[0, 0] == 1.0
    grads, _ = net.backward(cache, np.array([[1.0]]))
    dW1, db1 = grads[0], grads[2]
    assert dW1[0, 0] == 1.0 and db1[0] == 1.0


def test_stale_cache_rejected():
    net = mlp_init(MlpSpec(2, (3,), 1), 0)
    out, cache = net.forward(np.ones((1, 2)))
    grads, _ = net.backward(cache, np.ones_like(out))
    adamw_step(net, grads, AdamWState.for_params(net.params))
    with pytest.raises(StaleCacheError):
        net.backward(cache, np.ones_like(out))
    other = mlp_init(MlpSpec(2, (3,), 1), 0)
    with pytest.raises(StaleCacheError):
        other.backward(cache, np.ones_like(out))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), depth=st.integers(1, 3), width=st.integers(1, 16),
       din=st.integers(1, 5), dout=st.integers(1, 5), batch=st.integers(1, 4))
def test_gradients_match_finite_differences(seed, depth, width, din, dout, batch):
    rng = np.random.default_rng(seed)
    net = mlp_init(MlpSpec(din, (width,) * depth, dout), seed)
    for b in net.biases:
        b[:] = rng.normal(scale=0.1, size=b.shape)
    x = rng.normal(size=(batch, din))
    y = rng.normal(size=(batch, dout))
    assert fd_check(net, x, y) < 1e-5


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31), d=st.integers(1, 5), width=st.integers(1, 16))
def test_residual_gradients_match_finite_differences(seed, d, width):
    rng = np.random.default_rng(seed)
    r = ResidualNet(mlp_init(MlpSpec(d, (width, width), d), seed))
    z = rng.normal(size=(3, d))
    y = rng.normal(size=(3, d))
    assert fd_check(r, z, y) < 1e-5
    # input gradient includes the identity path
    out, cache = r.forward(z)
    _, g = mse_loss(out, y)
    _, gin = r.backward(cache, g)
    h = 1e-6
    for i in range(3):
        for j in range(d):
            zp, zm = z.copy(), z.copy()
            zp[i, j] += h
            zm[i, j] -= h
            fd = (mse_loss(r(zp), y)[0] - mse_loss(r(zm), y)[0]) / (2 * h)
            assert abs(fd - gin[i, j]) <= 1e-5 * max(1.0, abs(fd))


def test_relu_cache_nonnegative():
    net = mlp_init(MlpSpec(4, (8, 8, 8), 2), 1)
    _, cache = net.forward(np.random.default_rng(2).normal(size=(10, 4)))
    for h in cache.inputs[1:]:
        assert (h >= 0).all()


def test_residual_zero_inner_is_identity_and_constant_shift():
    inner = mlp_init(MlpSpec(3, (4,), 3), 0)
    for p in inner.params:
        p[:] = 0
    r = ResidualNet(inner)
    z = np.random.default_rng(0).normal(size=(5, 3))
    np.testing.assert_array_equal(r(z), z)
    inner.biases[-1][:] = [1.0, 2.0, 3.0]
    np.testing.assert_array_equal(r(z), z + [1.0, 2.0, 3.0])
    with pytest.raises(ShapeError):
        ResidualNet(mlp_init(MlpSpec(3, (4,), 2), 0))


def test_mse_loss_examples():
    assert mse_loss(np.ones((2, 3)), np.ones((2, 3)))[0] == 0.0
    loss, g = mse_loss(np.array([[1.0, 0.0]]), np.zeros((1, 2)))
    assert loss == 1.0 and np.array_equal(g, [[2.0, 0.0]])
    assert mse_loss(np.array([[1.0, 1.0], [0.0, 0.0]]), np.zeros((2, 2)))[0] == 1.0
    with pytest.raises(ShapeError):
        mse_loss(np.zeros((1, 2)), np.zeros((2, 1)))


def test_adamw_zero_grad_no_decay_is_fixed_point():
    net = mlp_init(MlpSpec(2, (3,), 2), 0)
    before = [p.copy() for p in net.params]
    state = AdamWState.for_params(net.params, lr=1e-3, weight_decay=0.0)
    for _ in range(5):
        adamw_step(net, [np.zeros_like(p) for p in net.params], state)
    for p, q in zip(net.params, before):
        np.testing.assert_array_equal(p, q)
    assert state.step == 5


def _zero_grad_run(n_steps):
    net = mlp_init(MlpSpec(2, (3,), 2), 0)
    state = AdamWState.for_params(net.params, lr=1e-3, weight_decay=0.0)
    adamw_step(net, [np.full_like(p, 1e-3) for p in net.params], state)
    for _ in range(n_steps):
        adamw_step(net, [np.zeros_like(p) for p in net.params], state)
    return net, state


def test_adamw_moments_never_go_subnormal(monkeypatch):
    net, state = _zero_grad_run(8000)
    tiny = np.finfo(np.float64).tiny
    for m in state.m:
        assert np.all((m == 0) | (np.abs(m) >= tiny))
    # the flushed moments were far too small to move any parameter
    monkeypatch.setattr(nn, "FLUSH_EVERY", 10 ** 9)
    ref, ref_state = _zero_grad_run(8000)
    assert any(np.any((m != 0) & (np.abs(m) < tiny)) for m in ref_state.m)
    for p, q in zip(net.params, ref.params):
        np.testing.assert_array_equal(p, q)


def test_adamw_zero_grad_pure_decay():
    net = mlp_init(MlpSpec(2, (3,), 2), 0)
    before = [p.copy() for p in net.params]
    state = AdamWState.for_params(net.params, lr=1e-4, weight_decay=0.01)
    adamw_step(net, [np.zeros_like(p) for p in net.params], state)
    for p, q in zip(net.params, before):
        np.testing.assert_allclose(p, q * (1 - 1e-4 * 0.01), rtol=0, atol=1e-18)


def test_adamw_first_step_closed_form():
    net = MlpNet(MlpSpec(1, (1,), 1), [np.array([[1.0]]), np.array([[0.0]])], [np.zeros(1), np.zeros(1)])
    state = AdamWState.for_params(net.params, lr=1e-3)
    grads = [np.array([[1.0]]), np.zeros((1, 1)), np.zeros(1), np.zeros(1)]
    adamw_step(net, grads, state)
    lr, wd, eps = 1e-3, 0.01, 1e-8
    expected = 1.0 - lr * (1.0 / (1.0 + eps)) - lr * wd * 1.0
    assert net.weights[0][0, 0] == pytest.approx(expected, abs=1e-15)


def test_determinism_after_k_steps():
    def run():
        net = mlp_init(MlpSpec(3, (6, 6), 2), 9)
        state = AdamWState.for_params(net.params, lr=1e-2)
        rng = np.random.default_rng(1)
        for _ in range(20):
            x, y = rng.normal(size=(4, 3)), rng.normal(size=(4, 2))
            out, cache = net.forward(x)
            grads, _ = net.backward(cache, mse_loss(out, y)[1])
            adamw_step(net, grads, state)
        return net
    a, b = run(), run()
    for p, q in zip(a.params, b.params):
        assert p.tobytes() == q.tobytes()


def test_plateau_schedule():
    s = PlateauSchedule(lr=1e-4)
    for loss in np.linspace(1.0, 0.1, 40):
        plateau_update(s, float(loss))
    assert s.lr == 1e-4
    s = PlateauSchedule(lr=1e-4)
    plateau_update(s, 1.0)
    for _ in range(15):
        plateau_update(s, 1.0)
    assert s.lr == 1e-4
    plateau_update(s, 1.0)
    assert s.lr == pytest.approx(3e-5, rel=1e-12)
    for _ in range(16 * 10):
        plateau_update(s, 1.0)
    assert s.lr == 1e-6
    assert all(a >= b for a, b in zip(s.history, s.history[1:]))
    with pytest.raises(FloatingPointError):
        plateau_update(s, float("nan"))


def test_checkpoint_round_trip(tmp_path):
    net = mlp_init(MlpSpec(3, (4, 5), 2), 2)
    save_net(tmp_path / "a.ckpt", net, role="encoder", window=0, seed=2, stage="joint")
    back, header = load_net(tmp_path / "a.ckpt")
    assert header["role"] == "encoder" and header["window"] == 0
    for p, q in zip(net.params, back.params):
        assert p.tobytes() == q.tobytes()
    r = ResidualNet(mlp_init(MlpSpec(3, (4,), 3), 1))
    save_net(tmp_path / "r.ckpt", r, role="propagator")
    rb, _ = load_net(tmp_path / "r.ckpt")
    assert isinstance(rb, ResidualNet)
    raw = (tmp_path / "a.ckpt").read_bytes()
    (tmp_path / "bad.ckpt").write_bytes(b"XXXXXXXX" + raw[8:])
    with pytest.raises(CheckpointError, match="magic"):
        load_net(tmp_path / "bad.ckpt")
    (tmp_path / "short.ckpt").write_bytes(raw[:-8])
    with pytest.raises(CheckpointError, match="truncated"):
        load_net(tmp_path / "short.ckpt")
    # payload is float64 little endian, layer by layer
    n = 16 + int.from_bytes(raw[8:16], "little")
    first = np.frombuffer(raw[n:n + 8 * 12], dtype="<f8").reshape(3, 4)
    np.testing.assert_array_equal(first, net.weights[0])
