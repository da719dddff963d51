import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vaac.nn_core import (ConfigurationError, Mlp, MlpSpec, NonFiniteError, ParamSet, UsageError,
                          adam_init, adam_step, gradient_check, init_params, load_checkpoint,
                          mlp_backward, mlp_forward, mlp_forward_cached, polyak_update,
                          save_checkpoint, zero_grads)


def test_identity_forward():
    # relu(x) - relu(-x) = x: an exact identity with the mandatory hidden layer
    spec = MlpSpec(2, (4,), 2)
    eye = np.eye(2)
    p = ParamSet([np.vstack([eye, -eye]), np.hstack([eye, -eye])], [np.zeros(4), np.zeros(2)])
    np.testing.assert_array_equal(mlp_forward(spec, p, [0.5, -0.5]), [0.5, -0.5])


def test_zero_params_give_zero_output():
    spec = MlpSpec(3, (5, 4), 2)
    p = init_params(spec, np.random.default_rng(0))
    for a in p.arrays():
        a.fill(0.0)
    np.testing.assert_array_equal(mlp_forward(spec, p, [1.0, -2.0, 3.0]), np.zeros(2))


def test_hand_evaluated_2_3_1():
    spec = MlpSpec(2, (3,), 1)
    w1 = np.array([[1.0, -1.0], [0.5, 0.5], [-1.0, 2.0]])
    b1 = np.array([0.0, 0.1, -0.5])
    w2 = np.array([[1.0, 2.0, -3.0]])
    b2 = np.array([0.25])
    # hidden pre-activations [0, 1.1, 0.5] -> relu same; output 0 + 2.2 - 1.5 + 0.25
    out = mlp_forward(spec, ParamSet([w1, w2], [b1, b2]), [1.0, 1.0])
    assert out == pytest.approx([0.95], abs=1e-15)


def test_dimension_mismatch_raises():
    spec = MlpSpec(3, (4,), 1)
    p = init_params(spec, np.random.default_rng(0))
    with pytest.raises(ConfigurationError):
        mlp_forward(spec, p, [1.0, 2.0])
    with pytest.raises(ConfigurationError):
        mlp_forward(MlpSpec(2, (4,), 1), p, [1.0, 2.0])


@pytest.mark.parametrize("kwargs", [
    dict(input_dim=0, hidden_dims=(3,), output_dim=1),
    dict(input_dim=2, hidden_dims=(), output_dim=1),
    dict(input_dim=2, hidden_dims=(3,), output_dim=1, hidden_activation="gelu"),
])
def test_bad_spec(kwargs):
    with pytest.raises(ConfigurationError):
        MlpSpec(**kwargs)


def test_param_count():
    assert MlpSpec(4, (8, 8), 2).n_params == 4 * 8 + 8 + 8 * 8 + 8 + 8 * 2 + 2
    p = init_params(MlpSpec(4, (8, 8), 2), np.random.default_rng(0))
    assert p.flat().size == MlpSpec(4, (8, 8), 2).n_params


def test_backward_zero_output_grad():
    spec = MlpSpec(3, (6,), 2)
    p = init_params(spec, np.random.default_rng(1))
    _, cache = mlp_forward_cached(spec, p, [0.1, 0.2, 0.3])
    gx = mlp_backward(spec, p, cache, np.zeros(2))
    np.testing.assert_array_equal(gx, np.zeros(3))
    assert not p.flat_grads().any()


def test_backward_linear_closed_form():
    # with a tanh-free identity path: relu hidden with positive pre-activations is linear
    spec = MlpSpec(2, (2,), 2)
    w2 = np.array([[1.0, 2.0], [3.0, -1.0]])
    b2 = np.array([0.5, -0.5])
    p = ParamSet([np.eye(2), w2], [np.zeros(2), b2])
    x = np.array([0.3, 0.7])
    g = np.array([1.5, -2.0])
    _, cache = mlp_forward_cached(spec, p, x)
    gx = mlp_backward(spec, p, cache, g)
    np.testing.assert_allclose(p.grad_weights[1], np.outer(g, x))
    np.testing.assert_allclose(p.grad_biases[1], g)
    np.testing.assert_allclose(gx, w2.T @ g)


def test_backward_without_forward_is_usage_error():
    spec = MlpSpec(2, (3,), 1)
    p = init_params(spec, np.random.default_rng(0))
    with pytest.raises(UsageError):
        mlp_backward(spec, p, None, np.ones(1))


def test_backward_accumulates():
    spec = MlpSpec(2, (5,), 1)
    p = init_params(spec, np.random.default_rng(2))
    _, cache = mlp_forward_cached(spec, p, [0.4, -0.1])
    mlp_backward(spec, p, cache, [1.0])
    once = p.flat_grads()
    mlp_backward(spec, p, cache, [1.0])
    np.testing.assert_allclose(p.flat_grads(), 2 * once)


def test_batch_equals_sum_of_singles():
    spec = MlpSpec(3, (7, 5), 2)
    rng = np.random.default_rng(3)
    p = init_params(spec, rng)
    xs = rng.normal(size=(4, 3))
    gs = rng.normal(size=(4, 2))
    _, cache = mlp_forward_cached(spec, p, xs)
    gx_batch = mlp_backward(spec, p, cache, gs)
    batch_grads = p.flat_grads()
    zero_grads(p)
    for x, g, gxb in zip(xs, gs, gx_batch):
        _, c = mlp_forward_cached(spec, p, x)
        np.testing.assert_allclose(mlp_backward(spec, p, c, g), gxb, rtol=1e-12)
    np.testing.assert_allclose(p.flat_grads(), batch_grads, rtol=1e-12, atol=1e-14)


def test_finite_difference_4_8_8_2_every_parameter():
    spec = MlpSpec(4, (8, 8), 2)
    rng = np.random.default_rng(4)
    p = init_params(spec, rng)
    for b in p.biases:
        b[:] = rng.normal(0, 0.1, b.shape)
    err_params, err_inputs = gradient_check(spec, p, rng.normal(size=4), rng.normal(size=2))
    assert err_params < 1e-4
    assert err_inputs < 1e-4


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), act=st.sampled_from(["relu", "tanh"]))
def test_finite_difference_random_small_nets(seed, act):
    rng = np.random.default_rng(seed)
    spec = MlpSpec(3, (6, 5), 2, hidden_activation=act)
    p = init_params(spec, rng, input_bias_bound=1.0)
    err_params, err_inputs = gradient_check(spec, p, rng.normal(size=3), rng.normal(size=2))
    assert err_params < 1e-4 and err_inputs < 1e-4


def test_adam_zero_grads_leave_params():
    spec = MlpSpec(2, (4,), 1)
    p = init_params(spec, np.random.default_rng(0))
    before = p.flat()
    st_ = adam_init(p, 0.1)
    adam_step(p, st_)
    np.testing.assert_array_equal(p.flat(), before)


def _scalar_adam_oracle(w, lr, steps, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    out = [w]
    for t in range(1, steps + 1):
        g = 2 * w
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        w = w - lr * (m / (1 - b1 ** t)) / ((v / (1 - b2 ** t)) ** 0.5 + eps)
        out.append(w)
    return np.array(out)


def _scalar_params(w):
    return ParamSet([np.array([[w]]), np.array([[0.0]])], [np.zeros(1), np.zeros(1)])


def test_adam_scalar_quadratic():
    p = _scalar_params(1.0)
    st_ = adam_init(p, 0.1)
    traj = [1.0]
    for _ in range(100):
        zero_grads(p)
        p.grad_weights[0][0, 0] = 2 * p.weights[0][0, 0]
        adam_step(p, st_)
        traj.append(p.weights[0][0, 0])
    traj = np.array(traj)
    np.testing.assert_allclose(traj, _scalar_adam_oracle(1.0, 0.1, 100), rtol=1e-12, atol=1e-15)
    assert abs(traj[-1]) < 0.05
    # monotone decrease holds up to the first zero crossing (momentum overshoots after)
    first_cross = int(np.argmax(traj <= 0))
    assert np.all(np.diff(traj[:first_cross + 1]) < 0)


def test_adam_first_step_is_lr_sign():
    p = _scalar_params(0.3)
    st_ = adam_init(p, 0.01)
    p.grad_weights[0][0, 0] = -7.0
    adam_step(p, st_)
    assert p.weights[0][0, 0] - 0.3 == pytest.approx(0.01, rel=1e-6)


def test_adam_nonfinite_raises():
    p = _scalar_params(1.0)
    st_ = adam_init(p, 0.1)
    p.grad_weights[0][0, 0] = np.nan
    with pytest.raises(NonFiniteError):
        adam_step(p, st_)


def test_polyak_cases():
    t = _scalar_params(2.0)
    o = _scalar_params(4.0)
    polyak_update(t, o, 0.5)
    assert t.weights[0][0, 0] == 3.0
    t2 = init_params(MlpSpec(2, (3,), 1), np.random.default_rng(0))
    o2 = init_params(MlpSpec(2, (3,), 1), np.random.default_rng(1))
    before = t2.flat()
    polyak_update(t2, o2, 0.0)
    np.testing.assert_array_equal(t2.flat(), before)
    polyak_update(t2, o2, 1.0)
    np.testing.assert_array_equal(t2.flat(), o2.flat())


def test_polyak_shape_mismatch():
    with pytest.raises(ConfigurationError):
        polyak_update(init_params(MlpSpec(2, (3,), 1), np.random.default_rng(0)),
                      init_params(MlpSpec(2, (4,), 1), np.random.default_rng(0)), 0.5)


@settings(max_examples=30, deadline=None)
@given(tau=st.floats(0.01, 1.0), seed=st.integers(0, 1000))
def test_polyak_geometric_convergence(tau, seed):
    spec = MlpSpec(2, (3,), 1)
    t = init_params(spec, np.random.default_rng(seed))
    o = init_params(spec, np.random.default_rng(seed + 1))
    d0 = np.linalg.norm(t.flat() - o.flat())
    for k in range(1, 6):
        polyak_update(t, o, tau)
        d = np.linalg.norm(t.flat() - o.flat())
        assert d == pytest.approx(d0 * (1 - tau) ** k, rel=1e-9, abs=1e-12)


def test_zero_grads_idempotent_and_adam_noop():
    spec = MlpSpec(2, (4,), 1)
    p = init_params(spec, np.random.default_rng(0))
    _, c = mlp_forward_cached(spec, p, [1.0, 2.0])
    mlp_backward(spec, p, c, [1.0])
    zero_grads(p)
    zero_grads(p)
    assert not p.flat_grads().any()
    mlp_backward(spec, p, c, [0.0])
    assert not p.flat_grads().any()
    before = p.flat()
    adam_step(p, adam_init(p))
    np.testing.assert_array_equal(p.flat(), before)


def test_init_is_deterministic():
    spec = MlpSpec(2, (64, 64), 4)
    a = init_params(spec, np.random.default_rng(7), head_scale=1e-2)
    b = init_params(spec, np.random.default_rng(7), head_scale=1e-2)
    assert a.digest() == b.digest()
    assert np.abs(a.weights[-1]).max() <= 1e-2 / 8


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    net = Mlp.create(MlpSpec(3, (5,), 2), rng)
    opt = adam_init(net.params, 1e-3)
    _, c = net.forward(rng.normal(size=(4, 3)))
    net.backward(c, rng.normal(size=(4, 2)))
    adam_step(net.params, opt)
    gen = np.random.default_rng(123)
    gen.normal(size=10)
    path = save_checkpoint(tmp_path / "ck.npz", {"net": net}, {"net": opt},
                           {"g": gen.bit_generator.state}, {"note": "x"})
    ck = load_checkpoint(path)
    assert ck["nets"]["net"].spec == net.spec
    assert ck["nets"]["net"].params.digest() == net.params.digest()
    lo = ck["optimizers"]["net"]
    assert lo.step_count == 1
    for a, b in zip(lo.first_moment + lo.second_moment, opt.first_moment + opt.second_moment):
        np.testing.assert_array_equal(a, b)
    g2 = np.random.default_rng()
    g2.bit_generator.state = ck["rng_states"]["g"]
    np.testing.assert_array_equal(g2.normal(size=5), gen.normal(size=5))
    assert ck["extra"] == {"note": "x"}
