import ast
import inspect

import numpy as np
import pytest

import vaac.anrm as anrm_mod
from vaac.anrm import (Anrm, DynamicsModel, NoveltyModule, RunningMeanStd, dynamics_predict,
                       dynamics_train_step, novelty, novelty_train_step, phi)
from vaac.replay import Batch

H = (64, 64)


def make_dynamics(seed=0, lr=3e-4):
    return DynamicsModel(2, 2, H, np.random.default_rng(seed), lr, state_center=50.0, state_scale=50.0)


def copy_predictor_from_target(nm: NoveltyModule):
    for dst, src in zip(nm.predictor.params.arrays(), nm.target.params.arrays()):
        dst[...] = src


def free_space_batch(rng, n):
    # interior of the start room, far enough from walls that s' = s + a holds
    s = rng.uniform(5, 45, size=(n, 2))
    a = rng.uniform(-1, 1, size=(n, 2))
    return Batch(s, a, np.zeros(n), s + a, np.zeros(n))


def test_running_mean_std_matches_numpy():
    rng = np.random.default_rng(0)
    chunks = [rng.normal(3.0, 2.0, size=(k, 2)) for k in (5, 17, 64, 1)]
    rms = RunningMeanStd((2,), epsilon=1e-12)
    for c in chunks:
        rms.update(c)
    allx = np.concatenate(chunks)
    np.testing.assert_allclose(rms.mean, allx.mean(axis=0), rtol=1e-9)
    np.testing.assert_allclose(rms.var, allx.var(axis=0), rtol=1e-8)


def test_running_mean_std_window_forgets():
    rms = RunningMeanStd((), max_count=1000)
    rms.update(np.full(1000, 100.0))
    for _ in range(100):
        rms.update(np.full(100, 1.0))
    # each update keeps 900/1000 of the old weight: 99 * 0.9**100 ~ 0.003
    assert rms.mean == pytest.approx(1.0, abs=1e-2)
    assert rms.count == 1000


def test_zero_initialised_dynamics_is_identity():
    d = make_dynamics()
    d.zero_init()
    s = np.array([[12.5, 40.0], [70.0, 3.0]])
    np.testing.assert_array_equal(dynamics_predict(d, s, np.array([[0.3, -1.0], [1.0, 1.0]])), s)


def test_dynamics_deterministic():
    d = make_dynamics()
    s, a = np.array([10.0, 20.0]), np.array([0.2, -0.4])
    np.testing.assert_array_equal(d.predict(s, a), d.predict(s, a))


def test_dynamics_zero_loss_batch_leaves_params():
    d = make_dynamics()
    d.zero_init()
    s = np.random.default_rng(1).uniform(0, 100, (32, 2))
    batch = Batch(s, np.zeros((32, 2)), np.zeros(32), s.copy(), np.zeros(32))
    before = d.net.params.flat()
    assert dynamics_train_step(d, batch) == 0.0
    np.testing.assert_array_equal(d.net.params.flat(), before)


def test_dynamics_learns_free_space_and_generalises():
    rng = np.random.default_rng(2)
    d = make_dynamics(lr=1e-3)
    losses = [dynamics_train_step(d, free_space_batch(rng, 256)) for _ in range(3000)]
    assert min(losses) >= 0.0
    hold = free_space_batch(np.random.default_rng(99), 1000)
    err = np.linalg.norm(d.predict(hold.state, hold.action) - hold.next_state, axis=1)
    assert err.mean() < 0.1


def test_dynamics_fixed_linear_batch_converges():
    rng = np.random.default_rng(3)
    s = rng.uniform(0, 100, (128, 2))
    a = rng.uniform(-1, 1, (128, 2))
    batch = Batch(s, a, np.zeros(128), s + 0.5 * a - 0.01 * (s - 50.0), np.zeros(128))
    d = make_dynamics(lr=1e-3)
    for _ in range(3000):
        loss = d.train_step(batch)
    assert loss < 1e-3


def test_novelty_zero_when_predictor_copies_target():
    nm = NoveltyModule(2, H, np.random.default_rng(0))
    copy_predictor_from_target(nm)
    s = np.random.default_rng(1).uniform(0, 100, (50, 2))
    np.testing.assert_array_equal(novelty(nm, s), np.zeros(50))


def test_novelty_training_single_state():
    nm = NoveltyModule(2, H, np.random.default_rng(4), lr=1e-3)
    probe = np.array([[20.0, 30.0]])
    target_digest = nm.target.params.digest()
    initial = nm.raw_error(probe)[0]
    errs = []
    for _ in range(2000):
        loss = novelty_train_step(nm, probe)
        assert loss >= 0.0
        errs.append(nm.raw_error(probe)[0])
    assert errs[-1] < 0.01 * initial
    assert nm.target.params.digest() == target_digest
    # downward trend over the run: least-squares slope on log error is negative
    slope = np.polyfit(np.arange(len(errs)), np.log(np.array(errs) + 1e-300), 1)[0]
    assert slope < 0


def test_trained_state_less_novel_than_unseen():
    nm = NoveltyModule(2, H, np.random.default_rng(5), lr=1e-3)
    seen = np.array([[10.0, 10.0]])
    unseen = np.array([[80.0, 85.0]])
    rng = np.random.default_rng(6)
    for _ in range(10_000):
        # a little jitter keeps the observation normaliser well-conditioned
        nm.train_step(seen + rng.normal(0, 1.0, (8, 2)))
    assert nm.raw_error(seen)[0] < nm.raw_error(unseen)[0]
    assert np.all(nm.novelty(np.vstack([seen, unseen])) >= 0)


def test_phi_is_composition():
    d = make_dynamics(7)
    nm = NoveltyModule(2, H, np.random.default_rng(8))
    nm.train_step(np.random.default_rng(9).uniform(0, 100, (256, 2)))
    s = np.array([[30.0, 40.0], [5.0, 90.0]])
    a = np.array([[0.5, -0.5], [-1.0, 0.2]])
    expected = nm.novelty(d.predict(s, a))
    np.testing.assert_array_equal(phi(d, nm, s, a), expected)
    model = Anrm(d, nm, phi_scale=1.0)
    np.testing.assert_array_equal(model.phi(s, a), expected)
    vals, _ = model.phi_and_action_grad(s, a, np.ones(2))
    np.testing.assert_array_equal(vals, expected)


def test_phi_zero_for_copied_predictor():
    d = make_dynamics()
    nm = NoveltyModule(2, H, np.random.default_rng(1))
    copy_predictor_from_target(nm)
    rng = np.random.default_rng(2)
    assert not phi(d, nm, rng.uniform(0, 100, (20, 2)), rng.uniform(-1, 1, (20, 2))).any()


def test_phi_action_gradient_finite_differences():
    rng = np.random.default_rng(10)
    d = make_dynamics(11)
    nm = NoveltyModule(2, H, np.random.default_rng(12))
    for _ in range(50):
        nm.train_step(rng.uniform(0, 50, (64, 2)))
    model = Anrm(d, nm, phi_scale=1.7)
    s = rng.uniform(10, 90, (10, 2))
    a = rng.uniform(-0.9, 0.9, (10, 2))
    _, grad = model.phi_and_action_grad(s, a, np.ones(10))
    eps = 1e-6
    num = np.zeros_like(a)
    for j in range(2):
        ap, am = a.copy(), a.copy()
        ap[:, j] += eps
        am[:, j] -= eps
        num[:, j] = (model.phi(s, ap) - model.phi(s, am)) / (2 * eps)
    scale = np.maximum(np.abs(grad) + np.abs(num), 1e-6)
    assert np.max(np.abs(grad - num) / scale) < 1e-3


def test_phi_gradient_leaves_anrm_weights():
    d = make_dynamics()
    nm = NoveltyModule(2, H, np.random.default_rng(1))
    model = Anrm(d, nm)
    digests = [d.net.params.digest(), nm.predictor.params.digest(), nm.target.params.digest()]
    grads = [d.net.params.flat_grads().copy(), nm.predictor.params.flat_grads().copy()]
    model.phi_and_action_grad(np.array([[10.0, 10.0]]), np.array([[0.1, 0.1]]), np.ones(1))
    assert digests == [d.net.params.digest(), nm.predictor.params.digest(), nm.target.params.digest()]
    np.testing.assert_array_equal(d.net.params.flat_grads(), grads[0])
    np.testing.assert_array_equal(nm.predictor.params.flat_grads(), grads[1])


def test_anrm_has_no_environment_dependency():
    tree = ast.parse(inspect.getsource(anrm_mod))
    imported = set()
    for node in ast.walk(tree):
        if isinstance(node, ast.ImportFrom):
            imported.add(node.module or "")
        elif isinstance(node, ast.Import):
            imported.update(a.name for a in node.names)
    assert not any("env_maze" in m or "harness" in m or "agents" in m for m in imported)
