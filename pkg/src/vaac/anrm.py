"""Anticipated novelty: a learned dynamics model composed with an RND novelty score.

``phi(s, a) = phi_scale * novelty(dynamics.predict(s, a))`` never touches the
environment; it only reads the two models' parameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn_core import Mlp, MlpSpec, adam_init, adam_step, zero_grads
from .replay import Batch


class RunningMeanStd:
    """Streaming mean/variance (parallel-merge form); starts at mean 0, var 1.

    With ``max_count`` set, the weight of past data is capped there, which turns
    the estimate into an exponentially forgetting one once the cap is reached.
    """

    def __init__(self, shape=(), epsilon: float = 1e-4, max_count: float | None = None):
        self.mean = np.zeros(shape)
        self.var = np.ones(shape)
        self.count = epsilon
        self.max_count = max_count

    def update(self, x: np.ndarray) -> None:
        x = np.asarray(x, dtype=np.float64)
        batch_mean = x.mean(axis=0)
        batch_var = x.var(axis=0)
        n = x.shape[0]
        if self.max_count is not None and self.count + n > self.max_count:
            self.count = max(self.max_count - n, 1e-4)
        delta = batch_mean - self.mean
        total = self.count + n
        self.mean = self.mean + delta * n / total
        m2 = self.var * self.count + batch_var * n + delta * delta * self.count * n / total
        self.var = m2 / total
        self.count = total

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.var + 1e-8)


class DynamicsModel:
    """Residual next-state predictor: ``s' ~= s + net(scaled s, a)``."""

    def __init__(self, state_dim: int, action_dim: int, hidden_dims, rng: np.random.Generator,
                 lr: float = 3e-4, state_center: float = 0.0, state_scale: float = 1.0):
        spec = MlpSpec(state_dim + action_dim, tuple(hidden_dims), state_dim)
        self.net = Mlp.create(spec, rng)
        self.optimizer = adam_init(self.net.params, lr)
        self.state_dim = state_dim
        self.state_center = state_center
        self.state_scale = state_scale

    def zero_init(self) -> None:
        for a in self.net.params.arrays():
            a.fill(0.0)

    def _inputs(self, s, a) -> np.ndarray:
        s = np.asarray(s, dtype=np.float64)
        a = np.asarray(a, dtype=np.float64)
        return np.concatenate([(s - self.state_center) / self.state_scale, a], axis=-1)

    def predict(self, s, a) -> np.ndarray:
        return np.asarray(s, dtype=np.float64) + self.net(self._inputs(s, a))

    def forward(self, s, a):
        delta, cache = self.net.forward(self._inputs(s, a))
        return np.asarray(s, dtype=np.float64) + delta, cache

    def action_grad(self, cache, pred_grad: np.ndarray) -> np.ndarray:
        """d(<pred_grad, prediction>)/d(action); the model's weights are untouched."""
        g_in = self.net.backward(cache, pred_grad, accumulate=False)
        return g_in[..., self.state_dim:]

    def train_step(self, batch: Batch) -> float:
        """One Adam step on the mean squared next-state error; returns the pre-step loss."""
        pred, cache = self.forward(batch.state, batch.action)
        err = pred - batch.next_state
        loss = float(np.mean(err * err))
        zero_grads(self.net.params)
        self.net.backward(cache, 2.0 * err / err.size)
        adam_step(self.net.params, self.optimizer)
        return loss


@dataclass
class _NoveltyCache:
    diff: np.ndarray
    pred_cache: object
    target_cache: object


class NoveltyModule:
    """Random network distillation with running observation/error normalisers."""

    def __init__(self, state_dim: int, hidden_dims, rng: np.random.Generator,
                 embed_dim: int = 32, lr: float = 3e-4, input_bias_bound: float = 2.0,
                 error_window: float | None = 1e5):
        spec = MlpSpec(state_dim, tuple(hidden_dims), embed_dim)
        self.target = Mlp.create(spec, rng, input_bias_bound=input_bias_bound)
        self.predictor = Mlp.create(spec, rng, input_bias_bound=input_bias_bound)
        self.optimizer = adam_init(self.predictor.params, lr)
        self.obs_rms = RunningMeanStd((state_dim,))
        self.err_rms = RunningMeanStd((), max_count=error_window)

    def normalize(self, s) -> np.ndarray:
        return (np.asarray(s, dtype=np.float64) - self.obs_rms.mean) / self.obs_rms.std

    def raw_error(self, s) -> np.ndarray:
        x = self.normalize(s)
        diff = self.predictor(x) - self.target(x)
        return np.sum(diff * diff, axis=-1)

    def novelty(self, s) -> np.ndarray:
        return self.raw_error(s) / self.err_rms.std

    def forward(self, s) -> tuple[np.ndarray, _NoveltyCache]:
        x = self.normalize(s)
        p, pc = self.predictor.forward(x)
        t, tc = self.target.forward(x)
        diff = p - t
        return np.sum(diff * diff, axis=-1) / self.err_rms.std, _NoveltyCache(diff, pc, tc)

    def state_grad(self, cache: _NoveltyCache, out_grad) -> np.ndarray:
        """d(out_grad * novelty)/d(state) with both networks held fixed."""
        g = 2.0 * cache.diff * (np.asarray(out_grad)[..., None] / self.err_rms.std)
        gx = (self.predictor.backward(cache.pred_cache, g, accumulate=False)
              - self.target.backward(cache.target_cache, g, accumulate=False))
        return gx / self.obs_rms.std

    def train_step(self, states) -> float:
        """Refresh the observation normaliser, take one Adam step regressing the
        predictor onto the target, then fold the pre-step errors into the error
        normaliser."""
        states = np.asarray(states, dtype=np.float64)
        self.obs_rms.update(states)
        x = self.normalize(states)
        p, cache = self.predictor.forward(x)
        diff = p - self.target(x)
        raw = np.sum(diff * diff, axis=-1)
        loss = float(np.mean(raw))
        zero_grads(self.predictor.params)
        self.predictor.backward(cache, 2.0 * diff / len(states))
        adam_step(self.predictor.params, self.optimizer)
        self.err_rms.update(raw)
        return loss


class Anrm:
    """Dynamics model + novelty module, exposing ``phi`` and its action gradient."""

    def __init__(self, dynamics: DynamicsModel, novelty: NoveltyModule, phi_scale: float = 1.0):
        self.dynamics = dynamics
        self.novelty = novelty
        self.phi_scale = phi_scale

    def phi(self, s, a) -> np.ndarray:
        return self.phi_scale * self.novelty.novelty(self.dynamics.predict(s, a))

    def phi_and_action_grad(self, s, a, out_grad) -> tuple[np.ndarray, np.ndarray]:
        """phi values and d(sum(out_grad * phi))/d(a); no ANRM weights change."""
        pred, dcache = self.dynamics.forward(s, a)
        nov, ncache = self.novelty.forward(pred)
        g_pred = self.novelty.state_grad(ncache, self.phi_scale * np.asarray(out_grad))
        return self.phi_scale * nov, self.dynamics.action_grad(dcache, g_pred)

    def train_step(self, batch: Batch) -> tuple[float, float]:
        """Dynamics on (s, a, s'); novelty on the visited next states."""
        return self.dynamics.train_step(batch), self.novelty.train_step(batch.next_state)


def dynamics_predict(model: DynamicsModel, s, a) -> np.ndarray:
    return model.predict(s, a)


def dynamics_train_step(model: DynamicsModel, batch: Batch) -> float:
    return model.train_step(batch)


def novelty(module: NoveltyModule, s) -> np.ndarray:
    return module.novelty(s)


def novelty_train_step(module: NoveltyModule, states) -> float:
    return module.train_step(states)


def phi(dynamics: DynamicsModel, noveltym: NoveltyModule, s, a, phi_scale: float = 1.0) -> np.ndarray:
    return phi_scale * noveltym.novelty(dynamics.predict(s, a))
