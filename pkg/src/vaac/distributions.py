"""Tanh-squashed diagonal Gaussians shared by the actor and the virtual actor."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
SQUASH_EPS = 1e-6
_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)
_HALF_LOG_2PIE = 0.5 * np.log(2.0 * np.pi * np.e)


@dataclass
class GaussianHead:
    """Mean and (clamped) log standard deviation; the last axis is the action axis."""

    mean: np.ndarray
    log_std: np.ndarray
    # d(clamped log_std) / d(raw log_std): 1 inside the clamp range, 0 outside
    log_std_mask: np.ndarray | None = None

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        raw = np.asarray(self.log_std, dtype=np.float64)
        self.log_std = np.clip(raw, LOG_STD_MIN, LOG_STD_MAX)
        if self.log_std_mask is None:
            self.log_std_mask = ((raw >= LOG_STD_MIN) & (raw <= LOG_STD_MAX)).astype(np.float64)

    @classmethod
    def from_output(cls, out: np.ndarray) -> "GaussianHead":
        """Split a policy-network output ``[mean, log_std]`` along the last axis."""
        d = out.shape[-1] // 2
        return cls(out[..., :d], out[..., d:])

    @property
    def std(self) -> np.ndarray:
        return np.exp(self.log_std)

    @property
    def action_dim(self) -> int:
        return self.mean.shape[-1]


@dataclass
class SquashedSample:
    action: np.ndarray
    pre_tanh: np.ndarray
    log_prob: np.ndarray | float


def log_prob(head: GaussianHead, pre_tanh: np.ndarray) -> np.ndarray | float:
    """Log-density of ``tanh(pre_tanh)`` under the squashed Gaussian."""
    pre_tanh = np.asarray(pre_tanh, dtype=np.float64)
    z = (pre_tanh - head.mean) / np.exp(head.log_std)
    gauss = -0.5 * z * z - head.log_std - _HALF_LOG_2PI
    a = np.tanh(pre_tanh)
    correction = np.log(1.0 - a * a + SQUASH_EPS)
    out = np.sum(gauss - correction, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def sample_reparameterized(head: GaussianHead, noise: np.ndarray) -> SquashedSample:
    pre_tanh = head.mean + np.exp(head.log_std) * np.asarray(noise, dtype=np.float64)
    return SquashedSample(np.tanh(pre_tanh), pre_tanh, log_prob(head, pre_tanh))


def entropy_pre_squash(head: GaussianHead) -> np.ndarray | float:
    """Closed-form entropy of the Gaussian before the tanh."""
    out = np.sum(_HALF_LOG_2PIE + head.log_std, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def reparam_backward(head: GaussianHead, sample: SquashedSample, noise: np.ndarray,
                     logp_coef, action_grad: np.ndarray | None = None
                     ) -> tuple[np.ndarray, np.ndarray]:
    """Gradient of ``logp_coef * log_prob + <action_grad, action>`` with respect to
    the head's mean and *raw* log_std, holding the noise fixed.

    ``logp_coef`` broadcasts against the batch axis (scalar or ``(n,)``).
    """
    a = sample.action
    std = np.exp(head.log_std)
    one_minus = 1.0 - a * a
    # d/du of -log(1 - tanh(u)^2 + eps)
    dcorr = 2.0 * a * one_minus / (one_minus + SQUASH_EPS)
    coef = np.asarray(logp_coef, dtype=np.float64)
    if coef.ndim == 1:
        coef = coef[:, None]
    du = coef * dcorr
    if action_grad is not None:
        du = du + action_grad * one_minus
    grad_mean = du
    # the Gaussian part depends on log_std only through -log_std once z is fixed
    grad_log_std = (du * std * noise - coef) * head.log_std_mask
    return grad_mean, grad_log_std
