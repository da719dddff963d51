"""
The tanh-squashed Gaussian
==========================

Policies output a mean and a log standard deviation; actions are
tanh(mean + std * noise). The tanh changes the density, and its entropy
no longer grows without bound with the standard deviation.
"""

import numpy as np
from scipy import integrate

from vaac.distributions import GaussianHead, entropy_pre_squash, log_prob, sample_reparameterized

head = GaussianHead(mean=np.array([0.0]), log_std=np.array([0.0]))
print("Gaussian entropy, sigma = 1:", round(entropy_pre_squash(head), 6))

sample = sample_reparameterized(head, np.array([1.0]))
print("action for unit noise:", sample.action, " log-density:", round(sample.log_prob, 6))


# entropy after squashing, by quadrature over the pre-tanh variable
def squashed_entropy(log_std):
    h = GaussianHead(np.array([0.0]), np.array([log_std]))
    sigma = np.exp(log_std)

    def integrand(u):
        density = np.exp(-0.5 * (u / sigma) ** 2) / (sigma * np.sqrt(2 * np.pi))
        return -density * log_prob(h, np.array([u]))

    return integrate.quad(integrand, -12 * sigma, 12 * sigma, limit=200)[0]


print("\nlog_std   pre-squash entropy   squashed entropy")
for ls in (-2.0, -1.0, -0.5, -0.12, 0.5, 1.0, 2.0):
    h = GaussianHead(np.array([0.0]), np.array([ls]))
    print(f"{ls:7.2f}   {entropy_pre_squash(h):18.4f}   {squashed_entropy(ls):16.4f}")
print("the squashed entropy peaks near log_std = -0.12 and falls again beyond it")
