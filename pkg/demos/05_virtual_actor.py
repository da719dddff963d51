"""
The virtual actor
=================

The virtual actor never acts. It minimises E[log psi(a|s) - phi(s, a)],
so it spreads out where phi is flat and concentrates where phi has a
clear peak. Its entropy then tells the critic how much there is left to
discover from a state.
"""

import numpy as np

from vaac.agents import VirtualActor, virtual_actor_update


class Peaked:
    """phi(s, a) = -10 ||a - a*||^2: one obviously novel action."""

    target = np.array([0.4, -0.3])

    def phi_and_action_grad(self, s, a, out_grad):
        d = a - self.target
        return -10 * np.sum(d * d, axis=1), out_grad[:, None] * -20 * d


class Flat:
    def phi_and_action_grad(self, s, a, out_grad):
        return np.zeros(len(a)), np.zeros_like(a)


for name, model in (("peaked phi", Peaked()), ("flat phi", Flat())):
    rng = np.random.default_rng(0)
    va = VirtualActor(2, 2, (64, 64), rng, log_std_init=-1.0)
    print(f"\n{name}")
    for step in range(1501):
        states = rng.uniform(-1, 1, (256, 2))
        loss, phi_mean, entropy = virtual_actor_update(va, model, states, rng.standard_normal((256, 2)))
        if step % 300 == 0:
            mean_action = np.tanh(va.head(states).mean).mean(axis=0)
            print(f"  step {step:4d}  loss {loss:7.3f}  entropy {entropy:6.3f}  "
                  f"mean action {mean_action.round(3)}")
