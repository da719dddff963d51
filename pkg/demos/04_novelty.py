"""
Novelty from random network distillation
========================================

A predictor network learns to match a frozen random network on the states
it sees. Its error stays high on states it has never seen, which is the
novelty signal. The dynamics model turns it into an anticipated novelty
of an action: phi(s, a) = novelty(predicted next state).
"""

import numpy as np

from vaac.anrm import Anrm, DynamicsModel, NoveltyModule
from vaac.replay import Batch

rng = np.random.default_rng(0)
novelty = NoveltyModule(state_dim=2, hidden_dims=(64, 64), rng=np.random.default_rng(1))

# train only on the start room (x, y < 50)
for _ in range(2000):
    novelty.train_step(rng.uniform(1, 48, (256, 2)))

start_room = rng.uniform(1, 48, (100, 2))
far_room = rng.uniform(52, 99, (100, 2))
print(f"mean novelty, start room: {novelty.novelty(start_room).mean():.3f}")
print(f"mean novelty, far room:   {novelty.novelty(far_room).mean():.3f}")

# a dynamics model trained on free-space moves s' = s + a
dynamics = DynamicsModel(2, 2, (64, 64), np.random.default_rng(2), lr=1e-3,
                         state_center=50.0, state_scale=50.0)
for _ in range(2000):
    s = rng.uniform(5, 95, (256, 2))
    a = rng.uniform(-1, 1, (256, 2))
    dynamics.train_step(Batch(s, a, np.zeros(256), s + a, np.zeros(256)))

anrm = Anrm(dynamics, novelty)
s = np.array([[47.0, 25.0], [47.0, 25.0]])
a = np.array([[1.0, 0.0], [-1.0, 0.0]])
print("phi of a step toward the unseen room vs back into the seen one:", anrm.phi(s, a).round(3))
