"""
Backpropagation in the numpy MLP engine
=======================================

Every network in the package is a plain relu MLP. Here we build one,
push a batch through it, and compare the analytic gradients with central
finite differences.
"""

import numpy as np

from vaac.nn_core import Mlp, MlpSpec, adam_init, adam_step, gradient_check

rng = np.random.default_rng(0)

# a critic-shaped net: (state, action) in, one value out
spec = MlpSpec(input_dim=4, hidden_dims=(64, 64), output_dim=1)
net = Mlp.create(spec, rng)
print("parameters:", spec.n_params)

# forward on a batch keeps a cache for the backward pass
x = rng.normal(size=(5, 4))
y, cache = net.forward(x)
print("outputs:", y.ravel().round(4))

# gradient of sum(w * f(x)) for one input, against central differences
err_params, err_inputs = gradient_check(spec, net.params, x[0], np.ones(1))
print(f"max relative error: params {err_params:.2e}, inputs {err_inputs:.2e}")

# a few Adam steps regressing the net onto a fixed target
target = np.sin(x.sum(axis=1, keepdims=True))
opt = adam_init(net.params, learning_rate=1e-2)
for step in range(201):
    out, cache = net.forward(x)
    err = out - target
    net.zero_grads()
    net.backward(cache, err / len(x))
    adam_step(net.params, opt)
    if step % 50 == 0:
        print(f"step {step:3d}  loss {0.5 * np.mean(err ** 2):.6f}")
