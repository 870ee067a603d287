"""The generator, the critic, and the gradient penalty.

The generator turns a 25-long Gaussian noise vector into a 50-step
return window through one LSTM block and a tanh projection; the critic
scores windows through its own LSTM block and a time-averaged dense
head. The penalty pins the critic's input-gradient norm near 1, the
soft version of the Lipschitz constraint.

Run:  python demos/02_networks_and_penalty.py
"""

import numpy as np

from tsforge import tensor as T
from tsforge.gan import gradient_penalty, interpolate, make_rng, sample_noise
from tsforge.nn import ArchitectureSpec, critic_forward, generator_forward, init_params
from tsforge.tensor import Graph, Tensor

spec = ArchitectureSpec(noise_len=25, seq_len=50, features=1, lstm_units=50)
gen = init_params(spec, "generator", seed=1)
critic = init_params(spec, "critic", seed=2)
print(f"generator parameters: {gen.count()}")
print(f"critic parameters:    {critic.count()}   (4*((50+1)*50+50) + 51 = 10451)")

rng = make_rng(0)
z = sample_noise(4, spec.noise_len, rng)
fake = generator_forward(gen, Tensor(z, requires_grad=False))
print(f"\ngenerator: noise {z.shape} -> windows {fake.shape}")
print(f"outputs live in (-1, 1): min={fake.data.min():.4f} max={fake.data.max():.4f}")

scores = critic_forward(critic, fake)
print(f"critic: windows -> scores {scores.shape}, unbounded: {scores.data}")

print("\n== gradient penalty at interpolated points ==")
real = rng.standard_normal((4, 50, 1)) * 0.3
x_hat_values = interpolate(real, fake.data, rng)
with Graph() as g:
    x_hat = Tensor(x_hat_values)
    pen = gradient_penalty(lambda x: critic_forward(critic, x), x_hat, 10.0)
    print(f"penalty value at init: {pen.item():.4f}")
    grads = T.backward(g, pen)
    gw = grads[critic["lstm.W_o"]].data
    print(f"...and it is differentiable w.r.t. critic weights, e.g. "
          f"|d pen / d W_o| max = {np.abs(gw).max():.3e}")

print("\n== sanity: a critic with unit gradient norm pays nothing ==")
def unit_critic(x):
    s = T.reduce("sum", T.reduce("sum", x, axis=2), axis=1)
    return T.mul(s, 1.0 / np.sqrt(50.0))

with Graph():
    pen = gradient_penalty(unit_critic, Tensor(x_hat_values), 10.0)
print(f"penalty for D(x) = sum(x)/sqrt(n): {pen.item():.2e}  (expect 0)")
