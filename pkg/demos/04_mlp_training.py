"""The 2-11-1 perceptron: gradient check, delta-rule training and the stop rule."""
import numpy as np

from nnda.mlp import MlpNetwork, TrainConfig, TrainingSet, forward, gradients, train

net = MlpNetwork.random(seed=0)
x, t = np.array([0.4, -1.1]), 0.7

# analytic gradient of E = (t - y)^2 against central differences
g = np.concatenate([p.ravel() for p in gradients(net, x, t)[1]])
theta, h = net.flat(), 1e-6
fd = np.empty_like(theta)
for i in range(theta.size):
    tp, tm = theta.copy(), theta.copy()
    tp[i] += h
    tm[i] -= h
    fd[i] = ((t - forward(net.with_flat(tp), x)) ** 2 - (t - forward(net.with_flat(tm), x)) ** 2) / (2 * h)
print("gradient check, max relative error: %.1e" % np.max(np.abs(g - fd) / (np.abs(g) + 1e-12)))

rng = np.random.default_rng(1)
inputs = rng.normal(size=(300, 2))

# an affine target the network can represent: stops once the epoch mse reaches 1e-5
easy = TrainingSet(inputs, 0.3 * inputs[:, 0] + 0.7 * inputs[:, 1])
_, epochs, mse = train(net, easy, TrainConfig(learning_rate=0.01))
print(f"affine target: stopped after {epochs} epochs at mse {mse:.2e}")

# noise targets never reach the goal, so training runs the full 5000 epochs
hard = TrainingSet(inputs, rng.normal(size=300))
_, epochs, mse = train(net, hard)
print(f"noise target:  stopped after {epochs} epochs at mse {mse:.3f}")

# the optional plateau stop ends training when progress stalls
_, epochs, mse = train(net, hard, TrainConfig(patience=3))
print(f"noise target with plateau stop: {epochs} epochs, mse {mse:.3f}")
