"""Synthetic station network and noisy observations of a truth state."""
import numpy as np

from nnda.dynamics import ModelSpec, StateVector, integrate
from nnda.observations import build_network, generate_observations, noise_draws, observe

spec = ModelSpec()
truth = integrate(spec, StateVector(8.0 + 0.01 * np.arange(spec.n)), 500)

net = build_network(spec.n, density=0.5, seed=1, noise_std=1.0)
print("stations:", net.observed_indices)

obs = generate_observations(truth, net, cycle=0, seed=1)
print("first five observations vs truth:")
for i, v in list(zip(obs.indices, obs.values))[:5]:
    print(f"  x[{i:2d}] truth {truth.values[i]:7.3f}  observed {v:7.3f}")

# errors are keyed by (seed, cycle, grid index), so they can be rebuilt exactly
eps = noise_draws(net, 0, seed=1)
print("noise reconstructed:", np.array_equal(obs.values, observe(truth, net) + eps))

errs = np.concatenate([generate_observations(truth, net, c, 1).values - observe(truth, net) for c in range(1000)])
print("error std over %d draws: %.4f" % (errs.size, errs.std()))

# the alternating schedule reports from a smaller sub-network on odd cycles
alt = build_network(spec.n, 0.5, 1, schedule="alternating")
print("alternating schedule sizes:", [len(generate_observations(truth, alt, c, 1)) for c in range(4)])
