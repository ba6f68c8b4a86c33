"""Train the regional emulators on LETKF analyses and cycle them through a hindcast.

A reduced window keeps this under a minute; the acceptance suite runs the
full 1200 + 112 cycle experiment.

The networks reproduce the LETKF analysis of a given forecast closely, but
once they are cycled on their own output the error grows towards
climatology: pseudo-observations copied from a station one or two points
away carry almost no information on Lorenz-96.
"""
import numpy as np

from nnda import harness
from nnda.config import load_config
from nnda.emulator import spread_observations

m = load_config(None, ["cycles.training=600", "cycles.hindcast=112", "training.max_epochs=300"])
res = harness.run_experiment(m)

obs = res.observations[m.cycles.training]
aug = spread_observations(obs, m.pseudo_config(), m.model.n)
print(f"{len(obs)} stations become {len(aug)} analysed points with {m.pseudo_obs.layers} layers of pseudo-observations")
for key, tn in sorted(res.emulator.networks.items()):
    print(f"  region {key[0]}: {tn.samples} samples, {tn.epochs} epochs, normalized mse {tn.final_mse:.4f}")

nn = [r for r in res.reports if r.method == harness.METHOD_NN]
lk = [r for r in res.reports if r.method == harness.METHOD_LETKF]
print("emulation difference (networks vs LETKF on the same forecast): %.3f" % np.mean([r.mean_abs_diff for r in nn]))
print("hindcast analysis RMSE  NN %.3f   LETKF %.3f   climatological std %.3f"
      % (np.mean([r.rmse_analysis for r in nn]), np.mean([r.rmse_analysis for r in lk]), res.clim_std))
print()
print(harness.format_summary(res.summary), end="")
