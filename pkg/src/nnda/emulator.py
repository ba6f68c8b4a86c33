"""Neural emulation of the LETKF analysis: x_a = F_NN(y_o, x_f), point by point.

The grid is split into contiguous regions and each (region, variable) pair
gets its own small perceptron. Observations are spread to nearby unobserved
points as pseudo-observations so that the networks also correct the
neighbourhood of each station.

Pseudo-observation weighting, on a grid whose points have ``C`` face
neighbours (``C = 2`` on a ring)::

    raw = y_src / ((C - gamma) r_src**2) + sum_l alpha_l y_l / r_l**2

``y_src`` is the nearest real observation, ``alpha_l`` flags neighbour
directions holding a real observation and ``gamma = sum alpha_l``. With
``normalize=True`` (default) ``raw`` is divided by the total applied weight,
which turns it into a weighted mean of the contributing observations.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import mlp
from .dynamics import StateVector
from .errors import ConfigurationError, NndaError, StateError
from .letkf import cyclic_distance
from .mlp import MlpNetwork, NormParams, TrainConfig, TrainingSet
from .observations import ObservationSet

GAMMA_SKIP = "skip"
GAMMA_NEIGHBOURS = "neighbours"


@dataclass(frozen=True)
class RegionPartition:
    """Contiguous ring segments of nearly equal length."""

    n: int
    n_regions: int = 6

    def __post_init__(self):
        if not 1 <= self.n_regions <= self.n:
            raise ConfigurationError(f"n_regions must lie in [1, {self.n}]")

    @property
    def assignment(self) -> np.ndarray:
        out = np.empty(self.n, dtype=np.int64)
        for r, seg in enumerate(np.array_split(np.arange(self.n), self.n_regions)):
            out[seg] = r
        return out

    def region_of(self, i) -> int:
        return int(self.assignment[i])

    def indices(self, region) -> np.ndarray:
        return np.flatnonzero(self.assignment == region)


@dataclass(frozen=True)
class PseudoObsConfig:
    layers: int = 2
    neighbour_count: int = 2
    normalize: bool = True
    gamma_rule: str = GAMMA_SKIP

    def __post_init__(self):
        if self.layers < 0:
            raise ConfigurationError("layers must be >= 0")
        if self.neighbour_count != 2:
            raise ConfigurationError("only the ring grid (2 neighbours) is supported")
        if self.gamma_rule not in (GAMMA_SKIP, GAMMA_NEIGHBOURS):
            raise ConfigurationError(f"unknown gamma_rule {self.gamma_rule!r}")


def spread_observations(obs: ObservationSet, cfg: PseudoObsConfig, n: int) -> ObservationSet:
    """Add pseudo-observations at unobserved points within ``cfg.layers`` of a station.

    Real observations pass through unchanged; pseudo values are computed
    from real observations only (pseudo values never feed further layers).
    A point whose neighbour directions all hold observations
    (``gamma == C``) receives nothing under the default ``skip`` rule.
    """
    if cfg.layers == 0 or len(obs) == 0:
        return obs
    real = obs.subset(~obs.pseudo)
    idx, val = real.indices, real.values
    c = cfg.neighbour_count

    observed = np.zeros(n, dtype=bool)
    observed[idx] = True
    value_at = np.zeros(n)
    value_at[idx] = val

    points = np.arange(n)
    dist = cyclic_distance(points[:, None], idx[None, :], n)
    src = np.argmin(dist, axis=1)  # ties go to the lower grid index (idx is sorted)
    r = dist[points, src]
    left, right = (points - 1) % n, (points + 1) % n
    alpha = np.stack([observed[left], observed[right]], axis=1).astype(np.float64)
    gamma = alpha.sum(axis=1)

    cand = ~observed & (r <= cfg.layers)
    if cfg.gamma_rule == GAMMA_SKIP:
        cand &= gamma < c
    pts = np.flatnonzero(cand)
    if np.any(r[pts] == 0):
        raise NndaError("pseudo-observation source coincides with its target point")

    neigh_vals = np.stack([value_at[left[pts]], value_at[right[pts]]], axis=1)
    # neighbour directions sit at unit distance, so r_l**2 == 1
    neigh_w = alpha[pts]
    with np.errstate(divide="ignore"):
        w_src = np.where(gamma[pts] < c, 1.0 / ((c - gamma[pts]) * r[pts] ** 2.0), 0.0)
    raw = w_src * val[src[pts]] + np.sum(neigh_w * neigh_vals, axis=1)
    pseudo_vals = raw / (w_src + neigh_w.sum(axis=1)) if cfg.normalize else raw

    all_idx = np.concatenate([idx, pts])
    all_val = np.concatenate([val, pseudo_vals])
    flags = np.concatenate([np.zeros(len(idx), bool), np.ones(len(pts), bool)])
    order = np.argsort(all_idx, kind="stable")
    return ObservationSet(obs.cycle, all_idx[order], all_val[order], obs.error_std,
                          obs.network_ref, flags[order])


def harvest_training_data(letkf_run, partition: RegionPartition, pseudo_cfg: PseudoObsConfig,
                          variable: int = 0) -> dict[tuple[int, int], TrainingSet]:
    """Collect (observation, forecast mean) -> analysis mean samples per region.

    ``letkf_run`` yields ``(forecast_mean, observations, analysis_mean)``
    per cycle. One sample is taken at every point holding a real or
    pseudo-observation and routed to the region of that point.
    """
    assignment = partition.assignment
    buckets = {r: ([], []) for r in range(partition.n_regions)}
    for xf, obs, xa in letkf_run:
        if xf.n != partition.n or xa.n != partition.n:
            raise ConfigurationError("cycle fields do not match the partition grid")
        aug = spread_observations(obs, pseudo_cfg, partition.n)
        i = aug.indices
        regions = assignment[i]
        feats = np.stack([aug.values, xf.values[i]], axis=1)
        targets = xa.values[i]
        for r in np.unique(regions):
            sel = regions == r
            buckets[int(r)][0].append(feats[sel])
            buckets[int(r)][1].append(targets[sel])
    sets = {}
    for r, (feats, targets) in buckets.items():
        if not feats:
            raise ConfigurationError(f"no training samples harvested for region {r}")
        sets[(r, variable)] = TrainingSet(np.concatenate(feats), np.concatenate(targets))
    return sets


@dataclass
class TrainedNetwork:
    net: MlpNetwork
    input_norm: NormParams
    target_norm: NormParams
    epochs: int = 0
    final_mse: float = float("nan")
    samples: int = 0


@dataclass
class EmulatorSet:
    """One trained perceptron per (region, variable) plus the shared settings."""

    partition: RegionPartition
    pseudo_cfg: PseudoObsConfig
    train_cfg: TrainConfig
    networks: dict = field(default_factory=dict)
    variables: tuple = ("x",)
    provenance: dict = field(default_factory=dict)

    @property
    def expected_keys(self):
        return [(r, v) for r in range(self.partition.n_regions) for v in range(len(self.variables))]

    @property
    def is_trained(self):
        return all(k in self.networks for k in self.expected_keys)


def train_emulator(sets, partition: RegionPartition, pseudo_cfg: PseudoObsConfig,
                   train_cfg: TrainConfig, seed: int = 0, slope: float = 2.0,
                   n_hidden: int = mlp.N_HIDDEN, workers: int = 1,
                   provenance: dict | None = None) -> EmulatorSet:
    """Train every (region, variable) network independently."""

    def job(key):
        ts = sets[key]
        net0 = MlpNetwork.random(seed, n_hidden=n_hidden, slope=slope, key=key)
        net, epochs, final = mlp.train(net0, ts, train_cfg, stream=key)
        return key, TrainedNetwork(net, ts.input_norm, ts.target_norm, epochs, final, len(ts))

    keys = sorted(sets)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, keys))
    else:
        results = [job(k) for k in keys]
    emu = EmulatorSet(partition, pseudo_cfg, train_cfg, dict(results), provenance=dict(provenance or {}))
    if not emu.is_trained:
        missing = sorted(set(emu.expected_keys) - set(emu.networks))
        raise ConfigurationError(f"no training data for networks {missing}")
    return emu


def nn_analysis(emu: EmulatorSet, forecast_mean: StateVector, obs: ObservationSet,
                pseudo_cfg: PseudoObsConfig | None = None,
                partition: RegionPartition | None = None, variable: int = 0) -> StateVector:
    """Assemble the global analysis from the regional networks.

    Points without an observation or pseudo-observation keep the forecast
    value bit-for-bit.
    """
    pseudo_cfg = pseudo_cfg or emu.pseudo_cfg
    partition = partition or emu.partition
    xf = forecast_mean.values
    out = xf.copy()
    if len(obs) == 0:
        return StateVector(out, forecast_mean.time_index)
    aug = spread_observations(obs, pseudo_cfg, partition.n)
    regions = partition.assignment[aug.indices]
    for r in np.unique(regions):
        key = (int(r), variable)
        tn = emu.networks.get(key)
        if tn is None:
            raise StateError(f"network for region {key[0]}, variable {variable} is not trained")
        sel = regions == r
        pts = aug.indices[sel]
        z = mlp.normalize(np.stack([aug.values[sel], xf[pts]], axis=1), tn.input_norm)
        out[pts] = mlp.denormalize(mlp.forward_batch(tn.net, z)[:, None], tn.target_norm)[:, 0]
    return StateVector(out, forecast_mean.time_index)


# --- persistence ------------------------------------------------------------

MANIFEST = "manifest.json"


def _net_file(key):
    return f"net_r{key[0]}_v{key[1]}.bin"


def save_emulator(directory, emu: EmulatorSet):
    """Write one weight file per network plus ``manifest.json``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    entries = []
    for key in sorted(emu.networks):
        tn = emu.networks[key]
        mlp.save_network(d / _net_file(key), tn.net)
        entries.append({"region": key[0], "variable": key[1], "file": _net_file(key),
                        "input_norm": tn.input_norm.to_dict(), "target_norm": tn.target_norm.to_dict(),
                        "epochs": tn.epochs, "final_mse": tn.final_mse, "samples": tn.samples})
    manifest = {
        "format": "nnda-emulator/1",
        "partition": asdict(emu.partition),
        "pseudo_obs": asdict(emu.pseudo_cfg),
        "train": asdict(emu.train_cfg),
        "variables": list(emu.variables),
        "networks": entries,
        "provenance": emu.provenance,
    }
    (d / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_emulator(directory) -> EmulatorSet:
    d = Path(directory)
    path = d / MANIFEST
    if not path.exists():
        raise ConfigurationError(f"missing emulator manifest {path}")
    m = json.loads(path.read_text())
    emu = EmulatorSet(RegionPartition(**m["partition"]), PseudoObsConfig(**m["pseudo_obs"]),
                      TrainConfig(**m["train"]), variables=tuple(m["variables"]),
                      provenance=m.get("provenance", {}))
    for e in m["networks"]:
        emu.networks[(e["region"], e["variable"])] = TrainedNetwork(
            mlp.load_network(d / e["file"]), NormParams.from_dict(e["input_norm"]),
            NormParams.from_dict(e["target_norm"]), e["epochs"], e["final_mse"], e["samples"])
    return emu
