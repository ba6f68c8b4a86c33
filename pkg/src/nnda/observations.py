"""Synthetic station network, noisy observations and the selection operator.

The network is a fixed mask of observed grid points (the analogue of a
radiosonde station list). With the ``alternating`` schedule, odd cycles only
see a smaller sub-mask, mimicking full soundings at 00/12 UTC versus
surface-only reports at 06/18 UTC.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _rng
from .dynamics import StateVector
from .errors import ConfigurationError

EVERY_CYCLE = "every_cycle"
ALTERNATING = "alternating"
SCHEDULES = (EVERY_CYCLE, ALTERNATING)

# surface-only vs full-report station counts in the reference experiment
DEFAULT_OFF_PHASE_FRACTION = 2075 / 12035


@dataclass(frozen=True)
class ObservationNetwork:
    n: int
    observed_indices: tuple
    noise_std: float = 1.0
    schedule: str = EVERY_CYCLE
    off_phase_indices: tuple = ()

    def __post_init__(self):
        idx = tuple(int(i) for i in self.observed_indices)
        off = tuple(int(i) for i in self.off_phase_indices)
        if list(idx) != sorted(set(idx)):
            raise ConfigurationError("observed indices must be unique and sorted")
        if idx and (idx[0] < 0 or idx[-1] >= self.n):
            raise ConfigurationError(f"observed indices must lie in [0, {self.n})")
        if not self.noise_std > 0:
            raise ConfigurationError("noise_std must be positive")
        if self.schedule not in SCHEDULES:
            raise ConfigurationError(f"unknown schedule {self.schedule!r}")
        if self.schedule == ALTERNATING:
            if list(off) != sorted(set(off)) or not set(off) < set(idx):
                raise ConfigurationError("off-phase indices must be a strict sorted subset of the mask")
        object.__setattr__(self, "observed_indices", idx)
        object.__setattr__(self, "off_phase_indices", off)

    def active_indices(self, cycle: int) -> np.ndarray:
        """Grid indices reporting at ``cycle`` (odd cycles are off-phase)."""
        if self.schedule == ALTERNATING and cycle % 2 == 1:
            return np.array(self.off_phase_indices, dtype=np.int64)
        return np.array(self.observed_indices, dtype=np.int64)

    @property
    def identifier(self) -> str:
        text = f"{self.n}|{self.observed_indices}|{self.noise_std!r}|{self.schedule}|{self.off_phase_indices}"
        return hashlib.sha256(text.encode()).hexdigest()[:12]

    def with_mask(self, indices) -> "ObservationNetwork":
        """Copy of the network with another mask (the off-phase mask is cleared)."""
        return ObservationNetwork(self.n, tuple(sorted(indices)), self.noise_std, EVERY_CYCLE)


@dataclass(frozen=True)
class ObservationSet:
    """Observations valid at one cycle.

    ``pseudo`` flags entries that were synthesized by spreading rather than
    measured; measured sets carry all-False flags.
    """

    cycle: int
    indices: np.ndarray
    values: np.ndarray
    error_std: float = 1.0
    network_ref: str = ""
    pseudo: np.ndarray = field(default=None)

    def __post_init__(self):
        idx = np.array(self.indices, dtype=np.int64).reshape(-1)
        val = np.array(self.values, dtype=np.float64).reshape(-1)
        if idx.shape != val.shape:
            raise ConfigurationError("indices and values differ in length")
        if len(np.unique(idx)) != len(idx):
            raise ConfigurationError("duplicate observation index")
        if not np.all(np.isfinite(val)):
            raise ConfigurationError("observation values must be finite")
        flags = np.zeros(idx.shape, bool) if self.pseudo is None else np.array(self.pseudo, dtype=bool).reshape(-1)
        if flags.shape != idx.shape:
            raise ConfigurationError("pseudo flags differ in length")
        for a in (idx, val, flags):
            a.flags.writeable = False
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)
        object.__setattr__(self, "pseudo", flags)

    def __len__(self):
        return self.indices.shape[0]

    @classmethod
    def empty(cls, cycle=0, error_std=1.0):
        return cls(cycle, np.zeros(0, np.int64), np.zeros(0), error_std)

    def subset(self, mask) -> "ObservationSet":
        return ObservationSet(self.cycle, self.indices[mask], self.values[mask], self.error_std,
                              self.network_ref, self.pseudo[mask])


def build_network(n: int, density: float, seed: int, schedule: str = EVERY_CYCLE,
                  noise_std: float = 1.0,
                  off_phase_fraction: float = DEFAULT_OFF_PHASE_FRACTION) -> ObservationNetwork:
    """Sample ``ceil(density * n)`` station locations without replacement.

    For the alternating schedule a further seeded subset of
    ``ceil(off_phase_fraction * stations)`` locations reports on odd cycles
    (capped so that it stays strictly smaller than the full mask).
    """
    if not (0.0 < density <= 1.0):
        raise ConfigurationError(f"density must lie in (0, 1], got {density}")
    count = math.ceil(density * n)
    if count < 1:
        raise ConfigurationError("network would contain no stations")
    rng = np.random.default_rng([seed, n])
    idx = np.sort(rng.choice(n, size=count, replace=False))
    off = ()
    if schedule == ALTERNATING:
        if count < 2:
            raise ConfigurationError("alternating schedule needs at least two stations")
        m = min(max(1, math.ceil(off_phase_fraction * count)), count - 1)
        off = tuple(np.sort(rng.choice(idx, size=m, replace=False)))
    return ObservationNetwork(n, tuple(idx), noise_std, schedule, off)


def noise_draws(net: ObservationNetwork, cycle: int, seed: int) -> np.ndarray:
    """The observation errors of ``cycle`` at the active indices."""
    z = _rng.keyed_normal(seed, _rng.OBSERVATION_NOISE, cycle, 0, net.n)
    return net.noise_std * z[net.active_indices(cycle)]


def observe(x: StateVector, net: ObservationNetwork, cycle: int = 0) -> np.ndarray:
    """Apply the selection operator H: the state at the active stations."""
    if x.n != net.n:
        raise ConfigurationError(f"state length {x.n} does not match network size {net.n}")
    return x.values[net.active_indices(cycle)].copy()


def generate_observations(truth: StateVector, net: ObservationNetwork, cycle: int,
                          seed: int) -> ObservationSet:
    """Truth at the active stations plus seeded Gaussian noise of std ``noise_std``."""
    values = observe(truth, net, cycle) + noise_draws(net, cycle, seed)
    return ObservationSet(cycle, net.active_indices(cycle), values, net.noise_std, net.identifier)


# --- CSV persistence --------------------------------------------------------

def write_observations_csv(path, obs_sets):
    lines = ["cycle,index,value"]
    for obs in obs_sets:
        for i, v in zip(obs.indices, obs.values):
            lines.append(f"{obs.cycle},{int(i)},{float(v)!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_observations_csv(path, error_std=1.0, network_ref="") -> dict[int, ObservationSet]:
    """Parse an observation CSV into ``{cycle: ObservationSet}``."""
    rows = Path(path).read_text().splitlines()
    if not rows or rows[0].strip() != "cycle,index,value":
        raise ConfigurationError(f"{path}: expected header 'cycle,index,value'")
    grouped: dict[int, tuple[list, list]] = {}
    for row in rows[1:]:
        if not row.strip():
            continue
        c, i, v = row.split(",")
        idx, val = grouped.setdefault(int(c), ([], []))
        idx.append(int(i))
        val.append(float(v))
    return {c: ObservationSet(c, np.array(i, np.int64), np.array(v), error_std, network_ref)
            for c, (i, v) in sorted(grouped.items())}


def write_network_csv(path, net: ObservationNetwork):
    off = " ".join(str(i) for i in net.off_phase_indices)
    meta = f"# n={net.n};noise_std={net.noise_std!r};schedule={net.schedule};off_phase={off}"
    lines = [meta, "index"] + [str(i) for i in net.observed_indices]
    Path(path).write_text("\n".join(lines) + "\n")


def read_network_csv(path) -> ObservationNetwork:
    rows = Path(path).read_text().splitlines()
    if not rows or not rows[0].startswith("#"):
        raise ConfigurationError(f"{path}: missing network metadata line")
    meta = dict(item.split("=", 1) for item in rows[0][1:].strip().split(";"))
    off = tuple(int(t) for t in meta.get("off_phase", "").split())
    idx = tuple(int(r) for r in rows[2:] if r.strip())
    return ObservationNetwork(int(meta["n"]), idx, float(meta["noise_std"]), meta["schedule"], off)
