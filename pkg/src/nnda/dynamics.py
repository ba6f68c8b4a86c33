"""Chaotic surrogate forecast models and a fixed-step RK4 integrator.

Two systems are available: the Lorenz-96 ring (default, 40 points, F=8) and
Lorenz-63 for small smoke tests. States are plain float64 arrays wrapped in
:class:`StateVector`; batched integration over an ensemble works on any
``(..., n)`` array.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, IntegrationBlowupError

LORENZ96 = "lorenz96"
LORENZ63 = "lorenz63"

# Lorenz-63 classical parameters
L63_SIGMA = 10.0
L63_RHO = 28.0
L63_BETA = 8.0 / 3.0


@dataclass(frozen=True)
class ModelSpec:
    kind: str = LORENZ96
    n: int = 40
    forcing: float = 8.0
    dt: float = 0.05
    steps_per_cycle: int = 1

    def __post_init__(self):
        if self.kind not in (LORENZ96, LORENZ63):
            raise ConfigurationError(f"unknown model kind {self.kind!r}")
        if self.kind == LORENZ96 and self.n < 4:
            raise ConfigurationError("lorenz96 needs n >= 4 for the cyclic coupling")
        if self.kind == LORENZ63 and self.n != 3:
            raise ConfigurationError("lorenz63 has dimension 3")
        if not self.dt > 0:
            raise ConfigurationError("dt must be positive")
        if self.steps_per_cycle < 1:
            raise ConfigurationError("steps_per_cycle must be >= 1")

    @classmethod
    def lorenz63(cls, dt=0.01, steps_per_cycle=8):
        return cls(kind=LORENZ63, n=3, forcing=0.0, dt=dt, steps_per_cycle=steps_per_cycle)


@dataclass(frozen=True)
class StateVector:
    """Model state on the grid at a given cycle."""

    values: np.ndarray
    time_index: int = 0

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 1:
            raise ConfigurationError("state values must be one-dimensional")
        if not np.all(np.isfinite(v)):
            raise ConfigurationError("state values must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def n(self):
        return self.values.shape[0]

    def __len__(self):
        return self.values.shape[0]


def _check_dim(spec, x):
    if x.shape[-1] != spec.n:
        raise ConfigurationError(f"state has length {x.shape[-1]}, model expects {spec.n}")


def _rate(spec, x):
    if spec.kind == LORENZ96:
        # dx_i/dt = (x_{i+1} - x_{i-2}) x_{i-1} - x_i + F
        return (np.roll(x, -1, axis=-1) - np.roll(x, 2, axis=-1)) * np.roll(x, 1, axis=-1) - x + spec.forcing
    a, b, c = x[..., 0], x[..., 1], x[..., 2]
    return np.stack([L63_SIGMA * (b - a), a * (L63_RHO - c) - b, a * b - L63_BETA * c], axis=-1)


def tendency(spec: ModelSpec, x) -> np.ndarray:
    """Time derivative of ``x`` (a StateVector or an ``(..., n)`` array)."""
    arr = x.values if isinstance(x, StateVector) else np.asarray(x, dtype=np.float64)
    _check_dim(spec, arr)
    return _rate(spec, arr)


def rk4_step(f, x, dt):
    """One classical fourth-order Runge-Kutta step of ``dx/dt = f(x)``."""
    k1 = f(x)
    k2 = f(x + 0.5 * dt * k1)
    k3 = f(x + 0.5 * dt * k2)
    k4 = f(x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_array(spec: ModelSpec, x: np.ndarray, n_steps: int) -> np.ndarray:
    """Advance an ``(..., n)`` array by ``n_steps`` RK4 steps.

    Raises :class:`IntegrationBlowupError` naming the first step (1-based)
    that produced a non-finite value.
    """
    if n_steps < 0:
        raise ConfigurationError("n_steps must be >= 0")
    x = np.array(x, dtype=np.float64)
    _check_dim(spec, x)

    def f(s):
        return _rate(spec, s)

    for step in range(1, n_steps + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            x = rk4_step(f, x, spec.dt)
        if not np.all(np.isfinite(x)):
            raise IntegrationBlowupError(step)
    return x


def integrate(spec: ModelSpec, x: StateVector, n_steps: int) -> StateVector:
    """Advance a state by ``n_steps`` steps of size ``spec.dt``.

    ``time_index`` counts integration steps, so a forecast over one cycle
    adds ``spec.steps_per_cycle``; callers that track cycles set it directly.
    """
    if n_steps == 0:
        return x
    return StateVector(integrate_array(spec, x.values, n_steps), x.time_index + n_steps)


def forecast_cycle(spec: ModelSpec, x: StateVector) -> StateVector:
    """Forecast one assimilation cycle ahead; ``time_index`` advances by one cycle."""
    out = integrate_array(spec, x.values, spec.steps_per_cycle)
    return StateVector(out, x.time_index + 1)


# --- snapshot persistence -------------------------------------------------

SNAPSHOT_MAGIC = int.from_bytes(b"NNDASNAP", "little")
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<qqqq")


def snapshot_bytes(x: StateVector) -> bytes:
    """Encode a state as ``<magic, version, n, time_index>`` int64 header plus float64 values."""
    header = _HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, x.n, x.time_index)
    return header + x.values.astype("<f8").tobytes()


def snapshot_from_bytes(buf: bytes, offset: int = 0) -> tuple[StateVector, int]:
    """Decode one record starting at ``offset``; returns the state and the next offset."""
    if len(buf) - offset < _HEADER.size:
        raise ConfigurationError("truncated snapshot header")
    magic, version, n, time_index = _HEADER.unpack_from(buf, offset)
    if magic != SNAPSHOT_MAGIC:
        raise ConfigurationError("bad snapshot magic")
    if version != SNAPSHOT_VERSION:
        raise ConfigurationError(f"unsupported snapshot version {version}")
    start = offset + _HEADER.size
    end = start + 8 * n
    if len(buf) < end:
        raise ConfigurationError("truncated snapshot payload")
    values = np.frombuffer(buf, dtype="<f8", count=n, offset=start).astype(np.float64)
    return StateVector(values, time_index), end


def write_snapshot(path, x: StateVector):
    Path(path).write_bytes(snapshot_bytes(x))


def read_snapshot(path) -> StateVector:
    state, _ = snapshot_from_bytes(Path(path).read_bytes())
    return state


def write_snapshot_series(path, states):
    """Concatenate several snapshot records into a single file."""
    Path(path).write_bytes(b"".join(snapshot_bytes(s) for s in states))


def read_snapshot_series(path) -> list[StateVector]:
    buf = Path(path).read_bytes()
    out, offset = [], 0
    while offset < len(buf):
        state, offset = snapshot_from_bytes(buf, offset)
        out.append(state)
    return out


def write_states_csv(path, states):
    """Plain-text mirror of snapshot records: ``time_index,x0,...,x{n-1}``."""
    states = list(states)
    n = states[0].n if states else 0
    lines = ["time_index," + ",".join(f"x{i}" for i in range(n))]
    for s in states:
        lines.append(f"{s.time_index}," + ",".join(repr(float(v)) for v in s.values))
    Path(path).write_text("\n".join(lines) + "\n")


def read_states_csv(path) -> list[StateVector]:
    rows = Path(path).read_text().splitlines()[1:]
    out = []
    for row in rows:
        parts = row.split(",")
        out.append(StateVector(np.array([float(p) for p in parts[1:]]), int(parts[0])))
    return out
