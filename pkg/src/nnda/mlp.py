"""Two-input, one-hidden-layer perceptron trained by the delta rule.

Hidden units use the slope-``a`` hyperbolic tangent
``phi(v) = (1 - exp(-a v)) / (1 + exp(-a v))``; the single output unit is
linear so that (normalized) analysis values are not clipped to (-1, 1).

Error convention: for one pattern ``E = (d - y)**2`` and every update is
``w <- w - eta * dE/dw`` with the exact gradient (including the factor 2).
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import _rng
from ._kernels import online_epoch
from .errors import ConfigurationError, DivergenceError

N_IN = 2
N_HIDDEN = 11
N_OUT = 1

ONLINE = "online"
BATCH = "batch"


class DegenerateFeatureError(ConfigurationError):
    """A feature has zero spread and cannot be standardized."""


@dataclass
class MlpNetwork:
    w_hidden: np.ndarray  # (n_hidden, n_in)
    b_hidden: np.ndarray  # (n_hidden,)
    w_out: np.ndarray     # (n_out, n_hidden)
    b_out: np.ndarray     # (n_out,)
    slope: float = 2.0

    def __post_init__(self):
        self.w_hidden = np.array(self.w_hidden, dtype=np.float64).reshape(-1, N_IN)
        h = self.w_hidden.shape[0]
        self.b_hidden = np.array(self.b_hidden, dtype=np.float64).reshape(h)
        self.w_out = np.array(self.w_out, dtype=np.float64).reshape(-1, h)
        self.b_out = np.array(self.b_out, dtype=np.float64).reshape(self.w_out.shape[0])
        if not self.slope > 0:
            raise ConfigurationError("activation slope must be positive")
        if not all(np.all(np.isfinite(p)) for p in self.parameters()):
            raise ConfigurationError("network weights must be finite")

    @property
    def n_hidden(self):
        return self.w_hidden.shape[0]

    @property
    def n_out(self):
        return self.w_out.shape[0]

    def parameters(self):
        return self.w_hidden, self.b_hidden, self.w_out, self.b_out

    def copy(self) -> "MlpNetwork":
        return MlpNetwork(*(p.copy() for p in self.parameters()), slope=self.slope)

    def flat(self) -> np.ndarray:
        """All weights in file order: hidden weights, hidden biases, output weights, output bias."""
        return np.concatenate([p.ravel() for p in self.parameters()])

    def with_flat(self, theta) -> "MlpNetwork":
        theta = np.asarray(theta, dtype=np.float64)
        out, pos = [], 0
        for p in self.parameters():
            out.append(theta[pos:pos + p.size].reshape(p.shape))
            pos += p.size
        return MlpNetwork(*out, slope=self.slope)

    @classmethod
    def zeros(cls, n_hidden=N_HIDDEN, slope=2.0):
        return cls(np.zeros((n_hidden, N_IN)), np.zeros(n_hidden), np.zeros((N_OUT, n_hidden)),
                   np.zeros(N_OUT), slope)

    @classmethod
    def random(cls, seed, n_hidden=N_HIDDEN, slope=2.0, scale=0.5, key=(0, 0)):
        """Weights and biases uniform in ``[-scale, scale]``.

        ``key`` (e.g. region and variable) selects an independent stream so
        every network of a set starts from different weights.
        """
        rng = _rng.keyed_generator(seed, _rng.NETWORK_INIT, *key)
        return cls(rng.uniform(-scale, scale, (n_hidden, N_IN)), rng.uniform(-scale, scale, n_hidden),
                   rng.uniform(-scale, scale, (N_OUT, n_hidden)), rng.uniform(-scale, scale, N_OUT),
                   slope)


@dataclass(frozen=True)
class TrainConfig:
    """Delta-rule settings.

    ``patience`` enables an optional plateau stop (off by default): training
    also ends once the epoch error has not improved by a relative
    ``min_improvement`` for ``patience`` consecutive epochs.
    """

    learning_rate: float = 0.001
    max_epochs: int = 5000
    error_goal: float = 1e-5
    shuffle_seed: int = 0
    mode: str = ONLINE
    patience: int | None = None
    min_improvement: float = 1e-2

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigurationError("learning_rate must be positive")
        if not self.error_goal > 0:
            raise ConfigurationError("error_goal must be positive")
        if self.max_epochs < 1:
            raise ConfigurationError("max_epochs must be >= 1")
        if self.mode not in (ONLINE, BATCH):
            raise ConfigurationError(f"unknown training mode {self.mode!r}")
        if self.patience is not None and self.patience < 1:
            raise ConfigurationError("patience must be >= 1 when set")


@dataclass(frozen=True)
class NormParams:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.array(self.mean, dtype=np.float64))
        std = np.atleast_1d(np.array(self.std, dtype=np.float64))
        if mean.shape != std.shape:
            raise ConfigurationError("mean and std shapes differ")
        if not np.all(std > 0):
            raise DegenerateFeatureError("normalization std must be positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @classmethod
    def fit(cls, data, constant_ok=False) -> "NormParams":
        """Column means and population stds of ``data``.

        A constant column raises unless ``constant_ok``, in which case it is
        only centred (std set to 1).
        """
        data = np.asarray(data, dtype=np.float64)
        if data.shape[0] < 1:
            raise DegenerateFeatureError("cannot fit scalings on no data")
        std = data.std(axis=0)
        if np.any(std == 0):
            if not constant_ok:
                raise DegenerateFeatureError("cannot standardize a constant feature")
            std = np.where(std == 0, 1.0, std)
        return cls(data.mean(axis=0), std)

    def to_dict(self):
        return {"mean": [float(v) for v in self.mean], "std": [float(v) for v in self.std]}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["mean"]), np.array(d["std"]))


def normalize(x, params: NormParams):
    return (np.asarray(x, dtype=np.float64) - params.mean) / params.std


def denormalize(z, params: NormParams):
    return np.asarray(z, dtype=np.float64) * params.std + params.mean


@dataclass(frozen=True)
class TrainingSet:
    """Raw (observation, forecast) -> analysis pairs with fitted scalings."""

    inputs: np.ndarray
    targets: np.ndarray
    input_norm: NormParams = field(default=None)
    target_norm: NormParams = field(default=None)

    def __post_init__(self):
        x = np.array(self.inputs, dtype=np.float64).reshape(-1, N_IN)
        t = np.array(self.targets, dtype=np.float64).reshape(-1)
        if x.shape[0] != t.shape[0]:
            raise ConfigurationError("inputs and targets differ in length")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(t))):
            raise ConfigurationError("training data must be finite")
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "targets", t)
        if self.input_norm is None and len(t):
            object.__setattr__(self, "input_norm", NormParams.fit(x, constant_ok=True))
        if self.target_norm is None and len(t):
            object.__setattr__(self, "target_norm", NormParams.fit(t[:, None], constant_ok=True))

    def __len__(self):
        return self.targets.shape[0]

    def scaled(self):
        """``(inputs, targets)`` standardized with the stored parameters."""
        return (normalize(self.inputs, self.input_norm),
                normalize(self.targets[:, None], self.target_norm)[:, 0])


# --- network evaluation -----------------------------------------------------

def activation(v, a=2.0):
    """``(1 - exp(-a v)) / (1 + exp(-a v))``, evaluated as ``tanh(a v / 2)``.

    The tanh form is algebraically identical and saturates to +-1 without
    overflowing for large ``|a v|``.
    """
    return np.tanh(0.5 * a * np.asarray(v, dtype=np.float64))


def activation_derivative(v, a=2.0):
    phi = activation(v, a)
    return 0.5 * a * (1.0 - phi * phi)


def forward_batch(net: MlpNetwork, inputs) -> np.ndarray:
    """Outputs for an ``(N, 2)`` array of inputs, shape ``(N,)`` (single output unit)."""
    x = np.asarray(inputs, dtype=np.float64).reshape(-1, N_IN)
    h = activation(x @ net.w_hidden.T + net.b_hidden, net.slope)
    return (h @ net.w_out.T + net.b_out)[:, 0]


def forward(net: MlpNetwork, x) -> float:
    return float(forward_batch(net, x)[0])


def gradients(net: MlpNetwork, x, target):
    """Output and exact gradients of ``E = (target - y)**2`` for one pattern."""
    x = np.asarray(x, dtype=np.float64).reshape(N_IN)
    u = net.w_hidden @ x + net.b_hidden
    h = activation(u, net.slope)
    y = float(net.w_out[0] @ h + net.b_out[0])
    err = target - y
    g_out = -2.0 * err
    # hidden deltas: back-propagated output error times phi'(u)
    delta = g_out * net.w_out[0] * (0.5 * net.slope * (1.0 - h * h))
    grads = (np.outer(delta, x), delta, g_out * h[None, :], np.array([g_out]))
    return y, grads


def backprop_step(net: MlpNetwork, x, target, eta):
    """One delta-rule update on a single pattern.

    Returns ``(updated copy, squared error before the update)``.
    """
    y, grads = gradients(net, x, target)
    new = MlpNetwork(*(p - eta * g for p, g in zip(net.parameters(), grads)), slope=net.slope)
    return new, (target - y) ** 2


# --- training ---------------------------------------------------------------

def _batch_epoch(params, slope, x, t, eta):
    w, b, w2, b2 = params
    u = x @ w.T + b
    h = np.tanh(0.5 * slope * u)
    y = h @ w2[0] + b2[0]
    err = t - y
    g_out = -2.0 * err / len(t)
    delta = np.outer(g_out, w2[0]) * (0.5 * slope * (1.0 - h * h))
    w -= eta * (delta.T @ x)
    b -= eta * delta.sum(axis=0)
    w2 -= eta * (g_out @ h)[None, :]
    b2 -= eta * g_out.sum()
    return float(np.sum(err * err))


def train(net: MlpNetwork, ts: TrainingSet, cfg: TrainConfig = TrainConfig(), stream=()):
    """Train a private copy of ``net`` on the standardized training set.

    One epoch is a pass over every pattern (in a freshly shuffled order for
    online mode). Training stops as soon as the epoch-mean squared error
    reaches ``cfg.error_goal`` or after ``cfg.max_epochs`` epochs.

    ``stream`` is mixed into the shuffle seed so that networks trained with
    one config draw different orders.

    Returns ``(trained network, epochs_run, final_mse)``.
    """
    if len(ts) == 0:
        raise ConfigurationError("training set is empty")
    x, t = ts.scaled()
    work = net.copy()
    params = work.parameters()
    rng = np.random.default_rng([cfg.shuffle_seed, *stream])
    best, stale = math.inf, 0
    mse = math.inf
    for epoch in range(1, cfg.max_epochs + 1):
        if cfg.mode == ONLINE:
            order = rng.permutation(len(t))
            sse = online_epoch(*params, work.slope, x, t, order, cfg.learning_rate)
        else:
            sse = _batch_epoch(params, work.slope, x, t, cfg.learning_rate)
        mse = sse / len(t)
        if not math.isfinite(mse) or not all(np.all(np.isfinite(p)) for p in params):
            raise DivergenceError(f"training diverged at epoch {epoch}")
        if mse <= cfg.error_goal:
            break
        if cfg.patience is not None:
            if mse < best * (1.0 - cfg.min_improvement):
                best, stale = mse, 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    break
    return work, epoch, mse


def mse(net: MlpNetwork, ts: TrainingSet) -> float:
    """Mean squared error of ``net`` on the standardized set."""
    x, t = ts.scaled()
    return float(np.mean((forward_batch(net, x) - t) ** 2))


# --- persistence ------------------------------------------------------------

WEIGHTS_MAGIC = int.from_bytes(b"NNDAMLP\0", "little")
WEIGHTS_VERSION = 1
_WHEADER = struct.Struct("<qqqqqd")


def network_bytes(net: MlpNetwork) -> bytes:
    """Header ``<magic, version, n_in, n_hidden, n_out>`` int64 + slope float64, then weights."""
    header = _WHEADER.pack(WEIGHTS_MAGIC, WEIGHTS_VERSION, N_IN, net.n_hidden, net.n_out, net.slope)
    return header + net.flat().astype("<f8").tobytes()


def network_from_bytes(buf: bytes) -> MlpNetwork:
    if len(buf) < _WHEADER.size:
        raise ConfigurationError("truncated weight file")
    magic, version, n_in, n_hidden, n_out, slope = _WHEADER.unpack_from(buf)
    if magic != WEIGHTS_MAGIC or version != WEIGHTS_VERSION:
        raise ConfigurationError("not a version-1 weight file")
    if n_in != N_IN or n_out != N_OUT:
        raise ConfigurationError(f"unsupported layout n_in={n_in} n_out={n_out}")
    count = n_hidden * n_in + n_hidden + n_out * n_hidden + n_out
    theta = np.frombuffer(buf, dtype="<f8", count=count, offset=_WHEADER.size).astype(np.float64)
    return MlpNetwork.zeros(n_hidden, slope).with_flat(theta)


def save_network(path, net: MlpNetwork):
    Path(path).write_bytes(network_bytes(net))


def load_network(path) -> MlpNetwork:
    return network_from_bytes(Path(path).read_bytes())
