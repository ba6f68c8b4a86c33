"""Ensemble statistics and the local ensemble transform Kalman filter.

The analysis at each grid point is solved in the k-dimensional space spanned
by the forecast perturbations, using only the observations inside the
localization window around that point (Hunt et al. 2007 formulation)::

    A    = (k-1) I + Yb^T R^-1 Yb          (k x k, eigendecomposed)
    wbar = A^-1 Yb^T R^-1 (y - H xbar)
    Wa   = [(k-1) A^-1]^(1/2)              (symmetric square root)
    xa_j = xbar + X' (wbar + Wa[:, j])

With a selection operator H the observation-space perturbations ``Yb`` are
just the forecast perturbations at the observed indices.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _rng
from .dynamics import StateVector
from .errors import ConfigurationError, DegenerateEnsembleError, NumericalError
from .observations import ObservationSet

TAPER_NONE = "none"
TAPER_GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class Ensemble:
    """k model states stored row-wise in a ``(k, n)`` array."""

    members: np.ndarray
    time_index: int = 0

    def __post_init__(self):
        m = np.array(self.members, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] < 1:
            raise ConfigurationError("ensemble members must form a (k, n) array with k >= 1")
        m.flags.writeable = False
        object.__setattr__(self, "members", m)

    @property
    def k(self):
        return self.members.shape[0]

    @property
    def n(self):
        return self.members.shape[1]

    @classmethod
    def from_states(cls, states):
        states = list(states)
        return cls(np.stack([s.values for s in states]), states[0].time_index)

    def member(self, j) -> StateVector:
        return StateVector(self.members[j], self.time_index)


@dataclass(frozen=True)
class LetkfConfig:
    localization_radius: int = 3
    inflation: float = 1.05
    additive_std: float = 0.0
    obs_error_std: float = 1.0
    taper: str = TAPER_NONE
    seed: int = 0

    def __post_init__(self):
        if self.localization_radius < 0:
            raise ConfigurationError("localization_radius must be >= 0")
        if self.inflation < 1.0:
            raise ConfigurationError("inflation factor must be >= 1")
        if self.additive_std < 0:
            raise ConfigurationError("additive_std must be >= 0")
        if not self.obs_error_std > 0:
            raise ConfigurationError("obs_error_std must be positive")
        if self.taper not in (TAPER_NONE, TAPER_GAUSSIAN):
            raise ConfigurationError(f"unknown taper {self.taper!r}")


@dataclass(frozen=True)
class AnalysisProduct:
    analysis_ensemble: Ensemble
    analysis_mean: StateVector
    forecast_mean: StateVector
    # per-point analysis variance implied by the transform, diag of X' A^-1 X'^T
    analysis_variance: np.ndarray


def ensemble_mean(e: Ensemble) -> StateVector:
    return StateVector(e.members.mean(axis=0), e.time_index)


def ensemble_covariance(e: Ensemble) -> np.ndarray:
    """Sample covariance ``(k-1)^-1 sum (x - xbar)(x - xbar)^T``."""
    if e.k < 2:
        raise DegenerateEnsembleError(f"covariance needs at least two members, got {e.k}")
    a = e.members - e.members.mean(axis=0)
    return a.T @ a / (e.k - 1)


def initial_ensemble(state: StateVector, k: int, std: float, seed: int) -> Ensemble:
    """``k`` members scattered around ``state`` with seeded Gaussian noise."""
    if k < 2:
        raise DegenerateEnsembleError("an ensemble needs at least two members")
    noise = np.stack([_rng.keyed_normal(seed, _rng.ENSEMBLE_INIT, 0, j, state.n) for j in range(k)])
    return Ensemble(state.values + std * noise, state.time_index)


def cyclic_distance(i, j, n):
    d = np.abs(np.asarray(i) - np.asarray(j)) % n
    return np.minimum(d, n - d)


def local_patch(center: int, rho: int, n: int, obs: ObservationSet | None = None):
    """Grid indices within cyclic distance ``rho`` of ``center`` and the obs among them.

    Returns ``(indices, local_obs)``; indices are sorted, ``local_obs`` is
    None when no observation set was given.
    """
    if not 0 <= center < n:
        raise ConfigurationError(f"center {center} outside [0, {n})")
    if rho >= n // 2:
        idx = np.arange(n)
    else:
        idx = np.sort((center + np.arange(-rho, rho + 1)) % n)
    if obs is None:
        return idx, None
    return idx, obs.subset(np.isin(obs.indices, idx))


def apply_inflation(e: Ensemble, cfg: LetkfConfig, cycle: int | None = None) -> Ensemble:
    """Multiplicative inflation about the mean, then mean-free additive noise.

    The additive noise for member ``j`` is keyed by ``(cfg.seed, cycle, j)``;
    ``cycle`` defaults to the ensemble's time index.
    """
    if cfg.inflation == 1.0 and cfg.additive_std == 0.0:
        return e
    x = e.members
    mean = x.mean(axis=0)
    out = mean + cfg.inflation * (x - mean)
    if cfg.additive_std > 0:
        c = e.time_index if cycle is None else cycle
        noise = np.stack([_rng.keyed_normal(cfg.seed, _rng.ADDITIVE_INFLATION, c, j, e.n)
                          for j in range(e.k)])
        noise -= noise.mean(axis=0)
        out = out + cfg.additive_std * noise
    return Ensemble(out, e.time_index)


def _obs_weights(cfg: LetkfConfig, dist: np.ndarray) -> np.ndarray:
    """Diagonal of R^-1 for the local observations at cyclic distances ``dist``."""
    w = np.full(dist.shape, 1.0 / cfg.obs_error_std**2)
    if cfg.taper == TAPER_GAUSSIAN and cfg.localization_radius > 0:
        scale = cfg.localization_radius / 2.0
        w *= np.exp(-0.5 * (dist / scale) ** 2)
    return w


def _analyze_points(points, x, xp, xmean, yb, innov, obs_idx, cfg, n):
    """Transform update for a block of grid points.

    Returns ``(members, means, variances)`` with one column per point.
    """
    k = xp.shape[0]
    members = np.empty((k, len(points)))
    means = np.empty(len(points))
    variances = np.empty(len(points))
    eye = (k - 1) * np.eye(k)
    for col, i in enumerate(points):
        dist = cyclic_distance(obs_idx, i, n)
        local = dist <= cfg.localization_radius
        xi = xp[:, i]
        if not local.any():
            members[:, col] = x[:, i]
            means[col] = xmean[i]
            variances[col] = xi @ xi / (k - 1)
            continue
        yl = yb[:, local]
        c = yl * _obs_weights(cfg, dist[local])
        a = eye + c @ yl.T
        try:
            lam, q = np.linalg.eigh(a)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"eigen-decomposition failed at grid point {i}") from exc
        if not np.all(lam > 0):
            raise NumericalError(f"non-positive transform eigenvalue at grid point {i}")
        pa = (q / lam) @ q.T
        wbar = pa @ (c @ innov[local])
        wa = (q * np.sqrt((k - 1) / lam)) @ q.T
        members[:, col] = xmean[i] + xi @ (wa + wbar[:, None])
        means[col] = xmean[i] + xi @ wbar
        variances[col] = xi @ pa @ xi
    return members, means, variances


def letkf_analysis(forecast: Ensemble, obs: ObservationSet, cfg: LetkfConfig,
                   workers: int = 1) -> AnalysisProduct:
    """Local ensemble transform analysis of ``forecast`` given ``obs``.

    Each grid point is analysed independently, so the points can be split
    across ``workers`` threads; the result does not depend on the split.
    """
    if forecast.k < 2:
        raise DegenerateEnsembleError("LETKF needs at least two members")
    if not np.all(np.isfinite(forecast.members)):
        raise ConfigurationError("forecast ensemble contains non-finite values")
    n = forecast.n
    if len(obs) and (obs.indices.min() < 0 or obs.indices.max() >= n):
        raise ConfigurationError("observation index outside the grid")

    forecast_mean = ensemble_mean(forecast)
    inflated = apply_inflation(forecast, cfg)
    x = inflated.members
    xmean = x.mean(axis=0)
    xp = x - xmean
    yb = xp[:, obs.indices]
    innov = obs.values - xmean[obs.indices]

    points = np.arange(n)
    if workers > 1 and n > 1:
        blocks = np.array_split(points, min(workers, n))
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(
                lambda b: _analyze_points(b, x, xp, xmean, yb, innov, obs.indices, cfg, n), blocks))
        members = np.concatenate([p[0] for p in parts], axis=1)
        means = np.concatenate([p[1] for p in parts])
        variances = np.concatenate([p[2] for p in parts])
    else:
        members, means, variances = _analyze_points(points, x, xp, xmean, yb, innov, obs.indices, cfg, n)

    analysis = Ensemble(members, forecast.time_index)
    return AnalysisProduct(analysis, StateVector(means, forecast.time_index), forecast_mean, variances)
