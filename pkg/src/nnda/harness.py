"""Twin-experiment driver: truth run, LETKF training period, emulator
training and the NN-versus-LETKF hindcast with quality and timing reports.

Cycle bookkeeping: cycle 0 is the first truth state after spin-up. The
training window is ``[0, cycles.training)`` and the hindcast window is
``[cycles.training, cycles.training + cycles.hindcast)``. Every cycle's
analysis only sees that cycle's observations and the forecast issued from
the previous cycle.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _rng
from .config import ExperimentManifest
from .dynamics import (LORENZ96, StateVector, forecast_cycle, integrate, integrate_array)
from .emulator import (EmulatorSet, harvest_training_data, nn_analysis, spread_observations,
                       train_emulator)
from .errors import ConfigurationError, DivergenceError, IntegrationBlowupError
from .letkf import AnalysisProduct, Ensemble, initial_ensemble, letkf_analysis
from .observations import (ObservationNetwork, ObservationSet, build_network,
                           generate_observations)

log = logging.getLogger(__name__)

METHOD_NN = "mlp-nn"
METHOD_LETKF = "letkf"
CSV_HEADER = "cycle,method,rmse_analysis,rmse_forecast,mean_abs_diff,analysis_seconds,cycle_seconds,obs_count"

DIVERGENCE_FACTOR = 10.0
DIVERGENCE_RUN = 20


def rmse(a, b, mask=None) -> float:
    """Root-mean-square difference of two states, optionally over a subset of indices."""
    va = a.values if isinstance(a, StateVector) else np.asarray(a, dtype=np.float64)
    vb = b.values if isinstance(b, StateVector) else np.asarray(b, dtype=np.float64)
    if va.shape != vb.shape:
        raise ConfigurationError(f"dimension mismatch: {va.shape} vs {vb.shape}")
    d = va - vb
    if mask is not None:
        d = d[mask]
    return float(np.sqrt(np.mean(d * d)))


def climatological_std(truth) -> float:
    return float(np.std(np.stack([s.values for s in truth])))


# --- truth and observations -------------------------------------------------

def initial_truth(m: ExperimentManifest) -> StateVector:
    spec = m.model_spec()
    z = _rng.keyed_normal(m.seed, _rng.TRUTH_INIT, 0, 0, spec.n)
    base = np.full(spec.n, spec.forcing) if spec.kind == LORENZ96 else np.ones(spec.n)
    return StateVector(base + 0.01 * z, 0)


def run_truth(m: ExperimentManifest, n_cycles: int | None = None) -> list[StateVector]:
    """Spin up, then store one truth state per cycle (``time_index`` = cycle)."""
    spec = m.model_spec()
    n_cycles = m.total_cycles if n_cycles is None else n_cycles
    x = initial_truth(m)
    try:
        x = integrate(spec, x, m.cycles.spin_up * spec.steps_per_cycle)
    except IntegrationBlowupError as exc:
        raise IntegrationBlowupError(exc.step, f"truth blew up during spin-up (step {exc.step})") from exc
    states = [StateVector(x.values, 0)]
    for c in range(1, n_cycles):
        try:
            states.append(forecast_cycle(spec, states[-1]))
        except IntegrationBlowupError as exc:
            raise IntegrationBlowupError(exc.step, f"truth blew up in cycle {c}") from exc
    return states


def build_experiment_network(m: ExperimentManifest) -> ObservationNetwork:
    o = m.observations
    return build_network(m.model.n, o.density, m.seed, o.schedule, o.noise_std, o.off_phase_fraction)


def generate_all_observations(m: ExperimentManifest, truth, net: ObservationNetwork):
    return [generate_observations(x, net, c, m.seed) for c, x in enumerate(truth)]


# --- LETKF training period --------------------------------------------------

@dataclass
class LetkfArchive:
    forecast_means: list = field(default_factory=list)
    analysis_means: list = field(default_factory=list)
    observations: list = field(default_factory=list)
    analysis_rmse: list = field(default_factory=list)
    forecast_rmse: list = field(default_factory=list)
    final: AnalysisProduct | None = None

    def harvest_input(self):
        return list(zip(self.forecast_means, self.observations, self.analysis_means))


def run_letkf_period(m: ExperimentManifest, truth, observations, start: int = 0,
                     n_cycles: int | None = None, ensemble: Ensemble | None = None,
                     workers: int = 1, clim_std: float | None = None) -> LetkfArchive:
    """Intermittent LETKF cycling over ``[start, start + n_cycles)``.

    Without ``ensemble`` the cycle starts from the truth at ``start`` plus
    seeded perturbations; otherwise ``ensemble`` is the analysis of the
    previous cycle and is forecast first.
    """
    spec, cfg = m.model_spec(), m.letkf_config()
    n_cycles = m.cycles.training if n_cycles is None else n_cycles
    clim = climatological_std(truth) if clim_std is None else clim_std
    archive = LetkfArchive()
    bad_run = 0
    for c in range(start, start + n_cycles):
        if ensemble is None:
            forecast = initial_ensemble(truth[c], m.letkf.ensemble_size, m.letkf.init_spread, m.seed)
            forecast = Ensemble(forecast.members, c)
        else:
            try:
                forecast = Ensemble(integrate_array(spec, ensemble.members, spec.steps_per_cycle), c)
            except IntegrationBlowupError as exc:
                raise IntegrationBlowupError(exc.step, f"ensemble forecast blew up in cycle {c}") from exc
        product = letkf_analysis(forecast, observations[c], cfg, workers=workers)
        ensemble = product.analysis_ensemble
        archive.forecast_means.append(product.forecast_mean)
        archive.analysis_means.append(product.analysis_mean)
        archive.observations.append(observations[c])
        archive.analysis_rmse.append(rmse(product.analysis_mean, truth[c]))
        archive.forecast_rmse.append(rmse(product.forecast_mean, truth[c]))
        archive.final = product
        bad_run = bad_run + 1 if archive.analysis_rmse[-1] > DIVERGENCE_FACTOR * clim else 0
        if bad_run >= DIVERGENCE_RUN:
            raise DivergenceError(f"LETKF diverged: analysis RMSE above {DIVERGENCE_FACTOR} x climatological "
                                  f"std for {DIVERGENCE_RUN} cycles ending at cycle {c}")
    return archive


def train_experiment_emulator(m: ExperimentManifest, archive: LetkfArchive, workers: int = 1) -> EmulatorSet:
    partition, pseudo = m.partition(), m.pseudo_config()
    sets = harvest_training_data(archive.harvest_input(), partition, pseudo)
    provenance = {"training_cycles": [0, len(archive.observations)], "seed": m.seed}
    return train_emulator(sets, partition, pseudo, m.train_config(), seed=m.seed, slope=m.emulator.slope,
                          n_hidden=m.emulator.n_hidden, workers=workers, provenance=provenance)


# --- hindcast -----------------------------------------------------------------

@dataclass
class CycleReport:
    cycle: int
    method: str
    rmse_analysis: float
    rmse_forecast: float
    mean_abs_diff: float
    analysis_seconds: float
    cycle_seconds: float
    obs_count: int

    @property
    def forecast_seconds(self):
        return self.cycle_seconds - self.analysis_seconds

    def csv_row(self, timings=True) -> str:
        t = (f"{self.analysis_seconds!r},{self.cycle_seconds!r}" if timings else ",")
        return (f"{self.cycle},{self.method},{self.rmse_analysis!r},{self.rmse_forecast!r},"
                f"{self.mean_abs_diff!r},{t},{self.obs_count}")


def _mean_abs(a, b, idx):
    if len(idx) == 0:
        return math.nan
    return float(np.mean(np.abs(a.values[idx] - b.values[idx])))


def run_nn_period(m: ExperimentManifest, emulator: EmulatorSet, start_state: StateVector, truth,
                  observations, letkf_ensemble: Ensemble | None = None, start: int | None = None,
                  n_cycles: int | None = None, workers: int = 1) -> list[CycleReport]:
    """Cycle the emulator: analysis, single model forecast, next cycle.

    ``start_state`` is the analysis of the cycle before ``start``. When
    ``letkf_ensemble`` (the matching LETKF analysis ensemble) is given, an
    independent LETKF cycle runs alongside on the same observations.

    ``mean_abs_diff`` on NN rows is the emulation difference: the networks
    applied to the LETKF cycle's forecast mean and observations versus the
    LETKF analysis mean, over (pseudo-)observed points. On LETKF rows it is
    the difference between the two independently cycled analyses over the
    same points.
    """
    spec, cfg, pseudo = m.model_spec(), m.letkf_config(), m.pseudo_config()
    start = m.cycles.training if start is None else start
    n_cycles = m.cycles.hindcast if n_cycles is None else n_cycles
    reports = []
    xa = start_state
    ens = letkf_ensemble
    for c in range(start, start + n_cycles):
        obs = observations[c]
        t0 = time.perf_counter()
        try:
            xf = StateVector(integrate_array(spec, xa.values, spec.steps_per_cycle), c)
        except IntegrationBlowupError as exc:
            raise IntegrationBlowupError(exc.step, f"NN cycle forecast blew up in cycle {c}") from exc
        t1 = time.perf_counter()
        xa = nn_analysis(emulator, xf, obs)
        t2 = time.perf_counter()
        points = spread_observations(obs, pseudo, spec.n).indices
        nn_row = CycleReport(c, METHOD_NN, rmse(xa, truth[c]), rmse(xf, truth[c]), math.nan,
                             t2 - t1, t2 - t0, len(points))
        reports.append(nn_row)
        if ens is not None:
            t0 = time.perf_counter()
            try:
                forecast = Ensemble(integrate_array(spec, ens.members, spec.steps_per_cycle), c)
            except IntegrationBlowupError as exc:
                raise IntegrationBlowupError(exc.step, f"LETKF forecast blew up in cycle {c}") from exc
            t1 = time.perf_counter()
            product = letkf_analysis(forecast, obs, cfg, workers=workers)
            t2 = time.perf_counter()
            ens = product.analysis_ensemble
            emulated = nn_analysis(emulator, product.forecast_mean, obs)
            nn_row.mean_abs_diff = _mean_abs(emulated, product.analysis_mean, points)
            reports.append(CycleReport(c, METHOD_LETKF, rmse(product.analysis_mean, truth[c]),
                                       rmse(product.forecast_mean, truth[c]),
                                       _mean_abs(product.analysis_mean, xa, points),
                                       t2 - t1, t2 - t0, len(obs)))
    return reports


# --- reporting ----------------------------------------------------------------

def write_report_csv(path, reports, timings=True):
    lines = [CSV_HEADER] + [r.csv_row(timings) for r in reports]
    Path(path).write_text("\n".join(lines) + "\n")


def read_report_csv(path) -> list[CycleReport]:
    rows = Path(path).read_text().splitlines()
    if not rows or rows[0] != CSV_HEADER:
        raise ConfigurationError(f"{path}: unexpected report header")
    out = []
    for row in rows[1:]:
        c, meth, ra, rf, md, ta, tc, oc = row.split(",")
        out.append(CycleReport(int(c), meth, float(ra), float(rf), float(md), float(ta), float(tc), int(oc)))
    return out


def timing_report(reports) -> dict:
    """Totals and means of analysis, forecast and cycle time per method.

    The first (warm-up) cycle of each method is excluded. Speedup ratios
    (LETKF over NN) are present only when both methods were timed.
    """
    by_method: dict[str, list[CycleReport]] = {}
    for r in reports:
        by_method.setdefault(r.method, []).append(r)
    summary: dict = {"methods": {}}
    for method, rows in sorted(by_method.items()):
        rows = sorted(rows, key=lambda r: r.cycle)
        timed = rows[1:] if len(rows) > 1 else rows
        ana = sum(r.analysis_seconds for r in timed)
        fc = sum(r.forecast_seconds for r in timed)
        ensemble = fc if method == METHOD_LETKF else 0.0
        single = fc if method != METHOD_LETKF else 0.0
        summary["methods"][method] = {
            "cycles_timed": len(timed),
            "analysis_total": ana,
            "analysis_mean": ana / len(timed),
            "ensemble_total": ensemble,
            "single_model_total": single,
            "total": ana + fc,
            "total_mean": (ana + fc) / len(timed),
            "rmse_analysis_mean": float(np.mean([r.rmse_analysis for r in rows])),
            "rmse_forecast_mean": float(np.mean([r.rmse_forecast for r in rows])),
            "mean_abs_diff_mean": float(np.nanmean([r.mean_abs_diff for r in rows]))
            if any(not math.isnan(r.mean_abs_diff) for r in rows) else math.nan,
        }
    methods = summary["methods"]
    if METHOD_NN in methods and METHOD_LETKF in methods:
        nn, lk = methods[METHOD_NN], methods[METHOD_LETKF]
        summary["speedup_analysis"] = lk["analysis_total"] / nn["analysis_total"]
        summary["speedup_total"] = lk["total"] / nn["total"]
    return summary


def format_summary(summary: dict) -> str:
    """``key = value`` text rendering of :func:`timing_report` output."""
    lines = []
    for method, stats in summary["methods"].items():
        for k, v in stats.items():
            lines.append(f"{method}.{k} = {v!r}")
    for k in ("speedup_analysis", "speedup_total"):
        if k in summary:
            lines.append(f"{k} = {summary[k]!r}")
    return "\n".join(lines) + "\n"


# --- whole experiment -----------------------------------------------------------

@dataclass
class ExperimentResult:
    manifest: ExperimentManifest
    truth: list
    network: ObservationNetwork
    observations: list
    archive: LetkfArchive
    emulator: EmulatorSet
    reports: list
    clim_std: float

    @property
    def summary(self):
        return timing_report(self.reports)


def run_experiment(m: ExperimentManifest, workers: int = 1) -> ExperimentResult:
    truth = run_truth(m)
    clim = climatological_std(truth)
    net = build_experiment_network(m)
    obs = generate_all_observations(m, truth, net)
    log.info("LETKF period: %d cycles", m.cycles.training)
    archive = run_letkf_period(m, truth, obs, workers=workers, clim_std=clim)
    log.info("training %d networks", m.emulator.n_regions)
    emu = train_experiment_emulator(m, archive, workers=workers)
    ens = archive.final.analysis_ensemble if m.compare_letkf else None
    reports = run_nn_period(m, emu, archive.analysis_means[-1], truth, obs, ens, workers=workers)
    return ExperimentResult(m, truth, net, obs, archive, emu, reports, clim)
