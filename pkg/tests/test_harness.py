import math

import numpy as np
import pytest

from nnda import harness
from nnda.dynamics import StateVector, integrate_array
from nnda.emulator import EmulatorSet, PseudoObsConfig, RegionPartition
from nnda.errors import ConfigurationError, DivergenceError
from nnda.mlp import TrainConfig
from nnda.observations import ObservationSet


def test_rmse_cases():
    rng = np.random.default_rng(0)
    a = rng.normal(size=40)
    assert harness.rmse(a, a) == 0.0
    assert harness.rmse(a, a + 0.75) == pytest.approx(0.75, rel=1e-14)
    b = rng.normal(size=40)
    s = 0.0
    for u, v in zip(a, b):
        s += (u - v) ** 2
    assert harness.rmse(StateVector(a), StateVector(b)) == pytest.approx(math.sqrt(s / 40), rel=1e-13)
    assert harness.rmse(a, b, [1, 5]) == pytest.approx(math.sqrt(((a[1] - b[1]) ** 2 + (a[5] - b[5]) ** 2) / 2))
    with pytest.raises(ConfigurationError):
        harness.rmse(a, b[:3])


def test_truth_counting_and_determinism(small_manifest):
    m = small_manifest("cycles.spin_up=0")
    one = harness.run_truth(m, n_cycles=1)
    assert len(one) == 1 and one[0].time_index == 0
    a, b = harness.run_truth(m), harness.run_truth(m)
    assert len(a) == m.total_cycles
    assert [s.time_index for s in a] == list(range(m.total_cycles))
    assert all(np.array_equal(x.values, y.values) for x, y in zip(a, b))
    other = harness.run_truth(small_manifest(seed=2))
    assert not np.array_equal(a[-1].values, other[-1].values)


def test_truth_bounded_long_run(small_manifest):
    truth = harness.run_truth(small_manifest(), n_cycles=10 ** 4)
    x = np.stack([s.values for s in truth])
    assert np.all(np.isfinite(x)) and np.abs(x).max() < 25
    assert 3.0 < harness.climatological_std(truth) < 4.3


def test_strong_constraint_collapse(small_manifest):
    m = small_manifest("observations.density=1.0", "observations.noise_std=0.001")
    truth = harness.run_truth(m)
    obs = harness.generate_all_observations(m, truth, harness.build_experiment_network(m))
    arch = harness.run_letkf_period(m, truth, obs, n_cycles=60)
    assert arch.analysis_rmse[0] < arch.forecast_rmse[0]
    assert np.mean(arch.analysis_rmse[-10:]) < 0.01


def test_free_run_saturates(small_manifest):
    m = small_manifest("cycles.training=300")
    truth = harness.run_truth(m)
    clim = harness.climatological_std(truth)
    empty = [ObservationSet.empty(c) for c in range(m.total_cycles)]
    arch = harness.run_letkf_period(m, truth, empty)
    late = np.mean(arch.analysis_rmse[-100:])
    assert arch.analysis_rmse[0] < 0.5
    assert late > 0.8 * clim


def test_divergence_detected(small_manifest):
    m = small_manifest()
    truth = harness.run_truth(m)
    empty = [ObservationSet.empty(c) for c in range(m.total_cycles)]
    with pytest.raises(DivergenceError, match="20 cycles"):
        harness.run_letkf_period(m, truth, empty, clim_std=1e-6)


def test_no_leakage_into_past_analyses(small_manifest):
    m = small_manifest()
    truth = harness.run_truth(m)
    obs = harness.generate_all_observations(m, truth, harness.build_experiment_network(m))
    cut = 80
    bent = obs[:cut] + [ObservationSet(o.cycle, o.indices, o.values + 5.0, o.error_std) for o in obs[cut:]]
    a = harness.run_letkf_period(m, truth, obs)
    b = harness.run_letkf_period(m, truth, bent)
    for c in range(cut):
        assert np.array_equal(a.analysis_means[c].values, b.analysis_means[c].values)
    assert not np.array_equal(a.analysis_means[cut].values, b.analysis_means[cut].values)


@pytest.fixture(scope="module")
def small_result():
    from nnda.config import load_config
    m = load_config(None, ["cycles.spin_up=100", "cycles.training=150", "cycles.hindcast=12",
                           "training.max_epochs=15", "letkf.ensemble_size=10"])
    return harness.run_experiment(m)


def test_report_rows(small_result):
    m = small_result.manifest
    reports = small_result.reports
    for method in (harness.METHOD_NN, harness.METHOD_LETKF):
        rows = [r for r in reports if r.method == method]
        assert [r.cycle for r in rows] == list(range(m.cycles.training, m.total_cycles))
    assert all(r.rmse_analysis >= 0 and r.analysis_seconds > 0 and r.cycle_seconds >= r.analysis_seconds
               for r in reports)
    solo = harness.run_nn_period(m, small_result.emulator, small_result.archive.analysis_means[-1],
                                 small_result.truth, small_result.observations)
    assert len(solo) == m.cycles.hindcast
    assert [r.rmse_analysis for r in solo] == [r.rmse_analysis for r in reports if r.method == harness.METHOD_NN]


def test_nn_rows_use_real_plus_pseudo_points(small_result):
    m = small_result.manifest
    for r in small_result.reports:
        obs = small_result.observations[r.cycle]
        if r.method == harness.METHOD_LETKF:
            assert r.obs_count == len(obs)
        else:
            assert r.obs_count > len(obs) and not math.isnan(r.mean_abs_diff)


def test_passthrough_emulator_is_free_run(small_result):
    m = small_result.manifest
    emu = EmulatorSet(RegionPartition(40, 6), PseudoObsConfig(), TrainConfig())
    start = small_result.archive.analysis_means[-1]
    empty = [ObservationSet.empty(c) for c in range(m.total_cycles)]
    reports = harness.run_nn_period(m, emu, start, small_result.truth, empty)
    x = start.values
    for r in reports:
        x = integrate_array(m.model_spec(), x, 1)
        assert r.rmse_analysis == harness.rmse(x, small_result.truth[r.cycle].values)


def test_report_csv_round_trip(small_result, tmp_path):
    harness.write_report_csv(tmp_path / "r.csv", small_result.reports)
    back = harness.read_report_csv(tmp_path / "r.csv")
    assert back == small_result.reports
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == harness.CSV_HEADER and len(lines) == 1 + len(small_result.reports)


def test_timing_report(small_result):
    s = harness.timing_report(small_result.reports)
    nn, lk = s["methods"][harness.METHOD_NN], s["methods"][harness.METHOD_LETKF]
    assert nn["cycles_timed"] == small_result.manifest.cycles.hindcast - 1
    assert nn["ensemble_total"] == 0.0 and lk["ensemble_total"] > 0
    assert lk["single_model_total"] == 0.0 and nn["single_model_total"] > 0
    assert s["speedup_analysis"] == lk["analysis_total"] / nn["analysis_total"]
    partial = harness.timing_report([r for r in small_result.reports if r.method == harness.METHOD_NN])
    assert "speedup_analysis" not in partial and "speedup_total" not in partial
    assert partial["methods"][harness.METHOD_NN]["analysis_total"] == nn["analysis_total"]
    text = harness.format_summary(s)
    assert "speedup_total = " in text and "mlp-nn.analysis_total = " in text
