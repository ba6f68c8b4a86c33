import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nnda._kernels import online_epoch
from nnda.errors import ConfigurationError, DivergenceError
from nnda.mlp import (DegenerateFeatureError, MlpNetwork, NormParams, TrainConfig, TrainingSet,
                      activation, backprop_step, denormalize, forward, forward_batch, gradients,
                      load_network, mse, normalize, save_network, train)


def exp_series(x, terms=40):
    """exp(x) from its Taylor series, independent of the math library."""
    total, term = 1.0, 1.0
    for k in range(1, terms):
        term *= x / k
        total += term
    return total


def squared_error(net, x, t):
    return (t - forward(net, x)) ** 2


def fd_gradient(net, x, t, h=1e-6):
    theta = net.flat()
    out = np.empty_like(theta)
    for i in range(theta.size):
        tp, tm = theta.copy(), theta.copy()
        tp[i] += h
        tm[i] -= h
        out[i] = (squared_error(net.with_flat(tp), x, t) - squared_error(net.with_flat(tm), x, t)) / (2 * h)
    return out


def flat_grads(grads):
    return np.concatenate([g.ravel() for g in grads])


# --- activation ------------------------------------------------------------------

def test_activation_zero_and_odd():
    assert activation(0.0) == 0.0
    v = np.linspace(-7, 7, 57)
    assert np.array_equal(activation(-v, 1.3), -activation(v, 1.3))


def test_activation_matches_logistic_form_and_series():
    e = exp_series(-2.0)
    assert activation(1.0, 2.0) == pytest.approx((1 - e) / (1 + e), rel=1e-15)
    assert activation(1.0, 2.0) == pytest.approx(0.7615941559557649, rel=1e-15)
    v = np.linspace(-3, 3, 13)
    a = 0.7
    np.testing.assert_allclose(activation(v, a), (1 - np.exp(-a * v)) / (1 + np.exp(-a * v)), rtol=1e-13,
                               atol=1e-16)


def test_activation_saturates_without_overflow():
    with np.errstate(over="raise"):
        assert activation(1e6) == 1.0 and activation(-1e6) == -1.0


# --- forward ----------------------------------------------------------------------

def test_zero_network():
    assert forward(MlpNetwork.zeros(), [3.0, -2.0]) == 0.0


def test_single_path():
    net = MlpNetwork.zeros()
    net.w_hidden[0] = [1.0, 0.0]
    net.w_out[0, 0] = 1.0
    assert forward(net, [0.5, 123.0]) == activation(0.5)


def test_forward_hand_oracle():
    net = MlpNetwork.random(4)
    x = np.array([0.3, -1.2])
    y = net.b_out[0]
    for j in range(net.n_hidden):
        u = net.w_hidden[j, 0] * x[0] + net.w_hidden[j, 1] * x[1] + net.b_hidden[j]
        e = exp_series(-2.0 * u)
        y += net.w_out[0, j] * (1 - e) / (1 + e)
    assert forward(net, x) == pytest.approx(y, rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10 ** 6), x=st.lists(st.floats(-5, 5), min_size=2, max_size=2))
def test_output_bound(seed, x):
    net = MlpNetwork.random(seed, scale=2.0)
    assert abs(forward(net, x)) <= np.abs(net.w_out).sum() + abs(net.b_out[0]) + 1e-12


# --- gradients ---------------------------------------------------------------------

@pytest.mark.parametrize("seed", range(5))
def test_gradient_vs_finite_differences(seed):
    rng = np.random.default_rng(seed)
    net = MlpNetwork.random(seed, slope=rng.uniform(0.5, 3))
    x, t = rng.normal(size=2), rng.normal()
    g = flat_grads(gradients(net, x, t)[1])
    fd = fd_gradient(net, x, t)
    assert np.max(np.abs(g - fd) / (np.abs(g) + 1e-12)) < 1e-6


def test_zero_error_no_learning():
    net = MlpNetwork.random(1)
    x = [0.4, 0.1]
    new, err = backprop_step(net, x, forward(net, x), 0.1)
    assert err == 0.0
    assert np.array_equal(new.flat(), net.flat())


def test_step_descends():
    net = MlpNetwork.random(2, scale=0.1)
    x, t = [0.2, -0.3], 1.0
    new, err = backprop_step(net, x, t, 1e-3)
    assert err == squared_error(net, x, t)
    assert squared_error(new, x, t) < err


def test_step_does_not_mutate_input():
    net = MlpNetwork.random(3)
    before = net.flat().copy()
    backprop_step(net, [1.0, 1.0], 5.0, 0.1)
    assert np.array_equal(net.flat(), before)


def test_kernel_matches_backprop_step():
    rng = np.random.default_rng(0)
    x, t = rng.normal(size=(50, 2)), rng.normal(size=50)
    order = rng.permutation(50)
    net = MlpNetwork.random(7)
    ref, sse = net, 0.0
    for s in order:
        ref, e = backprop_step(ref, x[s], t[s], 0.01)
        sse += e
    work = net.copy()
    got = online_epoch(*work.parameters(), work.slope, x, t, order, 0.01)
    np.testing.assert_allclose(work.flat(), ref.flat(), rtol=0, atol=1e-12)
    assert got == pytest.approx(sse, rel=1e-12)


# --- normalization -------------------------------------------------------------------

def test_normalize_cases():
    p = NormParams(np.array([2.0, -1.0]), np.array([0.5, 3.0]))
    assert np.array_equal(normalize([2.0, -1.0], p), [0.0, 0.0])
    v = np.random.default_rng(1).normal(size=(100, 2)) * 10
    np.testing.assert_allclose(denormalize(normalize(v, p), p), v, rtol=0, atol=1e-12)


def test_fitted_scaling_standardizes():
    data = np.random.default_rng(2).normal(3, 7, size=(500, 2))
    z = normalize(data, NormParams.fit(data))
    np.testing.assert_allclose(z.mean(0), 0, atol=1e-10)
    np.testing.assert_allclose(z.std(0), 1, atol=1e-10)


def test_zero_std_rejected():
    with pytest.raises(DegenerateFeatureError):
        NormParams(np.zeros(1), np.zeros(1))
    with pytest.raises(DegenerateFeatureError):
        NormParams.fit(np.ones((5, 1)))


# --- training ---------------------------------------------------------------------------

def test_converged_at_first_epoch():
    x = np.random.default_rng(0).normal(size=(30, 2))
    net, epochs, final = train(MlpNetwork.zeros(), TrainingSet(x, np.zeros(30)))
    assert epochs == 1 and final == 0.0


def test_learns_identity_on_forecast():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(200, 2))
    ts = TrainingSet(x, x[:, 1])
    net, epochs, final = train(MlpNetwork.random(0), ts)
    assert epochs <= 5000 and final <= 1e-4
    assert mse(net, ts) <= 1e-4


def test_impossible_runs_to_max_epochs():
    rng = np.random.default_rng(1)
    ts = TrainingSet(rng.normal(size=(40, 2)), rng.normal(size=40))
    cfg = TrainConfig(max_epochs=300)
    _, epochs, final = train(MlpNetwork.random(0), ts, cfg)
    assert epochs == 300 and final > cfg.error_goal


def test_patience_stops_on_plateau():
    rng = np.random.default_rng(1)
    ts = TrainingSet(rng.normal(size=(40, 2)), rng.normal(size=40))
    _, epochs, _ = train(MlpNetwork.random(0), ts, TrainConfig(max_epochs=5000, patience=5))
    assert epochs < 5000


def test_training_deterministic_and_pure():
    rng = np.random.default_rng(3)
    ts = TrainingSet(rng.normal(size=(60, 2)), rng.normal(size=60))
    net0 = MlpNetwork.random(5)
    before = net0.flat().copy()
    cfg = TrainConfig(max_epochs=20, shuffle_seed=9)
    a = train(net0, ts, cfg)
    b = train(net0, ts, cfg)
    assert np.array_equal(a[0].flat(), b[0].flat()) and a[1:] == b[1:]
    assert np.array_equal(net0.flat(), before)
    c = train(net0, ts, TrainConfig(max_epochs=20, shuffle_seed=10))
    assert not np.array_equal(a[0].flat(), c[0].flat())


def test_batch_mode_descends():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(100, 2))
    ts = TrainingSet(x, 0.5 * x[:, 0] - x[:, 1])
    start = mse(MlpNetwork.random(1), ts)
    net, _, _ = train(MlpNetwork.random(1), ts, TrainConfig(mode="batch", learning_rate=0.05, max_epochs=200))
    assert mse(net, ts) < start


def test_training_errors():
    with pytest.raises(ConfigurationError):
        train(MlpNetwork.random(0), TrainingSet(np.zeros((0, 2)), np.zeros(0)))
    rng = np.random.default_rng(0)
    x = rng.normal(size=(200, 2))
    ts = TrainingSet(x, 50 * x[:, 1] + rng.normal(size=200))
    with pytest.raises(DivergenceError, match="epoch"):
        train(MlpNetwork.random(0), ts, TrainConfig(learning_rate=50.0))
    with pytest.raises(ConfigurationError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(ConfigurationError):
        TrainConfig(error_goal=0.0)


def test_weight_file_round_trip(tmp_path):
    net = MlpNetwork.random(8, slope=1.5)
    save_network(tmp_path / "w.bin", net)
    back = load_network(tmp_path / "w.bin")
    assert np.array_equal(back.flat(), net.flat()) and back.slope == 1.5
    raw = (tmp_path / "w.bin").read_bytes()
    assert np.frombuffer(raw[8:40], "<i8").tolist() == [1, 2, 11, 1]
    assert len(raw) == 48 + 8 * (22 + 11 + 11 + 1)
    (tmp_path / "bad.bin").write_bytes(raw[:20])
    with pytest.raises(ConfigurationError):
        load_network(tmp_path / "bad.bin")


def test_forward_batch_matches_forward():
    net = MlpNetwork.random(9)
    x = np.random.default_rng(0).normal(size=(10, 2))
    # BLAS may block the batched product differently, so only rounding-level agreement
    np.testing.assert_allclose(forward_batch(net, x), [forward(net, r) for r in x], rtol=1e-14, atol=1e-15)
