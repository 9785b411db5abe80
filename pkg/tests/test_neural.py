import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from csipred.errors import ConfigurationError, DomainError, TrainingError
from csipred.neural import (Adam, NeuralModel, TrainConfig, counted_forward, forward, gradient_check, gradients,
                            inject_gradient_fault, loss, parameter_shapes, train)
from csipred.predictors import PredictorSpec, build_windows, flops

from conftest import ar1

KINDS = ["dnn", "gru", "lstm"]


def randomised(kind, p, d, out, seed):
    m = NeuralModel(kind, p, d, out, seed=seed)
    rng = np.random.default_rng(seed + 100)
    for k in m.params:
        m.params[k] = rng.normal(scale=0.8, size=m.params[k].shape)
    return m


def test_shapes():
    s = parameter_shapes("gru", 4, 16, 3)
    assert s["Wz"] == (16, 16) and s["Uz"] == (16,) and s["Wy"] == (3, 16)
    assert parameter_shapes("dnn", 4, 8, 3) == {"W1": (8, 4), "b1": (8,), "W2": (3, 8), "b2": (3,)}
    assert len(parameter_shapes("lstm", 2, 2, 1)) == 14
    with pytest.raises(DomainError):
        parameter_shapes("rnn", 1, 1, 1)


def test_initialisation_bounds_and_determinism():
    a = NeuralModel("gru", 4, 16, 3, seed=1)
    b = NeuralModel("gru", 4, 16, 3, seed=1)
    np.testing.assert_array_equal(a.flat(), b.flat())
    assert np.all(np.abs(a.params["Wz"]) <= 1 / 4) and np.all(a.params["bz"] == 0)
    assert np.all(np.abs(a.params["Uz"]) <= 1.0)
    x = np.random.default_rng(0).normal(size=(5, 4))
    np.testing.assert_array_equal(forward(a, x), forward(b, x))


@pytest.mark.parametrize("kind", KINDS)
def test_zero_parameters_give_zero_output(kind):
    m = NeuralModel(kind, 3, 4, 2)
    for k in m.params:
        m.params[k][...] = 0.0
    np.testing.assert_array_equal(forward(m, np.random.default_rng(0).normal(size=(6, 3))), 0.0)


def test_dnn_hand_calculation():
    m = NeuralModel("dnn", 2, 2, 1)
    m.params["W1"][...] = 0.0
    m.params["b1"][...] = [0.5, -0.25]
    m.params["W2"][...] = [[1.0, 2.0]]
    m.params["b2"][...] = [0.1]
    expected = np.tanh(0.5) + 2 * np.tanh(-0.25) + 0.1
    assert forward(m, np.array([3.0, -7.0]))[0, 0] == pytest.approx(expected)


def test_gru_single_step_by_hand():
    m = NeuralModel("gru", 1, 1, 1)
    p = m.params
    p["Uz"][:] = 0.3; p["Wz"][:] = 0.0; p["bz"][:] = 0.1
    p["Ur"][:] = 0.0; p["Wr"][:] = 0.0; p["br"][:] = 0.0
    p["Uh"][:] = 0.7; p["Wh"][:] = 0.0; p["bh"][:] = -0.2
    p["Wy"][:] = 1.0; p["by"][:] = 0.0
    x = 0.9
    z = 1 / (1 + np.exp(-(0.3 * x + 0.1)))
    h = z * np.tanh(0.7 * x - 0.2)
    assert forward(m, np.array([x]))[0, 0] == pytest.approx(h)


def test_recurrent_feed_is_oldest_first():
    # a GRU that copies its input through the update gate remembers the newest sample
    m = NeuralModel("gru", 3, 1, 1)
    for k in m.params:
        m.params[k][...] = 0.0
    m.params["bz"][:] = 30.0  # z = 1: h' = candidate
    m.params["Uh"][:] = 1.0
    m.params["Wy"][:] = 1.0
    out = forward(m, np.array([0.2, -0.5, 0.4]))[0, 0]
    assert out == pytest.approx(np.tanh(0.2), abs=1e-9)


def test_input_shape_checked():
    with pytest.raises(DomainError):
        forward(NeuralModel("dnn", 3, 2, 1), np.zeros((2, 4)))


def test_loss_values():
    assert loss([[1.0, 2.0]], [[1.0, 2.0]]) == 0.0
    assert loss([1.0], [0.0]) == 1.0
    assert loss([[1.0, 2.0]], [[0.0, 0.0]]) == 2.5
    with pytest.raises(DomainError):
        loss([1.0, 2.0], [1.0])


def test_batch_loss_permutation_invariant():
    rng = np.random.default_rng(3)
    m = NeuralModel("lstm", 4, 5, 3, seed=2)
    x, y = rng.normal(size=(64, 4)), rng.normal(size=(64, 3))
    perm = rng.permutation(64)
    assert abs(loss(forward(m, x), y) - loss(forward(m, x[perm]), y[perm])) < 1e-12


def test_zero_model_zero_gradients():
    m = NeuralModel("dnn", 3, 4, 2)
    for k in m.params:
        m.params[k][...] = 0.0
    _, g = gradients(m, np.zeros((5, 3)), np.zeros((5, 2)))
    assert all(np.all(v == 0) for v in g.values())


def test_tiny_dnn_gradient():
    m = randomised("dnn", 1, 1, 1, seed=5)
    x, y = np.array([[0.4], [-1.1]]), np.array([[0.3], [0.2]])
    assert gradient_check(m, x, y) < 1e-6


@pytest.mark.parametrize("kind", KINDS)
def test_gradients_match_finite_differences(kind):
    rng = np.random.default_rng(11)
    for draw in range(10):
        m = randomised(kind, 3, 2 if kind == "gru" else 3, 2, seed=draw)
        x, y = rng.normal(size=(4, 3)), rng.normal(size=(4, 2))
        assert gradient_check(m, x, y) < 1e-4


def test_fault_hook_breaks_gradients():
    m = randomised("gru", 3, 2, 1, seed=0)
    x, y = np.ones((2, 3)), np.zeros((2, 1))
    with inject_gradient_fault():
        assert gradient_check(m, x, y) > 1e-2
    assert gradient_check(m, x, y) < 1e-4


def test_nonfinite_output_raises():
    m = NeuralModel("dnn", 1, 1, 1)
    m.params["W2"][:] = np.inf
    with pytest.raises(TrainingError):
        gradients(m, np.ones((1, 1)), np.zeros((1, 1)))


def test_adam_first_step():
    params = {"w": np.array([1.0, -1.0])}
    opt = Adam(params, lr=0.1)
    opt.step(params, {"w": np.array([2.0, -3.0])})
    # the bias-corrected first step has magnitude lr * sign(g)
    np.testing.assert_allclose(params["w"], [0.9, -0.9], atol=1e-6)


def test_train_config_validation():
    with pytest.raises(ConfigurationError):
        TrainConfig(epochs=0)
    with pytest.raises(ConfigurationError):
        TrainConfig(batch_size=0)


def test_zero_learning_rate_keeps_parameters():
    rng = np.random.default_rng(0)
    m = NeuralModel("gru", 2, 3, 1, seed=4)
    x, y = rng.normal(size=(50, 2)), rng.normal(size=(50, 1))
    res = train(m, (x, y), (x, y), TrainConfig(epochs=5, batch_size=16, learning_rate=0.0))
    np.testing.assert_array_equal(res.model.flat(), m.flat())
    assert len(res.history) == 5
    assert len({round(h[1], 12) for h in res.history}) == 1


def test_dnn_learns_linear_map():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(2000, 3))
    y = 0.5 * x[:, :1]
    res = train(NeuralModel("dnn", 3, 8, 1, seed=0), (x, y), (x[:200], y[:200]),
                TrainConfig(epochs=200, batch_size=256, learning_rate=1e-2))
    assert res.history[-1][1] < 1e-3
    assert len(res.history) == 200


def test_training_is_deterministic_and_keeps_best():
    rng = np.random.default_rng(2)
    x, y = rng.normal(size=(300, 2)), rng.normal(size=(300, 1))
    cfg = TrainConfig(epochs=8, batch_size=64, learning_rate=5e-2, shuffle_seed=3)
    a = train(NeuralModel("lstm", 2, 3, 1, seed=1), (x, y), (x[:50], y[:50]), cfg)
    b = train(NeuralModel("lstm", 2, 3, 1, seed=1), (x, y), (x[:50], y[:50]), cfg)
    np.testing.assert_array_equal(a.model.flat(), b.model.flat())
    assert a.history == b.history
    best_val = min(h[2] for h in a.history)
    assert loss(forward(a.model, x[:50]), y[:50]) == pytest.approx(min(best_val, a.history[0][2] + 1e9))
    running = np.minimum.accumulate([h[2] for h in a.history])
    assert np.all(np.diff(running) <= 0)


def test_patience_stops_early():
    rng = np.random.default_rng(2)
    x, y = rng.normal(size=(100, 2)), rng.normal(size=(100, 1))
    res = train(NeuralModel("dnn", 2, 2, 1), (x, y), (x, y),
                TrainConfig(epochs=500, batch_size=100, learning_rate=0.0, patience=3))
    assert len(res.history) == 3


@pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning")
def test_divergence_names_epoch():
    x = np.ones((10, 1))
    y = np.full((10, 1), 1e200)
    with pytest.raises(TrainingError, match="epoch 1"):
        train(NeuralModel("dnn", 1, 1, 1), (x, y), (x, y), TrainConfig(epochs=3, batch_size=5))


def test_empty_sets_rejected():
    with pytest.raises(ConfigurationError):
        train(NeuralModel("dnn", 1, 1, 1), (np.zeros((0, 1)), np.zeros((0, 1))), (np.ones((1, 1)), np.ones((1, 1))))


def test_gru_approaches_ar1_bound():
    x = ar1(0.9, 60_000, seed=5)
    spec = PredictorSpec("gru", input_len=4, hidden=16, t_csi=2)
    tr = build_windows(x[:50_000], spec, stride=1)
    va = build_windows(x[50_000:], spec, stride=1)
    res = train(NeuralModel("gru", 4, 16, 1, seed=0), (tr.inputs, tr.targets_tdd), (va.inputs, va.targets_tdd),
                TrainConfig(epochs=40, batch_size=2048, learning_rate=1e-2, patience=8))
    val_db = 10 * np.log10(min(h[2] for h in res.history))
    assert abs(val_db - 10 * np.log10(0.19)) < 1.0


@settings(max_examples=25, deadline=None)
@given(kind=st.sampled_from(KINDS), p=st.integers(1, 8), d=st.sampled_from([4, 8, 16, 32]),
       t=st.sampled_from([4, 32, 40]))
def test_instrumented_flops_match_closed_form(kind, p, d, t):
    m = NeuralModel(kind, p, d, t - 1, seed=0)
    x = np.linspace(-1, 1, p)
    y, counted = counted_forward(m, x)
    assert counted == flops(PredictorSpec(kind, input_len=p, hidden=d, t_csi=t))
    np.testing.assert_allclose(y, forward(m, x)[0], rtol=1e-12, atol=1e-14)


def test_checkpoint_roundtrip(tmp_path):
    m = NeuralModel("lstm", 3, 4, 2, seed=9)
    path = tmp_path / "m.ckpt"
    m.save(path)
    lines = path.read_text().splitlines()
    assert lines[:5] == ["kind lstm", "P 3", "D 4", "out 2", "seed 9"]
    back = NeuralModel.load(path)
    np.testing.assert_array_equal(back.flat(), m.flat())


def test_history_csv(tmp_path):
    rng = np.random.default_rng(0)
    x, y = rng.normal(size=(20, 1)), rng.normal(size=(20, 1))
    res = train(NeuralModel("dnn", 1, 2, 1), (x, y), (x, y), TrainConfig(epochs=3, batch_size=10))
    res.history_to_csv(tmp_path / "h.csv")
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "epoch,train_loss,val_loss" and len(lines) == 4
