import numpy as np
import pytest
from pydantic import ValidationError

from app.errors import DivergenceError, ShapeError
from app.frameio import RespirationTrace
from app.net import Adam, TrainConfig, init_model, train, write_train_log
from app.net.model import mean_loss
from app.roi import normalize_trace


def _trace(values, label):
    return normalize_trace(RespirationTrace(values=values, label=label))


def _toy_dataset(n=8, T=20, seed=0):
    rng = np.random.default_rng(seed)
    t = np.arange(T)
    out = []
    for i in range(n):
        label = "abnormal" if i % 2 else "normal"
        freq = 0.35 if label == "abnormal" else 0.08
        out.append(_trace(np.sin(freq * t + rng.uniform(0, 6)) + 0.05 * rng.normal(size=T), label))
    return out


def _params_equal(a, b):
    return all(np.array_equal(x, y) for (_, x), (_, y) in zip(a.named_parameters(), b.named_parameters()))


def test_zero_learning_rate_leaves_parameters(rng):
    model = init_model("BiGRU-AT", hidden_size=4, attn_size=2)
    trained, log = train(model, _toy_dataset(), TrainConfig(lr=0.0, epochs=3, batch_size=4))
    assert _params_equal(trained, model)
    assert [r.epoch for r in log] == [1, 2, 3]


def test_train_does_not_mutate_input():
    model = init_model("GRU-AT", hidden_size=3, attn_size=2)
    before = model.copy()
    trained, _ = train(model, _toy_dataset(), TrainConfig(lr=0.01, epochs=2, batch_size=4))
    assert _params_equal(model, before)
    assert not _params_equal(trained, before)


def test_memorizes_single_example():
    trace = _trace(np.sin(np.linspace(0, 6, 20)), "abnormal")
    model = init_model("BiGRU-AT", hidden_size=8, attn_size=4, seed=3)
    trained, log = train(model, [trace], TrainConfig(lr=0.01, epochs=200, batch_size=1))
    assert mean_loss(trained, trace.values[None, :], [1]) < 0.01
    assert log[-1].accuracy == 1.0


def test_training_reduces_loss():
    data = _toy_dataset(n=16)
    model = init_model("GRU-AT", hidden_size=4, attn_size=2, seed=1)
    _, log = train(model, data, TrainConfig(lr=0.01, epochs=30, batch_size=4))
    assert log[-1].loss < log[0].loss


def test_training_is_deterministic():
    data = _toy_dataset()
    cfg = TrainConfig(lr=0.01, epochs=3, batch_size=3, seed=5)
    a, log_a = train(init_model("BiLSTM-AT", hidden_size=3, attn_size=2), data, cfg)
    b, log_b = train(init_model("BiLSTM-AT", hidden_size=3, attn_size=2), data, cfg)
    assert _params_equal(a, b)
    assert log_a == log_b


def test_test_split_is_logged_every_epoch():
    data = _toy_dataset()
    _, log = train(init_model("LSTM", hidden_size=3), data[:6], TrainConfig(epochs=2, batch_size=2), test=data[6:])
    assert [(r.epoch, r.split) for r in log] == [(1, "train"), (1, "test"), (2, "train"), (2, "test")]


def test_divergence_is_reported():
    model = init_model("GRU-AT", hidden_size=3, attn_size=2)
    model.dense_W[0, 0] = np.nan
    with pytest.raises(DivergenceError) as exc:
        train(model, _toy_dataset(), TrainConfig(epochs=1, batch_size=4))
    assert (exc.value.epoch, exc.value.batch) == (1, 0)
    assert exc.value.exit_code == 3


def test_unequal_lengths_rejected():
    data = [_trace(np.sin(np.arange(10)), "normal"), _trace(np.sin(np.arange(12)), "abnormal")]
    with pytest.raises(ShapeError):
        train(init_model("GRU-AT", hidden_size=2, attn_size=2), data, TrainConfig(epochs=1))


def test_adam_first_step_moves_by_lr():
    model = init_model("GRU-AT", hidden_size=2, attn_size=2)
    before = model.copy()
    grads = model.zeros_like()
    for _, g in grads.named_parameters():
        g[...] = 1.0
    Adam(model, lr=0.1).step(grads)
    for (_, new), (_, old) in zip(model.named_parameters(), before.named_parameters()):
        assert np.allclose(old - new, 0.1, rtol=1e-6)


def test_train_config_validation():
    with pytest.raises(ValidationError):
        TrainConfig(lr=-1.0)
    with pytest.raises(ValidationError):
        TrainConfig(batch_size=0)


def test_train_log_csv(tmp_path):
    _, log = train(init_model("GRU-AT", hidden_size=2, attn_size=2), _toy_dataset(), TrainConfig(epochs=2, batch_size=8))
    path = tmp_path / "train.log.csv"
    write_train_log(log, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "epoch,split,loss,accuracy"
    assert len(lines) == 3
    assert lines[1].startswith("1,train,")
