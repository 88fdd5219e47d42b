import math

import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from app.errors import ShapeError, UnnormalizedInputWarning
from app.net import (
    AttentionParams,
    GruCellParams,
    LstmCellParams,
    attention,
    bidirectional_scan,
    forward,
    forward_batch,
    gru_cell,
    init_model,
    loss,
    lstm_cell,
)
from app.net.cells import gru_step


def random_gru(rng, H, I, scale=0.5):
    return GruCellParams(*(rng.normal(0, scale, (H, H + I)) for _ in range(3)), *(rng.normal(0, scale, H) for _ in range(3)))


def random_lstm(rng, H, I, scale=0.5):
    return LstmCellParams(*(rng.normal(0, scale, (H, H + I)) for _ in range(4)), *(rng.normal(0, scale, H) for _ in range(4)))


def zero_gru(H, I):
    return GruCellParams(*(np.zeros((H, H + I)) for _ in range(3)), *(np.zeros(H) for _ in range(3)))


def _sig(v):
    return 1.0 / (1.0 + math.exp(-v))


def _affine(W, b, v, i):
    return sum(W[i][j] * v[j] for j in range(len(v))) + b[i]


def gru_oracle(p, h_prev, x):
    H = len(h_prev)
    hx = list(h_prev) + list(x)
    r = [_sig(_affine(p.W_r, p.b_r, hx, i)) for i in range(H)]
    z = [_sig(_affine(p.W_z, p.b_z, hx, i)) for i in range(H)]
    rhx = [r[i] * h_prev[i] for i in range(H)] + list(x)
    hc = [math.tanh(_affine(p.W_h, p.b_h, rhx, i)) for i in range(H)]
    return [(1 - z[i]) * h_prev[i] + z[i] * hc[i] for i in range(H)]


def lstm_oracle(p, h_prev, c_prev, x):
    H = len(h_prev)
    hx = list(h_prev) + list(x)
    f = [_sig(_affine(p.W_f, p.b_f, hx, i)) for i in range(H)]
    ig = [_sig(_affine(p.W_i, p.b_i, hx, i)) for i in range(H)]
    o = [_sig(_affine(p.W_o, p.b_o, hx, i)) for i in range(H)]
    g = [math.tanh(_affine(p.W_c, p.b_c, hx, i)) for i in range(H)]
    c = [f[i] * c_prev[i] + ig[i] * g[i] for i in range(H)]
    return [o[i] * math.tanh(c[i]) for i in range(H)], c


def attention_oracle(p, hs):
    scores = []
    for h in hs:
        u = [math.tanh(_affine(p.W_u, p.b_w, h, a)) for a in range(len(p.b_w))]
        scores.append(sum(u[a] * p.u_w[a] for a in range(len(u))))
    m = max(scores)
    e = [math.exp(s - m) for s in scores]
    alpha = [v / sum(e) for v in e]
    s = [sum(alpha[t] * hs[t][d] for t in range(len(hs))) for d in range(len(hs[0]))]
    return s, alpha


# ==================== GRU / LSTM ====================

def test_gru_zero_weights_halves_state(rng):
    h_prev = rng.normal(size=4)
    assert np.allclose(gru_cell(zero_gru(4, 1), h_prev, [0.7]), 0.5 * h_prev)


def test_gru_zero_everything():
    assert np.array_equal(gru_cell(zero_gru(3, 1), np.zeros(3), np.zeros(1)), np.zeros(3))


@pytest.mark.parametrize("seed", range(5))
def test_gru_matches_scalar_oracle(seed):
    rng = np.random.default_rng(seed)
    p = random_gru(rng, 3, 2)
    h_prev, x = rng.normal(size=3), rng.normal(size=2)
    assert np.allclose(gru_cell(p, h_prev, x), gru_oracle(p, h_prev, x), rtol=0, atol=1e-12)


def test_gru_gates_in_open_interval(rng):
    p = random_gru(rng, 4, 1, scale=2.0)
    _, (_, _, r, z, _) = gru_step(p, rng.normal(size=(8, 4)), rng.normal(size=(8, 1)))
    assert np.all((r > 0) & (r < 1)) and np.all((z > 0) & (z < 1))


def test_gru_shape_mismatch(rng):
    with pytest.raises(ShapeError):
        gru_cell(random_gru(rng, 3, 1), np.zeros(4), np.zeros(1))


def test_lstm_zero_weights():
    p = LstmCellParams(*(np.zeros((2, 3)) for _ in range(4)), *(np.zeros(2) for _ in range(4)))
    c_prev = np.array([0.4, -1.2])
    h, c = lstm_cell(p, np.array([0.3, 0.1]), c_prev, [1.0])
    assert np.allclose(c, 0.5 * c_prev)
    assert np.allclose(h, 0.5 * np.tanh(c))
    h, c = lstm_cell(p, np.zeros(2), np.zeros(2), [0.0])
    assert np.array_equal(h, np.zeros(2)) and np.array_equal(c, np.zeros(2))


@pytest.mark.parametrize("seed", range(5))
def test_lstm_matches_scalar_oracle(seed):
    rng = np.random.default_rng(seed)
    p = random_lstm(rng, 3, 1)
    h_prev, c_prev, x = rng.normal(size=3), rng.normal(size=3), rng.normal(size=1)
    h, c = lstm_cell(p, h_prev, c_prev, x)
    h_o, c_o = lstm_oracle(p, h_prev, c_prev, x)
    assert np.allclose(h, h_o, rtol=0, atol=1e-12)
    assert np.allclose(c, c_o, rtol=0, atol=1e-12)


# ==================== 双向扫描 ====================

def test_bidirectional_single_step(rng):
    f, b = random_gru(rng, 3, 1), random_gru(rng, 3, 1)
    out = bidirectional_scan((f, b), [[0.4]])
    assert len(out) == 1
    expected = np.concatenate([gru_cell(f, np.zeros(3), [0.4]), gru_cell(b, np.zeros(3), [0.4])])
    assert np.allclose(out[0], expected)


def test_bidirectional_palindrome_symmetry(rng):
    cell = random_gru(rng, 3, 1)
    xs = [0.1, -0.5, 1.2, -0.5, 0.1]
    out = bidirectional_scan((cell, cell), xs)
    T = len(xs)
    for t in range(T):
        swapped = np.concatenate([out[T - 1 - t][3:], out[T - 1 - t][:3]])
        assert np.allclose(out[t], swapped, rtol=0, atol=1e-14)


def test_bidirectional_equals_two_scans(rng):
    f, b = random_gru(rng, 2, 1), random_gru(rng, 2, 1)
    xs = rng.normal(size=6)
    out = bidirectional_scan((f, b), xs)
    hf, h = [], [0.0, 0.0]
    for x in xs:
        h = gru_oracle(f, h, [x])
        hf.append(h)
    hb, h = [None] * 6, [0.0, 0.0]
    for t in range(5, -1, -1):
        h = gru_oracle(b, h, [xs[t]])
        hb[t] = h
    for t in range(6):
        assert np.allclose(out[t], hf[t] + hb[t], rtol=0, atol=1e-12)


@pytest.mark.parametrize("kind", ["gru", "lstm"])
def test_reverse_and_swap_cells_swaps_halves(rng, kind):
    make = random_gru if kind == "gru" else random_lstm
    f, b = make(rng, 3, 1), make(rng, 3, 1)
    xs = rng.normal(size=7)
    out = bidirectional_scan((f, b), xs)
    rev = bidirectional_scan((b, f), xs[::-1])
    for t in range(7):
        r = rev[6 - t]
        assert np.allclose(out[t], np.concatenate([r[3:], r[:3]]), rtol=0, atol=1e-14)


def test_bidirectional_empty():
    p = zero_gru(2, 1)
    with pytest.raises(ShapeError):
        bidirectional_scan((p, p), [])


# ==================== 注意力 ====================

def _random_attention(rng, A, D, scale=0.5):
    return AttentionParams(rng.normal(0, scale, (A, D)), rng.normal(0, scale, A), rng.normal(0, scale, A))


def test_attention_single_step(rng):
    p = _random_attention(rng, 3, 4)
    h = rng.normal(size=(1, 4))
    s, w = attention(p, h)
    assert w.tolist() == [1.0]
    assert np.array_equal(s, h[0])


def test_attention_identical_states_uniform(rng):
    p = _random_attention(rng, 3, 4)
    h = np.tile(rng.normal(size=4), (6, 1))
    _, w = attention(p, h)
    assert np.allclose(w, 1 / 6, rtol=0, atol=1e-15)


def test_attention_matches_oracle(rng):
    p = _random_attention(rng, 3, 4)
    hs = rng.normal(size=(5, 4))
    s, w = attention(p, hs)
    s_o, w_o = attention_oracle(p, hs.tolist())
    assert np.allclose(w, w_o, rtol=0, atol=1e-12)
    assert np.allclose(s, s_o, rtol=0, atol=1e-12)


@settings(max_examples=1000)
@given(
    seed=st.integers(min_value=0, max_value=2**32 - 1),
    T=st.integers(min_value=1, max_value=30),
    D=st.integers(min_value=1, max_value=8),
    scale=st.floats(min_value=1e-3, max_value=20.0),
)
def test_attention_weights_form_distribution(seed, T, D, scale):
    rng = np.random.default_rng(seed)
    p = _random_attention(rng, 4, D, scale=scale)
    _, w = attention(p, rng.normal(0, scale, (T, D)))
    assert abs(w.sum() - 1.0) <= 1e-9
    assert np.all(w > 0)


# ==================== 前向 / 损失 ====================

def _enumerated_model():
    """hidden 2、attention 2 的 BiGRU-AT，权重按下标枚举。"""
    model = init_model("BiGRU-AT", hidden_size=2, attn_size=2)
    k = 0
    for _, arr in model.named_parameters():
        for idx in np.ndindex(arr.shape):
            arr[idx] = ((k * 7) % 11 - 5) / 10.0
            k += 1
    return model


def test_tiny_model_matches_oracle():
    model = _enumerated_model()
    xs = [0.9, -1.3, 0.4]
    f, b = model.forward_cell, model.backward_cell
    hf, h = [], [0.0, 0.0]
    for x in xs:
        h = gru_oracle(f, h, [x])
        hf.append(h)
    hb, h = [None] * 3, [0.0, 0.0]
    for t in (2, 1, 0):
        h = gru_oracle(b, h, [xs[t]])
        hb[t] = h
    hs = [hf[t] + hb[t] for t in range(3)]
    s, alpha = attention_oracle(model.attention, hs)
    logits = [_affine(model.dense_W, model.dense_b, s, c) for c in range(2)]
    m = max(logits)
    e = [math.exp(v - m) for v in logits]
    probs = [v / sum(e) for v in e]

    out = forward_batch(model, [xs])
    assert np.allclose(out.weights[0], alpha, rtol=0, atol=1e-12)
    assert np.allclose(out.probabilities[0], probs, rtol=0, atol=1e-12)


@pytest.mark.parametrize("variant", ["BiGRU-AT", "GRU-AT", "BiLSTM-AT", "LSTM"])
def test_forward_probabilities(variant, rng):
    model = init_model(variant, hidden_size=4, attn_size=3, seed=1)
    x = rng.normal(size=50)
    x = (x - x.mean()) / x.std()
    out = forward(model, x)
    assert np.all((out.probabilities > 0) & (out.probabilities < 1))
    assert abs(out.probabilities.sum() - 1.0) <= 1e-9
    assert out.hidden.shape == (50, model.summary_size)
    assert (out.weights is None) == (variant == "LSTM")


def test_zero_dense_gives_even_odds(rng):
    model = init_model("BiGRU-AT", hidden_size=4, attn_size=3)
    model.dense_W[...] = 0.0
    x = rng.normal(size=20)
    out = forward(model, (x - x.mean()) / x.std())
    assert out.probabilities.tolist() == [0.5, 0.5]


def test_forward_warns_on_raw_intensities():
    model = init_model("GRU-AT", hidden_size=2, attn_size=2)
    with pytest.warns(UnnormalizedInputWarning):
        forward(model, np.linspace(30000, 30100, 20))


@settings(max_examples=1000)
@given(seed=st.integers(min_value=0, max_value=2**32 - 1), T=st.integers(min_value=1, max_value=20))
def test_probabilities_sum_to_one_for_large_inputs(seed, T):
    rng = np.random.default_rng(seed)
    model = init_model(["BiGRU-AT", "GRU-AT", "BiLSTM-AT", "LSTM"][seed % 4], hidden_size=3, attn_size=2, seed=seed)
    x = rng.uniform(-1e3, 1e3, size=(1, T))
    p = forward_batch(model, x).probabilities[0]
    assert np.all(np.isfinite(p))
    assert abs(p.sum() - 1.0) <= 1e-9


def test_loss_values():
    assert loss([1.0, 0.0], "normal") == 0.0
    assert loss([0.5, 0.5], 1) == pytest.approx(0.6931, abs=1e-4)
    assert loss([1.0, 0.0], "abnormal") == pytest.approx(-math.log(1e-12))


@given(p=st.floats(min_value=1e-9, max_value=1 - 1e-9), label=st.integers(min_value=0, max_value=1))
def test_loss_matches_definition(p, label):
    probs = [1 - p, p]
    assert loss(probs, label) == pytest.approx(-math.log(probs[label]))
