"""
呼吸分类网络：输入层 → (双向) 循环层 → 注意力层 → 全连接层 → 2 类 softmax。

四个变体：
- BiGRU-AT：双向 GRU + 注意力（主模型）
- GRU-AT：单向 GRU + 注意力
- BiLSTM-AT：双向 LSTM + 注意力
- LSTM：单向 LSTM，取最后一步隐状态作为摘要，没有注意力层

训练走批量路径 forward_batch / backward_batch；forward / backward 是 B=1 的特例。
"""
import logging
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy.special import softmax

from app.config import MODEL_ATTN_SIZE, MODEL_HIDDEN_SIZE, NORMALIZE_TOLERANCE
from app.errors import ShapeError, UnnormalizedInputWarning
from app.frameio import LABELS, RespirationTrace
from app.net.attention import AttentionParams, attend, attend_backward
from app.net.cells import (
    CellParams,
    GruCellParams,
    LstmCellParams,
    copy_cell,
    scan,
    scan_backward,
    zeros_like_cell,
)

logger = logging.getLogger(__name__)

VARIANTS = ("BiGRU-AT", "GRU-AT", "BiLSTM-AT", "LSTM")
NUM_CLASSES = len(LABELS)
LOG_EPS = 1e-12

# 数值梯度检查：相对误差分母的下限
GRAD_CHECK_FLOOR = 1e-6


@dataclass(eq=False)
class ModelParams:
    variant: str
    hidden_size: int
    attn_size: int
    input_size: int
    forward_cell: CellParams
    backward_cell: Optional[CellParams]
    attention: Optional[AttentionParams]
    dense_W: np.ndarray  # (2, summary_size)
    dense_b: np.ndarray  # (2,)

    @property
    def bidirectional(self) -> bool:
        return self.variant in ("BiGRU-AT", "BiLSTM-AT")

    @property
    def uses_attention(self) -> bool:
        return self.variant != "LSTM"

    @property
    def cell_kind(self) -> str:
        return "gru" if "GRU" in self.variant else "lstm"

    @property
    def summary_size(self) -> int:
        return 2 * self.hidden_size if self.bidirectional else self.hidden_size

    def named_parameters(self) -> list[tuple[str, np.ndarray]]:
        """固定顺序的 (名称, 数组) 列表；检查点、优化器和梯度检查都按这个顺序。"""
        out = [(f"forward_cell.{n}", a) for n, a in self.forward_cell.named_arrays()]
        if self.backward_cell is not None:
            out += [(f"backward_cell.{n}", a) for n, a in self.backward_cell.named_arrays()]
        if self.attention is not None:
            out += [(f"attention.{n}", a) for n, a in self.attention.named_arrays()]
        out += [("dense.W", self.dense_W), ("dense.b", self.dense_b)]
        return out

    def zeros_like(self) -> "ModelParams":
        return ModelParams(
            variant=self.variant,
            hidden_size=self.hidden_size,
            attn_size=self.attn_size,
            input_size=self.input_size,
            forward_cell=zeros_like_cell(self.forward_cell),
            backward_cell=None if self.backward_cell is None else zeros_like_cell(self.backward_cell),
            attention=None if self.attention is None else self.attention.zeros_like(),
            dense_W=np.zeros_like(self.dense_W),
            dense_b=np.zeros_like(self.dense_b),
        )

    def copy(self) -> "ModelParams":
        return ModelParams(
            variant=self.variant,
            hidden_size=self.hidden_size,
            attn_size=self.attn_size,
            input_size=self.input_size,
            forward_cell=copy_cell(self.forward_cell),
            backward_cell=None if self.backward_cell is None else copy_cell(self.backward_cell),
            attention=None if self.attention is None else self.attention.copy(),
            dense_W=self.dense_W.copy(),
            dense_b=self.dense_b.copy(),
        )

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ShapeError(f"未知模型变体: {self.variant}")
        cell_type = GruCellParams if self.cell_kind == "gru" else LstmCellParams
        cells = [self.forward_cell] + ([self.backward_cell] if self.bidirectional else [])
        if not self.bidirectional and self.backward_cell is not None:
            raise ShapeError(f"{self.variant} 是单向模型，不应有 backward_cell")
        for cell in cells:
            if not isinstance(cell, cell_type):
                raise ShapeError(f"{self.variant} 需要 {cell_type.__name__}，实际 {type(cell).__name__}")
            cell.validate()
            if cell.hidden_size != self.hidden_size or cell.input_size != self.input_size:
                raise ShapeError(f"单元尺寸 {cell.hidden_size}/{cell.input_size} 与模型描述不一致")
        if self.uses_attention:
            if self.attention is None:
                raise ShapeError(f"{self.variant} 缺少注意力参数")
            self.attention.validate()
            if self.attention.attn_size != self.attn_size or self.attention.input_size != self.summary_size:
                raise ShapeError(f"注意力形状 {self.attention.W_u.shape} 与模型描述不一致")
        elif self.attention is not None:
            raise ShapeError("LSTM 变体没有注意力层")
        if self.dense_W.shape != (NUM_CLASSES, self.summary_size) or self.dense_b.shape != (NUM_CLASSES,):
            raise ShapeError(f"全连接层形状非法: W {self.dense_W.shape}, b {self.dense_b.shape}")
        if not (np.all(np.isfinite(self.dense_W)) and np.all(np.isfinite(self.dense_b))):
            raise ShapeError("全连接层含非有限值")

    def describe(self) -> dict:
        return {
            "variant": self.variant,
            "hidden_size": self.hidden_size,
            "attn_size": self.attn_size,
            "input_size": self.input_size,
            "parameters": int(sum(a.size for _, a in self.named_parameters())),
        }


@dataclass
class ForwardTrace:
    hidden: np.ndarray            # (T, D) 每步隐状态
    weights: Optional[np.ndarray]  # (T,) 注意力权重，LSTM 变体为 None
    summary: np.ndarray
    logits: np.ndarray
    probabilities: np.ndarray


@dataclass
class BatchCache:
    """forward_batch 的中间结果，backward_batch 需要。"""
    xs: np.ndarray
    hidden: np.ndarray
    fwd_caches: list
    bwd_caches: Optional[list]
    weights: Optional[np.ndarray]
    att_u: Optional[np.ndarray]
    summary: np.ndarray
    logits: np.ndarray
    probabilities: np.ndarray


# ==================== 初始化 ====================

def _glorot(rng: np.random.Generator, fan_out: int, fan_in: int, shape: tuple) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def _init_cell(kind: str, rng: np.random.Generator, hidden: int, inputs: int) -> CellParams:
    shape = (hidden, hidden + inputs)
    if kind == "gru":
        W = [_glorot(rng, hidden, hidden + inputs, shape) for _ in range(3)]
        return GruCellParams(*W, *(np.zeros(hidden) for _ in range(3)))
    W = [_glorot(rng, hidden, hidden + inputs, shape) for _ in range(4)]
    return LstmCellParams(*W, *(np.zeros(hidden) for _ in range(4)))


def init_model(
    variant: str = "BiGRU-AT",
    hidden_size: int = MODEL_HIDDEN_SIZE,
    attn_size: int = MODEL_ATTN_SIZE,
    input_size: int = 1,
    seed: int = 0,
) -> ModelParams:
    """矩阵按 Glorot 均匀分布初始化，偏置为 0。"""
    if variant not in VARIANTS:
        raise ShapeError(f"未知模型变体: {variant}，可选 {', '.join(VARIANTS)}")
    if hidden_size < 1 or attn_size < 1 or input_size < 1:
        raise ShapeError(f"尺寸必须为正: hidden={hidden_size} attn={attn_size} input={input_size}")
    rng = np.random.default_rng(seed)
    kind = "gru" if "GRU" in variant else "lstm"
    bidirectional = variant in ("BiGRU-AT", "BiLSTM-AT")
    summary = 2 * hidden_size if bidirectional else hidden_size

    forward_cell = _init_cell(kind, rng, hidden_size, input_size)
    backward_cell = _init_cell(kind, rng, hidden_size, input_size) if bidirectional else None
    attention = None
    if variant != "LSTM":
        attention = AttentionParams(
            W_u=_glorot(rng, attn_size, summary, (attn_size, summary)),
            b_w=np.zeros(attn_size),
            u_w=_glorot(rng, 1, attn_size, (attn_size,)),
        )
    model = ModelParams(
        variant=variant,
        hidden_size=hidden_size,
        attn_size=attn_size,
        input_size=input_size,
        forward_cell=forward_cell,
        backward_cell=backward_cell,
        attention=attention,
        dense_W=_glorot(rng, NUM_CLASSES, summary, (NUM_CLASSES, summary)),
        dense_b=np.zeros(NUM_CLASSES),
    )
    model.validate()
    return model


# ==================== 前向 ====================

def _as_batch(model: ModelParams, X) -> np.ndarray:
    xs = np.asarray(X, dtype=np.float64)
    if xs.ndim == 2:
        xs = xs[:, :, None]
    if xs.ndim != 3 or xs.shape[0] == 0 or xs.shape[1] == 0:
        raise ShapeError(f"批输入形状应为 (B, T) 或 (B, T, I)，实际 {xs.shape}")
    if xs.shape[2] != model.input_size:
        raise ShapeError(f"输入维度 {xs.shape[2]} != 模型 input_size {model.input_size}")
    return xs


def forward_batch(model: ModelParams, X) -> BatchCache:
    xs = _as_batch(model, X)
    hf, fwd_caches = scan(model.forward_cell, xs)
    bwd_caches = None
    if model.bidirectional:
        hb, bwd_caches = scan(model.backward_cell, xs, reverse=True)
        hidden = np.concatenate([hf, hb], axis=-1)
    else:
        hidden = hf
    weights = att_u = None
    if model.uses_attention:
        summary, weights, att_u = attend(model.attention, hidden)
    else:
        summary = hidden[:, -1]
    logits = summary @ model.dense_W.T + model.dense_b
    return BatchCache(
        xs=xs,
        hidden=hidden,
        fwd_caches=fwd_caches,
        bwd_caches=bwd_caches,
        weights=weights,
        att_u=att_u,
        summary=summary,
        logits=logits,
        probabilities=softmax(logits, axis=1),
    )


def _trace_values(trace: Union[RespirationTrace, Sequence[float], np.ndarray]) -> np.ndarray:
    if isinstance(trace, RespirationTrace):
        return trace.values
    return np.asarray(trace, dtype=np.float64).reshape(-1)


def check_normalized(values: np.ndarray, tolerance: float = NORMALIZE_TOLERANCE) -> bool:
    """均值或标准差偏离 0/1 超过 tolerance 时发出 UnnormalizedInputWarning。单个采样点不检查。"""
    if values.size < 2:
        return True
    mean, std = float(values.mean()), float(values.std())
    if abs(mean) > tolerance or abs(std - 1.0) > tolerance:
        warnings.warn(
            f"输入曲线未归一化: mean={mean:.4f} std={std:.4f}，请先调用 normalize_trace",
            UnnormalizedInputWarning,
            stacklevel=3,
        )
        return False
    return True


def forward(model: ModelParams, trace) -> ForwardTrace:
    values = _trace_values(trace)
    if values.size == 0:
        raise ShapeError("forward 需要至少 1 个采样点")
    check_normalized(values)
    cache = forward_batch(model, values[None, :])
    return ForwardTrace(
        hidden=cache.hidden[0],
        weights=None if cache.weights is None else cache.weights[0],
        summary=cache.summary[0],
        logits=cache.logits[0],
        probabilities=cache.probabilities[0],
    )


def _label_index(label: Union[str, int]) -> int:
    if isinstance(label, str):
        if label not in LABELS:
            raise ShapeError(f"未知标签: {label}")
        return LABELS.index(label)
    if label not in range(NUM_CLASSES):
        raise ShapeError(f"标签下标越界: {label}")
    return int(label)


def loss(probabilities, label: Union[str, int]) -> float:
    """交叉熵 −log p[label]，log 内以 1e-12 截断。"""
    p = np.asarray(probabilities, dtype=np.float64)
    return float(-np.log(max(p[_label_index(label)], LOG_EPS)))


def batch_losses(probabilities: np.ndarray, labels: np.ndarray) -> np.ndarray:
    picked = probabilities[np.arange(len(labels)), labels]
    return -np.log(np.maximum(picked, LOG_EPS))


# ==================== 反向 ====================

def backward_batch(model: ModelParams, cache: BatchCache, labels) -> ModelParams:
    """批平均交叉熵对全部参数的解析梯度。"""
    labels = np.asarray(labels, dtype=np.int64)
    B = cache.xs.shape[0]
    if labels.shape != (B,):
        raise ShapeError(f"标签数 {labels.shape} 与批大小 {B} 不一致")
    grads = model.zeros_like()

    onehot = np.zeros((B, NUM_CLASSES))
    onehot[np.arange(B), labels] = 1.0
    dlogits = (cache.probabilities - onehot) / B
    grads.dense_W += dlogits.T @ cache.summary
    grads.dense_b += dlogits.sum(axis=0)
    dsummary = dlogits @ model.dense_W

    if model.uses_attention:
        dhidden = attend_backward(model.attention, grads.attention, dsummary, cache.hidden, cache.weights, cache.att_u)
    else:
        dhidden = np.zeros_like(cache.hidden)
        dhidden[:, -1] = dsummary

    H = model.hidden_size
    scan_backward(model.forward_cell, grads.forward_cell, dhidden[:, :, :H], cache.fwd_caches)
    if model.bidirectional:
        scan_backward(model.backward_cell, grads.backward_cell, dhidden[:, :, H:], cache.bwd_caches, reverse=True)
    return grads


def backward(model: ModelParams, trace, label: Union[str, int]) -> ModelParams:
    values = _trace_values(trace)
    cache = forward_batch(model, values[None, :])
    return backward_batch(model, cache, [_label_index(label)])


# ==================== 推理 / 梯度检查 ====================

def predict(model: ModelParams, traces: Sequence, batch_size: int = 256) -> tuple[np.ndarray, np.ndarray]:
    """返回 (预测标签下标 (N,), 概率 (N, 2))。等长曲线按批前向。"""
    n = len(traces)
    probs = np.empty((n, NUM_CLASSES))
    by_len: dict[int, list[int]] = {}
    for i, t in enumerate(traces):
        by_len.setdefault(len(_trace_values(t)), []).append(i)
    for idx in by_len.values():
        for start in range(0, len(idx), batch_size):
            chunk = idx[start:start + batch_size]
            X = np.stack([_trace_values(traces[i]) for i in chunk])
            probs[chunk] = forward_batch(model, X).probabilities
    return np.argmax(probs, axis=1), probs


def mean_loss(model: ModelParams, X, labels) -> float:
    cache = forward_batch(model, X)
    return float(batch_losses(cache.probabilities, np.asarray(labels, dtype=np.int64)).mean())


def gradient_check(model: ModelParams, X, labels, step: float = 1e-5) -> dict[str, float]:
    """
    中心差分对比解析梯度，返回每个参数块的最大相对误差
    |解析 − 数值| / max(|解析| + |数值|, GRAD_CHECK_FLOOR)。
    会原地扰动 model 的参数，结束时逐元素恢复。
    """
    labels = np.asarray(labels, dtype=np.int64)
    grads = backward_batch(model, forward_batch(model, X), labels)
    errors: dict[str, float] = {}
    for (name, param), (_, grad) in zip(model.named_parameters(), grads.named_parameters()):
        worst = 0.0
        for idx in np.ndindex(param.shape):
            orig = param[idx]
            param[idx] = orig + step
            plus = mean_loss(model, X, labels)
            param[idx] = orig - step
            minus = mean_loss(model, X, labels)
            param[idx] = orig
            numeric = (plus - minus) / (2.0 * step)
            analytic = grad[idx]
            err = abs(analytic - numeric) / max(abs(analytic) + abs(numeric), GRAD_CHECK_FLOOR)
            worst = max(worst, err)
        errors[name] = worst
    logger.debug(f"[net] 梯度检查最大相对误差: {max(errors.values()):.3e}")
    return errors
