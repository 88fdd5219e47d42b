"""
注意力池化：
    u_t = tanh(W_u·h_t + b_w)
    α_t = softmax_t(u_tᵀ·u_w)
    s   = Σ_t α_t·h_t
"""
from dataclasses import dataclass, fields

import numpy as np
from scipy.special import softmax

from app.errors import ShapeError


@dataclass(eq=False)
class AttentionParams:
    W_u: np.ndarray  # (attn_size, D)
    b_w: np.ndarray  # (attn_size,)
    u_w: np.ndarray  # (attn_size,) 上下文向量，可训练

    @property
    def attn_size(self) -> int:
        return self.W_u.shape[0]

    @property
    def input_size(self) -> int:
        return self.W_u.shape[1]

    def named_arrays(self) -> list[tuple[str, np.ndarray]]:
        return [(f.name, getattr(self, f.name)) for f in fields(self)]

    def validate(self) -> None:
        if self.W_u.ndim != 2 or self.b_w.shape != (self.attn_size,) or self.u_w.shape != (self.attn_size,):
            raise ShapeError(f"注意力参数形状不一致: W_u {self.W_u.shape}, b_w {self.b_w.shape}, u_w {self.u_w.shape}")
        for name, arr in self.named_arrays():
            if not np.all(np.isfinite(arr)):
                raise ShapeError(f"attention.{name} 含非有限值")

    def zeros_like(self) -> "AttentionParams":
        return AttentionParams(**{name: np.zeros_like(arr) for name, arr in self.named_arrays()})

    def copy(self) -> "AttentionParams":
        return AttentionParams(**{name: arr.copy() for name, arr in self.named_arrays()})


def attend(p: AttentionParams, hidden: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """批量版本。hidden (B, T, D) → summary (B, D)，weights (B, T)，以及反向用的 u (B, T, A)。"""
    if hidden.shape[-1] != p.input_size:
        raise ShapeError(f"注意力输入维度 {hidden.shape[-1]} != W_u 列数 {p.input_size}")
    u = np.tanh(hidden @ p.W_u.T + p.b_w)
    # scipy 的 softmax 内部先减去最大值
    weights = softmax(u @ p.u_w, axis=1)
    summary = np.einsum("bt,btd->bd", weights, hidden)
    return summary, weights, u


def attend_backward(
    p: AttentionParams,
    grads: AttentionParams,
    dsummary: np.ndarray,
    hidden: np.ndarray,
    weights: np.ndarray,
    u: np.ndarray,
) -> np.ndarray:
    """返回 dL/dhidden (B, T, D)，参数梯度累加到 grads。"""
    dhidden = weights[:, :, None] * dsummary[:, None, :]
    dweights = np.einsum("btd,bd->bt", hidden, dsummary)
    dscores = weights * (dweights - np.sum(weights * dweights, axis=1, keepdims=True))
    grads.u_w += np.einsum("bt,bta->a", dscores, u)
    da = dscores[:, :, None] * p.u_w * (1.0 - u ** 2)
    grads.W_u += np.einsum("bta,btd->ad", da, hidden)
    grads.b_w += da.sum(axis=(0, 1))
    dhidden += da @ p.W_u
    return dhidden


def attention(p: AttentionParams, hidden) -> tuple[np.ndarray, np.ndarray]:
    """单条序列：hidden 为 T 个 D 维向量，返回 (summary, weights)。"""
    h = np.asarray(hidden, dtype=np.float64)
    if h.ndim != 2 or h.shape[0] == 0:
        raise ShapeError(f"attention 需要非空的 (T, D) 隐状态序列，实际 {h.shape}")
    summary, weights, _ = attend(p, h[None])
    return summary[0], weights[0]
