"""
GRU / LSTM 单元及其单步反向传播。

拼接顺序全局固定为 [h_prev, x]，权重矩阵形状为 hidden × (hidden + input)。
所有 step 函数都按批处理：h_prev (B, H)，x (B, I)；gru_cell / lstm_cell 另外接受一维向量。
"""
from dataclasses import dataclass, fields
from typing import Union

import numpy as np
from scipy.special import expit

from app.errors import ShapeError


@dataclass(eq=False)
class GruCellParams:
    W_r: np.ndarray
    W_z: np.ndarray
    W_h: np.ndarray
    b_r: np.ndarray
    b_z: np.ndarray
    b_h: np.ndarray

    @property
    def hidden_size(self) -> int:
        return self.W_r.shape[0]

    @property
    def input_size(self) -> int:
        return self.W_r.shape[1] - self.W_r.shape[0]

    def named_arrays(self) -> list[tuple[str, np.ndarray]]:
        return [(f.name, getattr(self, f.name)) for f in fields(self)]

    def validate(self) -> None:
        _validate_cell(self, [self.W_r, self.W_z, self.W_h], [self.b_r, self.b_z, self.b_h])


@dataclass(eq=False)
class LstmCellParams:
    W_f: np.ndarray
    W_i: np.ndarray
    W_o: np.ndarray
    W_c: np.ndarray
    b_f: np.ndarray
    b_i: np.ndarray
    b_o: np.ndarray
    b_c: np.ndarray

    @property
    def hidden_size(self) -> int:
        return self.W_f.shape[0]

    @property
    def input_size(self) -> int:
        return self.W_f.shape[1] - self.W_f.shape[0]

    def named_arrays(self) -> list[tuple[str, np.ndarray]]:
        return [(f.name, getattr(self, f.name)) for f in fields(self)]

    def validate(self) -> None:
        _validate_cell(
            self,
            [self.W_f, self.W_i, self.W_o, self.W_c],
            [self.b_f, self.b_i, self.b_o, self.b_c],
        )


CellParams = Union[GruCellParams, LstmCellParams]


def _validate_cell(cell: CellParams, matrices: list, biases: list) -> None:
    h = matrices[0].shape[0] if matrices[0].ndim == 2 else -1
    if h <= 0 or matrices[0].shape[1] <= h:
        raise ShapeError(f"{type(cell).__name__} 权重形状非法: {matrices[0].shape}")
    for m in matrices:
        if m.shape != matrices[0].shape:
            raise ShapeError(f"{type(cell).__name__} 权重形状不一致: {m.shape} != {matrices[0].shape}")
    for b in biases:
        if b.shape != (h,):
            raise ShapeError(f"{type(cell).__name__} 偏置形状应为 ({h},)，实际 {b.shape}")
    for name, arr in cell.named_arrays():
        if not np.all(np.isfinite(arr)):
            raise ShapeError(f"{type(cell).__name__}.{name} 含非有限值")


def zeros_like_cell(cell: CellParams) -> CellParams:
    return type(cell)(**{name: np.zeros_like(arr) for name, arr in cell.named_arrays()})


def copy_cell(cell: CellParams) -> CellParams:
    return type(cell)(**{name: arr.copy() for name, arr in cell.named_arrays()})


def _check_step(cell: CellParams, h_prev: np.ndarray, x: np.ndarray) -> None:
    if h_prev.shape[-1] != cell.hidden_size or x.shape[-1] != cell.input_size:
        raise ShapeError(
            f"输入形状不匹配: h_prev {h_prev.shape} / x {x.shape}，"
            f"期望 hidden={cell.hidden_size} input={cell.input_size}"
        )
    if h_prev.shape[:-1] != x.shape[:-1]:
        raise ShapeError(f"h_prev {h_prev.shape} 与 x {x.shape} 批大小不一致")


# ==================== GRU ====================

def gru_step(p: GruCellParams, h_prev: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, tuple]:
    """
    r = σ(W_r·[h_prev, x] + b_r)
    z = σ(W_z·[h_prev, x] + b_z)
    h̃ = tanh(W_h·[r∗h_prev, x] + b_h)
    h = (1 − z)∗h_prev + z∗h̃
    """
    hx = np.concatenate([h_prev, x], axis=-1)
    r = expit(hx @ p.W_r.T + p.b_r)
    z = expit(hx @ p.W_z.T + p.b_z)
    rhx = np.concatenate([r * h_prev, x], axis=-1)
    h_tilde = np.tanh(rhx @ p.W_h.T + p.b_h)
    h = (1.0 - z) * h_prev + z * h_tilde
    return h, (hx, rhx, r, z, h_tilde)


def gru_step_backward(p: GruCellParams, grads: GruCellParams, dh: np.ndarray, cache: tuple) -> tuple[np.ndarray, np.ndarray]:
    """把 dL/dh 传回 h_prev 和 x，参数梯度累加到 grads。"""
    hx, rhx, r, z, h_tilde = cache
    H = p.hidden_size
    h_prev = hx[:, :H]

    dh_prev = dh * (1.0 - z)
    dz = dh * (h_tilde - h_prev)
    da_h = dh * z * (1.0 - h_tilde ** 2)
    grads.W_h += da_h.T @ rhx
    grads.b_h += da_h.sum(axis=0)
    drhx = da_h @ p.W_h
    drh = drhx[:, :H]
    dx = drhx[:, H:].copy()
    dh_prev += drh * r
    dr = drh * h_prev

    da_z = dz * z * (1.0 - z)
    da_r = dr * r * (1.0 - r)
    grads.W_z += da_z.T @ hx
    grads.b_z += da_z.sum(axis=0)
    grads.W_r += da_r.T @ hx
    grads.b_r += da_r.sum(axis=0)
    dhx = da_z @ p.W_z + da_r @ p.W_r
    dh_prev += dhx[:, :H]
    dx += dhx[:, H:]
    return dh_prev, dx


def gru_cell(p: GruCellParams, h_prev: np.ndarray, x: np.ndarray) -> np.ndarray:
    h_prev = np.asarray(h_prev, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    _check_step(p, h_prev, x)
    if h_prev.ndim == 1:
        return gru_step(p, h_prev[None], x[None])[0][0]
    return gru_step(p, h_prev, x)[0]


# ==================== LSTM ====================

def lstm_step(p: LstmCellParams, h_prev: np.ndarray, c_prev: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, tuple]:
    """标准 LSTM：遗忘门 / 输入门 / 输出门用 σ，候选值与输出压缩用 tanh。"""
    hx = np.concatenate([h_prev, x], axis=-1)
    f = expit(hx @ p.W_f.T + p.b_f)
    i = expit(hx @ p.W_i.T + p.b_i)
    o = expit(hx @ p.W_o.T + p.b_o)
    g = np.tanh(hx @ p.W_c.T + p.b_c)
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    return h, c, (hx, c_prev, f, i, o, g, tc)


def lstm_step_backward(
    p: LstmCellParams,
    grads: LstmCellParams,
    dh: np.ndarray,
    dc: np.ndarray,
    cache: tuple,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    hx, c_prev, f, i, o, g, tc = cache
    H = p.hidden_size
    do = dh * tc
    dc = dc + dh * o * (1.0 - tc ** 2)
    dc_prev = dc * f

    da_f = dc * c_prev * f * (1.0 - f)
    da_i = dc * g * i * (1.0 - i)
    da_o = do * o * (1.0 - o)
    da_c = dc * i * (1.0 - g ** 2)
    dhx = np.zeros_like(hx)
    for W, b, da in ((p.W_f, grads.b_f, da_f), (p.W_i, grads.b_i, da_i), (p.W_o, grads.b_o, da_o), (p.W_c, grads.b_c, da_c)):
        b += da.sum(axis=0)
        dhx += da @ W
    grads.W_f += da_f.T @ hx
    grads.W_i += da_i.T @ hx
    grads.W_o += da_o.T @ hx
    grads.W_c += da_c.T @ hx
    return dhx[:, :H], dc_prev, dhx[:, H:]


def lstm_cell(p: LstmCellParams, h_prev: np.ndarray, c_prev: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    h_prev = np.asarray(h_prev, dtype=np.float64)
    c_prev = np.asarray(c_prev, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    _check_step(p, h_prev, x)
    if c_prev.shape != h_prev.shape:
        raise ShapeError(f"c_prev {c_prev.shape} 与 h_prev {h_prev.shape} 形状不一致")
    if h_prev.ndim == 1:
        h, c, _ = lstm_step(p, h_prev[None], c_prev[None], x[None])
        return h[0], c[0]
    h, c, _ = lstm_step(p, h_prev, c_prev, x)
    return h, c


# ==================== 时间展开 ====================

def scan(p: CellParams, xs: np.ndarray, reverse: bool = False) -> tuple[np.ndarray, list]:
    """
    沿时间展开一个单元。xs (B, T, I) → hs (B, T, H)；reverse=True 时从 t=T-1 向 0 处理，
    但 hs[:, t] 仍对应输入的第 t 步。
    """
    B, T, _ = xs.shape
    H = p.hidden_size
    hs = np.empty((B, T, H))
    caches: list = [None] * T
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    steps = range(T - 1, -1, -1) if reverse else range(T)
    for t in steps:
        if isinstance(p, LstmCellParams):
            h, c, caches[t] = lstm_step(p, h, c, xs[:, t])
        else:
            h, caches[t] = gru_step(p, h, xs[:, t])
        hs[:, t] = h
    return hs, caches


def scan_backward(p: CellParams, grads: CellParams, dhs: np.ndarray, caches: list, reverse: bool = False) -> np.ndarray:
    """scan 的反向传播（BPTT）。dhs 为损失对每步输出的梯度，返回对输入的梯度。"""
    B, T, H = dhs.shape
    dxs = np.empty((B, T, p.input_size))
    dh = np.zeros((B, H))
    dc = np.zeros((B, H))
    steps = range(T) if reverse else range(T - 1, -1, -1)
    for t in steps:
        dh = dh + dhs[:, t]
        if isinstance(p, LstmCellParams):
            dh, dc, dxs[:, t] = lstm_step_backward(p, grads, dh, dc, caches[t])
        else:
            dh, dxs[:, t] = gru_step_backward(p, grads, dh, caches[t])
    return dxs


def bidirectional_scan(cells: tuple[CellParams, CellParams], sequence) -> list[np.ndarray]:
    """h_t = [→h_t, ←h_t]：前向单元处理 1..T，后向单元独立处理反转序列。"""
    forward_cell, backward_cell = cells
    xs = np.asarray(sequence, dtype=np.float64)
    if xs.ndim == 1:
        xs = xs[:, None]
    if xs.shape[0] == 0:
        raise ShapeError("bidirectional_scan 需要非空序列")
    if xs.ndim != 2 or xs.shape[1] != forward_cell.input_size or backward_cell.input_size != forward_cell.input_size:
        raise ShapeError(f"输入形状 {xs.shape} 与单元 input_size 不一致")
    hf, _ = scan(forward_cell, xs[None])
    hb, _ = scan(backward_cell, xs[None], reverse=True)
    out = np.concatenate([hf[0], hb[0]], axis=-1)
    return list(out)
