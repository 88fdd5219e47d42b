"""
模型检查点，扁平二进制容器，所有整数小端：

    magic     4 字节 b"RSPN"
    version   u32 (= 1)
    variant   u16 长度 + UTF-8
    hidden    u32
    attn      u32
    input     u32
    blocks    u32 参数块数
    每个块：name (u16 长度 + UTF-8)，ndim u8，dims u32 × ndim，值 <f8 × prod(dims)

参数块顺序与 ModelParams.named_parameters() 一致。
"""
import logging
import struct
from pathlib import Path

import numpy as np

from app.errors import CheckpointError, ShapeError
from app.frameio import PathLike
from app.net.model import ModelParams, init_model

logger = logging.getLogger(__name__)

MAGIC = b"RSPN"
FORMAT_VERSION = 1


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<H", len(raw)) + raw


def dumps_model(model: ModelParams) -> bytes:
    model.validate()
    parts = [
        MAGIC,
        struct.pack("<I", FORMAT_VERSION),
        _pack_str(model.variant),
        struct.pack("<III", model.hidden_size, model.attn_size, model.input_size),
    ]
    blocks = model.named_parameters()
    parts.append(struct.pack("<I", len(blocks)))
    for name, arr in blocks:
        parts.append(_pack_str(name))
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(parts)


def save_model(model: ModelParams, path: PathLike) -> None:
    Path(path).write_bytes(dumps_model(model))
    logger.info(f"[checkpoint] 保存 {model.variant} 到 {path}")


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(f"检查点被截断: 偏移 {self.pos} 处需要 {n} 字节，剩余 {len(self.data) - self.pos}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def string(self) -> str:
        (n,) = self.unpack("<H")
        try:
            return self.take(n).decode("utf-8")
        except UnicodeDecodeError as e:
            raise CheckpointError(f"检查点字符串非法: {e}")


def loads_model(data: bytes) -> ModelParams:
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise CheckpointError("不是模型检查点（magic 不匹配）")
    (version,) = r.unpack("<I")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"不支持的检查点版本: {version}（当前 {FORMAT_VERSION}）")
    variant = r.string()
    hidden, attn, inputs = r.unpack("<III")
    try:
        model = init_model(variant, hidden_size=hidden, attn_size=attn, input_size=inputs)
    except ShapeError as e:
        raise CheckpointError(f"检查点描述非法: {e}")

    expected = model.named_parameters()
    (count,) = r.unpack("<I")
    if count != len(expected):
        raise CheckpointError(f"参数块数 {count} 与 {variant} 的 {len(expected)} 不一致")
    for name, arr in expected:
        got = r.string()
        if got != name:
            raise CheckpointError(f"参数块名称不匹配: 期望 {name}，实际 {got}")
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}I")
        if shape != arr.shape:
            raise CheckpointError(f"{name} 形状不匹配: 期望 {arr.shape}，实际 {shape}")
        arr[...] = np.frombuffer(r.take(8 * arr.size), dtype="<f8").reshape(shape)
    if r.pos != len(data):
        raise CheckpointError(f"检查点末尾有 {len(data) - r.pos} 字节多余数据")
    try:
        model.validate()
    except ShapeError as e:
        raise CheckpointError(f"检查点参数非法: {e}")
    return model


def load_model(path: PathLike) -> ModelParams:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"模型文件不存在: {path}")
    model = loads_model(path.read_bytes())
    logger.info(f"[checkpoint] 读取 {model.variant} (hidden {model.hidden_size}, attn {model.attn_size}) 自 {path}")
    return model
