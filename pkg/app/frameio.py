"""
双模（RGB + 热成像）帧序列的读取、校验与写出，以及呼吸曲线 CSV 的持久化。

目录格式：
- thermal_%05d.pgm：P5，maxval 65535，16 位大端
- rgb_%05d.ppm（可选）：P6，maxval 255
- boxes.jsonl：每行一个 {frame, x, y, w, h}
- meta.json（可选）：{"sample_rate": 10}

有 RGB 帧时人脸框在 RGB 像素坐标下，否则直接在热成像坐标下。
"""
import csv
import json
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from app.config import TRACE_SAMPLE_RATE
from app.errors import FrameValidationError, GapError, TraceParseError, TraceValidationError

logger = logging.getLogger(__name__)

LABELS = ("normal", "abnormal")
MIN_FACE_SIDE = 8

_THERMAL_RE = re.compile(r"^thermal_(\d{5})\.pgm$")
_RGB_RE = re.compile(r"^rgb_(\d{5})\.ppm$")
_WHITESPACE = b" \t\r\n"

PathLike = Union[str, Path]


# ==================== 数据模型 ====================

@dataclass(frozen=True, eq=False)
class Frame:
    """单帧。samples 形状为 (height, width) 或 (height, width, 3)，只读。"""
    width: int
    height: int
    channel_count: int
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise FrameValidationError(f"帧尺寸非法: {self.width}x{self.height}")
        if self.channel_count not in (1, 3):
            raise FrameValidationError(f"通道数只能是 1 或 3: {self.channel_count}")
        arr = np.asarray(self.samples)
        if arr.size != self.width * self.height * self.channel_count:
            raise FrameValidationError(
                f"samples 长度 {arr.size} != {self.width}x{self.height}x{self.channel_count}"
            )
        shape = (self.height, self.width) if self.channel_count == 1 else (self.height, self.width, 3)
        samples = np.array(arr, copy=True).reshape(shape)
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "Frame":
        arr = np.asarray(arr)
        if arr.ndim == 2:
            return cls(width=arr.shape[1], height=arr.shape[0], channel_count=1, samples=arr)
        if arr.ndim == 3 and arr.shape[2] == 3:
            return cls(width=arr.shape[1], height=arr.shape[0], channel_count=3, samples=arr)
        raise FrameValidationError(f"无法识别的帧数组形状: {arr.shape}")

    @property
    def dims(self) -> tuple[int, int]:
        return self.width, self.height


@dataclass(frozen=True)
class FaceBox:
    frame_index: int
    x: int
    y: int
    w: int
    h: int

    def validate(self, frame_w: int, frame_h: int) -> None:
        """人脸框必须完整落在帧内，且宽高不小于 MIN_FACE_SIDE。"""
        if self.w < MIN_FACE_SIDE or self.h < MIN_FACE_SIDE:
            raise FrameValidationError(
                f"第 {self.frame_index} 帧人脸框过小: {self.w}x{self.h} (最小 {MIN_FACE_SIDE})"
            )
        if self.x < 0 or self.y < 0 or self.x + self.w > frame_w or self.y + self.h > frame_h:
            raise FrameValidationError(
                f"第 {self.frame_index} 帧人脸框越界: ({self.x},{self.y},{self.w},{self.h}) 帧 {frame_w}x{frame_h}"
            )


@dataclass(frozen=True, eq=False)
class FrameSequence:
    thermal: tuple
    rgb: tuple
    boxes: tuple
    sample_rate: float = TRACE_SAMPLE_RATE

    def __post_init__(self):
        object.__setattr__(self, "thermal", tuple(self.thermal))
        object.__setattr__(self, "rgb", tuple(self.rgb))
        object.__setattr__(self, "boxes", tuple(self.boxes))
        if not self.thermal:
            raise FrameValidationError("序列中没有热成像帧")
        if not self.sample_rate > 0:
            raise FrameValidationError(f"sample_rate 必须大于 0: {self.sample_rate}")
        _check_uniform(self.thermal, "thermal", channels=1)
        if self.rgb:
            _check_uniform(self.rgb, "rgb", channels=3)
            if len(self.rgb) != len(self.thermal):
                raise FrameValidationError(f"RGB 帧数 {len(self.rgb)} != 热成像帧数 {len(self.thermal)}")
        if len(self.boxes) != len(self.thermal):
            raise FrameValidationError(f"人脸框数 {len(self.boxes)} != 帧数 {len(self.thermal)}")
        box_w, box_h = self.box_space_dims
        for i, box in enumerate(self.boxes):
            if box.frame_index != i:
                raise GapError(i, "box")
            box.validate(box_w, box_h)

    def __len__(self) -> int:
        return len(self.thermal)

    @property
    def thermal_dims(self) -> tuple[int, int]:
        return self.thermal[0].dims

    @property
    def rgb_dims(self) -> Optional[tuple[int, int]]:
        return self.rgb[0].dims if self.rgb else None

    @property
    def box_space_dims(self) -> tuple[int, int]:
        """人脸框所在坐标系的帧尺寸（有 RGB 时为 RGB，否则为热成像）。"""
        return self.rgb_dims or self.thermal_dims


@dataclass(frozen=True, eq=False)
class RespirationTrace:
    values: np.ndarray = field(repr=False)
    sample_rate: float = TRACE_SAMPLE_RATE
    label: Optional[str] = None
    provenance: str = ""
    seed: Optional[int] = None

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64).reshape(-1)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        self.validate()

    def validate(self) -> None:
        if self.values.size == 0:
            raise TraceValidationError("呼吸曲线为空")
        if not np.all(np.isfinite(self.values)):
            raise TraceValidationError("呼吸曲线包含非有限值")
        if not self.sample_rate > 0:
            raise TraceValidationError(f"sample_rate 必须大于 0: {self.sample_rate}")
        if self.label is not None and self.label not in LABELS:
            raise TraceValidationError(f"未知标签: {self.label}")

    def __len__(self) -> int:
        return int(self.values.size)

    @property
    def label_index(self) -> int:
        if self.label is None:
            raise TraceValidationError("曲线没有标签")
        return LABELS.index(self.label)

    def with_values(self, values: Sequence[float], provenance: Optional[str] = None) -> "RespirationTrace":
        return RespirationTrace(
            values=values,
            sample_rate=self.sample_rate,
            label=self.label,
            provenance=self.provenance if provenance is None else provenance,
            seed=self.seed,
        )


def _check_uniform(frames: Sequence[Frame], name: str, channels: int) -> None:
    first = frames[0]
    for i, f in enumerate(frames):
        if f.channel_count != channels:
            raise FrameValidationError(f"{name} 第 {i} 帧通道数 {f.channel_count}，应为 {channels}")
        if f.dims != first.dims:
            raise FrameValidationError(f"{name} 第 {i} 帧尺寸 {f.dims} 与第 0 帧 {first.dims} 不一致")


# ==================== PNM 编解码 ====================

def _parse_pnm_header(data: bytes, path: Path) -> tuple[bytes, int, int, int, int]:
    """解析 PNM 头，返回 (magic, width, height, maxval, 像素数据偏移)。支持 # 注释。"""
    tokens: list[bytes] = []
    i = 0
    n = len(data)
    while len(tokens) < 4:
        while i < n and (data[i] in _WHITESPACE or data[i] == ord("#")):
            if data[i] == ord("#"):
                while i < n and data[i] not in b"\r\n":
                    i += 1
            else:
                i += 1
        start = i
        while i < n and data[i] not in _WHITESPACE and data[i] != ord("#"):
            i += 1
        if start == i:
            raise FrameValidationError(f"{path.name}: PNM 头不完整")
        tokens.append(data[start:i])
    # maxval 之后恰好一个空白字节
    if i >= n or data[i] not in _WHITESPACE:
        raise FrameValidationError(f"{path.name}: PNM 头之后缺少分隔符")
    try:
        width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except ValueError:
        raise FrameValidationError(f"{path.name}: PNM 头数值非法: {tokens}")
    if not 0 < maxval <= 65535:
        raise FrameValidationError(f"{path.name}: maxval 非法: {maxval}")
    return tokens[0], width, height, maxval, i + 1


def read_pnm(path: PathLike) -> Frame:
    """读取 P5（灰度）或 P6（RGB）二进制 PNM。P5 的 maxval > 255 时每个样本 2 字节大端；P6 只接受 maxval 255。"""
    path = Path(path)
    data = path.read_bytes()
    magic, width, height, maxval, offset = _parse_pnm_header(data, path)
    if magic == b"P5":
        channels = 1
    elif magic == b"P6":
        channels = 3
        if maxval != 255:
            raise FrameValidationError(f"{path.name}: P6 的 maxval 必须为 255，实际 {maxval}")
    else:
        raise FrameValidationError(f"{path.name}: 不支持的 PNM 类型 {magic!r}")
    if width <= 0 or height <= 0:
        raise FrameValidationError(f"{path.name}: 帧尺寸非法 {width}x{height}")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = width * height * channels
    if len(data) - offset < count * dtype.itemsize:
        raise FrameValidationError(f"{path.name}: 像素数据被截断")
    arr = np.frombuffer(data, dtype=dtype, count=count, offset=offset)
    arr = arr.astype(np.uint16 if channels == 1 else np.uint8)
    shape = (height, width) if channels == 1 else (height, width, 3)
    return Frame(width=width, height=height, channel_count=channels, samples=arr.reshape(shape))


def write_pgm(path: PathLike, frame: Frame) -> None:
    """写出 16 位 P5（maxval 65535，大端）。"""
    if frame.channel_count != 1:
        raise FrameValidationError("P5 只能写单通道帧")
    header = f"P5\n{frame.width} {frame.height}\n65535\n".encode("ascii")
    Path(path).write_bytes(header + frame.samples.astype(">u2").tobytes())


def write_ppm(path: PathLike, frame: Frame) -> None:
    """写出 8 位 P6（maxval 255）。"""
    if frame.channel_count != 3:
        raise FrameValidationError("P6 只能写三通道帧")
    header = f"P6\n{frame.width} {frame.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + frame.samples.astype(np.uint8).tobytes())


# ==================== 序列目录 ====================

def _indexed_files(dir_path: Path, pattern: re.Pattern) -> dict[int, Path]:
    out: dict[int, Path] = {}
    for p in dir_path.iterdir():
        m = pattern.match(p.name)
        if m:
            out[int(m.group(1))] = p
    return out


def _first_gap(indices: Sequence[int], count: int) -> Optional[int]:
    present = set(indices)
    for i in range(count):
        if i not in present:
            return i
    return None


def _load_boxes(path: Path) -> dict[int, FaceBox]:
    if not path.is_file():
        raise FrameValidationError(f"缺少人脸框文件: {path.name}")
    boxes: dict[int, FaceBox] = {}
    with path.open("r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                vals = [rec[k] for k in ("frame", "x", "y", "w", "h")]
            except (ValueError, KeyError, TypeError) as e:
                raise FrameValidationError(f"{path.name} 第 {lineno} 行非法: {e}")
            if not all(isinstance(v, int) and not isinstance(v, bool) for v in vals):
                raise FrameValidationError(f"{path.name} 第 {lineno} 行字段必须是整数")
            box = FaceBox(frame_index=vals[0], x=vals[1], y=vals[2], w=vals[3], h=vals[4])
            if box.frame_index in boxes:
                raise FrameValidationError(f"{path.name} 第 {lineno} 行重复的帧序号 {box.frame_index}")
            boxes[box.frame_index] = box
    return boxes


def load_sequence(dir_path: PathLike) -> FrameSequence:
    """读取并校验一个帧目录，帧顺序按文件名中的数字序号。"""
    dir_path = Path(dir_path)
    if not dir_path.is_dir():
        raise FileNotFoundError(f"帧目录不存在: {dir_path}")

    thermal_files = _indexed_files(dir_path, _THERMAL_RE)
    if not thermal_files:
        raise FrameValidationError(f"{dir_path} 中没有 thermal_*.pgm")
    count = max(thermal_files) + 1
    gap = _first_gap(list(thermal_files), count)
    if gap is not None:
        raise GapError(gap, "thermal")

    rgb_files = _indexed_files(dir_path, _RGB_RE)
    if rgb_files:
        gap = _first_gap(list(rgb_files), count)
        if gap is not None:
            raise GapError(gap, "rgb")
        if max(rgb_files) >= count:
            raise FrameValidationError(f"RGB 帧 {max(rgb_files)} 没有对应的热成像帧")

    boxes = _load_boxes(dir_path / "boxes.jsonl")
    gap = _first_gap(list(boxes), count)
    if gap is not None:
        raise GapError(gap, "box")
    extra = sorted(i for i in boxes if i >= count or i < 0)
    if extra:
        raise FrameValidationError(f"人脸框 {extra[0]} 没有对应的帧")

    sample_rate = TRACE_SAMPLE_RATE
    meta_path = dir_path / "meta.json"
    if meta_path.is_file():
        try:
            sample_rate = float(json.loads(meta_path.read_text(encoding="utf-8"))["sample_rate"])
        except (ValueError, KeyError, TypeError) as e:
            raise FrameValidationError(f"meta.json 非法: {e}")

    thermal = [read_pnm(thermal_files[i]) for i in range(count)]
    rgb = [read_pnm(rgb_files[i]) for i in range(count)] if rgb_files else []
    seq = FrameSequence(
        thermal=thermal,
        rgb=rgb,
        boxes=[boxes[i] for i in range(count)],
        sample_rate=sample_rate,
    )
    logger.info(f"[frameio] 读取 {dir_path}: {count} 帧, thermal {seq.thermal_dims}, rgb {seq.rgb_dims}, {sample_rate} Hz")
    return seq


def write_sequence(seq: FrameSequence, dir_path: PathLike) -> None:
    """load_sequence 的逆操作。"""
    dir_path = Path(dir_path)
    dir_path.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(seq.thermal):
        write_pgm(dir_path / f"thermal_{i:05d}.pgm", frame)
    for i, frame in enumerate(seq.rgb):
        write_ppm(dir_path / f"rgb_{i:05d}.ppm", frame)
    with (dir_path / "boxes.jsonl").open("w", encoding="utf-8", newline="\n") as f:
        for b in seq.boxes:
            f.write(json.dumps({"frame": b.frame_index, "x": b.x, "y": b.y, "w": b.w, "h": b.h}) + "\n")
    (dir_path / "meta.json").write_text(json.dumps({"sample_rate": seq.sample_rate}) + "\n", encoding="utf-8")
    logger.debug(f"[frameio] 写出 {len(seq)} 帧到 {dir_path}")


# ==================== 呼吸曲线 CSV ====================

def save_trace(trace: RespirationTrace, path: PathLike) -> None:
    """
    写出呼吸曲线：
        # sample_rate=10.0;label=normal;seed=3;provenance=...
        t,value
        0.0,0.5
    数值使用 repr，保证完整精度往返。
    """
    trace.validate()
    head = f"# sample_rate={trace.sample_rate!r};label={trace.label or 'none'}"
    if trace.seed is not None:
        head += f";seed={trace.seed}"
    head += f";provenance={trace.provenance}"
    if "\n" in head or "\r" in head:
        raise TraceValidationError("provenance 不能包含换行")
    with Path(path).open("w", encoding="utf-8", newline="") as f:
        f.write(head + "\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["t", "value"])
        for i, v in enumerate(trace.values):
            writer.writerow([repr(i / trace.sample_rate), repr(float(v))])


def _parse_trace_header(line: str) -> dict:
    if not line.startswith("#"):
        raise TraceParseError(1, "缺少 # 头注释行")
    text = line[1:].rstrip("\r\n")
    if text.startswith(" "):
        text = text[1:]
    # provenance 原样保留，首尾空白也不去掉
    body, _, provenance = text.partition(";provenance=")
    meta = {"provenance": provenance}
    for pair in body.split(";"):
        key, sep, value = pair.partition("=")
        if not sep:
            raise TraceParseError(1, f"头注释字段非法: {pair!r}")
        meta[key.strip()] = value.strip()
    return meta


def load_trace(path: PathLike) -> RespirationTrace:
    """save_trace 的逆操作。"""
    with Path(path).open("r", encoding="utf-8", newline="") as f:
        lines = f.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise TraceParseError(1, "文件为空")
    meta = _parse_trace_header(lines[0])
    try:
        sample_rate = float(meta["sample_rate"])
        label = None if meta.get("label", "none") == "none" else meta["label"]
        seed = int(meta["seed"]) if "seed" in meta else None
    except (KeyError, ValueError) as e:
        raise TraceParseError(1, f"头注释非法: {e}")
    if len(lines) < 2 or lines[1].strip() != "t,value":
        raise TraceParseError(2, "缺少表头 t,value")

    values = []
    for lineno, row in enumerate(csv.reader(lines[2:]), start=3):
        if len(row) != 2:
            raise TraceParseError(lineno, f"应为 2 列，实际 {len(row)} 列")
        try:
            v = float(row[1])
            float(row[0])
        except ValueError:
            raise TraceParseError(lineno, f"数值非法: {row}")
        if not math.isfinite(v):
            raise TraceParseError(lineno, f"非有限值: {row[1]}")
        values.append(v)
    if not values:
        raise TraceParseError(len(lines) + 1, "没有数据行")
    try:
        return RespirationTrace(
            values=values, sample_rate=sample_rate, label=label,
            provenance=meta["provenance"], seed=seed,
        )
    except TraceValidationError as e:
        raise TraceParseError(1, str(e))
