"""
口罩区域定位与 ROI 选择：
1. 人脸框按比例缩小得到口罩区域 (w/4, h/2) - (3w/4, 4h/5)
2. RGB 坐标按分辨率比例映射到热成像坐标
3. 在口罩区域内按步长遍历候选块，取块均值时间序列方差最大的块作为 ROI
4. ROI 在每帧口罩区域中的相对位置固定，逐帧取块均值得到呼吸曲线
"""
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from app.config import ROI_BLOCK_DIVISOR
from app.errors import FlatTraceError, RegionError, TraceValidationError
from app.frameio import FaceBox, Frame, FrameSequence, RespirationTrace

logger = logging.getLogger(__name__)

# 口罩区域最小边长（像素）
MIN_MASK_SIDE = 2

Rect = tuple[int, int, int, int]


@dataclass(frozen=True)
class MaskRegion:
    """口罩区域，左闭右开矩形 [x0, x1) × [y0, y1)。"""
    frame_index: int
    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if self.x1 <= self.x0 or self.y1 <= self.y0:
            raise RegionError(f"第 {self.frame_index} 帧口罩区域退化: ({self.x0},{self.y0})-({self.x1},{self.y1})")

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    def check_inside(self, frame_w: int, frame_h: int) -> None:
        if self.x0 < 0 or self.y0 < 0 or self.x1 > frame_w or self.y1 > frame_h:
            raise RegionError(f"第 {self.frame_index} 帧口罩区域越界: 帧 {frame_w}x{frame_h}")


@dataclass(frozen=True)
class BlockSpec:
    """相对口罩区域的块位置。rel_x/rel_y 为精确有理数，逐帧位置 = floor(rel × 区域尺寸)。"""
    rel_x: Fraction
    rel_y: Fraction
    block_w: int
    block_h: int

    def place(self, mask: MaskRegion) -> Rect:
        x0 = mask.x0 + math.floor(self.rel_x * mask.width)
        y0 = mask.y0 + math.floor(self.rel_y * mask.height)
        x1, y1 = x0 + self.block_w, y0 + self.block_h
        if x1 > mask.x1 or y1 > mask.y1:
            raise RegionError(f"块 {self.block_w}x{self.block_h} 放不进第 {mask.frame_index} 帧口罩区域")
        return x0, y0, x1, y1


@dataclass(frozen=True)
class RoiSelection:
    block: BlockSpec
    variance: float
    candidates_evaluated: int


def mask_from_face(face: FaceBox) -> MaskRegion:
    """人脸框 → 口罩中心区域，整数除法向零取整。"""
    region = (
        face.x + face.w // 4,
        face.y + face.h // 2,
        face.x + (3 * face.w) // 4,
        face.y + (4 * face.h) // 5,
    )
    if region[2] - region[0] < MIN_MASK_SIDE or region[3] - region[1] < MIN_MASK_SIDE:
        raise RegionError(f"第 {face.frame_index} 帧人脸框过小 ({face.w}x{face.h})，口罩区域退化")
    return MaskRegion(face.frame_index, *region)


def _scale_half_up(v: int, dst: int, src: int) -> int:
    # floor(v * dst / src + 1/2)，整数运算
    return (2 * v * dst + src) // (2 * src)


def map_to_thermal(region: MaskRegion, rgb_dims: tuple[int, int], thermal_dims: tuple[int, int]) -> MaskRegion:
    """两个相机平行放置，按宽高比例缩放，四舍五入（0.5 向上）。"""
    rw, rh = rgb_dims
    tw, th = thermal_dims
    if min(rw, rh, tw, th) <= 0:
        raise RegionError(f"分辨率非法: rgb {rgb_dims}, thermal {thermal_dims}")
    if (rw, rh) == (tw, th):
        return region
    mapped = MaskRegion(
        region.frame_index,
        _scale_half_up(region.x0, tw, rw),
        _scale_half_up(region.y0, th, rh),
        _scale_half_up(region.x1, tw, rw),
        _scale_half_up(region.y1, th, rh),
    )
    mapped.check_inside(tw, th)
    return mapped


def thermal_masks(seq: FrameSequence) -> list[MaskRegion]:
    """每帧在热成像坐标下的口罩区域。"""
    tw, th = seq.thermal_dims
    masks = []
    for box in seq.boxes:
        m = mask_from_face(box)
        if seq.rgb:
            m = map_to_thermal(m, seq.rgb_dims, seq.thermal_dims)
        m.check_inside(tw, th)
        masks.append(m)
    return masks


def block_mean(frame: Frame, block: Rect) -> float:
    """块内像素均值 s̄(t)，float64 累加。"""
    if frame.channel_count != 1:
        raise RegionError("block_mean 只接受单通道热成像帧")
    x0, y0, x1, y1 = block
    if x1 <= x0 or y1 <= y0:
        raise RegionError(f"空块: {block}")
    if x0 < 0 or y0 < 0 or x1 > frame.width or y1 > frame.height:
        raise RegionError(f"块越界: {block}，帧 {frame.width}x{frame.height}")
    samples = frame.samples[y0:y1, x0:x1]
    return float(samples.sum(dtype=np.float64) / samples.size)


def temporal_variance(series: Sequence[float]) -> float:
    """总体方差（除以 T）。"""
    arr = np.asarray(series, dtype=np.float64)
    if arr.size < 2:
        raise TraceValidationError(f"计算方差至少需要 2 帧，实际 {arr.size}")
    return float(np.var(arr))


def default_block(masks: Sequence[MaskRegion]) -> tuple[int, int, int]:
    """默认块大小 = 最小口罩区域 / ROI_BLOCK_DIVISOR，步长为半块（至少 1 像素）。"""
    mw = min(m.width for m in masks)
    mh = min(m.height for m in masks)
    bw = max(1, mw // ROI_BLOCK_DIVISOR)
    bh = max(1, mh // ROI_BLOCK_DIVISOR)
    return bw, bh, max(1, min(bw, bh) // 2)


def _integral_image(frame: Frame) -> np.ndarray:
    ii = np.zeros((frame.height + 1, frame.width + 1), dtype=np.int64)
    ii[1:, 1:] = frame.samples.astype(np.int64).cumsum(axis=0).cumsum(axis=1)
    return ii


def select_roi(
    seq: FrameSequence,
    block_w: Optional[int] = None,
    block_h: Optional[int] = None,
    stride: Optional[int] = None,
) -> RoiSelection:
    """
    遍历口罩区域内所有候选块，返回块均值时间方差最大的块。
    候选偏移以最小口罩区域为基准，按 (dy, dx) 字典序排列；方差相同时取最靠前的。
    """
    if len(seq) < 2:
        raise TraceValidationError("ROI 选择至少需要 2 帧")
    masks = thermal_masks(seq)
    d_bw, d_bh, d_stride = default_block(masks)
    bw = block_w or d_bw
    bh = block_h or d_bh
    stride = stride or d_stride
    if stride < 1 or bw < 1 or bh < 1:
        raise RegionError(f"块参数非法: {bw}x{bh} stride={stride}")
    mw = min(m.width for m in masks)
    mh = min(m.height for m in masks)
    if bw > mw or bh > mh:
        raise RegionError(f"块 {bw}x{bh} 大于最小口罩区域 {mw}x{mh}，没有候选块")

    dy, dx = np.meshgrid(
        np.arange(0, mh - bh + 1, stride, dtype=np.int64),
        np.arange(0, mw - bw + 1, stride, dtype=np.int64),
        indexing="ij",
    )
    dy, dx = dy.ravel(), dx.ravel()
    means = np.empty((dx.size, len(seq)), dtype=np.float64)
    for t, (frame, mask) in enumerate(zip(seq.thermal, masks)):
        ii = _integral_image(frame)
        ox = mask.x0 + (dx * mask.width) // mw
        oy = mask.y0 + (dy * mask.height) // mh
        sums = ii[oy + bh, ox + bw] - ii[oy, ox + bw] - ii[oy + bh, ox] + ii[oy, ox]
        means[:, t] = sums.astype(np.float64) / (bw * bh)

    variances = np.var(means, axis=1)
    best = int(np.argmax(variances))
    selection = RoiSelection(
        block=BlockSpec(Fraction(int(dx[best]), mw), Fraction(int(dy[best]), mh), bw, bh),
        variance=float(variances[best]),
        candidates_evaluated=int(dx.size),
    )
    logger.info(
        f"[roi] {dx.size} 个候选块 ({bw}x{bh}, stride {stride})，"
        f"选中偏移 ({dx[best]},{dy[best]}) 方差 {selection.variance:.4f}"
    )
    return selection


def extract_trace(seq: FrameSequence, selection: RoiSelection) -> RespirationTrace:
    """在每帧口罩区域的固定相对位置取块均值，得到呼吸曲线。"""
    masks = thermal_masks(seq)
    block = selection.block
    values = [block_mean(frame, block.place(mask)) for frame, mask in zip(seq.thermal, masks)]
    return RespirationTrace(
        values=values,
        sample_rate=seq.sample_rate,
        provenance=(
            f"roi rel=({float(block.rel_x):.4f},{float(block.rel_y):.4f}) "
            f"block={block.block_w}x{block.block_h}"
        ),
    )


def normalize_trace(trace: RespirationTrace) -> RespirationTrace:
    """z-score 归一化（总体标准差）。不同口罩隔热能力不同，平均温度会变，只保留波形。"""
    if len(trace) < 2:
        raise TraceValidationError("归一化至少需要 2 个采样点")
    v = trace.values
    mean = float(v.mean())
    std = float(v.std())
    if not std > 1e-12 * max(1.0, abs(mean)):
        raise FlatTraceError("曲线方差为 0，没有呼吸信号")
    return trace.with_values((v - mean) / std)
