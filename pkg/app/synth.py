"""
合成数据：医院数据集不公开，这里按同样的形状生成带标签的呼吸曲线和双模帧序列。

- 正常呼吸：周期强、分布均匀（频率/幅度逐周期抖动 ≤ 5%）
- 异常呼吸：频率更快、幅度不规则，另有按泊松过程出现的急促段 / 暂停段
- 场景退化：距离（人脸变小、增益下降、噪声上升）、竖直转头（点头）强衰减、水平转头轻微衰减
"""
import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.signal.windows import hann

from app.config import TRACE_SAMPLE_RATE
from app.errors import FrameValidationError, RegionError, SceneError, SpecError, TraceValidationError
from app.frameio import LABELS, FaceBox, Frame, FrameSequence, PathLike, RespirationTrace, load_trace, save_trace
from app.roi import mask_from_face, map_to_thermal, normalize_trace

logger = logging.getLogger(__name__)

NORMAL_BASE_FREQ = 0.25    # Hz，15 次/分
ABNORMAL_BASE_FREQ = 0.45  # Hz，27 次/分

# gen_dataset 每类参数的采样区间 (low, high)，均匀分布
NORMAL_RANGES = {
    "base_freq": (0.20, 0.33),
    "amp": (0.6, 1.4),
    "freq_jitter": (0.0, 0.05),
    "amp_jitter": (0.0, 0.05),
    "event_rate": (0.0, 0.0),
    "noise_sigma": (0.02, 0.15),
}
ABNORMAL_RANGES = {
    "base_freq": (0.30, 0.55),
    "amp": (0.6, 1.4),
    "freq_jitter": (0.16, 0.30),
    "amp_jitter": (0.16, 0.40),
    "event_rate": (0.0, 0.2),
    "noise_sigma": (0.02, 0.15),
}

# 异常事件持续时间（秒）与强度
EVENT_DURATION_S = (1.0, 3.0)
BURST_FREQ_MULT = (1.8, 2.5)
BURST_AMP_MULT = (0.5, 1.5)
PAUSE_FREQ_MULT = 0.3
PAUSE_AMP_MULT = 0.15

VERTICAL_BREAK_DEG = 30.0


@dataclass(frozen=True)
class WaveformSpec:
    label: str = "normal"
    base_freq: float = NORMAL_BASE_FREQ
    amp: float = 1.0
    freq_jitter: float = 0.03
    amp_jitter: float = 0.03
    event_rate: float = 0.0
    noise_sigma: float = 0.05
    duration: float = 10.0
    sample_rate: float = TRACE_SAMPLE_RATE

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.label not in LABELS:
            raise SpecError(f"未知标签: {self.label}")
        if not (self.base_freq > 0 and self.amp > 0 and self.duration > 0 and self.sample_rate > 0):
            raise SpecError("base_freq / amp / duration / sample_rate 必须大于 0")
        if not (0 <= self.freq_jitter < 1 and 0 <= self.amp_jitter < 1):
            raise SpecError("jitter 必须在 [0, 1) 内")
        if self.event_rate < 0 or self.noise_sigma < 0:
            raise SpecError("event_rate / noise_sigma 不能为负")
        if self.label == "normal":
            if self.freq_jitter > 0.05 or self.amp_jitter > 0.05 or self.event_rate != 0:
                raise SpecError("正常呼吸要求 jitter ≤ 0.05 且没有异常事件")
        else:
            if not self.base_freq > NORMAL_BASE_FREQ:
                raise SpecError(f"异常呼吸的 base_freq 必须大于 {NORMAL_BASE_FREQ}")
            if not (self.freq_jitter > 0.15 or self.amp_jitter > 0.15 or self.event_rate > 0):
                raise SpecError("异常呼吸要求 jitter > 0.15 或 event_rate > 0")

    @property
    def n_samples(self) -> int:
        return int(round(self.duration * self.sample_rate))

    @classmethod
    def abnormal_default(cls, **overrides) -> "WaveformSpec":
        params = dict(label="abnormal", base_freq=ABNORMAL_BASE_FREQ, freq_jitter=0.2, amp_jitter=0.3, event_rate=0.1)
        params.update(overrides)
        return cls(**params)


@dataclass(frozen=True)
class SceneSpec:
    """
    合成场景。face_box 为第 0 帧人脸框 (x, y, w, h)，with_rgb 时在 RGB 坐标下，否则在热成像坐标下；
    drift 为每帧平移像素 (dx, dy)；hotspot_rel 为热点在口罩区域内的相对位置。
    """
    rgb_dims: tuple = (320, 240)
    thermal_dims: tuple = (160, 120)
    with_rgb: bool = True
    face_box: tuple = (100, 20, 120, 160)
    drift: tuple = (0.0, 0.0)
    hotspot_rel: tuple = (0.5, 0.35)
    hotspot_sigma_rel: float = 0.12
    ambient_level: float = 30000.0
    face_offset: float = 1500.0
    hotspot_gain: float = 400.0
    pixel_noise: float = 20.0
    distance_factor: float = 1.0
    vertical_angle: float = 0.0
    horizontal_angle: float = 0.0
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not 1.0 <= self.distance_factor <= 20.0:
            raise SpecError(f"distance_factor 必须在 [1, 20] 内: {self.distance_factor}")
        if not all(0.0 <= r < 1.0 for r in self.hotspot_rel):
            raise SpecError(f"hotspot_rel 必须在 [0, 1) 内: {self.hotspot_rel}")
        if not (0.0 <= self.vertical_angle < 90.0 and 0.0 <= self.horizontal_angle < 90.0):
            raise SpecError("角度必须在 [0, 90) 度内")
        if min(self.rgb_dims) <= 0 or min(self.thermal_dims) <= 0:
            raise SpecError("帧尺寸必须为正")
        if self.hotspot_gain < 0 or self.pixel_noise < 0 or self.hotspot_sigma_rel <= 0:
            raise SpecError("hotspot_gain / pixel_noise 不能为负，hotspot_sigma_rel 必须为正")
        if len(self.face_box) != 4 or len(self.drift) != 2 or len(self.hotspot_rel) != 2:
            raise SpecError("face_box 需要 4 个值，drift / hotspot_rel 需要 2 个值")

    @property
    def box_dims(self) -> tuple:
        return self.rgb_dims if self.with_rgb else self.thermal_dims

    def face_box_at(self, t: int) -> FaceBox:
        """第 t 帧人脸框：沿 drift 平移，并按距离系数绕中心缩小。"""
        x, y, w, h = self.face_box
        cx = x + w / 2 + self.drift[0] * t
        cy = y + h / 2 + self.drift[1] * t
        w_eff = int(round(w / self.distance_factor))
        h_eff = int(round(h / self.distance_factor))
        return FaceBox(
            frame_index=t,
            x=int(math.floor(cx - w_eff / 2 + 0.5)),
            y=int(math.floor(cy - h_eff / 2 + 0.5)),
            w=w_eff,
            h=h_eff,
        )

    def angle_attenuation(self) -> float:
        """水平转头只按 cos 轻微衰减；竖直方向超过 30 度后信号迅速消失。"""
        att = math.cos(math.radians(self.horizontal_angle)) * math.cos(math.radians(self.vertical_angle))
        if self.vertical_angle > VERTICAL_BREAK_DEG:
            att *= math.exp(-(self.vertical_angle - VERTICAL_BREAK_DEG) / 5.0)
        return att

    def effective_gain(self) -> float:
        return self.hotspot_gain / self.distance_factor * self.angle_attenuation()

    def effective_noise(self) -> float:
        return self.pixel_noise * (1.0 + 0.1 * (self.distance_factor - 1.0))


# ==================== 波形 ====================

def _smooth(x: np.ndarray, width: int) -> np.ndarray:
    width = max(3, width | 1)
    taper = hann(width)
    taper /= taper.sum()
    pad = width // 2
    return np.convolve(np.pad(x, pad, mode="edge"), taper, mode="valid")


def _event_modulation(spec: WaveformSpec, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    n = spec.n_samples
    freq_mult = np.ones(n)
    amp_mult = np.ones(n)
    if spec.event_rate <= 0:
        return freq_mult, amp_mult
    for _ in range(rng.poisson(spec.event_rate * spec.duration)):
        start = rng.uniform(0.0, spec.duration)
        length = rng.uniform(*EVENT_DURATION_S)
        i0 = int(start * spec.sample_rate)
        i1 = min(n, int((start + length) * spec.sample_rate))
        if rng.random() < 0.5:
            # 急促段
            freq_mult[i0:i1] *= rng.uniform(*BURST_FREQ_MULT)
            amp_mult[i0:i1] *= rng.uniform(*BURST_AMP_MULT)
        else:
            # 暂停段
            freq_mult[i0:i1] *= PAUSE_FREQ_MULT
            amp_mult[i0:i1] *= PAUSE_AMP_MULT
    width = int(0.5 * spec.sample_rate)
    return _smooth(freq_mult, width), _smooth(amp_mult, width)


def gen_waveform(spec: WaveformSpec, seed: int) -> RespirationTrace:
    """正弦呼吸波形；频率和幅度每个周期重新抖动一次，周期边界处 sin=0，波形连续。"""
    n = spec.n_samples
    if n < 2:
        raise SpecError(f"duration × sample_rate 不足 2 个采样点: {n}")
    rng = np.random.default_rng(seed)
    freq_mult, amp_mult = _event_modulation(spec, rng)

    two_pi = 2.0 * math.pi
    phase = rng.uniform(0.0, two_pi)
    cycle = None
    f_k = a_k = 0.0
    values = np.empty(n)
    for i in range(n):
        k = int(phase // two_pi)
        if k != cycle:
            cycle = k
            f_k = spec.base_freq * (1.0 + spec.freq_jitter * rng.uniform(-1.0, 1.0))
            a_k = spec.amp * (1.0 + spec.amp_jitter * rng.uniform(-1.0, 1.0))
        values[i] = a_k * amp_mult[i] * math.sin(phase)
        phase += two_pi * f_k * freq_mult[i] / spec.sample_rate
    if spec.noise_sigma > 0:
        values += rng.normal(0.0, spec.noise_sigma, n)
    return RespirationTrace(
        values=values,
        sample_rate=spec.sample_rate,
        label=spec.label,
        provenance=f"synth/{spec.label}",
        seed=seed,
    )


# ==================== 帧序列 ====================

def _scale_rect(box: FaceBox, scene: SceneSpec) -> tuple[int, int, int, int]:
    """人脸框换算到热成像像素坐标。"""
    if not scene.with_rgb:
        return box.x, box.y, box.x + box.w, box.y + box.h
    sx = scene.thermal_dims[0] / scene.rgb_dims[0]
    sy = scene.thermal_dims[1] / scene.rgb_dims[1]
    return (
        int(math.floor(box.x * sx + 0.5)), int(math.floor(box.y * sy + 0.5)),
        int(math.floor((box.x + box.w) * sx + 0.5)), int(math.floor((box.y + box.h) * sy + 0.5)),
    )


def _rgb_frame(box: FaceBox, scene: SceneSpec) -> Frame:
    w, h = scene.rgb_dims
    img = np.full((h, w, 3), 60, dtype=np.uint8)
    img[box.y:box.y + box.h, box.x:box.x + box.w] = 180
    return Frame.from_array(img)


def gen_sequence(scene: SceneSpec, wave: WaveformSpec) -> tuple[FrameSequence, RespirationTrace]:
    """
    渲染热成像帧 = 环境 + 人脸温升 + 口罩区域内的高斯热点 × 波形 × 有效增益 + 像素噪声。
    返回帧序列和真实波形。
    """
    truth = gen_waveform(wave, scene.seed)
    rng = np.random.default_rng([scene.seed, 1])
    tw, th = scene.thermal_dims
    yy, xx = np.mgrid[0:th, 0:tw].astype(np.float64) + 0.5
    gain = scene.effective_gain()
    noise = scene.effective_noise()
    box_w, box_h = scene.box_dims

    thermal, rgb, boxes = [], [], []
    for t, g in enumerate(truth.values):
        box = scene.face_box_at(t)
        try:
            box.validate(box_w, box_h)
            mask = mask_from_face(box)
            if scene.with_rgb:
                mask = map_to_thermal(mask, scene.rgb_dims, scene.thermal_dims)
        except (FrameValidationError, RegionError) as e:
            raise SceneError(f"第 {t} 帧场景无效（人脸检测失效）: {e}") from e
        cx = mask.x0 + scene.hotspot_rel[0] * mask.width
        cy = mask.y0 + scene.hotspot_rel[1] * mask.height
        if not (mask.x0 <= cx < mask.x1 and mask.y0 <= cy < mask.y1):
            raise SceneError(f"第 {t} 帧热点跑出口罩区域")
        sigma = max(0.75, scene.hotspot_sigma_rel * mask.width)

        img = np.full((th, tw), scene.ambient_level)
        fx0, fy0, fx1, fy1 = _scale_rect(box, scene)
        img[fy0:fy1, fx0:fx1] += scene.face_offset
        img += gain * g * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2.0 * sigma ** 2))
        if noise > 0:
            img += rng.normal(0.0, noise, img.shape)
        thermal.append(Frame.from_array(np.clip(np.rint(img), 0, 65535).astype(np.uint16)))
        if scene.with_rgb:
            rgb.append(_rgb_frame(box, scene))
        boxes.append(box)

    seq = FrameSequence(thermal=thermal, rgb=rgb, boxes=boxes, sample_rate=wave.sample_rate)
    logger.debug(f"[synth] 渲染 {len(seq)} 帧，有效增益 {gain:.2f}，噪声 {noise:.2f}")
    return seq, truth


# ==================== 数据集 ====================

def draw_spec(label: str, rng: np.random.Generator, duration: float, sample_rate: float) -> WaveformSpec:
    ranges = NORMAL_RANGES if label == "normal" else ABNORMAL_RANGES
    params = {k: (lo if lo == hi else float(rng.uniform(lo, hi))) for k, (lo, hi) in ranges.items()}
    return WaveformSpec(label=label, duration=duration, sample_rate=sample_rate, **params)


def gen_dataset(
    n_normal: int,
    n_abnormal: int,
    segment_len: int = 100,
    seed: int = 0,
    sample_rate: float = TRACE_SAMPLE_RATE,
) -> list[RespirationTrace]:
    """
    每条记录长 2 × segment_len（对应 20 秒采集），按半段步长切成重叠片段，
    每段 z-score 归一化，最后按 seed 打乱。
    """
    if n_normal < 1 or n_abnormal < 1:
        raise SpecError("每类样本数至少为 1")
    if segment_len < 2:
        raise SpecError("segment_len 至少为 2")
    rng = np.random.default_rng(seed)
    stride = max(1, segment_len // 2)
    rec_len = 2 * segment_len
    traces: list[RespirationTrace] = []
    for label, count in (("normal", n_normal), ("abnormal", n_abnormal)):
        made = 0
        while made < count:
            spec = draw_spec(label, rng, duration=rec_len / sample_rate, sample_rate=sample_rate)
            rec_seed = int(rng.integers(0, 2**31 - 1))
            rec = gen_waveform(spec, rec_seed)
            for start in range(0, len(rec) - segment_len + 1, stride):
                if made == count:
                    break
                seg = rec.with_values(
                    rec.values[start:start + segment_len],
                    provenance=f"synth/{label}/offset={start}",
                )
                traces.append(normalize_trace(seg))
                made += 1
    order = rng.permutation(len(traces))
    logger.info(f"[synth] 生成数据集: normal {n_normal}, abnormal {n_abnormal}, 长度 {segment_len}")
    return [traces[i] for i in order]


def write_dataset(traces: Sequence[RespirationTrace], out_dir: PathLike) -> Path:
    """每段一个 CSV，外加 index.csv (path,label,seed)。返回 index.csv 路径。"""
    out_dir = Path(out_dir)
    (out_dir / "traces").mkdir(parents=True, exist_ok=True)
    index_path = out_dir / "index.csv"
    with index_path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["path", "label", "seed"])
        for i, trace in enumerate(traces):
            rel = f"traces/trace_{i:05d}.csv"
            save_trace(trace, out_dir / rel)
            writer.writerow([rel, trace.label or "none", "" if trace.seed is None else trace.seed])
    logger.info(f"[synth] 写出 {len(traces)} 条曲线到 {out_dir}")
    return index_path


def load_manifest(index_path: PathLike) -> list[RespirationTrace]:
    """读取 index.csv 列出的全部曲线，路径相对 index.csv 所在目录。"""
    index_path = Path(index_path)
    if not index_path.is_file():
        raise FileNotFoundError(f"数据集索引不存在: {index_path}")
    traces = []
    with index_path.open("r", encoding="utf-8", newline="") as f:
        for lineno, row in enumerate(csv.DictReader(f), start=2):
            trace = load_trace(index_path.parent / row["path"])
            label: Optional[str] = None if row["label"] == "none" else row["label"]
            if trace.label != label:
                raise TraceValidationError(f"index.csv 第 {lineno} 行标签 {label} 与文件中的 {trace.label} 不一致")
            traces.append(trace)
    return traces
