"""
基于特征的快速筛查：从呼吸曲线数峰得到呼吸频率与节律不规则度，超过阈值即判为异常。
对应手机端的即时筛查结果；深度模型见 app.net。
"""
from dataclasses import dataclass

import numpy as np
from scipy.signal import find_peaks

from app.frameio import RespirationTrace

# 归一化后的最小峰突出度
PEAK_PROMINENCE = 0.5
# 相邻两次呼吸最短间隔（秒），对应 150 次/分
MIN_BREATH_INTERVAL_S = 0.4
# 快速筛查阈值
RATE_THRESHOLD_BPM = 21.0
CV_THRESHOLD = 0.3


@dataclass(frozen=True)
class ScreenResult:
    breaths: int
    rate_bpm: float
    interval_cv: float
    abnormal: bool


def find_breaths(trace: RespirationTrace) -> np.ndarray:
    """返回吸气峰的采样下标。"""
    v = trace.values
    std = v.std()
    if not std > 0:
        return np.zeros(0, dtype=np.int64)
    z = (v - v.mean()) / std
    distance = max(1, int(round(MIN_BREATH_INTERVAL_S * trace.sample_rate)))
    peaks, _ = find_peaks(z, prominence=PEAK_PROMINENCE, distance=distance)
    return peaks


def breathing_rate(trace: RespirationTrace) -> float:
    """呼吸频率（次/分）。两个峰以上用峰间隔中位数，否则按峰数 / 时长估计。"""
    peaks = find_breaths(trace)
    if peaks.size >= 2:
        return float(60.0 * trace.sample_rate / np.median(np.diff(peaks)))
    duration = len(trace) / trace.sample_rate
    return float(60.0 * peaks.size / duration)


def interval_cv(trace: RespirationTrace) -> float:
    """峰间隔变异系数，不足两个间隔时为 0。"""
    intervals = np.diff(find_breaths(trace)).astype(np.float64)
    if intervals.size < 2:
        return 0.0
    return float(intervals.std() / intervals.mean())


def quick_screen(
    trace: RespirationTrace,
    rate_threshold_bpm: float = RATE_THRESHOLD_BPM,
    cv_threshold: float = CV_THRESHOLD,
) -> ScreenResult:
    peaks = find_breaths(trace)
    rate = breathing_rate(trace)
    cv = interval_cv(trace)
    return ScreenResult(
        breaths=int(peaks.size),
        rate_bpm=rate,
        interval_cv=cv,
        abnormal=rate > rate_threshold_bpm or cv > cv_threshold,
    )
