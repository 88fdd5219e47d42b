"""
鲁棒性扫描：改变合成场景的某个退化参数，比较提取曲线与真实波形的相关系数。

- distance：0.1–1.8 米，distance_factor = 米 / 0.1
- angle：竖直（点头）与水平（转头）0–45 度
- mask：三种口罩透热率（一层医用 1.0、KN95 0.7、两层医用 0.5）缩放热点增益

人脸框无效（检测失效）的 seed 记相关系数 0，并计入 failures。
"""
import csv
import dataclasses
import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from app.errors import RegionError, SceneError, ScreeningError, UsageError
from app.frameio import PathLike
from app.roi import extract_trace, select_roi
from app.synth import SceneSpec, WaveformSpec, gen_sequence

logger = logging.getLogger(__name__)

MODES = ("distance", "angle", "mask")
DISTANCES_M = (0.1, 0.3, 0.6, 0.9, 1.2, 1.5, 1.8)
METRES_PER_FACTOR = 0.1
ANGLES_DEG = (0.0, 15.0, 30.0, 45.0)
MASK_TRANSMISSION = {"surgical": 1.0, "kn95": 0.7, "double_surgical": 0.5}
DEFAULT_SEEDS = 20


@dataclass(frozen=True)
class SweepPoint:
    mode: str
    parameter: str
    value: float
    correlation: float  # 各 seed |r| 的均值
    failures: int
    seeds: int


def pearson_abs(a: np.ndarray, b: np.ndarray) -> float:
    """|r|；任一序列方差为 0 时记 0。"""
    if np.std(a) == 0 or np.std(b) == 0:
        return 0.0
    return float(abs(np.corrcoef(a, b)[0, 1]))


def recovery_correlation(scene: SceneSpec, wave: WaveformSpec) -> float:
    """渲染 → 选 ROI → 提取，返回与真实波形的 |r|。"""
    seq, truth = gen_sequence(scene, wave)
    trace = extract_trace(seq, select_roi(seq))
    return pearson_abs(trace.values, truth.values)


def _point(mode: str, parameter: str, value: float, scenes: Sequence[SceneSpec], wave: WaveformSpec) -> SweepPoint:
    rs = []
    failures = 0
    for scene in scenes:
        try:
            rs.append(recovery_correlation(scene, wave))
        except (SceneError, RegionError) as e:
            logger.debug(f"[analyze] {mode} {parameter}={value} seed={scene.seed} 失效: {e}")
            failures += 1
            rs.append(0.0)
    point = SweepPoint(mode, parameter, value, float(np.mean(rs)), failures, len(scenes))
    logger.info(f"[analyze] {mode} {parameter}={value}: r={point.correlation:.4f} 失效 {failures}/{len(scenes)}")
    return point


def sweep(
    mode: str,
    seeds: int = DEFAULT_SEEDS,
    scene: Optional[SceneSpec] = None,
    wave: Optional[WaveformSpec] = None,
) -> list[SweepPoint]:
    if mode not in MODES:
        raise UsageError(f"未知分析模式: {mode}，可选 {', '.join(MODES)}")
    if seeds < 1:
        raise UsageError("seeds 至少为 1")
    base = scene or SceneSpec()
    wave = wave or WaveformSpec()

    def scenes(**changes) -> list[SceneSpec]:
        try:
            return [dataclasses.replace(base, seed=base.seed + s, **changes) for s in range(seeds)]
        except ScreeningError as e:
            raise UsageError(f"扫描参数非法: {e}")

    points = []
    if mode == "distance":
        for m in DISTANCES_M:
            points.append(_point(mode, "distance_m", m, scenes(distance_factor=m / METRES_PER_FACTOR), wave))
    elif mode == "angle":
        for axis in ("vertical", "horizontal"):
            for deg in ANGLES_DEG:
                points.append(_point(mode, axis, deg, scenes(**{f"{axis}_angle": deg}), wave))
    else:
        for name, k in MASK_TRANSMISSION.items():
            points.append(_point(mode, name, k, scenes(hotspot_gain=base.hotspot_gain * k), wave))
    return points


def write_sweep(points: Sequence[SweepPoint], path: PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["mode", "parameter", "value", "correlation", "failures", "seeds"])
        for p in points:
            writer.writerow([p.mode, p.parameter, repr(p.value), repr(p.correlation), p.failures, p.seeds])
