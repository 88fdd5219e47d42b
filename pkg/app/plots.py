"""
静态 SVG 图：呼吸曲线、鲁棒性扫描、训练曲线。
固定 hashsalt 并去掉 Date 元数据，同样的输入得到逐字节相同的文件。
"""
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from app.analyze import SweepPoint  # noqa: E402
from app.frameio import PathLike, RespirationTrace  # noqa: E402
from app.net.optim import EpochLog  # noqa: E402

plt.rcParams["svg.hashsalt"] = "respscreen"
plt.rcParams["svg.fonttype"] = "none"


def _save(fig, path: PathLike) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_trace(trace: RespirationTrace, path: PathLike, truth: Optional[RespirationTrace] = None) -> None:
    fig, ax = plt.subplots(figsize=(8, 3))
    t = np.arange(len(trace)) / trace.sample_rate
    ax.plot(t, trace.values, label="extracted")
    if truth is not None:
        v = truth.values
        ax.plot(t[:len(v)], (v - v.mean()) / (v.std() or 1.0), "--", label="ground truth")
        ax.legend(loc="upper right")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("normalized intensity")
    ax.set_title(trace.label or "respiration trace")
    _save(fig, path)


def plot_sweep(points: Sequence[SweepPoint], path: PathLike) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    by_param: dict[str, list[SweepPoint]] = {}
    for p in points:
        by_param.setdefault(p.parameter, []).append(p)
    if points and points[0].mode == "mask":
        ax.bar([p.parameter for p in points], [p.correlation for p in points])
        ax.set_xlabel("mask")
    else:
        for name, pts in by_param.items():
            ax.plot([p.value for p in pts], [p.correlation for p in pts], "o-", label=name)
        ax.set_xlabel(points[0].parameter if len(by_param) == 1 else "angle (deg)")
        ax.legend()
    ax.set_ylabel("|r| vs ground truth")
    ax.set_ylim(0, 1.05)
    _save(fig, path)


def plot_train_log(log: Sequence[EpochLog], path: PathLike) -> None:
    fig, (ax_loss, ax_acc) = plt.subplots(1, 2, figsize=(10, 4))
    for split in ("train", "test"):
        rows = [r for r in log if r.split == split]
        if not rows:
            continue
        ax_loss.plot([r.epoch for r in rows], [r.loss for r in rows], label=split)
        ax_acc.plot([r.epoch for r in rows], [r.accuracy for r in rows], label=split)
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("cross-entropy")
    ax_acc.set_xlabel("epoch")
    ax_acc.set_ylabel("accuracy")
    ax_loss.legend()
    _save(fig, path)
