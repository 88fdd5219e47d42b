"""
数据划分、分类指标、混淆矩阵和多模型对比。

正类 = abnormal（筛查场景下漏诊代价更高），判决阈值 0.5（即 argmax）。
混淆矩阵按行是真实标签、按列是预测标签：
            pred normal  pred abnormal
    normal      tn           fp
    abnormal    fn           tp
"""
import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from app.config import MODEL_ATTN_SIZE, MODEL_HIDDEN_SIZE, TRAIN_FRACTION
from app.errors import TraceValidationError, UsageError
from app.frameio import LABELS, PathLike, RespirationTrace
from app.net.model import VARIANTS, ModelParams, init_model, predict
from app.net.optim import TrainConfig, train

logger = logging.getLogger(__name__)

POSITIVE = LABELS.index("abnormal")
REPORT_COLUMNS = ["model", "accuracy", "precision", "recall", "f1", "tn", "fp", "fn", "tp"]


@dataclass(frozen=True)
class EvalReport:
    model: str
    accuracy: float
    precision: float
    recall: float
    f1: float
    confusion: tuple  # ((tn, fp), (fn, tp))
    # 分母为 0 的指标，如 "precision"
    undefined: tuple = field(default=())

    @property
    def tn(self) -> int:
        return self.confusion[0][0]

    @property
    def fp(self) -> int:
        return self.confusion[0][1]

    @property
    def fn(self) -> int:
        return self.confusion[1][0]

    @property
    def tp(self) -> int:
        return self.confusion[1][1]

    @property
    def total(self) -> int:
        return self.tn + self.fp + self.fn + self.tp

    def row(self) -> list:
        return [self.model, repr(self.accuracy), repr(self.precision), repr(self.recall), repr(self.f1),
                self.tn, self.fp, self.fn, self.tp]


def _ratio(num: float, den: float, name: str, undefined: list) -> float:
    if den == 0:
        undefined.append(name)
        return 0.0
    return num / den


def report_from_confusion(tn: int, fp: int, fn: int, tp: int, model: str = "") -> EvalReport:
    undefined: list[str] = []
    total = tn + fp + fn + tp
    accuracy = _ratio(tp + tn, total, "accuracy", undefined)
    precision = _ratio(tp, tp + fp, "precision", undefined)
    recall = _ratio(tp, tp + fn, "recall", undefined)
    f1 = _ratio(2 * precision * recall, precision + recall, "f1", undefined)
    return EvalReport(
        model=model,
        accuracy=accuracy,
        precision=precision,
        recall=recall,
        f1=f1,
        confusion=((tn, fp), (fn, tp)),
        undefined=tuple(undefined),
    )


def _as_index(label: Union[str, int, np.integer]) -> int:
    if isinstance(label, str):
        if label not in LABELS:
            raise TraceValidationError(f"未知标签: {label}")
        return LABELS.index(label)
    return int(label)


def metrics(predictions: Sequence, labels: Sequence, model: str = "") -> EvalReport:
    """predictions / labels 可以是标签名或下标。"""
    if len(predictions) != len(labels):
        raise TraceValidationError(f"预测数 {len(predictions)} != 标签数 {len(labels)}")
    if len(labels) == 0:
        raise TraceValidationError("没有可评估的样本")
    pred = np.array([_as_index(p) for p in predictions]) == POSITIVE
    true = np.array([_as_index(t) for t in labels]) == POSITIVE
    report = report_from_confusion(
        tn=int(np.sum(~true & ~pred)),
        fp=int(np.sum(~true & pred)),
        fn=int(np.sum(true & ~pred)),
        tp=int(np.sum(true & pred)),
        model=model,
    )
    if report.undefined:
        logger.warning(f"[eval] {model or '模型'} 以下指标分母为 0，记为 0: {', '.join(report.undefined)}")
    return report


def split(
    dataset: Sequence[RespirationTrace],
    train_fraction: float = TRAIN_FRACTION,
    seed: int = 0,
) -> tuple[list[RespirationTrace], list[RespirationTrace]]:
    """按标签分层划分；每类训练数 = round(fraction × 类样本数)，至少留 1 条给测试集。"""
    if not 0 < train_fraction < 1:
        raise UsageError(f"train_fraction 必须在 (0, 1) 内: {train_fraction}")
    rng = np.random.default_rng(seed)
    by_class: dict[int, list[int]] = {i: [] for i in range(len(LABELS))}
    for i, t in enumerate(dataset):
        by_class[t.label_index].append(i)
    train_idx: list[int] = []
    test_idx: list[int] = []
    for cls, members in by_class.items():
        if len(members) < 2:
            raise TraceValidationError(f"类别 {LABELS[cls]} 只有 {len(members)} 条，无法划分")
        order = rng.permutation(len(members))
        n_train = min(len(members) - 1, max(1, math.floor(train_fraction * len(members) + 0.5)))
        train_idx += [members[j] for j in order[:n_train]]
        test_idx += [members[j] for j in order[n_train:]]
    train_idx = [train_idx[j] for j in rng.permutation(len(train_idx))]
    test_idx = [test_idx[j] for j in rng.permutation(len(test_idx))]
    logger.info(f"[eval] 划分: 训练 {len(train_idx)}，测试 {len(test_idx)}")
    return [dataset[i] for i in train_idx], [dataset[i] for i in test_idx]


def evaluate_model(model: ModelParams, traces: Sequence[RespirationTrace]) -> EvalReport:
    predicted, _ = predict(model, traces)
    return metrics(predicted, [t.label_index for t in traces], model=model.variant)


def compare_models(
    dataset: Sequence[RespirationTrace],
    variants: Sequence[str] = VARIANTS,
    config: TrainConfig = TrainConfig(),
    hidden_size: int = MODEL_HIDDEN_SIZE,
    attn_size: int = MODEL_ATTN_SIZE,
    train_fraction: float = TRAIN_FRACTION,
) -> list[EvalReport]:
    """所有变体共用同一划分、同一 seed 和训练配置，在同一测试集上评估。"""
    train_set, test_set = split(dataset, train_fraction, seed=config.seed)
    reports = []
    for variant in variants:
        model = init_model(variant, hidden_size=hidden_size, attn_size=attn_size, seed=config.seed)
        trained, _ = train(model, train_set, config)
        report = evaluate_model(trained, test_set)
        logger.info(f"[eval] {variant}: acc {report.accuracy:.4f} P {report.precision:.4f} R {report.recall:.4f} F1 {report.f1:.4f}")
        reports.append(report)
    return reports


def write_report(reports: Sequence[EvalReport], path: PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for r in reports:
            writer.writerow(r.row())


def write_confusion(report: EvalReport, path: PathLike) -> None:
    """每行是真实标签，每列是预测标签。"""
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["true\\pred", *LABELS])
        for label, row in zip(LABELS, report.confusion):
            writer.writerow([label, *row])
