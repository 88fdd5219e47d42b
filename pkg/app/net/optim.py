"""
小批量训练：Adam 自适应更新，按 seed 固定每个 epoch 的打乱顺序。
"""
import csv
import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field

from app.config import TRAIN_BATCH_SIZE, TRAIN_EPOCHS, TRAIN_LR, TRAIN_SEED
from app.errors import DivergenceError, ShapeError, TraceValidationError
from app.frameio import PathLike, RespirationTrace
from app.net.model import ModelParams, backward_batch, batch_losses, forward_batch

logger = logging.getLogger(__name__)


class TrainConfig(BaseModel):
    lr: float = Field(TRAIN_LR, ge=0)
    epochs: int = Field(TRAIN_EPOCHS, ge=1)
    batch_size: int = Field(TRAIN_BATCH_SIZE, ge=1)
    seed: int = TRAIN_SEED


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    split: str  # train | test
    loss: float
    accuracy: float


class Adam:
    """
    m = β1·m + (1 − β1)·g
    v = β2·v + (1 − β2)·g²
    θ -= lr · m̂ / (√v̂ + ε)，m̂ / v̂ 为偏差修正后的矩估计
    """

    def __init__(self, params: ModelParams, lr: float = TRAIN_LR, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(p) for name, p in params.named_parameters()}
        self.v = {name: np.zeros_like(p) for name, p in params.named_parameters()}

    def step(self, grads: ModelParams) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for (name, p), (_, g) in zip(self.params.named_parameters(), grads.named_parameters()):
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def stack_dataset(traces: Sequence[RespirationTrace]) -> tuple[np.ndarray, np.ndarray]:
    """把等长、带标签的曲线堆成 X (N, T) 与 y (N,)。"""
    if not traces:
        raise TraceValidationError("数据集为空")
    lengths = {len(t) for t in traces}
    if len(lengths) != 1:
        raise ShapeError(f"训练要求曲线等长，实际长度: {sorted(lengths)}")
    X = np.stack([t.values for t in traces])
    y = np.array([t.label_index for t in traces], dtype=np.int64)
    return X, y


def evaluate_split(model: ModelParams, X: np.ndarray, y: np.ndarray, batch_size: int = 256) -> tuple[float, float]:
    """整份数据上的 (平均损失, 准确率)。"""
    total_loss = 0.0
    correct = 0
    for start in range(0, len(y), batch_size):
        cache = forward_batch(model, X[start:start + batch_size])
        yb = y[start:start + batch_size]
        total_loss += float(batch_losses(cache.probabilities, yb).sum())
        correct += int(np.sum(np.argmax(cache.probabilities, axis=1) == yb))
    return total_loss / len(y), correct / len(y)


def train(
    model: ModelParams,
    dataset: Sequence[RespirationTrace],
    config: TrainConfig = TrainConfig(),
    test: Optional[Sequence[RespirationTrace]] = None,
) -> tuple[ModelParams, list[EpochLog]]:
    """
    返回训练后的参数副本（传入的 model 不变）和逐 epoch 日志。
    给出 test 时每个 epoch 结束后在 test 上评估一次，日志 split 列为 test。
    """
    X, y = stack_dataset(dataset)
    X_test = y_test = None
    if test:
        X_test, y_test = stack_dataset(test)
    model = model.copy()
    rng = np.random.default_rng(config.seed)
    adam = Adam(model, lr=config.lr)
    n = len(y)
    log: list[EpochLog] = []

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        total_loss = 0.0
        correct = 0
        for batch, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start:start + config.batch_size]
            cache = forward_batch(model, X[idx])
            losses = batch_losses(cache.probabilities, y[idx])
            batch_loss = float(losses.mean())
            if not np.isfinite(batch_loss):
                raise DivergenceError(epoch, batch, batch_loss)
            adam.step(backward_batch(model, cache, y[idx]))
            if not all(np.all(np.isfinite(p)) for _, p in model.named_parameters()):
                raise DivergenceError(epoch, batch, batch_loss)
            total_loss += float(losses.sum())
            correct += int(np.sum(np.argmax(cache.probabilities, axis=1) == y[idx]))
        log.append(EpochLog(epoch, "train", total_loss / n, correct / n))
        msg = f"[train] {model.variant} epoch {epoch}/{config.epochs} loss {total_loss / n:.4f} acc {correct / n:.4f}"
        if X_test is not None:
            test_loss, test_acc = evaluate_split(model, X_test, y_test)
            log.append(EpochLog(epoch, "test", test_loss, test_acc))
            msg += f" | test loss {test_loss:.4f} acc {test_acc:.4f}"
        logger.info(msg)
    return model, log


def write_train_log(log: Sequence[EpochLog], path: PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["epoch", "split", "loss", "accuracy"])
        for row in log:
            writer.writerow([row.epoch, row.split, repr(row.loss), repr(row.accuracy)])
