from app.net.attention import AttentionParams, attention
from app.net.cells import GruCellParams, LstmCellParams, bidirectional_scan, gru_cell, lstm_cell
from app.net.checkpoint import load_model, save_model
from app.net.model import (
    VARIANTS,
    ForwardTrace,
    ModelParams,
    backward,
    backward_batch,
    forward,
    forward_batch,
    gradient_check,
    init_model,
    loss,
    predict,
)
from app.net.optim import Adam, EpochLog, TrainConfig, train, write_train_log

__all__ = [
    "VARIANTS",
    "Adam",
    "AttentionParams",
    "EpochLog",
    "ForwardTrace",
    "GruCellParams",
    "LstmCellParams",
    "ModelParams",
    "TrainConfig",
    "attention",
    "backward",
    "backward_batch",
    "bidirectional_scan",
    "forward",
    "forward_batch",
    "gradient_check",
    "gru_cell",
    "init_model",
    "load_model",
    "loss",
    "lstm_cell",
    "predict",
    "save_model",
    "train",
    "write_train_log",
]
