"""
命令行入口：python -m app <子命令>

    extract  帧目录 → 呼吸曲线 CSV
    synth    key=value 配置 → 合成数据集 / 帧序列
    train    数据集索引 → 模型检查点 + 训练日志
    eval     数据集索引 + 模型 → report.csv + 混淆矩阵
    compare  四个模型同配置训练并对比
    analyze  鲁棒性扫描（distance / angle / mask）
    serve    启动 HTTP 筛查服务

退出码：0 成功，1 数据/约束错误，2 用法错误，3 数值失败。
"""
import argparse
import logging
import sys
from collections import Counter
from pathlib import Path
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from app import config
from app.errors import ScreeningError, UsageError

logger = logging.getLogger(__name__)


class RunConfig(BaseModel):
    """一次命令行调用的完整参数，默认值对应 hidden 32 / attention 8 的主模型。"""
    model_config = ConfigDict(extra="ignore")

    command: str
    input: Optional[Path] = None
    out: Optional[Path] = None
    models: list[Path] = Field(default_factory=list)
    block_w: Optional[int] = Field(None, ge=1)
    block_h: Optional[int] = Field(None, ge=1)
    stride: Optional[int] = Field(None, ge=1)
    variant: str = "BiGRU-AT"
    variants: list[str] = Field(default_factory=list)
    hidden: int = Field(config.MODEL_HIDDEN_SIZE, ge=1)
    attn: int = Field(config.MODEL_ATTN_SIZE, ge=1)
    lr: float = Field(config.TRAIN_LR, ge=0)
    epochs: int = Field(config.TRAIN_EPOCHS, ge=1)
    batch: int = Field(config.TRAIN_BATCH_SIZE, ge=1)
    seed: int = config.TRAIN_SEED
    train_fraction: float = Field(config.TRAIN_FRACTION, gt=0, lt=1)
    split: str = "test"
    mode: Optional[str] = None
    seeds: int = Field(20, ge=1)
    svg: Optional[Path] = None
    log: Optional[Path] = None
    host: str = "127.0.0.1"
    port: int = Field(8000, ge=1, le=65535)

    def train_config(self):
        from app.net.optim import TrainConfig
        return TrainConfig(lr=self.lr, epochs=self.epochs, batch_size=self.batch, seed=self.seed)


# ==================== 子命令 ====================

def cmd_extract(cfg: RunConfig) -> int:
    from app.frameio import load_sequence, save_trace
    from app.roi import extract_trace, normalize_trace, select_roi

    seq = load_sequence(cfg.input)
    selection = select_roi(seq, cfg.block_w, cfg.block_h, cfg.stride)
    trace = normalize_trace(extract_trace(seq, selection))
    save_trace(trace, cfg.out)
    b = selection.block
    print(
        f"roi offset=({b.rel_x},{b.rel_y}) block={b.block_w}x{b.block_h} "
        f"variance={selection.variance!r} candidates={selection.candidates_evaluated}"
    )
    if cfg.svg:
        from app.plots import plot_trace
        plot_trace(trace, cfg.svg)
    return 0


def cmd_synth(cfg: RunConfig) -> int:
    from app.frameio import save_trace, write_sequence
    from app.synth import gen_dataset, gen_sequence, write_dataset
    from app.synth_config import load_config

    sc = load_config(cfg.input)
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    if sc.mode == "sequence":
        seq, truth = gen_sequence(sc.scene_spec(), sc.waveform_spec())
        write_sequence(seq, out / "sequence")
        save_trace(truth, out / "ground_truth.csv")
        print(f"sequence frames={len(seq)} out={out}")
    else:
        traces = gen_dataset(sc.n_normal, sc.n_abnormal, sc.segment_len, seed=sc.seed, sample_rate=sc.sample_rate)
        index = write_dataset(traces, out)
        print(f"dataset traces={len(traces)} index={index}")
    return 0


def cmd_train(cfg: RunConfig) -> int:
    from app.evaluation import split
    from app.net.checkpoint import save_model
    from app.net.model import init_model
    from app.net.optim import train, write_train_log
    from app.synth import load_manifest

    traces = load_manifest(cfg.input)
    train_set, test_set = split(traces, cfg.train_fraction, seed=cfg.seed)
    model = init_model(cfg.variant, hidden_size=cfg.hidden, attn_size=cfg.attn, seed=cfg.seed)
    trained, log = train(model, train_set, cfg.train_config(), test=test_set)
    save_model(trained, cfg.out)
    log_path = cfg.log or cfg.out.with_suffix(".log.csv")
    write_train_log(log, log_path)
    last = [r for r in log if r.epoch == log[-1].epoch]
    print(" ".join(f"{r.split}_loss={r.loss!r} {r.split}_accuracy={r.accuracy!r}" for r in last))
    if cfg.svg:
        from app.plots import plot_train_log
        plot_train_log(log, cfg.svg)
    return 0


def _eval_set(cfg: RunConfig):
    from app.evaluation import split
    from app.synth import load_manifest

    traces = load_manifest(cfg.input)
    if cfg.split == "all":
        return traces
    return split(traces, cfg.train_fraction, seed=cfg.seed)[1]


def _write_reports(reports, names, out: Path) -> None:
    from app.evaluation import write_confusion, write_report

    out.mkdir(parents=True, exist_ok=True)
    write_report(reports, out / "report.csv")
    for name, report in zip(names, reports):
        write_confusion(report, out / f"confusion_{name}.csv")
    for r in reports:
        print(f"{r.model}: accuracy={r.accuracy!r} precision={r.precision!r} recall={r.recall!r} f1={r.f1!r}")


def _confusion_names(paths: list[Path]) -> list[str]:
    """混淆矩阵文件名用模型文件名；文件名重复时追加参数序号。"""
    stems = Counter(p.stem for p in paths)
    return [p.stem if stems[p.stem] == 1 else f"{p.stem}_{i}" for i, p in enumerate(paths)]


def cmd_eval(cfg: RunConfig) -> int:
    from app.evaluation import evaluate_model
    from app.net.checkpoint import load_model

    if not cfg.models:
        raise UsageError("eval 至少需要一个模型文件")
    test_set = _eval_set(cfg)
    reports = [evaluate_model(load_model(p), test_set) for p in cfg.models]
    _write_reports(reports, _confusion_names(cfg.models), cfg.out)
    return 0


def cmd_compare(cfg: RunConfig) -> int:
    from app.evaluation import compare_models
    from app.net.model import VARIANTS
    from app.synth import load_manifest

    variants = cfg.variants or list(VARIANTS)
    reports = compare_models(
        load_manifest(cfg.input),
        variants=variants,
        config=cfg.train_config(),
        hidden_size=cfg.hidden,
        attn_size=cfg.attn,
        train_fraction=cfg.train_fraction,
    )
    _write_reports(reports, variants, cfg.out)
    return 0


def cmd_analyze(cfg: RunConfig) -> int:
    from app.analyze import sweep, write_sweep

    points = sweep(cfg.mode, seeds=cfg.seeds)
    write_sweep(points, cfg.out)
    for p in points:
        print(f"{p.parameter}={p.value!r} r={p.correlation!r} failures={p.failures}")
    if cfg.svg:
        from app.plots import plot_sweep
        plot_sweep(points, cfg.svg)
    return 0


def cmd_serve(cfg: RunConfig) -> int:
    import uvicorn

    from app.routes import screen

    if cfg.input:
        from app.net.checkpoint import load_model
        screen.set_model(load_model(cfg.input))
    uvicorn.run("app.main:app", host=cfg.host, port=cfg.port)
    return 0


COMMANDS = {
    "extract": cmd_extract,
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "compare": cmd_compare,
    "analyze": cmd_analyze,
    "serve": cmd_serve,
}


# ==================== 参数解析 ====================

def _add_training_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--hidden", type=int, default=config.MODEL_HIDDEN_SIZE)
    p.add_argument("--attn", type=int, default=config.MODEL_ATTN_SIZE)
    p.add_argument("--lr", type=float, default=config.TRAIN_LR)
    p.add_argument("--epochs", type=int, default=config.TRAIN_EPOCHS)
    p.add_argument("--batch", type=int, default=config.TRAIN_BATCH_SIZE)
    p.add_argument("--seed", type=int, default=config.TRAIN_SEED)
    p.add_argument("--train-fraction", type=float, default=config.TRAIN_FRACTION)


def build_parser() -> argparse.ArgumentParser:
    from app.analyze import MODES
    from app.net.model import VARIANTS

    parser = argparse.ArgumentParser(prog="respscreen", description="口罩呼吸热成像筛查")
    parser.add_argument("-v", "--verbose", action="store_true", help="DEBUG 日志")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="帧目录 → 呼吸曲线")
    p.add_argument("input", type=Path, help="帧目录")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--block-w", type=int)
    p.add_argument("--block-h", type=int)
    p.add_argument("--stride", type=int)
    p.add_argument("--svg", type=Path)

    p = sub.add_parser("synth", help="生成合成数据")
    p.add_argument("input", type=Path, help="key=value 配置文件")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("train", help="训练一个模型")
    p.add_argument("input", type=Path, help="index.csv")
    p.add_argument("--variant", choices=VARIANTS, default="BiGRU-AT")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--log", type=Path)
    p.add_argument("--svg", type=Path)
    _add_training_flags(p)

    p = sub.add_parser("eval", help="在测试集上评估模型")
    p.add_argument("input", type=Path, help="index.csv")
    p.add_argument("models", type=Path, nargs="+")
    p.add_argument("--out", type=Path, required=True, help="输出目录")
    p.add_argument("--split", choices=("test", "all"), default="test")
    p.add_argument("--seed", type=int, default=config.TRAIN_SEED)
    p.add_argument("--train-fraction", type=float, default=config.TRAIN_FRACTION)

    p = sub.add_parser("compare", help="同配置对比多个变体")
    p.add_argument("input", type=Path, help="index.csv")
    p.add_argument("--variants", nargs="+", choices=VARIANTS)
    p.add_argument("--out", type=Path, required=True, help="输出目录")
    _add_training_flags(p)

    p = sub.add_parser("analyze", help="鲁棒性扫描")
    p.add_argument("mode", choices=MODES)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--svg", type=Path)

    p = sub.add_parser("serve", help="HTTP 筛查服务")
    p.add_argument("input", type=Path, nargs="?", help="模型检查点（默认 SCREEN_MODEL_PATH）")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    return parser


def setup_logging(verbose: bool = False) -> None:
    level = logging.DEBUG if verbose else getattr(logging, config.LOG_LEVEL.upper(), logging.INFO)
    logging.basicConfig(
        level=level,
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        force=True,
    )


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2
    setup_logging(args.verbose)
    try:
        cfg = RunConfig(**{k: v for k, v in vars(args).items() if v is not None})
        return COMMANDS[cfg.command](cfg)
    except ValidationError as e:
        err = e.errors()[0]
        print(f"error: 参数 {'.'.join(str(p) for p in err['loc'])} 非法: {err['msg']}", file=sys.stderr)
        return UsageError.exit_code
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return UsageError.exit_code
    except ScreeningError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
