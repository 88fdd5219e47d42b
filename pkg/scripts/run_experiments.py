"""
一次跑完合成数据、四模型对比与三种鲁棒性扫描

运行方式：
- python scripts/run_experiments.py results/
- 快速试跑: python scripts/run_experiments.py results/ --quick
"""
import argparse
import os
import sys
from pathlib import Path

# 添加项目根目录到 Python 路径
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from app.cli import main

QUICK_SYNTH = "n_normal=60\nn_abnormal=60\nseed=0\n"
FULL_SYNTH = "seed=0\n"


def run(out: Path, quick: bool) -> int:
    out.mkdir(parents=True, exist_ok=True)
    cfg = out / "synth.cfg"
    cfg.write_text(QUICK_SYNTH if quick else FULL_SYNTH, encoding="utf-8")

    steps = [
        ["synth", str(cfg), "--out", str(out / "data")],
        ["compare", str(out / "data" / "index.csv"), "--out", str(out / "compare")]
        + (["--epochs", "3"] if quick else []),
    ]
    seeds = "3" if quick else "20"
    for mode in ("distance", "angle", "mask"):
        steps.append(["analyze", mode, "--out", str(out / f"{mode}.csv"), "--svg", str(out / f"{mode}.svg"), "--seeds", seeds])

    for argv in steps:
        print(f"\n>>> {' '.join(argv)}")
        code = main(argv)
        if code != 0:
            print(f"失败: {argv[0]} 退出码 {code}")
            return code
    return 0


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="合成数据 + 模型对比 + 鲁棒性扫描")
    parser.add_argument("out", type=Path)
    parser.add_argument("--quick", action="store_true", help="小数据集、少 epoch、少 seed")
    args = parser.parse_args()
    sys.exit(run(args.out, args.quick))
