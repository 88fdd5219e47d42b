import os
from typing import Optional

def env(key: str, default: Optional[str] = None) -> Optional[str]:
    return os.environ.get(key, default)

# 呼吸曲线采样率（Hz）。帧目录没有 meta.json 时使用该值
TRACE_SAMPLE_RATE: float = float(env("TRACE_SAMPLE_RATE", "10") or "10")

# ROI 默认块大小 = 口罩区域宽/高 ÷ ROI_BLOCK_DIVISOR，步长为块大小的一半
ROI_BLOCK_DIVISOR: int = int(env("ROI_BLOCK_DIVISOR", "5") or "5")

# 网络结构：BiGRU 隐层 32，注意力 8
MODEL_HIDDEN_SIZE: int = int(env("MODEL_HIDDEN_SIZE", "32") or "32")
MODEL_ATTN_SIZE: int = int(env("MODEL_ATTN_SIZE", "8") or "8")

# 训练默认参数
TRAIN_LR: float = float(env("TRAIN_LR", "0.001") or "0.001")
TRAIN_EPOCHS: int = int(env("TRAIN_EPOCHS", "50") or "50")
TRAIN_BATCH_SIZE: int = int(env("TRAIN_BATCH_SIZE", "32") or "32")
TRAIN_SEED: int = int(env("TRAIN_SEED", "0") or "0")
# 3207 / 4217 ≈ 0.76
TRAIN_FRACTION: float = float(env("TRAIN_FRACTION", "0.76") or "0.76")

# forward 输入的归一化检查容差：|mean| 或 |std-1| 超过该值时告警
NORMALIZE_TOLERANCE: float = float(env("NORMALIZE_TOLERANCE", "0.1") or "0.1")

# 可选：HTTP 筛查服务启动时加载的模型文件
SCREEN_MODEL_PATH: Optional[str] = env("SCREEN_MODEL_PATH")

LOG_LEVEL: str = env("LOG_LEVEL") or "INFO"


def has_screen_model() -> bool:
    """是否配置了筛查服务模型（SCREEN_MODEL_PATH 存在且文件可读）。"""
    return bool(SCREEN_MODEL_PATH) and os.path.isfile(SCREEN_MODEL_PATH)
