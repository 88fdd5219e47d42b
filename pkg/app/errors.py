"""
统一异常。每类异常带 exit_code，CLI 直接映射为进程退出码：
0 成功；1 数据/约束错误；2 用法错误；3 数值失败。
"""
from typing import Optional


class ScreeningError(Exception):
    exit_code = 1


# ==================== 数据 / 约束（exit 1） ====================

class FrameValidationError(ScreeningError):
    """帧、人脸框或序列不满足约束。"""


class GapError(FrameValidationError):
    def __init__(self, index: int, what: str = "frame"):
        self.index = index
        self.what = what
        super().__init__(f"{what} 序号缺失: {index}")


class TraceParseError(ScreeningError):
    def __init__(self, line: int, detail: str):
        self.line = line
        super().__init__(f"第 {line} 行解析失败: {detail}")


class TraceValidationError(ScreeningError):
    """RespirationTrace 不满足约束（空、含非有限值、标签非法）。"""


class RegionError(ScreeningError):
    """口罩区域 / ROI 块退化或越界。"""


class FlatTraceError(ScreeningError):
    """曲线方差为 0，没有呼吸信号。"""


class SpecError(ScreeningError):
    """WaveformSpec / SceneSpec 参数不合法。"""


class SceneError(ScreeningError):
    """合成场景渲染失败（人脸框越界、热点跑出口罩区域等）。"""


class ShapeError(ScreeningError):
    """网络参数或输入形状不一致。"""


class CheckpointError(ScreeningError):
    """模型文件版本 / 形状不匹配或文件被截断。"""


# ==================== 用法（exit 2） ====================

class UsageError(ScreeningError):
    exit_code = 2


class ConfigKeyError(UsageError):
    def __init__(self, key: str, detail: Optional[str] = None):
        self.key = key
        super().__init__(f"配置项错误: {key}" + (f" ({detail})" if detail else ""))


# ==================== 数值（exit 3） ====================

class DivergenceError(ScreeningError):
    exit_code = 3

    def __init__(self, epoch: int, batch: int, loss: float):
        self.epoch = epoch
        self.batch = batch
        self.loss = loss
        super().__init__(f"训练发散: epoch={epoch} batch={batch} loss={loss}")


class UnnormalizedInputWarning(UserWarning):
    """forward 收到未归一化的曲线（均值或标准差偏离 0/1 过多）。"""
