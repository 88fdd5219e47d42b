"""筛查 API 路由。"""
from typing import Optional

from fastapi import APIRouter, HTTPException
from pydantic import BaseModel, Field

from app.config import TRACE_SAMPLE_RATE
from app.frameio import LABELS, RespirationTrace
from app.net.model import ModelParams, forward
from app.roi import normalize_trace
from app.screening import quick_screen

router = APIRouter(tags=["screen"])

_model: Optional[ModelParams] = None


def set_model(model: Optional[ModelParams]) -> None:
    global _model
    _model = model


def get_model() -> Optional[ModelParams]:
    return _model


# ==================== 请求模型 ====================

class ScreenBody(BaseModel):
    values: list[float] = Field(min_length=2)
    sample_rate: float = Field(TRACE_SAMPLE_RATE, gt=0)


# ==================== 路由 ====================

@router.get("/model")
def get_model_info():
    """GET /api/model - 当前加载的模型。"""
    if _model is None:
        raise HTTPException(status_code=404, detail="未加载模型，请设置 SCREEN_MODEL_PATH 或在 serve 时指定检查点")
    return _model.describe()


@router.post("/screen")
def screen(body: ScreenBody):
    """
    POST /api/screen - 对一段原始呼吸曲线做筛查。
    返回基于特征的快速筛查结果；加载了模型时另外返回模型概率和注意力权重。
    """
    trace = normalize_trace(RespirationTrace(values=body.values, sample_rate=body.sample_rate))
    quick = quick_screen(trace)
    result = {
        "quick_screen": {
            "breaths": quick.breaths,
            "rate_bpm": quick.rate_bpm,
            "interval_cv": quick.interval_cv,
            "abnormal": quick.abnormal,
        },
        "model": None,
    }
    if _model is not None:
        out = forward(_model, trace)
        result["model"] = {
            "variant": _model.variant,
            "label": LABELS[int(out.probabilities.argmax())],
            "probabilities": dict(zip(LABELS, out.probabilities.tolist())),
            "attention": None if out.weights is None else out.weights.tolist(),
        }
    return result
