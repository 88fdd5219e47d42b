from contextlib import asynccontextmanager
import logging

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.encoders import jsonable_encoder
from fastapi.responses import JSONResponse
from fastapi.exceptions import RequestValidationError
from starlette.exceptions import HTTPException as StarletteHTTPException

from app.errors import ScreeningError
from app.routes import screen

logger = logging.getLogger(__name__)


@asynccontextmanager
async def lifespan(app: FastAPI):
    # 打印配置信息
    from app.config import (
        SCREEN_MODEL_PATH, TRACE_SAMPLE_RATE, NORMALIZE_TOLERANCE, has_screen_model
    )

    print("\n" + "=" * 60)
    print("呼吸筛查服务 启动配置")
    print("=" * 60)

    if screen.get_model() is None and has_screen_model():
        from app.net.checkpoint import load_model
        screen.set_model(load_model(SCREEN_MODEL_PATH))

    model = screen.get_model()
    if model is not None:
        info = model.describe()
        print(f"模型: {info['variant']}")
        print(f"  - hidden: {info['hidden_size']}, attention: {info['attn_size']}")
        print(f"  - 参数量: {info['parameters']}")
    else:
        print("模型: 未加载 (仅提供基于特征的快速筛查)")

    print(f"采样率: {TRACE_SAMPLE_RATE} Hz")
    print(f"归一化容差: {NORMALIZE_TOLERANCE}")
    print("=" * 60 + "\n")
    yield


app = FastAPI(
    title="Respiration Screening",
    description="Masked-face thermal respiration screening: quick feature screen plus recurrent attention classifier.",
    lifespan=lifespan,
)


@app.exception_handler(ScreeningError)
async def screening_exception_handler(request: Request, exc: ScreeningError):
    """数据 / 约束错误统一返回 422"""
    logger.warning(f"[screening_error] {request.url.path}: {type(exc).__name__}: {exc}")
    return JSONResponse(
        status_code=422,
        content={"detail": str(exc), "error": type(exc).__name__},
    )


@app.exception_handler(RequestValidationError)
async def validation_exception_handler(request: Request, exc: RequestValidationError):
    """捕获 Pydantic 验证错误并返回详细信息"""
    logger.warning(f"[validation_error] 请求验证失败: {request.url.path} {exc.errors()}")
    return JSONResponse(
        status_code=422,
        content={"detail": jsonable_encoder(exc.errors())},
    )


@app.exception_handler(StarletteHTTPException)
async def http_exception_handler(request: Request, exc: StarletteHTTPException):
    """捕获 HTTP 异常并记录日志"""
    logger.info(f"[http_error] HTTP {exc.status_code}: {request.url.path} - {exc.detail}")
    return JSONResponse(
        status_code=exc.status_code,
        content={"detail": exc.detail},
    )


app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

app.include_router(screen.router, prefix="/api")
