"""
合成配置文件：扁平 key=value，每行一项，# 开头为注释。

    mode=dataset            # dataset | sequence
    n_normal=1925
    n_abnormal=2292
    segment_len=100
    seed=0
    sample_rate=10.0
    wave.base_freq=0.25     # sequence 模式下的波形参数
    scene.face_box=100,20,120,160

dataset 模式下每类参数按 app.synth 中的分布采样，wave.* 只对 sequence 模式生效。
"""
import dataclasses
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from app.config import TRACE_SAMPLE_RATE
from app.errors import ConfigKeyError
from app.frameio import PathLike
from app.synth import SceneSpec, WaveformSpec


class SynthConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mode: Literal["dataset", "sequence"] = "dataset"
    n_normal: int = Field(1925, ge=1)
    n_abnormal: int = Field(2292, ge=1)
    segment_len: int = Field(100, ge=2)
    seed: int = 0
    sample_rate: float = Field(TRACE_SAMPLE_RATE, gt=0)
    wave: dict[str, Any] = Field(default_factory=dict)
    scene: dict[str, Any] = Field(default_factory=dict)

    def waveform_spec(self) -> WaveformSpec:
        params = {"sample_rate": self.sample_rate, **self.wave}
        if params.get("label") == "abnormal":
            return WaveformSpec.abnormal_default(**params)
        return WaveformSpec(**params)

    def scene_spec(self) -> SceneSpec:
        return SceneSpec(**{"seed": self.seed, **self.scene})


def _coerce(key: str, raw: str, default: Any) -> Any:
    """按 dataclass 字段默认值的类型转换字符串。"""
    try:
        if isinstance(default, bool):
            if raw.lower() not in ("true", "false", "1", "0"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1")
        if isinstance(default, tuple):
            return tuple(type(d)(p.strip()) for d, p in zip(default, raw.split(","), strict=True))
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw
    except ValueError as e:
        raise ConfigKeyError(key, f"值非法: {raw!r} ({e})")


def _spec_fields(cls) -> dict[str, Any]:
    return {f.name: f.default for f in dataclasses.fields(cls)}


_SECTIONS = {"wave": _spec_fields(WaveformSpec), "scene": _spec_fields(SceneSpec)}


def parse_config(text: str) -> SynthConfig:
    top: dict[str, Any] = {}
    sections: dict[str, dict[str, Any]] = {"wave": {}, "scene": {}}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigKeyError(line, f"第 {lineno} 行缺少 '='")
        section, dot, name = key.partition(".")
        if dot:
            fields = _SECTIONS.get(section)
            if fields is None or name not in fields:
                raise ConfigKeyError(key, "未知配置项")
            sections[section][name] = _coerce(key, value, fields[name])
        else:
            top[key] = value
    try:
        return SynthConfig(**top, **sections)
    except ValidationError as e:
        err = e.errors()[0]
        key = ".".join(str(p) for p in err["loc"]) or "?"
        raise ConfigKeyError(key, err["msg"])


def load_config(path: PathLike) -> SynthConfig:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"配置文件不存在: {path}")
    return parse_config(path.read_text(encoding="utf-8"))


def _format(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_config(cfg: SynthConfig) -> str:
    """写出完整配置（含 sequence 模式的全部 wave.* / scene.* 字段），可被 parse_config 读回。"""
    lines = [f"{name}={_format(getattr(cfg, name))}" for name in
             ("mode", "n_normal", "n_abnormal", "segment_len", "seed", "sample_rate")]
    if cfg.mode == "sequence":
        wave = dataclasses.asdict(cfg.waveform_spec())
        scene = dataclasses.asdict(cfg.scene_spec())
        lines += [f"wave.{k}={_format(v)}" for k, v in wave.items()]
        lines += [f"scene.{k}={_format(v)}" for k, v in scene.items()]
    return "\n".join(lines) + "\n"
