import numpy as np
import pytest

from app.frameio import RespirationTrace
from app.screening import breathing_rate, find_breaths, interval_cv, quick_screen


def _sine(freq, seconds=30.0, fs=10.0):
    t = np.arange(int(seconds * fs)) / fs
    return RespirationTrace(values=np.sin(2 * np.pi * freq * t + 0.3), sample_rate=fs)


def test_regular_breathing():
    trace = _sine(0.25)
    assert breathing_rate(trace) == pytest.approx(15.0, rel=0.05)
    assert interval_cv(trace) < 0.05
    result = quick_screen(trace)
    assert not result.abnormal
    assert result.breaths == len(find_breaths(trace))


def test_fast_breathing_is_flagged():
    result = quick_screen(_sine(0.5))
    assert result.rate_bpm == pytest.approx(30.0, rel=0.05)
    assert result.abnormal


def test_irregular_breathing_is_flagged():
    fs = 10.0
    # 间隔交替 2 s / 5 s
    phase = np.concatenate([np.linspace(0, 2 * np.pi, int(d * fs), endpoint=False) for d in [2, 5] * 5])
    trace = RespirationTrace(values=np.sin(phase + np.pi / 2), sample_rate=fs)
    assert interval_cv(trace) > 0.3
    assert quick_screen(trace).abnormal


def test_flat_trace_has_no_breaths():
    trace = RespirationTrace(values=np.zeros(50))
    assert len(find_breaths(trace)) == 0
    assert breathing_rate(trace) == 0.0
    assert interval_cv(trace) == 0.0
