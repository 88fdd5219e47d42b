import numpy as np

from app.frameio import FaceBox, Frame, FrameSequence


def make_sequence(thermal: np.ndarray, boxes=None, sample_rate: float = 10.0) -> FrameSequence:
    """thermal (T, H, W)；boxes 默认覆盖整帧，坐标在热成像空间。"""
    thermal = np.asarray(thermal, dtype=np.uint16)
    T, H, W = thermal.shape
    if boxes is None:
        boxes = [(0, 0, W, H)] * T
    return FrameSequence(
        thermal=[Frame.from_array(thermal[t]) for t in range(T)],
        rgb=[],
        boxes=[FaceBox(t, *b) for t, b in enumerate(boxes)],
        sample_rate=sample_rate,
    )
