import pytest

from app.analyze import DISTANCES_M, MASK_TRANSMISSION, pearson_abs, sweep, write_sweep
from app.errors import UsageError


def test_pearson_abs():
    assert pearson_abs([1, 2, 3], [3, 2, 1]) == pytest.approx(1.0)
    assert pearson_abs([1, 1, 1], [1, 2, 3]) == 0.0


def test_mask_types_all_recover():
    points = sweep("mask", seeds=3)
    assert [p.parameter for p in points] == list(MASK_TRANSMISSION)
    assert all(p.correlation >= 0.9 and p.failures == 0 for p in points)


def test_distance_degrades_monotonically():
    points = sweep("distance", seeds=20)
    assert [p.value for p in points] == list(DISTANCES_M)
    rs = [p.correlation for p in points]
    assert rs[0] > 0.9
    assert rs[-1] < rs[0]
    assert all(a >= b for a, b in zip(rs, rs[1:]))


def test_vertical_rotation_hurts_more():
    points = sweep("angle", seeds=5)
    at45 = {p.parameter: p.correlation for p in points if p.value == 45.0}
    assert at45["vertical"] < at45["horizontal"]


@pytest.mark.slow
def test_vertical_rotation_hurts_more_over_twenty_seeds():
    points = sweep("angle", seeds=20)
    at45 = {p.parameter: p.correlation for p in points if p.value == 45.0}
    assert at45["vertical"] < at45["horizontal"]


def test_unknown_mode():
    with pytest.raises(UsageError):
        sweep("lighting")
    with pytest.raises(UsageError):
        sweep("mask", seeds=0)


def test_sweep_csv(tmp_path):
    points = sweep("mask", seeds=1)
    write_sweep(points, tmp_path / "mask.csv")
    lines = (tmp_path / "mask.csv").read_text().splitlines()
    assert lines[0] == "mode,parameter,value,correlation,failures,seeds"
    assert lines[1].startswith("mask,surgical,1.0,")
    assert len(lines) == 1 + len(MASK_TRANSMISSION)
