import json

import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from app.errors import FrameValidationError, GapError, TraceParseError, TraceValidationError
from app.frameio import (
    FaceBox,
    Frame,
    FrameSequence,
    RespirationTrace,
    load_sequence,
    load_trace,
    read_pnm,
    save_trace,
    write_pgm,
    write_sequence,
)
from tests.helpers import make_sequence


def _sequence(T=5, W=16, H=12, seed=0):
    rng = np.random.default_rng(seed)
    thermal = rng.integers(0, 65536, size=(T, H, W), dtype=np.uint16)
    return make_sequence(thermal, boxes=[(2, 1, 10, 9)] * T)


def test_frame_rejects_wrong_sample_count():
    with pytest.raises(FrameValidationError):
        Frame(width=4, height=4, channel_count=1, samples=np.zeros(15))


def test_frame_is_read_only():
    f = Frame.from_array(np.zeros((3, 4), dtype=np.uint16))
    assert f.dims == (4, 3)
    with pytest.raises(ValueError):
        f.samples[0, 0] = 1


def test_load_sequence_preserves_count(tmp_path):
    seq = _sequence(T=100)
    write_sequence(seq, tmp_path)
    loaded = load_sequence(tmp_path)
    assert len(loaded) == 100
    assert loaded.thermal_dims == (16, 12)
    for a, b in zip(seq.thermal, loaded.thermal):
        assert np.array_equal(a.samples, b.samples)
    assert [b.x for b in loaded.boxes] == [2] * 100


def test_missing_frame_is_reported_by_index(tmp_path):
    write_sequence(_sequence(T=60), tmp_path)
    (tmp_path / "thermal_00057.pgm").unlink()
    with pytest.raises(GapError) as exc:
        load_sequence(tmp_path)
    assert exc.value.index == 57
    assert "57" in str(exc.value)


def test_missing_box_record_is_a_gap(tmp_path):
    write_sequence(_sequence(T=4), tmp_path)
    lines = (tmp_path / "boxes.jsonl").read_text().splitlines()
    (tmp_path / "boxes.jsonl").write_text("\n".join(lines[:2] + lines[3:]) + "\n")
    with pytest.raises(GapError) as exc:
        load_sequence(tmp_path)
    assert exc.value.index == 2


def test_box_outside_frame(tmp_path):
    write_sequence(_sequence(T=3), tmp_path)
    rec = {"frame": 1, "x": 10, "y": 1, "w": 10, "h": 9}  # x + w = 20 > 16
    lines = (tmp_path / "boxes.jsonl").read_text().splitlines()
    lines[1] = json.dumps(rec)
    (tmp_path / "boxes.jsonl").write_text("\n".join(lines) + "\n")
    with pytest.raises(FrameValidationError):
        load_sequence(tmp_path)


def test_dimension_mismatch(tmp_path):
    write_sequence(_sequence(T=3), tmp_path)
    write_pgm(tmp_path / "thermal_00002.pgm", Frame.from_array(np.zeros((12, 18), dtype=np.uint16)))
    with pytest.raises(FrameValidationError):
        load_sequence(tmp_path)


def test_missing_directory(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_sequence(tmp_path / "nope")


def test_small_face_box_rejected():
    with pytest.raises(FrameValidationError):
        make_sequence(np.zeros((2, 12, 16)), boxes=[(0, 0, 7, 9)] * 2)


def test_box_index_must_match_position():
    frames = [Frame.from_array(np.zeros((12, 16), dtype=np.uint16))] * 2
    with pytest.raises(GapError):
        FrameSequence(thermal=frames, rgb=[], boxes=[FaceBox(0, 0, 0, 8, 8), FaceBox(2, 0, 0, 8, 8)])


def test_pnm_header_with_comment_and_8bit(tmp_path):
    data = b"P5\n# from camera\n3 2\n255\n" + bytes([0, 1, 2, 3, 4, 255])
    (tmp_path / "a.pgm").write_bytes(data)
    f = read_pnm(tmp_path / "a.pgm")
    assert f.dims == (3, 2)
    assert f.samples.tolist() == [[0, 1, 2], [3, 4, 255]]


def test_pgm_16bit_is_big_endian(tmp_path):
    write_pgm(tmp_path / "a.pgm", Frame.from_array(np.array([[0x0102]], dtype=np.uint16)))
    raw = (tmp_path / "a.pgm").read_bytes()
    assert raw.endswith(b"\x01\x02")
    assert read_pnm(tmp_path / "a.pgm").samples[0, 0] == 0x0102


def test_truncated_pnm(tmp_path):
    (tmp_path / "a.pgm").write_bytes(b"P5\n4 4\n65535\n" + b"\x00" * 10)
    with pytest.raises(FrameValidationError):
        read_pnm(tmp_path / "a.pgm")


def test_ppm_wide_maxval_rejected(tmp_path):
    (tmp_path / "a.ppm").write_bytes(b"P6\n2 1\n65535\n" + bytes(range(12)))
    with pytest.raises(FrameValidationError, match="maxval"):
        read_pnm(tmp_path / "a.ppm")


def test_trace_invariants():
    with pytest.raises(TraceValidationError):
        RespirationTrace(values=[])
    with pytest.raises(TraceValidationError):
        RespirationTrace(values=[1.0, float("nan")])
    with pytest.raises(TraceValidationError):
        RespirationTrace(values=[1.0], label="wheeze")


def test_trace_csv_layout(tmp_path):
    trace = RespirationTrace(values=[0.5, -1.25], sample_rate=10.0, label="normal", provenance="synth", seed=3)
    save_trace(trace, tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_text() == (
        "# sample_rate=10.0;label=normal;seed=3;provenance=synth\n"
        "t,value\n"
        "0.0,0.5\n"
        "0.1,-1.25\n"
    )


def test_trace_parse_error_names_line(tmp_path):
    (tmp_path / "t.csv").write_text("# sample_rate=10.0;label=none;provenance=\nt,value\n0.0,1.0\n0.1,abc\n")
    with pytest.raises(TraceParseError) as exc:
        load_trace(tmp_path / "t.csv")
    assert exc.value.line == 4


finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=100)
@given(
    values=st.lists(finite, min_size=1, max_size=50),
    sample_rate=st.floats(min_value=0.1, max_value=1000, allow_nan=False),
    label=st.sampled_from([None, "normal", "abnormal"]),
    seed=st.one_of(st.none(), st.integers(min_value=0, max_value=2**31)),
    provenance=st.text(alphabet="abc /=;,._-0123456789", max_size=30),
)
def test_trace_round_trip(tmp_path_factory, values, sample_rate, label, seed, provenance):
    path = tmp_path_factory.mktemp("trace") / "t.csv"
    trace = RespirationTrace(values=values, sample_rate=sample_rate, label=label, provenance=provenance, seed=seed)
    save_trace(trace, path)
    loaded = load_trace(path)
    assert np.array_equal(loaded.values, trace.values)
    assert loaded.sample_rate == sample_rate
    assert loaded.label == label
    assert loaded.seed == seed
    assert loaded.provenance == provenance


@pytest.mark.parametrize("provenance", ["camera A ", "  lab", " ", "a ; b= "])
def test_trace_provenance_keeps_whitespace(tmp_path, provenance):
    path = tmp_path / "t.csv"
    save_trace(RespirationTrace(values=[0.0, 1.0], sample_rate=10.0, provenance=provenance), path)
    assert load_trace(path).provenance == provenance
