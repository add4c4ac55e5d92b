import io
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from seastitch.exceptions import ConfigTypeError, MetadataGap, MissingField, ParseError, RangeError, UnknownKey
from seastitch.geometry import FrameMetadata
from seastitch.io import (NonMonotonicFrames, PipelineConfig, apply_overrides, config_to_dict, load_bundle,
                          parse_config, parse_metadata, read_config, read_metadata, read_tracks, write_metadata,
                          write_tracks)
from seastitch.reid import BOAT, SWIMMER
from seastitch.tracks import sort_tracks


def record(frame, **over):
    rec = dict(frame_index=frame, gps_latitude=0.0001 * frame, gps_longitude=0.0, altitude=34.29,
               gimbal_pitch=60.0, gimbal_heading=10.0, x_speed=0.5, y_speed=0.0, z_speed=0.0)
    rec.update(over)
    return rec


# -- tracks ----------------------------------------------------------------------

def test_reads_canonical_line():
    arr = read_tracks(io.StringIO("1,1,100,200,50,30,0.9,2,1\n"))
    assert arr.tolist() == [[1, 1, 100, 200, 50, 30, 0.9, 2, 1]]


def test_canonical_file_round_trips_bytes(tmp_path):
    text = "1,1,100,200,50,30,0.9,2,1\n1,2,10.5,0,3.25,4,1,0,-1\n2,1,101,200,50,30,0.876543,2,1\n"
    src = tmp_path / "a.txt"
    src.write_text(text)
    dst = tmp_path / "b.txt"
    write_tracks(dst, read_tracks(src))
    assert dst.read_text() == text


def test_unassociated_detections_load_with_id_minus_one():
    arr = read_tracks(io.StringIO("3,-1,0,0,5,5,0.4,0,-1\n"))
    assert arr[0, 1] == -1


def test_writer_sorts_by_frame_then_id():
    buf = io.StringIO()
    write_tracks(buf, [[2, 1, 0, 0, 1, 1, 1, 0, 1], [1, 5, 0, 0, 1, 1, 1, 0, 1], [1, 2, 0, 0, 1, 1, 1, 0, 1]])
    assert [line.split(",")[:2] for line in buf.getvalue().splitlines()] == [["1", "2"], ["1", "5"], ["2", "1"]]


def test_six_significant_digits():
    buf = io.StringIO()
    write_tracks(buf, [[1, 1, 1234.5678, 0.000123456789, 1, 1, 0.5, 0, 1]])
    assert buf.getvalue() == "1,1,1234.57,0.000123457,1,1,0.5,0,1\n"


@pytest.mark.parametrize("line,msg", [
    ("1,1,100,200,0,30,0.9,2,1", "positive"),
    ("1,1,100,200,50,-3,0.9,2,1", "positive"),
    ("1,1,100,200,50,30,0.9,2", "9 fields"),
    ("1,1.5,100,200,50,30,0.9,2,1", "malformed"),
    ("1,x,100,200,50,30,0.9,2,1", "malformed"),
    ("1,1,nan,200,50,30,0.9,2,1", "non-finite"),
    ("1,-2,100,200,50,30,0.9,2,1", "id"),
])
def test_bad_rows_are_located(line, msg):
    with pytest.raises(ParseError, match=msg) as info:
        read_tracks(io.StringIO("1,1,0,0,1,1,1,0,1\n" + line + "\n"))
    assert info.value.line == 2


def test_non_monotonic_frames_warn():
    with pytest.warns(NonMonotonicFrames):
        arr = read_tracks(io.StringIO("2,1,0,0,1,1,1,0,1\n1,1,0,0,1,1,1,0,1\n"))
    assert arr[:, 0].tolist() == [2, 1]


def test_blank_and_comment_lines_skipped():
    assert len(read_tracks(io.StringIO("# header\n\n1,1,0,0,1,1,1,0,1\n"))) == 1


sig6 = st.floats(-1e4, 1e4, allow_nan=False).map(lambda v: float(f"{v:.6g}"))
pos6 = st.floats(0.01, 1e4).map(lambda v: float(f"{v:.6g}"))
rows = st.tuples(st.integers(0, 5000), st.integers(-1, 500), sig6, sig6, pos6, pos6, sig6, st.integers(0, 5), sig6)


@given(table=st.lists(rows, max_size=30))
def test_round_trip_in_memory(table):
    arr = np.array(table, dtype=float).reshape(-1, 9)
    buf = io.StringIO()
    write_tracks(buf, arr)
    back = read_tracks(io.StringIO(buf.getvalue()))
    np.testing.assert_array_equal(back, sort_tracks(arr) if len(arr) else back)
    again = io.StringIO()
    write_tracks(again, back)
    assert again.getvalue() == buf.getvalue()


@given(table=st.lists(rows, min_size=1, max_size=10), k=st.integers(0, 9), bad=st.floats(-100, 0))
def test_non_positive_size_always_rejected(table, k, bad):
    arr = sort_tracks(np.array(table, dtype=float))
    k %= len(arr)
    lines = [",".join(map(repr, r)) for r in arr.tolist()]
    fields = lines[k].split(",")
    fields[4] = repr(bad)
    lines[k] = ",".join(fields)
    with pytest.raises(ParseError) as info:
        read_tracks(io.StringIO("\n".join(lines)))
    assert info.value.line == k + 1


# -- metadata --------------------------------------------------------------------

def test_metadata_loads_and_sorts(tmp_path):
    p = tmp_path / "md.json"
    p.write_text(json.dumps([record(3), record(1)]))
    md = read_metadata(p)
    assert [m.frame_index for m in md] == [1, 3]
    assert md[0].altitude == 34.29


def test_metadata_missing_field_is_named():
    rec = record(4)
    del rec["gimbal_heading"]
    with pytest.raises(MissingField) as info:
        parse_metadata([rec])
    assert info.value.field == "gimbal_heading" and info.value.frame == 4


@pytest.mark.parametrize("over", [dict(altitude=0.0), dict(altitude=-3.0), dict(gimbal_pitch="high"),
                                  dict(x_speed=float("inf"))])
def test_metadata_range_errors(over):
    with pytest.raises(RangeError):
        parse_metadata([record(1, **over)])


def test_metadata_duplicates_and_bad_json(tmp_path):
    with pytest.raises(ParseError):
        parse_metadata([record(1), record(1)])
    p = tmp_path / "bad.json"
    p.write_text("[{")
    with pytest.raises(ParseError):
        read_metadata(p)


def test_metadata_interpolation_is_circular_for_heading():
    md = parse_metadata([record(1, gimbal_heading=350.0), record(3, gimbal_heading=10.0, altitude=40.0)],
                        interpolate=True)
    assert [m.frame_index for m in md] == [1, 2, 3]
    mid = md[1]
    assert mid.gimbal_heading == pytest.approx(0.0, abs=1e-12) or mid.gimbal_heading == pytest.approx(360.0)
    assert mid.altitude == pytest.approx((34.29 + 40.0) / 2)
    assert mid.gps_latitude == pytest.approx(0.0002)


def test_metadata_without_interpolation_keeps_gaps():
    assert len(parse_metadata([record(1), record(3)])) == 2


def test_metadata_frame_offset():
    md = parse_metadata([record(5)], frame_offset=-2)
    assert md[0].frame_index == 3
    with pytest.raises(RangeError):
        parse_metadata([record(1)], frame_offset=-2)


def test_metadata_round_trip(tmp_path):
    recs = [FrameMetadata(**record(f)) for f in range(3)]
    write_metadata(tmp_path / "m.json", recs)
    assert read_metadata(tmp_path / "m.json") == recs


def test_bundle_requires_metadata_for_every_frame(tmp_path):
    (tmp_path / "t.txt").write_text("1,1,0,0,5,5,1,0,1\n2,1,0,0,5,5,1,0,1\n")
    (tmp_path / "m.json").write_text(json.dumps([record(1)]))
    with pytest.raises(MetadataGap):
        load_bundle(tmp_path / "t.txt", tmp_path / "m.json")
    (tmp_path / "m.json").write_text(json.dumps([record(1), record(2)]))
    assert load_bundle(tmp_path / "t.txt", tmp_path / "m.json").sequence_id == "t"


# -- config ------------------------------------------------------------------------

def test_empty_config_is_all_defaults(tmp_path):
    (tmp_path / "c.toml").write_text("")
    assert read_config(tmp_path / "c.toml") == PipelineConfig() == read_config(None)
    cfg = PipelineConfig()
    assert cfg.camera.fov == 70 and cfg.reid.tau_match == {SWIMMER: 10.0, BOAT: 30.0}
    assert cfg.reid.tau_memory == {SWIMMER: 300, BOAT: 300} and cfg.reid.expansion_rate == 0.01
    assert cfg.post.max_gap == 30 and cfg.post.nms_iou == 0.7 and cfg.pretrack.buffer_frames == 100


def test_fov_override():
    assert parse_config("fov = 70").camera.fov == 70.0
    assert parse_config("fov = 64.5").camera.fov == 64.5


def test_per_class_threshold():
    cfg = parse_config("tau_match.boat = 30\ntau_match.swimmer = 4\n")
    assert cfg.reid.tau_match == {SWIMMER: 4.0, BOAT: 30.0}
    cfg = parse_config("[tau_memory]\n0 = 50\ndefault = 20\n")
    assert cfg.reid.tau_memory[SWIMMER] == 50 and cfg.reid.memory(7) == 20
    assert parse_config("tau_match = 12").reid.tau_match == {SWIMMER: 12.0, BOAT: 12.0}


def test_split_gap_key():
    assert parse_config("split_gap = 40").reid.split_gap == 40
    assert parse_config("split_gap = false").reid.split_gap is None


def test_unknown_keys_rejected():
    with pytest.raises(UnknownKey):
        parse_config("fov_deg = 70")
    with pytest.raises(UnknownKey):
        parse_config("tau_match.kayak = 3")


@pytest.mark.parametrize("text", ['fov = "wide"', "buffer_frames = 2.5", "short_term = 1", "fov = true"])
def test_type_errors(text):
    with pytest.raises(TypeError):
        parse_config(text)
    with pytest.raises(ConfigTypeError):
        parse_config(text)


def test_out_of_range_values_rejected():
    with pytest.raises(RangeError):
        parse_config("fov = 200")
    with pytest.raises(RangeError):
        parse_config("low_conf = 0.9")


def test_invalid_toml_names_file(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text("fov = = 3")
    with pytest.raises(ParseError, match="c.toml"):
        read_config(p)


def test_config_dict_round_trip():
    cfg = parse_config("fov = 65\ntau_match.boat = 25\nsplit_gap = 12\nnms = false\n")
    assert apply_overrides(PipelineConfig(), config_to_dict(cfg)) == cfg
    assert apply_overrides(PipelineConfig(), config_to_dict(PipelineConfig())) == PipelineConfig()
