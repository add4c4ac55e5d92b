"""Readers and writers for track tables, drone metadata and pipeline config.

* tracks: MOT text, ``frame,id,bb_left,bb_top,bb_width,bb_height,conf,class,visibility``
* metadata: JSON array of per-frame records (``frame_index`` plus the eight
  drone fields)
* config: TOML with flat keys; per-class thresholds as tables
"""

from __future__ import annotations

import json
import math
import sys
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from .exceptions import ConfigTypeError, MetadataGap, MissingField, ParseError, RangeError, UnknownKey
from .geometry import METADATA_FIELDS, CameraIntrinsics, FrameMetadata, ReferenceOrigin
from .postprocess import PostConfig
from .pretrack import PretrackConfig
from .reid import CLASS_NAMES, ReidConfig
from .tracks import CLASS, FRAME, ID, N_COLS, check_tracks, empty_tracks, sort_tracks

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class NonMonotonicFrames(UserWarning):
    pass


# -- tracks ------------------------------------------------------------------

def _g(v: float) -> str:
    return format(float(v) + 0.0, ".6g")


def format_row(row) -> str:
    return ",".join([
        str(int(row[FRAME])), str(int(row[ID])),
        *(_g(v) for v in row[2:7]),
        str(int(row[CLASS])), _g(row[8]),
    ])


def write_tracks(path, tracks) -> None:
    arr = sort_tracks(check_tracks(tracks))
    text = "".join(format_row(r) + "\n" for r in arr)
    if hasattr(path, "write"):
        path.write(text)
    else:
        Path(path).write_text(text)


def _parse_int(tok: str) -> int:
    val = float(tok)
    if not val.is_integer():
        raise ValueError(f"{tok!r} is not an integer")
    return int(val)


def read_tracks(path) -> np.ndarray:
    """Load a MOT text file as an ``(n, 9)`` array.  Row order is preserved."""
    text = path.read() if hasattr(path, "read") else Path(path).read_text()
    name = getattr(path, "name", path)
    rows = []
    last_frame = None
    warned = False
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        toks = [t.strip() for t in line.split(",")]
        if len(toks) != N_COLS:
            raise ParseError(f"expected {N_COLS} fields, found {len(toks)}", name, lineno)
        try:
            frame, tid = _parse_int(toks[0]), _parse_int(toks[1])
            x, y, w, h, conf = (float(t) for t in toks[2:7])
            cls = _parse_int(toks[7])
            vis = float(toks[8])
        except ValueError as err:
            raise ParseError(f"malformed value ({err})", name, lineno) from None
        if not all(math.isfinite(v) for v in (x, y, w, h, conf, vis)):
            raise ParseError("non-finite value", name, lineno)
        if frame < 0:
            raise ParseError("frame must be >= 0", name, lineno)
        if tid < -1:
            raise ParseError("id must be >= 1, or -1 for an unassociated detection", name, lineno)
        if w <= 0 or h <= 0:
            raise ParseError("box width and height must be positive", name, lineno)
        if last_frame is not None and frame < last_frame and not warned:
            warnings.warn(f"{name}:{lineno}: frame {frame} follows frame {last_frame}", NonMonotonicFrames,
                          stacklevel=2)
            warned = True
        last_frame = frame
        rows.append((frame, tid, x, y, w, h, conf, cls, vis))
    return np.array(rows, dtype=float) if rows else empty_tracks()


# -- metadata ----------------------------------------------------------------

def _interp_heading(a: float, b: float, s: float) -> float:
    diff = (b - a + 180.0) % 360.0 - 180.0
    return (a + s * diff) % 360.0


def interpolate_metadata(records: list[FrameMetadata]) -> list[FrameMetadata]:
    """Fill missing frames between records; heading follows the shortest arc."""
    out = []
    for a, b in zip(records, records[1:]):
        out.append(a)
        gap = b.frame_index - a.frame_index
        for k in range(1, gap):
            s = k / gap
            vals = {name: getattr(a, name) + s * (getattr(b, name) - getattr(a, name)) for name in METADATA_FIELDS}
            vals["gimbal_heading"] = _interp_heading(a.gimbal_heading, b.gimbal_heading, s)
            out.append(FrameMetadata(frame_index=a.frame_index + k, **vals))
    if records:
        out.append(records[-1])
    return out


def parse_metadata(records: list[dict], interpolate: bool = False, frame_offset: int = 0,
                   source=None) -> list[FrameMetadata]:
    if not isinstance(records, list):
        raise ParseError("metadata must be an array of per-frame records", source)
    parsed = {}
    for n, rec in enumerate(records):
        if not isinstance(rec, dict):
            raise ParseError(f"record {n} is not an object", source)
        if "frame_index" not in rec:
            raise MissingField("frame_index", path=source)
        frame = rec["frame_index"]
        if isinstance(frame, bool) or not isinstance(frame, (int, float)) or not float(frame).is_integer():
            raise ParseError(f"record {n}: frame_index must be an integer", source)
        frame = int(frame) + frame_offset
        vals = {}
        for name in METADATA_FIELDS:
            if name not in rec:
                raise MissingField(name, frame, path=source)
            v = rec[name]
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise RangeError(f"frame {frame}: {name} must be a finite number", source)
            vals[name] = float(v)
        if vals["altitude"] <= 0:
            raise RangeError(f"frame {frame}: altitude must be positive, got {vals['altitude']}", source)
        if frame < 0:
            raise RangeError(f"frame index {frame} is negative after offset", source)
        if frame in parsed:
            raise ParseError(f"duplicate record for frame {frame}", source)
        vals["gimbal_heading"] %= 360.0
        parsed[frame] = FrameMetadata(frame_index=frame, **vals)
    out = [parsed[k] for k in sorted(parsed)]
    return interpolate_metadata(out) if interpolate else out


def read_metadata(path, interpolate: bool = False, frame_offset: int = 0) -> list[FrameMetadata]:
    """Load per-frame drone records, sorted by frame index."""
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise ParseError(f"invalid JSON ({err.msg})", path, err.lineno) from None
    return parse_metadata(data, interpolate, frame_offset, source=path)


def write_metadata(path, records) -> None:
    with open(path, "w") as fh:
        json.dump([r.to_dict() for r in records], fh, indent=1)
        fh.write("\n")


def metadata_index(records) -> dict[int, FrameMetadata]:
    return {r.frame_index: r for r in records}


# -- config ------------------------------------------------------------------

@dataclass
class PipelineConfig:
    camera: CameraIntrinsics = field(default_factory=CameraIntrinsics)
    origin: ReferenceOrigin = field(default_factory=ReferenceOrigin)
    reid: ReidConfig = field(default_factory=ReidConfig)
    pretrack: PretrackConfig = field(default_factory=PretrackConfig)
    post: PostConfig = field(default_factory=PostConfig)
    short_term: bool = True
    long_term: bool = True
    nms: bool = True
    interpolate_metadata: bool = False
    metadata_frame_offset: int = 0


# key -> (section, attribute, kind)
_KEYS = {
    "fov": ("camera", "fov", float),
    "width": ("camera", "width", int),
    "height": ("camera", "height", int),
    "origin_latitude": ("origin", "latitude", float),
    "origin_longitude": ("origin", "longitude", float),
    "tau_match": ("reid", "tau_match", "per_class_float"),
    "tau_memory": ("reid", "tau_memory", "per_class_int"),
    "expansion_rate": ("reid", "expansion_rate", float),
    "lambda": ("reid", "expansion_rate", float),
    "velocity_window": ("reid", "velocity_window", int),
    "border_margin": ("reid", "border_margin", float),
    "split_gap": ("reid", "split_gap", "int_or_false"),
    "high_conf": ("pretrack", "high_conf", float),
    "low_conf": ("pretrack", "low_conf", float),
    "init_conf": ("pretrack", "init_conf", float),
    "buffer_frames": ("pretrack", "buffer_frames", int),
    "iou_gate": ("pretrack", "iou_gate", float),
    "max_gap": ("post", "max_gap", int),
    "nms_iou": ("post", "nms_iou", float),
    "pre_reid_interp": ("post", "pre_reid", bool),
    "post_reid_interp": ("post", "post_reid", bool),
    "short_term": (None, "short_term", bool),
    "long_term": (None, "long_term", bool),
    "nms": (None, "nms", bool),
    "interpolate_metadata": (None, "interpolate_metadata", bool),
    "metadata_frame_offset": (None, "metadata_frame_offset", int),
}


def _coerce(key: str, value: Any, kind):
    if kind == "int_or_false":
        return None if value is False else _coerce(key, value, int)
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigTypeError(f"{key}: expected true/false, got {value!r}")
        return value
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigTypeError(f"{key}: expected a number, got {value!r}")
    if kind is int:
        if not float(value).is_integer():
            raise ConfigTypeError(f"{key}: expected an integer, got {value!r}")
        return int(value)
    return float(value)


def _class_key(key: str, name: str) -> int:
    if name in CLASS_NAMES:
        return CLASS_NAMES[name]
    try:
        return int(name)
    except ValueError:
        raise UnknownKey(f"{key}.{name}") from None


def apply_overrides(cfg: PipelineConfig, values: dict) -> PipelineConfig:
    """New config with flat ``values`` applied; unknown keys raise :class:`UnknownKey`."""
    sections = {"camera": {}, "origin": {}, "reid": {}, "pretrack": {}, "post": {}, None: {}}
    for key, value in values.items():
        if key not in _KEYS:
            raise UnknownKey(key)
        section, attr, kind = _KEYS[key]
        if kind in ("per_class_float", "per_class_int"):
            num = float if kind == "per_class_float" else int
            default_attr = "default_" + attr
            current = dict(sections["reid"].get(attr, getattr(cfg.reid, attr)))
            if isinstance(value, dict):
                for name, v in value.items():
                    if name == "default":
                        sections["reid"][default_attr] = _coerce(f"{key}.default", v, num)
                    else:
                        current[_class_key(key, name)] = _coerce(f"{key}.{name}", v, num)
            else:
                v = _coerce(key, value, num)
                current = {c: v for c in current}
                sections["reid"][default_attr] = v
            sections["reid"][attr] = current
        else:
            sections[section][attr] = _coerce(key, value, kind)
    try:
        return replace(
            cfg,
            camera=replace(cfg.camera, **sections["camera"]),
            origin=replace(cfg.origin, **sections["origin"]),
            reid=replace(cfg.reid, **sections["reid"]),
            pretrack=replace(cfg.pretrack, **sections["pretrack"]),
            post=replace(cfg.post, **sections["post"]),
            **sections[None],
        )
    except ValueError as err:
        raise RangeError(f"invalid configuration: {err}") from None


def parse_config(text: str) -> PipelineConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as err:
        raise ParseError(f"invalid TOML ({err})") from None
    return apply_overrides(PipelineConfig(), data)


def read_config(path=None) -> PipelineConfig:
    """Pipeline config from a TOML file; ``None`` gives all defaults."""
    if path is None:
        return PipelineConfig()
    try:
        return parse_config(Path(path).read_text())
    except ParseError as err:
        if err.path is None:
            raise ParseError(str(err), path) from None
        raise


def config_to_dict(cfg: PipelineConfig) -> dict:
    """Flat mapping accepted back by :func:`apply_overrides`."""
    out = {}
    for key, (section, attr, kind) in _KEYS.items():
        if key == "lambda":
            continue
        obj = cfg if section is None else getattr(cfg, section)
        val = getattr(obj, attr)
        if isinstance(val, dict):
            val = {str(k): v for k, v in val.items()}
            val["default"] = getattr(obj, "default_" + attr)
        elif val is None and kind == "int_or_false":
            val = False
        out[key] = val
    return out


# -- bundles -----------------------------------------------------------------

@dataclass
class SequenceBundle:
    sequence_id: str
    tracks: np.ndarray
    metadata: list[FrameMetadata]
    camera: CameraIntrinsics = field(default_factory=CameraIntrinsics)
    origin: ReferenceOrigin = field(default_factory=ReferenceOrigin)

    def __post_init__(self):
        have = {m.frame_index for m in self.metadata}
        for f in np.unique(self.tracks[:, FRAME]).astype(int) if len(self.tracks) else []:
            if int(f) not in have:
                raise MetadataGap(int(f))


def load_bundle(tracks_path, metadata_path, cfg: PipelineConfig | None = None, sequence_id=None) -> SequenceBundle:
    cfg = cfg or PipelineConfig()
    tracks = read_tracks(tracks_path)
    metadata = read_metadata(metadata_path, cfg.interpolate_metadata, cfg.metadata_frame_offset)
    return SequenceBundle(sequence_id or Path(tracks_path).stem, tracks, metadata, cfg.camera, cfg.origin)

