"""Gap interpolation and area-prioritized non-maximum suppression."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tracks import CONF, FRAME, ID, VIS, H, X, check_tracks, iou_xywh, sort_tracks


@dataclass
class PostConfig:
    max_gap: int = 30
    nms_iou: float = 0.7
    pre_reid: bool = True
    post_reid: bool = True

    def __post_init__(self):
        if self.max_gap < 0:
            raise ValueError("max_gap must be >= 0")
        if not 0.0 < self.nms_iou <= 1.0:
            raise ValueError("nms_iou must lie in (0, 1]")


def interpolate_track(rows: np.ndarray, max_gap: int) -> np.ndarray:
    """Fill internal gaps of at most ``max_gap`` missing frames in one track.

    ``rows`` are table rows of a single id sorted by frame.  Inserted boxes
    are linear in x, y, w, h; their confidence and visibility are the
    smaller of the two flanking observations.  Original rows come back
    untouched, interleaved with the new ones in frame order.
    """
    if len(rows) < 2 or max_gap == 0:
        return rows
    frames = rows[:, FRAME]
    gaps = np.diff(frames) - 1
    pieces = []
    for k in range(len(rows) - 1):
        pieces.append(rows[k:k + 1])
        g = int(gaps[k])
        if 0 < g <= max_gap:
            a, b = rows[k], rows[k + 1]
            s = (np.arange(1, g + 1) / (g + 1))[:, None]
            fill = np.repeat(a[None], g, axis=0)
            fill[:, FRAME] = frames[k] + np.arange(1, g + 1)
            fill[:, X:H + 1] = a[X:H + 1] + s * (b[X:H + 1] - a[X:H + 1])
            fill[:, CONF] = min(a[CONF], b[CONF])
            fill[:, VIS] = min(a[VIS], b[VIS])
            pieces.append(fill)
    pieces.append(rows[-1:])
    return np.concatenate(pieces)


def interpolate_tracks(tracks, max_gap: int = 30) -> np.ndarray:
    arr = check_tracks(tracks)
    if len(arr) == 0:
        return arr
    out = [arr[arr[:, ID] < 0]]
    for tid in np.unique(arr[arr[:, ID] >= 0, ID]):
        rows = arr[arr[:, ID] == tid]
        out.append(interpolate_track(rows[np.argsort(rows[:, FRAME], kind="stable")], max_gap))
    return sort_tracks(np.concatenate(out))


def area_nms(boxes, conf=None, nms_iou: float = 0.7) -> np.ndarray:
    """Indices of boxes kept by greedy NMS that favors larger boxes.

    Candidates are visited by area (descending), then confidence
    (descending), then input order; a box survives if its IoU with every
    box kept so far is at most ``nms_iou``.  Returned indices are sorted.
    """
    boxes = np.asarray(boxes, dtype=float).reshape(-1, 4)
    n = len(boxes)
    if n == 0:
        return np.zeros(0, dtype=int)
    conf = np.zeros(n) if conf is None else np.asarray(conf, dtype=float)
    area = boxes[:, 2] * boxes[:, 3]
    order = np.lexsort((np.arange(n), -conf, -area))
    overlaps = iou_xywh(boxes, boxes)
    kept = []
    for i in order:
        if all(overlaps[i, k] <= nms_iou for k in kept):
            kept.append(i)
    return np.sort(np.array(kept, dtype=int))


def nms_tracks(tracks, nms_iou: float = 0.7) -> np.ndarray:
    """Apply :func:`area_nms` frame by frame across all classes."""
    arr = sort_tracks(check_tracks(tracks))
    if len(arr) == 0:
        return arr
    frames = arr[:, FRAME]
    bounds = np.flatnonzero(np.diff(frames)) + 1
    keep = []
    for chunk in np.split(np.arange(len(arr)), bounds):
        if len(chunk) == 1:
            keep.append(chunk)
            continue
        keep.append(chunk[area_nms(arr[chunk][:, X:H + 1], arr[chunk, CONF], nms_iou)])
    return arr[np.concatenate(keep)]


__all__ = ["PostConfig", "interpolate_track", "interpolate_tracks", "area_nms", "nms_tracks"]
