"""Minimal two-stage IoU tracker that turns raw detections into tracklets.

There is no motion model: a live track is compared through its last box.
Its fragments are exactly what the re-identification passes repair.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assignment import solve_gated
from .tracks import CLASS, CONF, FRAME, ID, X, H, check_tracks, iou, iou_xywh, sort_tracks

__all__ = ["PretrackConfig", "iou", "two_stage_track"]


@dataclass
class PretrackConfig:
    high_conf: float = 0.5
    low_conf: float = 0.1
    init_conf: float = 0.2
    buffer_frames: int = 100
    iou_gate: float = 0.5

    def __post_init__(self):
        if not self.low_conf <= self.init_conf <= self.high_conf:
            raise ValueError("need low_conf <= init_conf <= high_conf")
        if self.buffer_frames < 0:
            raise ValueError("buffer_frames must be >= 0")
        if not 0.0 <= self.iou_gate <= 1.0:
            raise ValueError("iou_gate must lie in [0, 1]")


class _Track:
    __slots__ = ("id", "box", "last_frame")

    def __init__(self, tid, box, frame):
        self.id = tid
        self.box = box
        self.last_frame = frame


def _associate(tracks, boxes, gate):
    if not tracks or len(boxes) == 0:
        return []
    costs = 1.0 - iou_xywh(np.array([t.box for t in tracks]), boxes)
    return solve_gated(costs, 1.0 - gate).pairs


def two_stage_track(detections, cfg: PretrackConfig | None = None) -> np.ndarray:
    """Assign track ids to a detection table; returns the kept rows with ids set.

    Per frame and class: high-confidence detections are matched first,
    low-confidence ones then try the tracks still unmatched, and leftovers
    above ``init_conf`` open new tracks.  Tracks unseen for more than
    ``buffer_frames`` frames are closed.
    """
    cfg = cfg or PretrackConfig()
    det = sort_tracks(check_tracks(detections))
    out_rows, out_ids = [], []
    next_id = 1
    live: dict[int, list[_Track]] = {}

    frames = det[:, FRAME].astype(int)
    bounds = np.flatnonzero(np.diff(frames)) + 1
    for chunk in np.split(np.arange(len(det)), bounds) if len(det) else []:
        f = int(frames[chunk[0]])
        for class_id in np.unique(det[chunk, CLASS]).astype(int).tolist():
            tracks = [t for t in live.get(class_id, []) if f - t.last_frame - 1 <= cfg.buffer_frames]
            live[class_id] = tracks
            rows = chunk[det[chunk, CLASS] == class_id]
            conf = det[rows, CONF]
            high = rows[conf >= cfg.high_conf]
            low = rows[(conf >= cfg.low_conf) & (conf < cfg.high_conf)]

            free_tracks = list(range(len(tracks)))
            leftovers = []
            for stage_rows in (high, low):
                boxes = det[stage_rows][:, X:H + 1]
                cand = [tracks[k] for k in free_tracks]
                pairs = _associate(cand, boxes, cfg.iou_gate)
                taken = set()
                for ti, di in pairs:
                    t = cand[ti]
                    t.box = boxes[di]
                    t.last_frame = f
                    out_rows.append(stage_rows[di])
                    out_ids.append(t.id)
                    taken.add(ti)
                free_tracks = [k for n, k in enumerate(free_tracks) if n not in taken]
                matched = {di for _, di in pairs}
                leftovers.extend(r for n, r in enumerate(stage_rows) if n not in matched)

            for r in sorted(leftovers):
                if det[r, CONF] > cfg.init_conf:
                    tracks.append(_Track(next_id, det[r, X:H + 1], f))
                    out_rows.append(r)
                    out_ids.append(next_id)
                    next_id += 1

    out = det[np.array(out_rows, dtype=int)] if out_rows else det[:0]
    out[:, ID] = out_ids
    return sort_tracks(out)
