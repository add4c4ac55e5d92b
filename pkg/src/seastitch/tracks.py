"""Track tables and the per-identity ``Tracklet`` view used by the algorithms.

Everything that crosses a public boundary is a float array of shape
``(n, 9)`` with MOT columns
``frame, id, bb_left, bb_top, bb_width, bb_height, conf, class, visibility``.
Raw detections carry ``id == -1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FRAME, ID, X, Y, W, H, CONF, CLASS, VIS = range(9)
N_COLS = 9
UNASSIGNED = -1


def empty_tracks() -> np.ndarray:
    return np.zeros((0, N_COLS))


def check_tracks(X, *, require_ids: bool = False, copy: bool = True) -> np.ndarray:
    """Validate a track/detection table and return it as a float array.

    Checks shape, finiteness, integral frame/id/class columns and positive
    box sizes.  With ``require_ids`` every row must carry an id >= 0.
    """
    arr = np.array(X, dtype=float, copy=copy) if copy else np.asarray(X, dtype=float)
    if arr.size == 0:
        return empty_tracks()
    if arr.ndim != 2 or arr.shape[1] != N_COLS:
        raise ValueError(f"expected an (n, {N_COLS}) table in MOT column order, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        bad = int(np.flatnonzero(~np.isfinite(arr).all(axis=1))[0])
        raise ValueError(f"row {bad} holds non-finite values")
    for col, name in ((FRAME, "frame"), (ID, "id"), (CLASS, "class")):
        if not np.array_equal(arr[:, col], np.round(arr[:, col])):
            raise ValueError(f"{name} column must hold integers")
    if (arr[:, FRAME] < 0).any():
        raise ValueError("frame indices must be >= 0")
    bad = np.flatnonzero((arr[:, W] <= 0) | (arr[:, H] <= 0))
    if bad.size:
        raise ValueError(f"row {int(bad[0])} has a non-positive box size")
    if require_ids and (arr[:, ID] < 0).any():
        raise ValueError("every row needs an assigned track id")
    return arr


def sort_tracks(arr: np.ndarray) -> np.ndarray:
    """Rows ordered by (frame, id) with a stable tie-break on input order."""
    if len(arr) == 0:
        return arr
    order = np.lexsort((arr[:, ID], arr[:, FRAME]))
    return arr[order]


def centers(arr: np.ndarray) -> np.ndarray:
    return np.stack([arr[:, X] + arr[:, W] / 2.0, arr[:, Y] + arr[:, H] / 2.0], axis=-1)


@dataclass
class Tracklet:
    """One identity segment.

    ``rows`` indexes the observations back into the table they came from;
    ``world`` holds sea-plane positions, NaN where the pixel ray misses.
    """

    id: int
    class_id: int
    frames: np.ndarray
    boxes: np.ndarray
    conf: np.ndarray
    rows: np.ndarray
    world: np.ndarray | None = None

    def __post_init__(self):
        if len(self.frames) == 0:
            raise ValueError("a tracklet needs at least one observation")
        if np.any(np.diff(self.frames) <= 0):
            raise ValueError(f"tracklet {self.id}: frames must be strictly increasing")

    def __len__(self):
        return len(self.frames)

    @property
    def entry_frame(self) -> int:
        return int(self.frames[0])

    @property
    def exit_frame(self) -> int:
        return int(self.frames[-1])

    @property
    def span(self) -> int:
        return self.exit_frame - self.entry_frame

    def valid_world(self) -> np.ndarray:
        """Indices of observations with a usable world point."""
        if self.world is None:
            return np.zeros(0, dtype=int)
        return np.flatnonzero(~np.isnan(self.world[:, 0]))

    def concat(self, other: "Tracklet") -> "Tracklet":
        """``other`` appended after this tracklet, keeping this id."""
        world = None
        if self.world is not None and other.world is not None:
            world = np.concatenate([self.world, other.world])
        return Tracklet(
            id=self.id,
            class_id=self.class_id,
            frames=np.concatenate([self.frames, other.frames]),
            boxes=np.concatenate([self.boxes, other.boxes]),
            conf=np.concatenate([self.conf, other.conf]),
            rows=np.concatenate([self.rows, other.rows]),
            world=world,
        )


def tracklets_from_array(arr: np.ndarray) -> list[Tracklet]:
    """Group a validated table by id.  Rows with ``id < 0`` are skipped."""
    out = []
    if len(arr) == 0:
        return out
    ids = arr[:, ID].astype(int)
    for tid in np.unique(ids[ids >= 0]):
        rows = np.flatnonzero(ids == tid)
        rows = rows[np.argsort(arr[rows, FRAME], kind="stable")]
        classes = np.unique(arr[rows, CLASS])
        if len(classes) != 1:
            raise ValueError(f"track {tid} mixes classes {classes.astype(int).tolist()}")
        out.append(Tracklet(
            id=int(tid),
            class_id=int(classes[0]),
            frames=arr[rows, FRAME].astype(int),
            boxes=arr[rows][:, [X, Y, W, H]],
            conf=arr[rows, CONF],
            rows=rows,
        ))
    return out


def iou_xywh(a, b) -> np.ndarray:
    """Pairwise IoU between ``(n, 4)`` and ``(m, 4)`` boxes in x, y, w, h form."""
    a = np.asarray(a, dtype=float).reshape(-1, 4)
    b = np.asarray(b, dtype=float).reshape(-1, 4)
    ax2, ay2 = a[:, 0] + a[:, 2], a[:, 1] + a[:, 3]
    bx2, by2 = b[:, 0] + b[:, 2], b[:, 1] + b[:, 3]
    iw = np.clip(np.minimum(ax2[:, None], bx2[None]) - np.maximum(a[:, 0, None], b[None, :, 0]), 0, None)
    ih = np.clip(np.minimum(ay2[:, None], by2[None]) - np.maximum(a[:, 1, None], b[None, :, 1]), 0, None)
    inter = iw * ih
    union = (a[:, 2] * a[:, 3])[:, None] + (b[:, 2] * b[:, 3])[None] - inter
    return np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0)


def iou(a, b) -> float:
    return float(iou_xywh(a, b)[0, 0])
