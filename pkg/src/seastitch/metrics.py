"""CLEAR-MOT and identity metrics.

Per-frame correspondences follow the CLEAR rules: a ground-truth object
keeps its last matched hypothesis while their IoU stays above the
threshold, everything else is matched by optimal assignment on ``1 - IoU``.
Identity metrics come from one global trajectory-to-trajectory matching that
maximizes the number of frames where the paired boxes overlap.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .assignment import solve_gated, solve_min_cost
from .exceptions import FrameRangeMismatch
from .tracks import CLASS, FRAME, ID, X, H, check_tracks, iou_xywh


@dataclass
class EvalResult:
    idf1: float
    idp: float
    idr: float
    mota: float
    fp: int
    fn: int
    idsw: int
    frag: int
    mt: int
    ml: int
    recall: float
    precision: float
    num_gt: int = 0
    num_pred: int = 0
    num_matches: int = 0
    idtp: int = 0
    idfp: int = 0
    idfn: int = 0
    num_gt_tracks: int = 0

    def to_dict(self) -> dict:
        names = {"idf1": "IDF1", "idp": "IDP", "idr": "IDR", "mota": "MOTA", "fp": "FP", "fn": "FN",
                 "idsw": "IDSW", "frag": "Frag", "mt": "MT", "ml": "ML", "recall": "Recall",
                 "precision": "Precision", "num_gt": "GT", "num_pred": "Pred", "num_matches": "Matches",
                 "idtp": "IDTP", "idfp": "IDFP", "idfn": "IDFN", "num_gt_tracks": "GTTracks"}
        return {names[k]: v for k, v in asdict(self).items()}

    def report(self) -> str:
        """Flat ``key=value`` lines; floats with six decimals."""
        lines = []
        for k, v in self.to_dict().items():
            lines.append(f"{k}={v:.6f}" if isinstance(v, float) else f"{k}={v}")
        return "\n".join(lines)

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=False)
            fh.write("\n")


def frame_match(gt_boxes, pred_boxes, iou_threshold: float = 0.5, carry=(), ious=None) -> list[tuple[int, int]]:
    """Correspondences ``(gt_index, pred_index)`` for one frame.

    ``carry`` lists correspondences inherited from earlier frames; each is
    kept if its IoU is still at least ``iou_threshold``.  Remaining boxes are
    paired by maximum-cardinality, minimum ``1 - IoU`` assignment with the
    same threshold.
    """
    if ious is None:
        ious = iou_xywh(gt_boxes, pred_boxes)
    n, m = ious.shape
    pairs = []
    used_g, used_p = set(), set()
    for g, p in carry:
        if g in used_g or p in used_p:
            continue
        if ious[g, p] >= iou_threshold:
            pairs.append((g, p))
            used_g.add(g)
            used_p.add(p)
    rest_g = [g for g in range(n) if g not in used_g]
    rest_p = [p for p in range(m) if p not in used_p]
    if rest_g and rest_p:
        sub = 1.0 - ious[np.ix_(rest_g, rest_p)]
        for a, b in solve_gated(sub, 1.0 - iou_threshold).pairs:
            pairs.append((rest_g[a], rest_p[b]))
    return sorted(pairs)


def _ratio(num, den, empty=1.0):
    return num / den if den else empty


def evaluate(gt, pred, iou_threshold: float = 0.5, class_aware: bool = False, frame_range=None) -> EvalResult:
    """Score predicted tracks against ground truth.

    Classes are ignored unless ``class_aware``.  Predictions must fall inside
    ``frame_range`` (inclusive), which defaults to the ground-truth frames.
    """
    gt = check_tracks(gt, require_ids=True)
    pred = check_tracks(pred, require_ids=True)
    if frame_range is None and len(gt):
        frame_range = (gt[:, FRAME].min(), gt[:, FRAME].max())
    if frame_range is not None:
        lo, hi = frame_range
        for name, arr in (("ground truth", gt), ("prediction", pred)):
            if len(arr) and (arr[:, FRAME].min() < lo or arr[:, FRAME].max() > hi):
                raise FrameRangeMismatch(f"{name} frames extend outside [{int(lo)}, {int(hi)}]")

    gt_ids = np.unique(gt[:, ID]).astype(int) if len(gt) else np.zeros(0, int)
    pred_ids = np.unique(pred[:, ID]).astype(int) if len(pred) else np.zeros(0, int)
    g_index = {g: k for k, g in enumerate(gt_ids)}
    p_index = {p: k for k, p in enumerate(pred_ids)}
    overlap = np.zeros((len(gt_ids), len(pred_ids)), dtype=np.int64)

    fp = fn = idsw = matches = 0
    last_match: dict[int, int] = {}
    tracked: dict[int, list[bool]] = {g: [] for g in gt_ids.tolist()}

    frames = np.union1d(gt[:, FRAME], pred[:, FRAME])
    g_rows_by_frame = _rows_by_frame(gt)
    p_rows_by_frame = _rows_by_frame(pred)
    for f in frames:
        gr = g_rows_by_frame.get(f, np.zeros(0, int))
        pr = p_rows_by_frame.get(f, np.zeros(0, int))
        g_ids = gt[gr, ID].astype(int)
        p_ids = pred[pr, ID].astype(int)
        ious = iou_xywh(gt[gr, X:H + 1], pred[pr, X:H + 1])
        if class_aware and ious.size:
            ious = np.where(gt[gr, CLASS][:, None] == pred[pr, CLASS][None], ious, 0.0)

        hits = ious >= iou_threshold
        for a, b in zip(*np.nonzero(hits)):
            overlap[g_index[g_ids[a]], p_index[p_ids[b]]] += 1

        pos_of_pred = {p: k for k, p in enumerate(p_ids.tolist())}
        carry = [(a, pos_of_pred[last_match[g]]) for a, g in enumerate(g_ids.tolist())
                 if g in last_match and last_match[g] in pos_of_pred]
        pairs = frame_match(None, None, iou_threshold, carry, ious=ious)
        matched_g = set()
        for a, b in pairs:
            g, p = int(g_ids[a]), int(p_ids[b])
            if g in last_match and last_match[g] != p:
                idsw += 1
            last_match[g] = p
            matched_g.add(a)
        for a, g in enumerate(g_ids.tolist()):
            tracked[g].append(a in matched_g)
        matches += len(pairs)
        fp += len(pr) - len(pairs)
        fn += len(gr) - len(pairs)

    frag = mt = ml = 0
    for flags in tracked.values():
        flags = np.array(flags, dtype=bool)
        if flags.size == 0:
            continue
        ratio = flags.mean()
        mt += ratio >= 0.8
        ml += ratio < 0.2
        hit = np.flatnonzero(flags)
        if hit.size:
            seg = flags[hit[0]:hit[-1] + 1].astype(int)
            frag += int(np.sum(np.diff(seg) == 1))

    n_gt, n_pred = len(gt), len(pred)
    idtp = 0
    if overlap.size:
        solution = solve_min_cost(overlap.max() - overlap)
        idtp = int(sum(overlap[i, j] for i, j in solution.pairs))
    idfp, idfn = n_pred - idtp, n_gt - idtp
    if n_gt:
        mota = 1.0 - (fn + fp + idsw) / n_gt
    else:
        mota = 1.0 if fp == 0 else float("-inf")
    return EvalResult(
        idf1=_ratio(2 * idtp, 2 * idtp + idfp + idfn),
        idp=_ratio(idtp, idtp + idfp),
        idr=_ratio(idtp, idtp + idfn),
        mota=mota,
        fp=int(fp), fn=int(fn), idsw=int(idsw), frag=int(frag), mt=int(mt), ml=int(ml),
        recall=_ratio(matches, n_gt),
        precision=_ratio(matches, n_pred),
        num_gt=n_gt, num_pred=n_pred, num_matches=int(matches),
        idtp=idtp, idfp=int(idfp), idfn=int(idfn), num_gt_tracks=len(gt_ids),
    )


def _rows_by_frame(arr):
    if len(arr) == 0:
        return {}
    order = np.argsort(arr[:, FRAME], kind="stable")
    frames = arr[order, FRAME]
    bounds = np.flatnonzero(np.diff(frames)) + 1
    return {frames[chunk[0]]: order[chunk] for chunk in np.split(np.arange(len(arr)), bounds)}
