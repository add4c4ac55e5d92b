"""Metadata-guided re-identification of fragmented tracklets.

Two offline passes run per class over a whole sequence:

* the short-term pass relinks tracklets lost in the middle of the image
  (detector dropout, gimbal jerks) by plain sea-plane distance between the
  last and first world positions;
* the long-term pass relinks tracks that left through the image border,
  extrapolating exits forward and entries backward at constant velocity and
  widening the gate with the length of the gap.

Both hand their cost matrices to :func:`seastitch.assignment.solve_gated`.
"""

from __future__ import annotations

import enum
import heapq
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .assignment import solve_gated
from .exceptions import MetadataGap
from .geometry import (CameraIntrinsics, FrameMetadata, ReferenceOrigin, WorldPoint,
                       forward_batch, metadata_arrays, project_batch)
from .tracks import Tracklet

logger = logging.getLogger(__name__)

SWIMMER, BOAT = 0, 1
CLASS_NAMES = {"swimmer": SWIMMER, "boat": BOAT}


class Termination(enum.Enum):
    BORDER_EXIT = "border_exit"
    MID_IMAGE_LOSS = "mid_image_loss"


class Expired(Exception):
    """The memory of an exited track is too old to be extrapolated."""


@dataclass
class ReidConfig:
    """Thresholds for both passes.

    ``tau_match`` (meters) and ``tau_memory`` (frames) are per class, with a
    fallback for classes that are not listed.  A zero ``tau_match`` turns
    matching off for that class.
    """

    tau_match: dict[int, float] = field(default_factory=lambda: {SWIMMER: 10.0, BOAT: 30.0})
    tau_memory: dict[int, int] = field(default_factory=lambda: {SWIMMER: 300, BOAT: 300})
    default_tau_match: float = 10.0
    default_tau_memory: int = 300
    expansion_rate: float = 0.01
    velocity_window: int = 10
    border_margin: float = 50.0
    # tracklets are also cut where more than this many frames are missing; None disables
    split_gap: int | None = None

    def __post_init__(self):
        if any(v < 0 for v in self.tau_match.values()) or self.default_tau_match < 0:
            raise ValueError("tau_match must be >= 0")
        if any(v < 0 for v in self.tau_memory.values()) or self.default_tau_memory < 0:
            raise ValueError("tau_memory must be >= 0")
        if self.expansion_rate < 0:
            raise ValueError("expansion_rate must be >= 0")
        if self.velocity_window < 1:
            raise ValueError("velocity_window must be >= 1")
        if self.border_margin < 0:
            raise ValueError("border_margin must be >= 0")
        if self.split_gap is not None and self.split_gap < 0:
            raise ValueError("split_gap must be >= 0")

    def match_gate(self, class_id: int) -> float:
        return float(self.tau_match.get(class_id, self.default_tau_match))

    def memory(self, class_id: int) -> int:
        return int(self.tau_memory.get(class_id, self.default_tau_memory))


@dataclass
class ExitState:
    tracklet: Tracklet
    exit_world: WorldPoint
    exit_velocity: tuple[float, float]
    exit_frame: int
    termination_kind: Termination


@dataclass
class Merge:
    stage: str
    class_id: int
    into: int
    merged: int
    frame: int
    cost: float
    gate: float


class MemoryBank:
    """Exited tracks waiting for a successor, keyed by chain id."""

    def __init__(self, tau_memory: int):
        self.tau_memory = tau_memory
        self._entries: dict[int, ExitState] = {}

    def __len__(self):
        return len(self._entries)

    def add(self, key: int, state: ExitState):
        self._entries[key] = state

    def remove(self, key: int):
        self._entries.pop(key, None)

    def candidates(self, frame: int) -> list[tuple[int, ExitState]]:
        """Entries still inside the memory window at ``frame``; older ones are dropped."""
        stale = [k for k, s in self._entries.items() if frame - s.exit_frame >= self.tau_memory]
        for k in stale:
            del self._entries[k]
        return sorted(((k, s) for k, s in self._entries.items() if s.exit_frame < frame),
                      key=lambda ks: (ks[1].exit_frame, ks[0]))


# -- motion ----------------------------------------------------------------

def exit_velocity(t: Tracklet, w: int) -> np.ndarray:
    """Planar velocity (m/frame) over the last ``min(w, span)`` frames."""
    idx = t.valid_world()
    if idx.size < 2:
        return np.zeros(2)
    frames = t.frames[idx]
    last = idx[-1]
    first = idx[np.searchsorted(frames, frames[-1] - w)]
    dt = t.frames[last] - t.frames[first]
    if dt == 0:
        return np.zeros(2)
    return (t.world[last, :2] - t.world[first, :2]) / dt


def entry_velocity(t: Tracklet, w: int) -> np.ndarray:
    """Planar velocity (m/frame) over the first ``min(w, span)`` frames."""
    idx = t.valid_world()
    if idx.size < 2:
        return np.zeros(2)
    frames = t.frames[idx]
    first = idx[0]
    last = idx[np.searchsorted(frames, frames[0] + w, side="right") - 1]
    dt = t.frames[last] - t.frames[first]
    if dt == 0:
        return np.zeros(2)
    return (t.world[last, :2] - t.world[first, :2]) / dt


def extrapolate(exit: ExitState, dt: float, tau_memory: float) -> WorldPoint:
    if dt < 0:
        raise ValueError("dt must be >= 0")
    if not dt < tau_memory:
        raise Expired(f"gap of {dt} frames reaches tau_memory={tau_memory}")
    vx, vy = exit.exit_velocity
    return WorldPoint(exit.exit_world.x + dt * vx, exit.exit_world.y + dt * vy, 0.0)


def expanded_threshold(tau_match: float, lam: float, dt_exit: float, dt_entry: float = 0.0) -> float:
    """Gate that grows linearly with the time a track has been out of view.

    Never smaller than ``tau_match`` so an immediate re-entry stays matchable.
    """
    return tau_match * max(1.0, lam * (dt_exit + dt_entry))


# -- termination -------------------------------------------------------------

def classify_termination(t: Tracklet, cfg: ReidConfig, cam: CameraIntrinsics = CameraIntrinsics(),
                         metadata: Mapping[int, FrameMetadata] | None = None,
                         origin: ReferenceOrigin = ReferenceOrigin()) -> Termination:
    """Did the track leave through the image border or get lost inside the image?

    Border exit means the last box reaches into the ``border_margin`` band, or
    the last world position falls outside the next frame's view (the gimbal
    or drone moved the view away from it).
    """
    x, y, w, h = t.boxes[-1]
    m = cfg.border_margin
    if x <= m or y <= m or x + w >= cam.width - m or y + h >= cam.height - m:
        return Termination.BORDER_EXIT
    if metadata is not None and t.world is not None:
        nxt = metadata.get(t.exit_frame + 1)
        idx = t.valid_world()
        if nxt is not None and idx.size:
            pos, heading, pitch = metadata_arrays([nxt], origin)
            uv = forward_batch(t.world[idx[-1]][None], pos, heading, pitch, cam)[0]
            if np.isnan(uv).any() or not (0.0 <= uv[0] <= cam.width and 0.0 <= uv[1] <= cam.height):
                return Termination.BORDER_EXIT
    return Termination.MID_IMAGE_LOSS


def _exit_state(t: Tracklet, cfg: ReidConfig, kind: Termination) -> ExitState | None:
    idx = t.valid_world()
    if idx.size == 0:
        return None
    last = idx[-1]
    return ExitState(
        tracklet=t,
        exit_world=WorldPoint(*t.world[last]),
        exit_velocity=tuple(exit_velocity(t, cfg.velocity_window)),
        exit_frame=int(t.frames[last]),
        termination_kind=kind,
    )


def _entry(t: Tracklet):
    idx = t.valid_world()
    if idx.size == 0:
        return None
    return int(t.frames[idx[0]]), t.world[idx[0], :2]


# -- passes ------------------------------------------------------------------

CostFn = Callable[[ExitState, Tracklet, int, np.ndarray], "tuple[float, float] | None"]


def _link_pass(tracklets: list[Tracklet], kind: Termination, cost_fn: CostFn, tau_memory: int,
               classify: Callable[[Tracklet], Termination], cfg: ReidConfig, stage: str,
               merges: list | None) -> list[Tracklet]:
    """Chain tracklets of one class in entry order using a memory bank.

    ``cost_fn(exit, entering, entry_frame, entry_xy)`` returns ``(cost, gate)``
    or ``None`` when the pair is not a candidate.
    """
    if not tracklets:
        return []
    order = sorted(tracklets, key=lambda t: (t.entry_frame, t.id))
    chains: dict[int, Tracklet] = {}
    bank = MemoryBank(tau_memory)
    ended: list[tuple[int, int]] = []  # heap of (tail exit frame, chain id)

    i = 0
    while i < len(order):
        f = order[i].entry_frame
        group = []
        while i < len(order) and order[i].entry_frame == f:
            group.append(order[i])
            i += 1
        while ended and ended[0][0] < f:
            _, key = heapq.heappop(ended)
            chain = chains[key]
            if classify(chain) is kind:
                state = _exit_state(chain, cfg, kind)
                if state is not None:
                    bank.add(key, state)

        waiting = bank.candidates(f)
        entering = [(t, _entry(t)) for t in group]
        links = {}
        if waiting and any(e is not None for _, e in entering):
            costs = np.full((len(waiting), len(entering)), np.inf)
            gates = np.zeros_like(costs)
            for r, (_, state) in enumerate(waiting):
                for c, (t, entry) in enumerate(entering):
                    if entry is None or entry[0] <= state.exit_frame:
                        continue
                    scored = cost_fn(state, t, *entry)
                    if scored is not None:
                        costs[r, c], gates[r, c] = scored
            matching = solve_gated(costs, gates)
            for r, c in matching.pairs:
                links[c] = (waiting[r][0], costs[r, c], gates[r, c])

        for c, (t, _) in enumerate(entering):
            if c in links:
                key, cost, gate = links[c]
                bank.remove(key)
                chains[key] = chains[key].concat(t)
                if merges is not None:
                    merges.append(Merge(stage, t.class_id, key, t.id, f, float(cost), float(gate)))
            else:
                key = t.id
                chains[key] = t
            heapq.heappush(ended, (chains[key].exit_frame, key))
    return sorted(chains.values(), key=lambda t: (t.entry_frame, t.id))


def short_term_pass(tracklets: list[Tracklet], cfg: ReidConfig, cam: CameraIntrinsics = CameraIntrinsics(),
                    metadata: Mapping[int, FrameMetadata] | None = None,
                    origin: ReferenceOrigin = ReferenceOrigin(), merges: list | None = None) -> list[Tracklet]:
    """Relink tracklets lost inside the image by direct world distance.

    Tracklets must carry world points (see :func:`compute_world_points`).
    """
    out = []
    for class_id, group in _by_class(tracklets).items():
        gate = cfg.match_gate(class_id)
        if gate <= 0:
            out.extend(group)
            continue

        def cost(state, t, frame, xy, gate=gate):
            d = math.hypot(xy[0] - state.exit_world.x, xy[1] - state.exit_world.y)
            return d, gate

        out.extend(_link_pass(group, Termination.MID_IMAGE_LOSS, cost, cfg.memory(class_id),
                              lambda t: classify_termination(t, cfg, cam, metadata, origin),
                              cfg, "short_term", merges))
    return out


def long_term_pass(tracklets: list[Tracklet], cfg: ReidConfig, cam: CameraIntrinsics = CameraIntrinsics(),
                   metadata: Mapping[int, FrameMetadata] | None = None,
                   origin: ReferenceOrigin = ReferenceOrigin(), merges: list | None = None) -> list[Tracklet]:
    """Relink tracks across border exits with bi-directional extrapolation.

    The exit is carried forward at its exit velocity.  When the entering
    track is at least ``velocity_window`` frames long, its entry is carried
    backward as well and both meet halfway through the gap; shorter entering
    tracks are compared at their raw entry point.
    """
    out = []
    w = cfg.velocity_window
    for class_id, group in _by_class(tracklets).items():
        tau = cfg.match_gate(class_id)
        tau_memory = cfg.memory(class_id)
        if tau <= 0:
            out.extend(group)
            continue

        def cost(state, t, frame, xy, tau=tau, tau_memory=tau_memory):
            gap = frame - state.exit_frame
            try:
                ahead = extrapolate(state, gap, tau_memory)
            except Expired:
                return None
            if t.span >= w:
                half = gap / 2.0
                vin = entry_velocity(t, w)
                vx, vy = state.exit_velocity
                exit_xy = (state.exit_world.x + half * vx, state.exit_world.y + half * vy)
                entry_xy = (xy[0] - half * vin[0], xy[1] - half * vin[1])
            else:
                exit_xy, entry_xy = (ahead.x, ahead.y), xy
            d = math.hypot(exit_xy[0] - entry_xy[0], exit_xy[1] - entry_xy[1])
            return d, expanded_threshold(tau, cfg.expansion_rate, gap, 0.0)

        out.extend(_link_pass(group, Termination.BORDER_EXIT, cost, tau_memory,
                              lambda t: classify_termination(t, cfg, cam, metadata, origin),
                              cfg, "long_term", merges))
    return out


def _by_class(tracklets) -> dict[int, list[Tracklet]]:
    groups = defaultdict(list)
    for t in tracklets:
        groups[t.class_id].append(t)
    return dict(sorted(groups.items()))


def compute_world_points(tracklets: list[Tracklet], metadata: Mapping[int, FrameMetadata],
                         cam: CameraIntrinsics, origin: ReferenceOrigin = ReferenceOrigin()):
    """Attach sea-plane positions of every box center, in place."""
    if not tracklets:
        return
    frames = np.concatenate([t.frames for t in tracklets])
    boxes = np.concatenate([t.boxes for t in tracklets])
    uniq, inverse = np.unique(frames, return_inverse=True)
    try:
        mds = [metadata[int(f)] for f in uniq]
    except KeyError as err:
        raise MetadataGap(err.args[0]) from None
    pos, heading, pitch = metadata_arrays(mds, origin)
    if (pos[:, 2] <= 0).any():
        bad = int(uniq[np.flatnonzero(pos[:, 2] <= 0)[0]])
        raise ValueError(f"frame {bad}: altitude must be positive for projection")
    u = boxes[:, 0] + boxes[:, 2] / 2.0
    v = boxes[:, 1] + boxes[:, 3] / 2.0
    world = project_batch(pos[inverse], heading[inverse], pitch[inverse], u, v, cam)
    start = 0
    for t in tracklets:
        t.world = world[start:start + len(t)]
        start += len(t)


@dataclass
class StitchReport:
    input_tracklets: int = 0
    output_tracks: int = 0
    merges: list[Merge] = field(default_factory=list)

    def counts(self, stage: str) -> dict[int, int]:
        out = defaultdict(int)
        for m in self.merges:
            if m.stage == stage:
                out[m.class_id] += 1
        return dict(sorted(out.items()))

    @property
    def short_term_merges(self) -> int:
        return sum(self.counts("short_term").values())

    @property
    def long_term_merges(self) -> int:
        return sum(self.counts("long_term").values())

    def to_dict(self) -> dict:
        return {
            "input_tracklets": self.input_tracklets,
            "output_tracks": self.output_tracks,
            "short_term_merges": self.short_term_merges,
            "long_term_merges": self.long_term_merges,
            "short_term_merges_per_class": {str(k): v for k, v in self.counts("short_term").items()},
            "long_term_merges_per_class": {str(k): v for k, v in self.counts("long_term").items()},
            "merges": [m.__dict__ for m in self.merges],
        }


def split_at_gaps(tracklets: list[Tracklet], max_missing: int | None = None, gate=None) -> list[Tracklet]:
    """Cut tracklets at gaps that enclose a plausible stand-in, or that are too long.

    A frame-to-frame tracker with a long buffer can resume a stale track on a
    box that has meanwhile been claimed by a new track of the same class; the
    gap then encloses that other track's whole lifetime.  Such a gap is cut
    when an enclosed same-class tracklet exists and, if ``gate`` (class id ->
    meters) is given, it starts within the gate of where this tracklet left
    off and ends within the gate of where it resumes (world points must be
    attached).  Gaps of more than ``max_missing`` frames are always cut
    (``None`` disables that rule).  Later pieces get fresh ids above the
    largest input id.
    """
    next_id = max((t.id for t in tracklets), default=0) + 1
    by_class: dict[int, list[Tracklet]] = {}
    for t in tracklets:
        by_class.setdefault(t.class_id, []).append(t)
    spans = {c: np.array([(u.entry_frame, u.exit_frame) for u in v]) for c, v in by_class.items()}
    out = []
    for t in tracklets:
        gaps = np.flatnonzero(np.diff(t.frames) > 1)
        peers, span = by_class[t.class_id], spans[t.class_id]
        cut = []
        for g in gaps:
            before, after = t.frames[g], t.frames[g + 1]
            if max_missing is not None and after - before - 1 > max_missing:
                cut.append(g)
                continue
            for k in np.flatnonzero((span[:, 0] > before) & (span[:, 1] < after)):
                if gate is None:
                    cut.append(g)
                    break
                e, limit = peers[k], gate(t.class_id)
                if limit <= 0:
                    break
                d_in = np.hypot(*(e.world[0, :2] - t.world[g, :2]))
                d_out = np.hypot(*(t.world[g + 1, :2] - e.world[-1, :2]))
                if d_in <= limit and d_out <= limit:
                    cut.append(g)
                    break
        if not cut:
            out.append(t)
            continue
        for k, idx in enumerate(np.split(np.arange(len(t)), np.array(cut) + 1)):
            tid = t.id if k == 0 else next_id
            next_id += k > 0
            world = None if t.world is None else t.world[idx]
            out.append(Tracklet(tid, t.class_id, t.frames[idx], t.boxes[idx], t.conf[idx], t.rows[idx], world))
    return out


def stitch(tracklets: list[Tracklet], metadata: Mapping[int, FrameMetadata], cfg: ReidConfig = None,
           cam: CameraIntrinsics = CameraIntrinsics(), origin: ReferenceOrigin = ReferenceOrigin(),
           short_term: bool = True, long_term: bool = True) -> tuple[list[Tracklet], StitchReport]:
    """Run both passes and renumber the result densely from 1 in order of first appearance."""
    cfg = cfg or ReidConfig()
    report = StitchReport(input_tracklets=len(tracklets))
    work = [Tracklet(t.id, t.class_id, t.frames, t.boxes, t.conf, t.rows) for t in tracklets]
    compute_world_points(work, metadata, cam, origin)
    if short_term or long_term:
        work = split_at_gaps(work, cfg.split_gap, cfg.match_gate)
    if short_term:
        work = short_term_pass(work, cfg, cam, metadata, origin, report.merges)
    if long_term:
        work = long_term_pass(work, cfg, cam, metadata, origin, report.merges)
    work.sort(key=lambda t: (t.entry_frame, t.id))
    for new_id, t in enumerate(work, start=1):
        t.id = new_id
    report.output_tracks = len(work)
    logger.debug("stitched %d tracklets into %d tracks (%d short-term, %d long-term merges)",
                 report.input_tracklets, report.output_tracks,
                 report.short_term_merges, report.long_term_merges)
    return work, report
