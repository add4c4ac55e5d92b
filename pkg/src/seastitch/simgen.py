"""Synthetic UAV sequences rendered through the forward camera model.

A scenario is a drone path (waypoints with gimbal angles), objects moving on
the sea plane and detector effects (dropout, suppressed frame ranges, box
noise).  ``generate`` returns ground-truth tracks, raw detections and the
drone metadata; the boxes are rendered from the very metadata that is
emitted, so projecting detections back recovers the object paths.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import InvalidSpec
from .geometry import (CameraIntrinsics, FrameMetadata, ReferenceOrigin, forward_batch, local_to_gps,
                       metadata_arrays, project_batch)
from .tracks import N_COLS, empty_tracks, sort_tracks

# physical footprint (meters) per class; only relative scale matters
FOOTPRINT = {0: 0.6, 1: 6.0}
MIN_BOX = 2.0
BOAT_CLASS = 1


@dataclass
class Waypoint:
    frame: int
    x: float
    y: float
    altitude: float
    heading: float
    pitch: float


@dataclass
class ObjectSpec:
    class_id: int
    x: float
    y: float
    vx: float = 0.0  # m/s
    vy: float = 0.0
    # (frame, vx, vy): new velocity from that frame on
    maneuvers: list[tuple[int, float, float]] = field(default_factory=list)


@dataclass
class Suppression:
    start: int
    end: int  # inclusive
    objects: list[int] | None = None  # indices into ScenarioSpec.objects; None = all


@dataclass
class Effects:
    dropout: float = 0.0
    suppressions: list[Suppression] = field(default_factory=list)
    bbox_noise: float = 0.0
    confidence: tuple[float, float] = (0.9, 0.9)


@dataclass
class ScenarioSpec:
    duration: int
    waypoints: list[Waypoint]
    objects: list[ObjectSpec]
    effects: Effects = field(default_factory=Effects)
    fps: float = 30.0
    seed: int = 0
    first_frame: int = 1
    camera: CameraIntrinsics = field(default_factory=CameraIntrinsics)
    origin: ReferenceOrigin = field(default_factory=ReferenceOrigin)

    def validate(self):
        if self.duration < 1:
            raise InvalidSpec("duration must be >= 1 frame")
        if self.fps <= 0:
            raise InvalidSpec("fps must be positive")
        if not self.waypoints:
            raise InvalidSpec("at least one waypoint is required")
        frames = [w.frame for w in self.waypoints]
        if sorted(frames) != frames or len(set(frames)) != len(frames):
            raise InvalidSpec("waypoint frames must be strictly increasing")
        if any(w.altitude <= 0 for w in self.waypoints):
            raise InvalidSpec("drone altitude must stay above the sea plane")
        if not 0.0 <= self.effects.dropout <= 1.0:
            raise InvalidSpec("dropout must be a probability")
        if self.effects.bbox_noise < 0:
            raise InvalidSpec("bbox_noise must be >= 0")
        lo, hi = self.effects.confidence
        if not 0.0 <= lo <= hi <= 1.0:
            raise InvalidSpec("confidence range must satisfy 0 <= lo <= hi <= 1")
        for s in self.effects.suppressions:
            if s.end < s.start:
                raise InvalidSpec("suppression end precedes start")
            if s.objects and any(not 0 <= k < len(self.objects) for k in s.objects):
                raise InvalidSpec("suppression refers to an unknown object")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        try:
            d = dict(d)
            eff = dict(d.pop("effects", {}))
            eff["suppressions"] = [Suppression(**s) for s in eff.get("suppressions", [])]
            if "confidence" in eff:
                eff["confidence"] = tuple(eff["confidence"])
            objects = []
            for o in d.pop("objects"):
                o = dict(o)
                o["maneuvers"] = [tuple(m) for m in o.get("maneuvers", [])]
                objects.append(ObjectSpec(**o))
            spec = cls(
                waypoints=[Waypoint(**w) for w in d.pop("waypoints")],
                objects=objects,
                effects=Effects(**eff),
                camera=CameraIntrinsics(**d.pop("camera", {})),
                origin=ReferenceOrigin(**d.pop("origin", {})),
                **d,
            )
        except (TypeError, KeyError, ValueError) as err:
            raise InvalidSpec(f"malformed scenario: {err}") from None
        spec.validate()
        return spec

    @classmethod
    def load(cls, path) -> "ScenarioSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")


@dataclass
class Simulation:
    gt: np.ndarray
    detections: np.ndarray
    metadata: list[FrameMetadata]
    positions: np.ndarray  # (n_frames, n_objects, 3) true world positions
    detection_objects: np.ndarray  # object index behind every detection row
    spec: ScenarioSpec

    @property
    def frames(self) -> np.ndarray:
        return self.spec.first_frame + np.arange(self.spec.duration)


def _wrap(a):
    return (a + 180.0) % 360.0 - 180.0


def drone_path(spec: ScenarioSpec):
    """Per-frame drone position (n, 3), heading (n,) and pitch (n,)."""
    frames = spec.first_frame + np.arange(spec.duration)
    wp = spec.waypoints
    wf = np.array([w.frame for w in wp], dtype=float)
    xyz = np.array([[w.x, w.y, w.altitude] for w in wp], dtype=float)
    pos = np.stack([np.interp(frames, wf, xyz[:, k]) for k in range(3)], axis=-1)
    # unwrap headings so interpolation follows the shortest arc between waypoints
    raw = np.array([w.heading for w in wp], dtype=float)
    unwrapped = np.concatenate([[raw[0]], raw[0] + np.cumsum(_wrap(np.diff(raw)))]) if len(raw) > 1 else raw
    heading = np.interp(frames, wf, unwrapped) % 360.0
    pitch = np.interp(frames, wf, np.array([w.pitch for w in wp], dtype=float))
    return pos, heading, pitch


def object_paths(spec: ScenarioSpec) -> np.ndarray:
    n = spec.duration
    out = np.zeros((n, len(spec.objects), 3))
    dt = 1.0 / spec.fps
    for k, obj in enumerate(spec.objects):
        changes = {int(f): (vx, vy) for f, vx, vy in obj.maneuvers}
        p = np.array([obj.x, obj.y], dtype=float)
        v = np.array([obj.vx, obj.vy], dtype=float)
        for i in range(n):
            frame = spec.first_frame + i
            if i:
                p = p + v * dt
            if frame in changes:
                v = np.array(changes[frame], dtype=float)
            out[i, k, :2] = p
    return out


def build_metadata(spec: ScenarioSpec) -> list[FrameMetadata]:
    pos, heading, pitch = drone_path(spec)
    lat, lon = local_to_gps(pos[:, 0], pos[:, 1], spec.origin)
    vel = np.gradient(pos, axis=0) * spec.fps if len(pos) > 1 else np.zeros_like(pos)
    out = []
    for i in range(spec.duration):
        out.append(FrameMetadata(
            frame_index=int(spec.first_frame + i),
            gps_latitude=float(lat[i]), gps_longitude=float(lon[i]), altitude=float(pos[i, 2]),
            gimbal_pitch=float(pitch[i]), gimbal_heading=float(heading[i]),
            x_speed=float(abs(vel[i, 0])), y_speed=float(abs(vel[i, 1])), z_speed=float(abs(vel[i, 2])),
        ))
    return out


def render_boxes(points, class_ids, positions, heading, pitch, cam: CameraIntrinsics) -> np.ndarray:
    """Boxes (n, 4) centered on the projections of ``points``; NaN rows when out of view."""
    uv = forward_batch(points, positions, heading, pitch, cam)
    rng_m = np.linalg.norm(np.asarray(points, float) - positions, axis=-1)
    foot = np.array([FOOTPRINT.get(int(c), 1.0) for c in np.atleast_1d(class_ids)])
    size = np.maximum(MIN_BOX, cam.focal * foot / rng_m)
    boxes = np.stack([uv[..., 0] - size / 2, uv[..., 1] - size / 2, size, size], axis=-1)
    inside = ((boxes[..., 0] >= 0) & (boxes[..., 1] >= 0)
              & (boxes[..., 0] + size <= cam.width) & (boxes[..., 1] + size <= cam.height))
    boxes[~inside] = np.nan
    return boxes


def generate(spec: ScenarioSpec) -> Simulation:
    spec.validate()
    cam = spec.camera
    rng = np.random.default_rng(spec.seed)
    metadata = build_metadata(spec)
    # render from the emitted metadata so both agree exactly
    pos, heading, pitch = metadata_arrays(metadata, spec.origin)
    paths = object_paths(spec)
    n_obj = len(spec.objects)
    classes = np.array([o.class_id for o in spec.objects], dtype=int)
    eff = spec.effects

    suppressed = np.zeros((spec.duration, n_obj), dtype=bool)
    for s in eff.suppressions:
        lo = max(s.start - spec.first_frame, 0)
        hi = min(s.end - spec.first_frame + 1, spec.duration)
        cols = list(range(n_obj)) if s.objects is None else s.objects
        if lo < hi:
            suppressed[lo:hi, cols] = True

    gt_rows, det_rows, det_obj = [], [], []
    for i in range(spec.duration):
        frame = spec.first_frame + i
        # random draws happen for every object every frame so that the stream
        # does not depend on visibility
        drop = rng.random(n_obj) < eff.dropout
        noise = rng.normal(0.0, 1.0, size=(n_obj, 4)) * eff.bbox_noise
        conf = rng.uniform(*eff.confidence, size=n_obj) if eff.confidence[1] > eff.confidence[0] \
            else np.full(n_obj, eff.confidence[0])
        if n_obj == 0:
            continue
        boxes = render_boxes(paths[i], classes, pos[i], heading[i], pitch[i], cam)
        for k in range(n_obj):
            b = boxes[k]
            if np.isnan(b[0]):
                continue
            gt_rows.append([frame, k + 1, *b, 1.0, classes[k], 1.0])
            if suppressed[i, k] or drop[k]:
                continue
            d = b.copy()
            if eff.bbox_noise > 0:
                cx = b[0] + b[2] / 2 + noise[k, 0]
                cy = b[1] + b[3] / 2 + noise[k, 1]
                w = max(MIN_BOX, b[2] + noise[k, 2])
                h = max(MIN_BOX, b[3] + noise[k, 3])
                x0 = min(max(cx - w / 2, 0.0), cam.width - w)
                y0 = min(max(cy - h / 2, 0.0), cam.height - h)
                d = np.array([x0, y0, w, h])
            det_rows.append([frame, -1, *d, conf[k], classes[k], 1.0])
            det_obj.append(k)

    gt = sort_tracks(np.array(gt_rows, dtype=float)) if gt_rows else empty_tracks()
    dets = np.array(det_rows, dtype=float).reshape(-1, N_COLS)
    return Simulation(gt, dets, metadata, paths, np.array(det_obj, dtype=int), spec)


def write_simulation(sim: Simulation, outdir) -> dict[str, Path]:
    from .io import write_metadata, write_tracks

    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"gt": out / "gt.txt", "detections": out / "detections.txt", "metadata": out / "metadata.json"}
    write_tracks(paths["gt"], sim.gt)
    write_tracks(paths["detections"], sim.detections)
    write_metadata(paths["metadata"], sim.metadata)
    return paths


# -- presets -----------------------------------------------------------------

def _view_points(rng, n, pos, heading, pitch, cam, lo=0.3, hi=0.7):
    """World points under random pixels of the central image region."""
    u = rng.uniform(lo, hi, n) * cam.width
    v = rng.uniform(lo, hi, n) * cam.height
    pts = project_batch(np.repeat(pos[None], n, 0), np.full(n, heading), np.full(n, pitch), u, v, cam)
    return pts[:, :2]


def _spread_objects(rng, classes, pos, heading, pitch, cam, min_sep, lo=0.3, hi=0.7, boat_sep=25.0):
    """Place one object per class id; pairs involving a boat keep ``boat_sep`` apart."""
    pts = []
    for cls in classes:
        for _ in range(2000):
            p = _view_points(rng, 1, pos, heading, pitch, cam, lo, hi)[0]
            if all(np.hypot(*(p - q)) >= (boat_sep if BOAT_CLASS in (cls, c) else min_sep)
                   for q, c in zip(pts, classes)):
                break
        else:
            raise InvalidSpec("could not place objects with the requested separation")
        pts.append(p)
    return pts


def _render_all(spec: ScenarioSpec) -> np.ndarray:
    """Noise-free boxes (n_frames, n_objects, 4), NaN where an object is not fully in view."""
    pos, heading, pitch = metadata_arrays(build_metadata(spec), spec.origin)
    paths = object_paths(spec)
    classes = np.array([o.class_id for o in spec.objects])
    # one broadcast call: frames on the first axis, objects on the second
    return render_boxes(paths, classes, pos[:, None], heading[:, None], pitch[:, None], spec.camera)


def _visible_everywhere(spec: ScenarioSpec, margin: float) -> bool:
    boxes = _render_all(spec)
    cam = spec.camera
    if np.isnan(boxes).any():
        return False
    return not ((boxes[..., 0] < margin) | (boxes[..., 1] < margin)
                | (boxes[..., 0] + boxes[..., 2] > cam.width - margin)
                | (boxes[..., 1] + boxes[..., 3] > cam.height - margin)).any()


def _absences(visible: np.ndarray) -> list[int]:
    """Lengths of the runs of absent frames between two visible stretches."""
    idx = np.flatnonzero(visible)
    if idx.size == 0:
        return []
    gaps = np.diff(idx) - 1
    return gaps[gaps > 0].tolist()


def nadir_static(seed: int = 0, duration: int = 30, altitude: float = 50.0) -> ScenarioSpec:
    return ScenarioSpec(
        duration=duration,
        waypoints=[Waypoint(1, 0.0, 0.0, altitude, 0.0, 90.0)],
        objects=[ObjectSpec(0, 0.0, 0.0)],
        seed=seed,
    )


def gimbal_jerk(seed: int, duration: int = 300, noise: float = 0.0, margin: float = 120.0) -> ScenarioSpec:
    """Hovering drone whose gimbal jumps several times; objects never leave the view."""
    for attempt in range(1000):
        rng = np.random.default_rng([seed, attempt])
        cam = CameraIntrinsics()
        alt = rng.uniform(40.0, 80.0)
        heading0 = rng.uniform(0.0, 360.0)
        pitch0 = rng.uniform(60.0, 90.0)
        drone = np.array([rng.uniform(-50, 50), rng.uniform(-50, 50), alt])
        n_obj = int(rng.integers(3, 7))
        classes = [int(rng.random() < 0.3) for _ in range(n_obj)]
        try:
            pts = _spread_objects(rng, classes, drone, heading0, pitch0, cam, min_sep=6.0, lo=0.35, hi=0.65)
        except InvalidSpec:
            continue
        objects = []
        for p, cls in zip(pts, classes):
            speed = rng.uniform(0.0, 0.3 if cls == 0 else 0.6)
            ang = rng.uniform(0, 2 * math.pi)
            objects.append(ObjectSpec(cls, float(p[0]), float(p[1]), speed * math.cos(ang), speed * math.sin(ang)))
        wps = [Waypoint(1, *drone, heading0, pitch0)]
        h, pt = heading0, pitch0
        n_jerks = int(rng.integers(2, 5))
        jerk_frames = np.sort(rng.choice(np.arange(30, duration - 10), n_jerks, replace=False))
        for jf in jerk_frames:
            wps.append(Waypoint(int(jf), *drone, h % 360.0, pt))
            h = h + rng.choice([-1, 1]) * rng.uniform(3.0, 7.0)
            pt = float(np.clip(pt + rng.choice([-1, 1]) * rng.uniform(2.0, 5.0), 55.0, 90.0))
            wps.append(Waypoint(int(jf) + 1, *drone, h % 360.0, pt))
        spec = ScenarioSpec(duration=duration, waypoints=wps, objects=objects,
                            effects=Effects(bbox_noise=noise), seed=seed)
        spec.validate()
        if _visible_everywhere(spec, margin):
            return spec
    raise InvalidSpec("could not build a jerk scenario that keeps every object in view")


def _pan_waypoints(rng, drone, heading0, pitch0, duration, amplitude, rate):
    """Hold, pan to one side and back, alternating sides, at ``rate`` degrees per frame."""
    wps = [Waypoint(1, *drone, heading0 % 360.0, pitch0)]
    frame, side = 1, rng.choice([-1, 1])
    while True:
        hold = int(rng.integers(20, 50))
        travel = int(round(amplitude / rate))
        if frame + hold + 2 * travel + 40 >= duration:
            break
        frame += hold
        wps.append(Waypoint(frame, *drone, heading0 % 360.0, pitch0))
        frame += travel
        wps.append(Waypoint(frame, *drone, (heading0 + side * amplitude) % 360.0, pitch0))
        frame += int(rng.integers(10, 40))
        wps.append(Waypoint(frame, *drone, (heading0 + side * amplitude) % 360.0, pitch0))
        frame += travel
        wps.append(Waypoint(frame, *drone, heading0 % 360.0, pitch0))
        side = -side
    return wps


def reentry(seed: int, duration: int = 600, noise: float = 1.0, pan_rate: float = 0.07,
            max_absence: int = 270, min_box: float = 24.0) -> ScenarioSpec:
    """Slow side-to-side gimbal pans carry constant-velocity targets out of the view and back.

    The pan is slow enough for frame-to-frame IoU tracking, so identities are
    lost only at the image border.  Every absence is shorter than
    ``max_absence`` frames, every rendered box is at least ``min_box`` pixels
    and at least one target leaves and comes back.
    """
    cam = CameraIntrinsics()
    for attempt in range(1000):
        rng = np.random.default_rng([seed, 7, attempt])
        alt = rng.uniform(40.0, 60.0)
        heading0 = rng.uniform(0.0, 360.0)
        pitch0 = rng.uniform(55.0, 70.0)
        drone = np.array([rng.uniform(-50, 50), rng.uniform(-50, 50), alt])
        n_obj = int(rng.integers(3, 6))
        classes = [int(rng.random() < 0.4) for _ in range(n_obj)]
        try:
            pts = _spread_objects(rng, classes, drone, heading0, pitch0, cam, min_sep=12.0, lo=0.1, hi=0.9)
        except InvalidSpec:
            continue
        objects = []
        for p, cls in zip(pts, classes):
            speed = rng.uniform(0.1, 0.4) if cls == 0 else rng.uniform(0.3, 1.5)
            ang = rng.uniform(0, 2 * math.pi)
            objects.append(ObjectSpec(cls, float(p[0]), float(p[1]), speed * math.cos(ang), speed * math.sin(ang)))
        wps = _pan_waypoints(rng, drone, heading0, pitch0, duration, rng.uniform(15.0, 22.0), pan_rate)
        spec = ScenarioSpec(duration=duration, waypoints=wps, objects=objects,
                            effects=Effects(bbox_noise=noise), seed=seed)
        spec.validate()
        if _reenters(spec, max_absence, min_box):
            return spec
    raise InvalidSpec("could not build a re-entry scenario")


def _reenters(spec: ScenarioSpec, max_absence: int, min_box: float) -> bool:
    """All targets start in view, boxes stay large enough, absences are bounded, one target returns."""
    boxes = _render_all(spec)
    visible = ~np.isnan(boxes[..., 0])
    if not visible[0].all() or np.nanmin(boxes[..., 2]) < min_box:
        return False
    absences = [_absences(visible[:, k]) for k in range(len(spec.objects))]
    return all(a <= max_absence for run in absences for a in run) and any(absences)


def mixed(seed: int, duration: int = 600, noise: float = 1.0, max_absence: int = 270,
          min_box: float = 24.0, jerk_rate: float = 0.4) -> ScenarioSpec:
    """Re-entry pans plus gimbal jerks: during a hold the gimbal may jump and stay offset."""
    base = reentry(seed, duration, noise, max_absence=max_absence, min_box=min_box)
    for attempt in range(1000):
        rng = np.random.default_rng([seed, 11, attempt])
        wps = base.waypoints
        holds = [(a, b) for a, b in zip(wps, wps[1:])
                 if a.heading == b.heading and a.pitch == b.pitch and b.frame - a.frame >= 20]
        jerks = []
        for a, b in holds:
            if rng.random() < jerk_rate:
                jf = int(rng.integers(a.frame + 5, b.frame - 5))
                jerks.append((jf, rng.choice([-1, 1]) * rng.uniform(3.0, 7.0),
                              rng.choice([-1, 1]) * rng.uniform(2.0, 4.0)))
        out, dh, dp = [], 0.0, 0.0
        pending = list(jerks)
        for w in wps:
            while pending and pending[0][0] < w.frame:
                jf, h, p = pending.pop(0)
                out.append(Waypoint(jf, w.x, w.y, w.altitude, (w.heading + dh) % 360.0, w.pitch + dp))
                dh, dp = dh + h, dp + p
                out.append(Waypoint(jf + 1, w.x, w.y, w.altitude, (w.heading + dh) % 360.0, w.pitch + dp))
            out.append(Waypoint(w.frame, w.x, w.y, w.altitude, (w.heading + dh) % 360.0, w.pitch + dp))
        spec = ScenarioSpec(duration=base.duration, waypoints=out, objects=base.objects,
                            effects=base.effects, seed=seed)
        spec.validate()
        if jerks and _reenters(spec, max_absence, min_box):
            return spec
    raise InvalidSpec("could not build a mixed scenario")


def calibration(seed: int, fov: float = 70.0, duration: int = 240, noise: float = 1.0,
                n_targets: int = 4) -> ScenarioSpec:
    """Stationary targets watched from a drone that flies and turns its camera."""
    rng = np.random.default_rng([seed, 3])
    cam = CameraIntrinsics(fov=fov)
    alt = rng.uniform(40.0, 70.0)
    heading0 = rng.uniform(0, 360)
    start = np.array([0.0, 0.0, alt])
    pts = _spread_objects(rng, [0] * n_targets, start, heading0, 75.0, cam, min_sep=5.0, lo=0.4, hi=0.6)
    objects = [ObjectSpec(0, float(p[0]), float(p[1])) for p in pts]
    step = np.array([rng.uniform(-4, 4), rng.uniform(-4, 4), 0.0])
    wps = [
        Waypoint(1, *start, heading0, 75.0),
        Waypoint(duration // 2, *(start + step), (heading0 + 10) % 360, 85.0),
        Waypoint(duration, *(start + 2 * step), (heading0 - 5) % 360, 70.0),
    ]
    return ScenarioSpec(duration=duration, waypoints=wps, objects=objects, camera=cam,
                        effects=Effects(bbox_noise=noise), seed=seed)


PRESETS = {
    "nadir": nadir_static,
    "jerk": gimbal_jerk,
    "reentry": reentry,
    "mixed": mixed,
    "calibration": calibration,
}
