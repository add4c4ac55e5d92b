"""Estimated camera model for a gimballed UAV camera looking at the sea.

World frame is east-north-up (ENU) in meters, anchored at a GPS reference
center; the sea surface is the plane ``z = 0``.  Camera frame is the usual
computer-vision one: x right, y down, z forward along the optical axis.

Scalar functions (``project_detection``, ``forward_project``...) mirror the
math one point at a time.  The ``*_batch`` helpers do the same thing on
arrays and are what the tracking code uses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence

import numpy as np

from .exceptions import BehindCamera, EmptyInput, NoIntersection

EARTH_RADIUS = 6_371_000.0
RAY_EPS = 1e-9

METADATA_FIELDS = (
    "gps_latitude",
    "gps_longitude",
    "altitude",
    "gimbal_pitch",
    "gimbal_heading",
    "x_speed",
    "y_speed",
    "z_speed",
)


@dataclass(frozen=True)
class FrameMetadata:
    """Drone state for one video frame.

    ``gps_latitude``/``gps_longitude`` are degrees relative to the reference
    center, ``gimbal_pitch`` is the depression below the horizon and
    ``gimbal_heading`` the compass direction (clockwise from north) of the
    optical axis.  Speeds are carried through but unused by the projection.
    """

    frame_index: int
    gps_latitude: float
    gps_longitude: float
    altitude: float
    gimbal_pitch: float
    gimbal_heading: float
    x_speed: float = 0.0
    y_speed: float = 0.0
    z_speed: float = 0.0

    def __post_init__(self):
        for name in METADATA_FIELDS:
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"frame {self.frame_index}: {name} is not finite")

    def to_dict(self) -> dict:
        return {"frame_index": self.frame_index, **{k: getattr(self, k) for k in METADATA_FIELDS}}


@dataclass(frozen=True)
class CameraIntrinsics:
    fov: float = 70.0
    width: int = 3840
    height: int = 2160

    def __post_init__(self):
        if not 0.0 < self.fov < 180.0:
            raise ValueError(f"fov must lie in (0, 180) degrees, got {self.fov}")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image width and height must be positive")

    @property
    def focal(self) -> float:
        return self.width / (2.0 * math.tan(math.radians(self.fov) / 2.0))

    @property
    def center(self) -> tuple[float, float]:
        return self.width / 2.0, self.height / 2.0


class WorldPoint(NamedTuple):
    x: float
    y: float
    z: float = 0.0


@dataclass(frozen=True)
class ReferenceOrigin:
    latitude: float = 47.6
    longitude: float = 9.2

    def __post_init__(self):
        if not abs(self.latitude) < 90.0:
            raise ValueError("reference latitude must satisfy |lat| < 90")


def intrinsics_matrix(cam: CameraIntrinsics) -> np.ndarray:
    f = cam.focal
    cx, cy = cam.center
    # bottom-right entry is 1 (homogeneous form) so that K is invertible
    return np.array([[f, 0.0, cx], [0.0, f, cy], [0.0, 0.0, 1.0]])


def gps_to_local(lat_rel, lon_rel, origin: ReferenceOrigin = ReferenceOrigin()):
    """Equirectangular conversion of relative degrees to (east, north) meters."""
    scale = math.pi / 180.0 * EARTH_RADIUS
    y = np.multiply(lat_rel, scale)
    x = np.multiply(lon_rel, scale * math.cos(math.radians(origin.latitude)))
    if np.ndim(x) == 0:
        return float(x), float(y)
    return x, y


def local_to_gps(x, y, origin: ReferenceOrigin = ReferenceOrigin()):
    """Exact inverse of :func:`gps_to_local`."""
    scale = math.pi / 180.0 * EARTH_RADIUS
    lat = np.divide(y, scale)
    lon = np.divide(x, scale * math.cos(math.radians(origin.latitude)))
    if np.ndim(lat) == 0:
        return float(lat), float(lon)
    return lat, lon


def rotation_batch(heading, pitch) -> np.ndarray:
    """Camera-to-world rotations, shape ``(..., 3, 3)``; columns are right, down, forward."""
    alpha = np.radians(90.0 - np.asarray(heading, dtype=float))
    theta = np.radians(np.asarray(pitch, dtype=float))
    ca, sa = np.cos(alpha), np.sin(alpha)
    ct, st = np.cos(theta), np.sin(theta)
    zero = np.zeros_like(ca)
    right = np.stack([sa, -ca, zero], axis=-1)
    forward = np.stack([ca * ct, sa * ct, -st], axis=-1)
    # down = forward x right, written out
    down = np.stack([-st * ca, -st * sa, -ct], axis=-1)
    return np.stack([right, down, forward], axis=-1)


def rotation_from_gimbal(gimbal_heading: float, gimbal_pitch: float) -> np.ndarray:
    return rotation_batch(gimbal_heading, gimbal_pitch)


def pixel_ray(K: np.ndarray, R: np.ndarray, u: float, v: float) -> np.ndarray:
    d = R @ np.linalg.solve(K, np.array([u, v, 1.0]))
    return d / np.linalg.norm(d)


def ground_intersect(drone_pos, ray) -> WorldPoint:
    px, py, pz = (float(c) for c in drone_pos)
    rx, ry, rz = (float(c) for c in ray)
    if pz <= 0.0:
        raise ValueError("drone must be above the sea plane")
    if rz >= -RAY_EPS:
        raise NoIntersection(f"ray z-component {rz:.3g} does not point down")
    t = -pz / rz
    return WorldPoint(px + t * rx, py + t * ry, 0.0)


def drone_position(md: FrameMetadata, origin: ReferenceOrigin = ReferenceOrigin()) -> np.ndarray:
    x, y = gps_to_local(md.gps_latitude, md.gps_longitude, origin)
    return np.array([x, y, md.altitude])


def _check_altitude(md: FrameMetadata):
    if not md.altitude > 0.0:
        raise ValueError(f"frame {md.frame_index}: altitude must be positive for projection")


def project_detection(md: FrameMetadata, bbox_center, cam: CameraIntrinsics,
                      origin: ReferenceOrigin = ReferenceOrigin()) -> WorldPoint:
    """World position (on the sea plane) of the pixel ``bbox_center`` seen in frame ``md``."""
    _check_altitude(md)
    u, v = bbox_center
    R = rotation_from_gimbal(md.gimbal_heading, md.gimbal_pitch)
    ray = pixel_ray(intrinsics_matrix(cam), R, u, v)
    return ground_intersect(drone_position(md, origin), ray)


def forward_project(p, md: FrameMetadata, cam: CameraIntrinsics,
                    origin: ReferenceOrigin = ReferenceOrigin()) -> tuple[float, float]:
    _check_altitude(md)
    R = rotation_from_gimbal(md.gimbal_heading, md.gimbal_pitch)
    pc = R.T @ (np.asarray(p, dtype=float) - drone_position(md, origin))
    if pc[2] <= 0.0:
        raise BehindCamera("point is behind the camera")
    f = cam.focal
    cx, cy = cam.center
    return float(f * pc[0] / pc[2] + cx), float(f * pc[1] / pc[2] + cy)


# -- batched versions -------------------------------------------------------

def project_batch(positions, heading, pitch, u, v, cam: CameraIntrinsics) -> np.ndarray:
    """Sea-plane intersections for many pixels, shape ``(n, 3)``.

    Rows whose ray does not point down get NaN.
    """
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    R = rotation_batch(heading, pitch)
    f = cam.focal
    cx, cy = cam.center
    cam_dirs = np.stack([(np.asarray(u, float) - cx) / f,
                         (np.asarray(v, float) - cy) / f,
                         np.ones(np.shape(u))], axis=-1)
    rays = np.einsum("...ij,...j->...i", R, cam_dirs)
    rays /= np.linalg.norm(rays, axis=-1, keepdims=True)
    rz = rays[..., 2]
    ok = rz < -RAY_EPS
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(ok, -positions[..., 2] / np.where(ok, rz, -1.0), np.nan)
    out = positions + t[..., None] * rays
    out[..., 2] = np.where(ok, 0.0, np.nan)
    return out


def forward_batch(points, positions, heading, pitch, cam: CameraIntrinsics) -> np.ndarray:
    """Pixel coordinates for many world points, shape ``(n, 2)``; NaN when behind."""
    R = rotation_batch(heading, pitch)
    rel = np.asarray(points, float) - np.asarray(positions, float)
    pc = np.einsum("...ji,...j->...i", R, rel)
    f = cam.focal
    cx, cy = cam.center
    with np.errstate(divide="ignore", invalid="ignore"):
        uv = np.stack([f * pc[..., 0] / pc[..., 2] + cx, f * pc[..., 1] / pc[..., 2] + cy], axis=-1)
    uv[pc[..., 2] <= 0.0] = np.nan
    return uv


def metadata_arrays(mds: Sequence[FrameMetadata], origin: ReferenceOrigin = ReferenceOrigin()):
    """Stack metadata into ``(positions (n, 3), heading (n,), pitch (n,))``."""
    lat = np.array([m.gps_latitude for m in mds], dtype=float)
    lon = np.array([m.gps_longitude for m in mds], dtype=float)
    alt = np.array([m.altitude for m in mds], dtype=float)
    x, y = gps_to_local(lat, lon, origin)
    positions = np.stack([np.asarray(x, float), np.asarray(y, float), alt], axis=-1).reshape(-1, 3)
    heading = np.array([m.gimbal_heading for m in mds], dtype=float)
    pitch = np.array([m.gimbal_pitch for m in mds], dtype=float)
    return positions, heading, pitch


# -- field-of-view calibration ---------------------------------------------

def fov_grid(lo: float, hi: float, step: float) -> np.ndarray:
    if step <= 0 or hi < lo:
        raise ValueError("search range needs lo <= hi and step > 0")
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(n)


def fov_objective(segments, cam: CameraIntrinsics, fovs, origin: ReferenceOrigin = ReferenceOrigin()) -> np.ndarray:
    """Mean per-segment positional spread of projected points for every fov in ``fovs``.

    Each segment is ``(pixels, metadata)``: an ``(n, 2)`` array of pixel
    centers of one stationary target and the ``n`` matching metadata records.
    The spread of a segment is the RMS over both axes of the standard
    deviation around its centroid.  A fov at which any point cannot be
    projected scores ``inf``.
    """
    if not segments:
        raise EmptyInput("no calibration segments")
    prepared = []
    for pixels, mds in segments:
        pixels = np.asarray(pixels, dtype=float).reshape(-1, 2)
        if len(pixels) < 2 or len(pixels) != len(mds):
            raise ValueError("each segment needs >= 2 observations with one metadata record each")
        prepared.append((pixels, *metadata_arrays(mds, origin)))

    scores = np.empty(len(fovs))
    for k, fov in enumerate(fovs):
        trial = replace(cam, fov=float(fov))
        spreads = []
        for pixels, pos, heading, pitch in prepared:
            pts = project_batch(pos, heading, pitch, pixels[:, 0], pixels[:, 1], trial)[:, :2]
            if np.isnan(pts).any():
                spreads.append(np.inf)
                continue
            spreads.append(math.sqrt(pts.var(axis=0).mean()))
        scores[k] = np.mean(spreads)
    return scores


def calibrate_fov(segments, cam: CameraIntrinsics = CameraIntrinsics(), search=(30.0, 120.0, 0.5),
                  origin: ReferenceOrigin = ReferenceOrigin()) -> float:
    """Grid-search the fov that makes stationary targets project most consistently."""
    fovs = fov_grid(*search)
    fovs = fovs[(fovs > 0) & (fovs < 180)]
    scores = fov_objective(segments, cam, fovs, origin)
    return float(fovs[_first_min(scores)])


def _first_min(scores: np.ndarray) -> int:
    best = np.min(scores)
    if not np.isfinite(best):
        return 0
    # floating noise must not beat the smaller-fov tie-break
    tol = 1e-12 * max(1.0, abs(best))
    return int(np.flatnonzero(scores <= best + tol)[0])
