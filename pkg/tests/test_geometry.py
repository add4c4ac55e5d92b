import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from seastitch.exceptions import BehindCamera, EmptyInput, NoIntersection
from seastitch.geometry import (CameraIntrinsics, FrameMetadata, ReferenceOrigin, calibrate_fov, forward_batch,
                                forward_project, gps_to_local, ground_intersect, intrinsics_matrix, local_to_gps,
                                pixel_ray, project_batch, project_detection, rotation_batch, rotation_from_gimbal)

CAM = CameraIntrinsics()


def md(heading=0.0, pitch=90.0, altitude=50.0, lat=0.0, lon=0.0, frame=1):
    return FrameMetadata(frame, lat, lon, altitude, pitch, heading)


# -- examples ----------------------------------------------------------------

def test_intrinsics_unit_case():
    K = intrinsics_matrix(CameraIntrinsics(90.0, 2, 2))
    np.testing.assert_allclose(K, [[1, 0, 1], [0, 1, 1], [0, 0, 1]], atol=1e-15)


def test_intrinsics_operating_point():
    K = intrinsics_matrix(CAM)
    assert K[0, 0] == pytest.approx(3840 / (2 * math.tan(math.radians(35))))
    assert round(K[0, 0], 1) == 2742.0
    assert (K[0, 2], K[1, 2]) == (1920.0, 1080.0)
    np.testing.assert_allclose(K @ np.linalg.inv(K), np.eye(3), atol=1e-12)


@pytest.mark.parametrize("fov,width,height", [(0.0, 10, 10), (180.0, 10, 10), (70.0, 0, 10), (70.0, 10, -1)])
def test_intrinsics_rejects_invalid(fov, width, height):
    with pytest.raises(ValueError):
        CameraIntrinsics(fov, width, height)


def test_gps_to_local_examples():
    assert gps_to_local(0.0, 0.0) == (0.0, 0.0)
    x, y = gps_to_local(0.001, 0.0, ReferenceOrigin(10.0, 0.0))
    assert x == 0.0 and y == pytest.approx(111.19, abs=0.01)
    x, y = gps_to_local(0.0, 0.001)
    assert x == pytest.approx(74.98, abs=0.01) and y == 0.0


def test_local_to_gps_inverts():
    lat, lon = local_to_gps(*gps_to_local(0.0123, -0.0456))
    assert lat == pytest.approx(0.0123, abs=1e-15) and lon == pytest.approx(-0.0456, abs=1e-15)


def test_rotation_examples():
    np.testing.assert_allclose(rotation_from_gimbal(90.0, 0.0)[:, 2], [1, 0, 0], atol=1e-15)
    np.testing.assert_allclose(rotation_from_gimbal(0.0, 90.0)[:, 2], [0, 0, -1], atol=1e-15)
    v = np.array([0.3, -1.2, 2.0])
    assert np.linalg.norm(rotation_from_gimbal(17.0, 33.0) @ v) == pytest.approx(np.linalg.norm(v))


def test_pixel_ray_examples():
    K = intrinsics_matrix(CAM)
    R = rotation_from_gimbal(123.0, 40.0)
    np.testing.assert_allclose(pixel_ray(K, R, 1920, 1080), R[:, 2], atol=1e-15)
    np.testing.assert_allclose(pixel_ray(K, rotation_from_gimbal(0, 90), 1920, 1080), [0, 0, -1], atol=1e-15)


def test_pixel_ray_angle_bounded_by_half_diagonal(rng):
    K = intrinsics_matrix(CAM)
    R = rotation_from_gimbal(10.0, 60.0)
    half_diag = math.atan(math.hypot(1920, 1080) / CAM.focal)
    for u, v in rng.uniform(0, 1, (200, 2)) * [3840, 2160]:
        d = pixel_ray(K, R, u, v)
        angle = math.acos(np.clip(d @ R[:, 2], -1, 1))
        assert angle == pytest.approx(math.atan(math.hypot(u - 1920, v - 1080) / CAM.focal), abs=1e-12)
        assert angle <= half_diag + 1e-12


def test_ground_intersect_examples():
    assert ground_intersect((0, 0, 50), (0, 0, -1)) == (0.0, 0.0, 0.0)
    ray = pixel_ray(intrinsics_matrix(CAM), rotation_from_gimbal(0.0, 45.0), 1920, 1080)
    p = ground_intersect((0, 0, 50), ray)
    assert p.x == pytest.approx(0, abs=1e-12) and p.y == pytest.approx(50) and p.z == 0.0


def test_ground_intersect_rejects_horizon_and_sky():
    with pytest.raises(NoIntersection):
        ground_intersect((0, 0, 50), (1, 0, 0))
    with pytest.raises(NoIntersection):
        ground_intersect((0, 0, 50), (0, 0.6, 0.8))
    with pytest.raises(NoIntersection):
        ground_intersect((0, 0, 50), (0, 1, -1e-10))


def test_project_detection_nadir_center():
    origin = ReferenceOrigin()
    m = md(lat=0.0002, lon=-0.0001)
    p = project_detection(m, (1920, 1080), CAM, origin)
    x, y = gps_to_local(0.0002, -0.0001, origin)
    assert (p.x, p.y, p.z) == (pytest.approx(x, abs=1e-9), pytest.approx(y, abs=1e-9), 0.0)


def test_project_detection_from_every_pitch_except_horizon():
    with pytest.raises(NoIntersection):
        project_detection(md(pitch=-5.0), (1920, 1080), CAM)


def test_forward_project_examples():
    assert forward_project((0, 0, 0), md(), CAM) == pytest.approx((1920.0, 1080.0))
    with pytest.raises(BehindCamera):
        forward_project((0, 0, 60), md(), CAM)


def test_stationary_buoy_seen_from_two_poses():
    buoy = (12.0, -7.0, 0.0)
    a = md(heading=30, pitch=70, altitude=45)
    b = md(heading=80, pitch=55, altitude=60, lat=0.0001, lon=0.0002)
    pa = project_detection(a, forward_project(buoy, a, CAM), CAM)
    pb = project_detection(b, forward_project(buoy, b, CAM), CAM)
    assert math.dist(pa, pb) < 1e-6


def test_batched_matches_scalar(rng):
    heading = rng.uniform(0, 360, 50)
    pitch = rng.uniform(30, 90, 50)
    pos = np.column_stack([rng.uniform(-20, 20, (50, 2)), rng.uniform(10, 100, 50)])
    u, v = rng.uniform(0, 3840, 50), rng.uniform(1000, 2160, 50)
    pts = project_batch(pos, heading, pitch, u, v, CAM)
    K = intrinsics_matrix(CAM)
    for k in range(50):
        ray = pixel_ray(K, rotation_from_gimbal(heading[k], pitch[k]), u[k], v[k])
        np.testing.assert_allclose(pts[k], ground_intersect(pos[k], ray), atol=1e-9)
    uv = forward_batch(pts, pos, heading, pitch, CAM)
    np.testing.assert_allclose(uv, np.column_stack([u, v]), atol=1e-6)


def test_project_batch_marks_misses():
    pts = project_batch([[0, 0, 50]], [0.0], [0.0], [1920.0], [0.0], CAM)
    assert np.isnan(pts).all()


# -- calibration -------------------------------------------------------------

def _segment(target, poses, fov=70.0):
    cam = CameraIntrinsics(fov=fov)
    mds = [md(h, p, a, frame=k) for k, (h, p, a) in enumerate(poses)]
    pixels = np.array([forward_project(target, m, cam) for m in mds])
    return pixels, mds


def test_calibrate_fov_recovers_rendering_fov():
    poses = [(h, p, 50.0) for h, p in zip(np.linspace(0, 20, 12), np.linspace(60, 85, 12))]
    segs = [_segment((5.0, 40.0, 0.0), poses), _segment((-8.0, 30.0, 0.0), poses)]
    assert calibrate_fov(segs, CAM) == pytest.approx(70.0, abs=0.5)


def test_calibrate_fov_degenerate_segment_returns_lower_bound():
    pixels, mds = _segment((0.0, 20.0, 0.0), [(0.0, 70.0, 50.0)])
    seg = (np.repeat(pixels, 5, axis=0), mds * 5)
    assert calibrate_fov([seg], CAM, search=(40.0, 90.0, 1.0)) == 40.0


def test_calibrate_fov_requires_segments():
    with pytest.raises(EmptyInput):
        calibrate_fov([], CAM)


# -- invariants ---------------------------------------------------------------

headings = st.floats(0.0, 360.0, exclude_max=True)
pitches = st.floats(5.0, 90.0)
altitudes = st.floats(1.0, 500.0)
offsets = st.floats(-0.01, 0.01)


@given(x=st.floats(-1e3, 1e3), y=st.floats(-1e3, 1e3), z=st.floats(0.5, 1e3),
       dx=st.floats(-1, 1), dy=st.floats(-1, 1), dz=st.floats(-1, -1e-3))
def test_ground_intersect_lands_on_plane_along_ray(x, y, z, dx, dy, dz):
    ray = np.array([dx, dy, dz]) / np.linalg.norm([dx, dy, dz])
    if ray[2] >= -1e-9:
        return
    p = np.array(ground_intersect((x, y, z), ray))
    assert abs(p[2]) < 1e-12
    assert np.linalg.norm(np.cross(p - [x, y, z], ray)) < 1e-9


def test_rotation_orthonormal_on_degree_grid():
    h, p = np.meshgrid(np.arange(0, 360), np.arange(-90, 91), indexing="ij")
    R = rotation_batch(h, p)
    eye = np.einsum("...ki,...kj->...ij", R, R)
    assert np.abs(eye - np.eye(3)).max() < 1e-12
    assert np.abs(np.linalg.det(R) - 1.0).max() < 1e-12


@given(heading=headings, pitch=pitches, altitude=altitudes, lat=offsets, lon=offsets,
       u=st.floats(0, 3840), v=st.floats(0, 2160))
def test_forward_inverts_projection(heading, pitch, altitude, lat, lon, u, v):
    m = md(heading, pitch, altitude, lat, lon)
    try:
        p = project_detection(m, (u, v), CAM)
    except NoIntersection:
        return
    uu, vv = forward_project(p, m, CAM)
    assert math.hypot(uu - u, vv - v) < 1e-6


@given(heading=headings, pitch=pitches, altitude=altitudes, u=st.floats(0, 3840), v=st.floats(1080, 2160))
def test_projection_periodic_in_heading(heading, pitch, altitude, u, v):
    try:
        a = project_detection(md(heading, pitch, altitude), (u, v), CAM)
    except NoIntersection:
        return
    b = project_detection(md(heading + 360.0, pitch, altitude), (u, v), CAM)
    scale = max(1.0, math.dist(a, (0, 0, 0)))
    assert math.dist(a, b) < 1e-9 * scale


@given(a=st.tuples(offsets, offsets), b=st.tuples(offsets, offsets), s=st.floats(-10, 10), t=st.floats(-10, 10))
def test_gps_to_local_is_linear(a, b, s, t):
    combo = gps_to_local(s * a[0] + t * b[0], s * a[1] + t * b[1])
    xa, ya = gps_to_local(*a)
    xb, yb = gps_to_local(*b)
    assert combo[0] == pytest.approx(s * xa + t * xb, abs=1e-6)
    assert combo[1] == pytest.approx(s * ya + t * yb, abs=1e-6)
