"""DLT, homography application, and the pose <-> homography round trip."""

import math

import numpy as np
import pytest

from bevloc.errors import DegenerateCorners, PointAtInfinity
from bevloc.grids import GridSpec
from bevloc.homography import (
    CornerDisplacement,
    Homography33,
    apply_homography,
    corners_to_homography,
    dlt_solve,
    grid_corners,
    homography_from_pose,
    pose_from_homography,
)
from bevloc.pose import Pose3DoF, angle_diff

BEV_SPEC = GridSpec(256, 256, 0.25, Pose3DoF(0.0, 0.0, 0.0))
MAP_SPEC = GridSpec(256, 256, 0.5, Pose3DoF(0.0, 0.0, 0.0))


def gauss_solve(a, b):
    """Independent dense solver: Gaussian elimination with partial pivoting."""
    n = len(b)
    m = [row[:] + [b[i]] for i, row in enumerate(a)]
    for col in range(n):
        piv = max(range(col, n), key=lambda r: abs(m[r][col]))
        if abs(m[piv][col]) < 1e-14:
            raise ZeroDivisionError("singular")
        m[col], m[piv] = m[piv], m[col]
        for r in range(col + 1, n):
            f = m[r][col] / m[col][col]
            for c in range(col, n + 1):
                m[r][c] -= f * m[col][c]
    x = [0.0] * n
    for r in range(n - 1, -1, -1):
        x[r] = (m[r][n] - sum(m[r][c] * x[c] for c in range(r + 1, n))) / m[r][r]
    return x


def oracle_dlt(src, dst):
    """8x8 DLT assembled row-by-row in pure python, solved independently."""
    a, b = [], []
    for (x, y), (xp, yp) in zip(src, dst):
        a.append([x, y, 1.0, 0.0, 0.0, 0.0, -x * xp, -y * xp])
        a.append([0.0, 0.0, 0.0, x, y, 1.0, -x * yp, -y * yp])
        b.extend([xp, yp])
    sol = gauss_solve(a, b)
    return np.array(sol + [1.0]).reshape(3, 3)


def cross2(a, b):
    return a[0] * b[1] - a[1] * b[0]


def sample_quad(rng, span=256.0):
    """Random non-degenerate quad: jittered square corners, area-checked."""
    base = np.array([[0.0, 0.0], [span, 0.0], [span, span], [0.0, span]])
    while True:
        quad = base + rng.uniform(-0.3 * span, 0.3 * span, size=(4, 2))
        ok = True
        for drop in range(4):
            tri = np.delete(quad, drop, axis=0)
            if abs(cross2(tri[1] - tri[0], tri[2] - tri[0])) < 0.02 * span * span:
                ok = False
                break
        if ok:
            return quad


def test_dlt_identity_and_translation():
    src = grid_corners(64, 64)
    h = dlt_solve(src, src)
    assert np.allclose(h.h, np.eye(3), atol=1e-12)
    h = dlt_solve(src, src + np.array([5.0, 3.0]))
    expected = np.eye(3)
    expected[0, 2], expected[1, 2] = 5.0, 3.0
    assert np.allclose(h.h, expected, atol=1e-12)


def test_dlt_against_independent_oracle():
    rng = np.random.default_rng(42)
    for _ in range(300):
        src, dst = sample_quad(rng), sample_quad(rng)
        h = dlt_solve(src, dst)
        ref = oracle_dlt(src.tolist(), dst.tolist())
        assert np.abs(h.h - ref).max() < 1e-8
        assert np.abs(apply_homography(h, src) - dst).max() < 1e-9


def test_dlt_degenerate_corners():
    src = grid_corners(64, 64)
    collinear = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [5.0, 0.0]])
    with pytest.raises(DegenerateCorners):
        dlt_solve(collinear, src)
    duplicated = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 3.0], [5.0, 0.0]])
    with pytest.raises(DegenerateCorners):
        dlt_solve(src, duplicated)


def test_apply_homography_basics():
    assert np.allclose(apply_homography(Homography33.identity(), np.array([7.0, 9.0])), [7.0, 9.0])
    rot90 = Homography33(np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]))
    assert np.allclose(apply_homography(rot90, np.array([1.0, 0.0])), [0.0, 1.0])


def test_apply_homography_point_at_infinity():
    h = Homography33(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 0.0, 1.0]]))
    with pytest.raises(PointAtInfinity):
        apply_homography(h, np.array([-1.0, 0.0]))


def test_pose_zero_gives_identityish_mapping():
    h = homography_from_pose(Pose3DoF(0, 0, 0), MAP_SPEC, MAP_SPEC)
    assert np.allclose(h.h, np.eye(3), atol=1e-12)


def test_resolution_ratio_forces_pure_scale():
    h = homography_from_pose(Pose3DoF(0, 0, 0), BEV_SPEC, MAP_SPEC)
    expected = np.array([[0.5, 0.0, 63.75], [0.0, 0.5, 63.75], [0.0, 0.0, 1.0]])
    assert np.allclose(h.h, expected, atol=1e-12)
    # fixed point at the pixel-lattice center
    assert np.allclose(apply_homography(h, np.array([127.5, 127.5])), [127.5, 127.5])


def test_homography_from_pose_matches_pointwise_chain():
    rng = np.random.default_rng(7)
    for _ in range(20):
        pose = Pose3DoF(rng.uniform(-30, 30), rng.uniform(-30, 30), rng.uniform(-np.pi, np.pi))
        map_center = Pose3DoF(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-np.pi, np.pi))
        map_spec = GridSpec(256, 256, 0.5, map_center)
        h = homography_from_pose(pose, BEV_SPEC, map_spec)
        pts = rng.uniform(0, 255, size=(50, 2))
        # independent chain: pixel -> ego metric -> rotate/translate -> map pixel
        cu, cv = BEV_SPEC.center_pixel
        ego = np.stack(
            [(pts[:, 0] - cu) * 0.25, -(pts[:, 1] - cv) * 0.25], axis=-1
        )
        c, s = math.cos(pose.theta_rad), math.sin(pose.theta_rad)
        world = np.stack(
            [
                pose.x_m + c * ego[:, 0] + s * ego[:, 1],
                pose.y_m - s * ego[:, 0] + c * ego[:, 1],
            ],
            axis=-1,
        )
        expected = map_spec.metric_to_pixel(world)
        assert np.abs(apply_homography(h, pts) - expected).max() < 1e-9


def test_pose_round_trip_identity_and_pure_rotation():
    p0 = pose_from_homography(homography_from_pose(Pose3DoF(0, 0, 0), BEV_SPEC, MAP_SPEC), BEV_SPEC, MAP_SPEC)
    assert abs(p0.x_m) < 1e-6 and abs(p0.y_m) < 1e-6 and abs(p0.theta_rad) < 1e-9

    p90 = pose_from_homography(
        homography_from_pose(Pose3DoF(0, 0, math.pi / 2), BEV_SPEC, MAP_SPEC), BEV_SPEC, MAP_SPEC
    )
    assert abs(p90.x_m) < 1e-9 and abs(p90.y_m) < 1e-9
    assert abs(p90.theta_rad - math.pi / 2) < 1e-9


def test_pose_round_trip_random():
    rng = np.random.default_rng(123)
    for _ in range(1000):
        pose = Pose3DoF(rng.uniform(-30, 30), rng.uniform(-30, 30), rng.uniform(-np.pi, np.pi))
        h = homography_from_pose(pose, BEV_SPEC, MAP_SPEC)
        rec = pose_from_homography(h, BEV_SPEC, MAP_SPEC)
        assert math.hypot(rec.x_m - pose.x_m, rec.y_m - pose.y_m) < 1e-6
        assert abs(angle_diff(rec.theta_rad, pose.theta_rad)) < 1e-8


def test_pose_round_trip_with_rotated_map_patch():
    rng = np.random.default_rng(31)
    for _ in range(200):
        map_spec = GridSpec(
            256, 256, 0.5, Pose3DoF(rng.uniform(-20, 20), rng.uniform(-20, 20), rng.uniform(-np.pi, np.pi))
        )
        pose = Pose3DoF(
            map_spec.center.x_m + rng.uniform(-20, 20),
            map_spec.center.y_m + rng.uniform(-20, 20),
            rng.uniform(-np.pi, np.pi),
        )
        h = homography_from_pose(pose, BEV_SPEC, map_spec)
        rec = pose_from_homography(h, BEV_SPEC, map_spec)
        assert math.hypot(rec.x_m - pose.x_m, rec.y_m - pose.y_m) < 1e-6
        assert abs(angle_diff(rec.theta_rad, pose.theta_rad)) < 1e-8


def test_theta_invariant_to_dv_choice():
    rng = np.random.default_rng(5)
    for _ in range(100):
        pose = Pose3DoF(rng.uniform(-30, 30), rng.uniform(-30, 30), rng.uniform(-np.pi, np.pi))
        h = homography_from_pose(pose, BEV_SPEC, MAP_SPEC)
        thetas = [pose_from_homography(h, BEV_SPEC, MAP_SPEC, dv_px=dv).theta_rad for dv in (1, 10, 50)]
        assert abs(angle_diff(thetas[0], thetas[1])) < 1e-9
        assert abs(angle_diff(thetas[1], thetas[2])) < 1e-9


def test_dlt_idempotent_on_own_corner_images():
    rng = np.random.default_rng(77)
    for _ in range(100):
        src, dst = sample_quad(rng), sample_quad(rng)
        h = dlt_solve(src, dst)
        again = dlt_solve(src, apply_homography(h, src))
        # 1e-9 relative: random quads can yield strongly projective H with
        # entries of order 1e5, where absolute 1e-9 is below float64 ulp
        assert np.abs(again.h - h.h).max() < 1e-9 * max(1.0, np.abs(h.h).max())


def test_pose_composition_is_homography_composition():
    # specs match and the patch sits at the identity pose
    spec = GridSpec(256, 256, 0.5, Pose3DoF(0.0, 0.0, 0.0))
    rng = np.random.default_rng(11)
    for _ in range(200):
        p1 = Pose3DoF(rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-np.pi, np.pi))
        p2 = Pose3DoF(rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-np.pi, np.pi))
        h1 = homography_from_pose(p1, spec, spec)
        h2 = homography_from_pose(p2, spec, spec)
        h12 = homography_from_pose(p2.compose(p1), spec, spec)
        assert np.abs(h2.compose(h1).h - h12.h).max() < 1e-9


def test_corners_to_homography():
    base = grid_corners(64, 64)
    assert np.allclose(corners_to_homography(base, CornerDisplacement.zero()).h, np.eye(3), atol=1e-12)

    shift = CornerDisplacement(np.tile([2.5, -1.0], (4, 1)))
    h = corners_to_homography(base, shift)
    expected = np.eye(3)
    expected[0, 2], expected[1, 2] = 2.5, -1.0
    assert np.allclose(h.h, expected, atol=1e-10)

    # displacement sampled from a known affine map is recovered exactly
    rng = np.random.default_rng(3)
    for _ in range(50):
        aff = np.eye(3)
        aff[:2, :2] = rng.uniform(-1.2, 1.2, size=(2, 2))
        if abs(np.linalg.det(aff[:2, :2])) < 0.1:
            continue
        aff[:2, 2] = rng.uniform(-8, 8, size=2)
        target = (np.c_[base, np.ones(4)] @ aff.T)[:, :2]
        h = corners_to_homography(base, CornerDisplacement(target - base))
        assert np.abs(h.h - aff).max() < 1e-8


def test_homography_rejects_singular_matrix():
    with pytest.raises(DegenerateCorners):
        Homography33(np.array([[1.0, 2.0, 0.0], [2.0, 4.0, 0.0], [0.0, 0.0, 1.0]]))
