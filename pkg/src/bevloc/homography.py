"""Planar homographies: DLT solve, corner-displacement updates, pose mapping.

The pose <-> homography mapping works on the pixel frames of two grids: the
BEV grid (source pixels) and the map patch (destination pixels). A vehicle
pose places the BEV grid in the map frame; composing
BEV-pixel -> ego-metric -> map-metric -> map-pixel yields an affine
homography with uniform scale bev_resolution / map_resolution.

The heading is recovered from the homography by projecting the BEV grid
center and an auxiliary point displaced by dv_px along +v, then comparing
the direction of the projected segment with the direction of the original
displacement: theta = atan2(v_a' - v_c', u_a' - u_c') - atan2(dv, 0). With
image v growing downward and the compass heading convention of pose.py this
recovers the heading relative to the map patch axes; the patch's own heading
is added back to return an absolute map-frame pose.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCorners, PointAtInfinity
from .grids import GridSpec
from .pose import Pose3DoF, wrap_angle

# corner order everywhere: top-left, top-right, bottom-right, bottom-left
CORNER_ORDER = ("top-left", "top-right", "bottom-right", "bottom-left")


@dataclass(frozen=True)
class Homography33:
    h: np.ndarray  # (3, 3), h33 normalized to 1

    def __post_init__(self):
        m = np.asarray(self.h, dtype=np.float64)
        if m.shape != (3, 3):
            raise ValueError(f"homography must be 3x3, got {m.shape}")
        if abs(m[2, 2]) > 1e-12:
            m = m / m[2, 2]
        det = np.linalg.det(m)
        if not np.isfinite(det) or abs(det) < 1e-12:
            raise DegenerateCorners(f"homography is singular (det={det})")
        m.flags.writeable = False
        object.__setattr__(self, "h", m)

    @classmethod
    def identity(cls) -> "Homography33":
        return cls(np.eye(3))

    def inverse(self) -> "Homography33":
        return Homography33(np.linalg.inv(self.h))

    def compose(self, other: "Homography33") -> "Homography33":
        """self after other: (self ∘ other)(p) = self(other(p))."""
        return Homography33(self.h @ other.h)

    def as_flat_list(self) -> list[float]:
        return [float(x) for x in self.h.reshape(-1)]


@dataclass(frozen=True)
class CornerDisplacement:
    """Offsets (du, dv) of the four BEV-grid corners, in feature-grid pixels."""

    d: np.ndarray  # (4, 2)

    def __post_init__(self):
        m = np.asarray(self.d, dtype=np.float64)
        if m.shape != (4, 2):
            raise ValueError(f"corner displacement must be (4, 2), got {m.shape}")
        if not np.isfinite(m).all():
            raise ValueError("corner displacement must be finite")
        m.flags.writeable = False
        object.__setattr__(self, "d", m)

    @classmethod
    def zero(cls) -> "CornerDisplacement":
        return cls(np.zeros((4, 2)))


def dlt_solve(src_corners: np.ndarray, dst_corners: np.ndarray) -> Homography33:
    """Homography from four exact correspondences via the standard 8x8 system.

    Unknowns h11..h32 with h33 fixed to 1; each correspondence contributes
    two rows. Raises DegenerateCorners when three points are (nearly)
    collinear or duplicated.
    """
    src = np.asarray(src_corners, dtype=np.float64).reshape(4, 2)
    dst = np.asarray(dst_corners, dtype=np.float64).reshape(4, 2)
    for pts in (src, dst):
        _check_nondegenerate(pts)

    a = np.zeros((8, 8))
    b = np.zeros(8)
    for i, ((x, y), (xp, yp)) in enumerate(zip(src, dst)):
        a[2 * i] = [x, y, 1.0, 0.0, 0.0, 0.0, -x * xp, -y * xp]
        a[2 * i + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -x * yp, -y * yp]
        b[2 * i] = xp
        b[2 * i + 1] = yp
    try:
        sol = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise DegenerateCorners(f"singular DLT system: {exc}") from exc
    return Homography33(np.append(sol, 1.0).reshape(3, 3))


def _check_nondegenerate(pts: np.ndarray) -> None:
    scale2 = max(float(np.ptp(pts[:, 0])), float(np.ptp(pts[:, 1])), 1.0) ** 2
    for drop in range(4):
        tri = np.delete(pts, drop, axis=0)
        p, q = tri[1] - tri[0], tri[2] - tri[0]
        area2 = abs(float(p[0] * q[1] - p[1] * q[0]))
        if area2 < 1e-9 * scale2:
            raise DegenerateCorners(f"corners (minus #{drop}) are collinear or duplicated")


def apply_homography(h: Homography33, p: np.ndarray) -> np.ndarray:
    """Project points (..., 2) through h with perspective division."""
    p = np.asarray(p, dtype=np.float64)
    m = h.h
    s = m[2, 0] * p[..., 0] + m[2, 1] * p[..., 1] + m[2, 2]
    if np.any(np.abs(s) < 1e-12):
        raise PointAtInfinity("projective denominator vanished")
    u = (m[0, 0] * p[..., 0] + m[0, 1] * p[..., 1] + m[0, 2]) / s
    v = (m[1, 0] * p[..., 0] + m[1, 1] * p[..., 1] + m[1, 2]) / s
    return np.stack([u, v], axis=-1)


def homography_from_pose(pose: Pose3DoF, bev_spec: GridSpec, map_spec: GridSpec) -> Homography33:
    """Ground-truth homography for a BEV grid placed at `pose` in the map frame.

    Only the geometry of bev_spec is used (its own center pose is ignored;
    `pose` plays that role). Result is affine with uniform scale
    bev_resolution / map_resolution.
    """
    # BEV pixel -> map metric, as an affine 3x3
    a = _pixel_to_metric_affine(bev_spec, pose)
    # map pixel -> map metric for the patch, then invert
    b = _pixel_to_metric_affine(map_spec, map_spec.center)
    return Homography33(np.linalg.inv(b) @ a)


def _pixel_to_metric_affine(spec: GridSpec, pose: Pose3DoF) -> np.ndarray:
    cu, cv = spec.center_pixel
    res = spec.resolution_mpp
    c, s = math.cos(pose.theta_rad), math.sin(pose.theta_rad)
    # metric = t + R_c(theta) @ diag(res, -res) @ (uv - center); the second
    # column carries the image v flip
    lin = np.array(
        [
            [c * res, -s * res],
            [-s * res, -c * res],
        ]
    )
    t = np.array([pose.x_m, pose.y_m]) - lin @ np.array([cu, cv])
    out = np.eye(3)
    out[:2, :2] = lin
    out[:2, 2] = t
    return out


def pose_from_homography(
    h: Homography33,
    bev_spec: GridSpec,
    map_spec: GridSpec,
    dv_px: float = 10.0,
) -> Pose3DoF:
    """Recover the 3-DoF pose encoded by a BEV->map-pixel homography.

    Position: the BEV grid center projected into map pixels, then converted
    to map-frame meters through the patch spec. Heading: auxiliary-point
    construction (see module docstring); dv_px sets the auxiliary offset.
    """
    if dv_px <= 0:
        raise ValueError("dv_px must be positive")
    uc, vc = bev_spec.center_pixel
    pts = apply_homography(h, np.array([[uc, vc], [uc, vc + dv_px]]))
    center_map_px, aux_map_px = pts[0], pts[1]

    xy = map_spec.pixel_to_metric(center_map_px)
    theta_rel = math.atan2(
        aux_map_px[1] - center_map_px[1], aux_map_px[0] - center_map_px[0]
    ) - math.atan2(dv_px, 0.0)
    theta = wrap_angle(map_spec.center.theta_rad + theta_rel)
    return Pose3DoF(float(xy[0]), float(xy[1]), theta)


def corners_to_homography(base_corners: np.ndarray, d: CornerDisplacement) -> Homography33:
    """DLT update mapping each base corner to base + displacement."""
    base = np.asarray(base_corners, dtype=np.float64).reshape(4, 2)
    return dlt_solve(base, base + d.d)


def grid_corners(width: int, height: int) -> np.ndarray:
    """Pixel coordinates of the four grid corners in CORNER_ORDER."""
    w, h = width - 1.0, height - 1.0
    return np.array([[0.0, 0.0], [w, 0.0], [w, h], [0.0, h]])
