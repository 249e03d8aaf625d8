"""Geo-referenced raster grids and the pixel <-> metric conventions.

Pixel convention (pinned, unit-tested): continuous pixel coordinate (u, v)
where u is the column and v the row, integer values land on pixel centers,
row 0 is the top of the image. For a grid whose center pose has heading 0,
+u points east and +v points south (the v axis is flipped when converting
to metric so that north is up).

A grid's center pose places the *center of the pixel lattice*,
((W-1)/2, (H-1)/2), at (x, y) with the grid's up direction along the pose
heading.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BadShape
from .geodesy import EnuFrame
from .pose import Pose3DoF

HGRD_MAGIC = b"HGRD"
HGRD_VERSION = 1


@dataclass(frozen=True)
class GridSpec:
    width_px: int
    height_px: int
    resolution_mpp: float
    center: Pose3DoF

    def __post_init__(self):
        if self.width_px <= 0 or self.height_px <= 0:
            raise ValueError("grid dimensions must be positive")
        if self.resolution_mpp <= 0:
            raise ValueError("resolution must be positive")

    @property
    def extent_m(self) -> tuple[float, float]:
        return self.width_px * self.resolution_mpp, self.height_px * self.resolution_mpp

    @property
    def center_pixel(self) -> tuple[float, float]:
        return (self.width_px - 1) / 2.0, (self.height_px - 1) / 2.0

    def pixel_to_metric(self, uv: np.ndarray, pose: Pose3DoF | None = None) -> np.ndarray:
        """Map continuous pixel coords (..., 2) to map-frame meters.

        `pose` overrides the spec's own center pose (used when the grid's
        placement is hypothetical, e.g. ground-truth homography synthesis).
        """
        pose = self.center if pose is None else pose
        uv = np.asarray(uv, dtype=np.float64)
        cu, cv = self.center_pixel
        right = (uv[..., 0] - cu) * self.resolution_mpp
        up = -(uv[..., 1] - cv) * self.resolution_mpp
        c, s = math.cos(pose.theta_rad), math.sin(pose.theta_rad)
        x = pose.x_m + c * right + s * up
        y = pose.y_m - s * right + c * up
        return np.stack([x, y], axis=-1)

    def metric_to_pixel(self, xy: np.ndarray, pose: Pose3DoF | None = None) -> np.ndarray:
        """Inverse of pixel_to_metric."""
        pose = self.center if pose is None else pose
        xy = np.asarray(xy, dtype=np.float64)
        dx = xy[..., 0] - pose.x_m
        dy = xy[..., 1] - pose.y_m
        c, s = math.cos(pose.theta_rad), math.sin(pose.theta_rad)
        right = c * dx - s * dy
        up = s * dx + c * dy
        cu, cv = self.center_pixel
        u = cu + right / self.resolution_mpp
        v = cv - up / self.resolution_mpp
        return np.stack([u, v], axis=-1)

    def to_json_dict(self) -> dict:
        return {
            "width_px": self.width_px,
            "height_px": self.height_px,
            "resolution_mpp": self.resolution_mpp,
            "center_x": self.center.x_m,
            "center_y": self.center.y_m,
            "center_theta_rad": self.center.theta_rad,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "GridSpec":
        return cls(
            width_px=int(d["width_px"]),
            height_px=int(d["height_px"]),
            resolution_mpp=float(d["resolution_mpp"]),
            center=Pose3DoF(d["center_x"], d["center_y"], d["center_theta_rad"]),
        )


CHANNEL_ROAD = 0
CHANNEL_BUILDING = 1


@dataclass
class RasterGrid:
    """2-channel binary coverage grid: channel 0 = road, 1 = building."""

    spec: GridSpec
    channels: np.ndarray  # (2, H, W) float32 in [0, 1], row 0 = top

    def __post_init__(self):
        self.channels = np.asarray(self.channels, dtype=np.float32)
        if self.channels.ndim != 3 or self.channels.shape[0] != 2:
            raise BadShape(f"expected (2, H, W) channels, got {self.channels.shape}")
        if self.channels.shape[1] != self.spec.height_px or self.channels.shape[2] != self.spec.width_px:
            raise BadShape(
                f"channel shape {self.channels.shape[1:]} does not match spec "
                f"{(self.spec.height_px, self.spec.width_px)}"
            )
        if self.channels.size and (self.channels.min() < 0.0 or self.channels.max() > 1.0):
            raise ValueError("grid values must lie in [0, 1]")

    @classmethod
    def zeros(cls, spec: GridSpec) -> "RasterGrid":
        return cls(spec, np.zeros((2, spec.height_px, spec.width_px), dtype=np.float32))


def save_hgrd(path: str | Path, grid: RasterGrid, frame: EnuFrame | None = None) -> None:
    """Write an HGRD raster plus its `<name>.json` sidecar."""
    path = Path(path)
    c, h, w = grid.channels.shape
    header = HGRD_MAGIC + struct.pack("<IIII", HGRD_VERSION, c, h, w)
    data = np.ascontiguousarray(grid.channels, dtype="<f4").tobytes()
    path.write_bytes(header + data)

    sidecar = grid.spec.to_json_dict()
    sidecar.update((frame or _null_frame()).to_json_dict())
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))


def load_hgrd(path: str | Path) -> tuple[RasterGrid, EnuFrame]:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 20 or raw[:4] != HGRD_MAGIC:
        raise BadShape(f"{path}: not an HGRD file")
    version, c, h, w = struct.unpack("<IIII", raw[4:20])
    if version != HGRD_VERSION:
        raise BadShape(f"{path}: unsupported HGRD version {version}")
    expected = 20 + 4 * c * h * w
    if len(raw) != expected:
        raise BadShape(f"{path}: truncated HGRD payload ({len(raw)} != {expected} bytes)")
    channels = np.frombuffer(raw[20:], dtype="<f4").reshape(c, h, w).copy()

    sidecar = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    spec = GridSpec.from_json_dict(sidecar)
    frame = EnuFrame.from_json_dict(sidecar)
    return RasterGrid(spec, channels), frame


def _null_frame() -> EnuFrame:
    from .geodesy import GeodeticPoint

    return EnuFrame(GeodeticPoint(0.0, 0.0, 0.0))
