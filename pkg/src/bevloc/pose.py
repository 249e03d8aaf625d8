"""Planar 3-DoF pose in the local ENU-derived map frame.

Conventions used everywhere in this package:

* map frame: x = east (m), y = north (m);
* heading theta is compass-like: the forward/up direction of a pose is
  (sin(theta), cos(theta)), so theta = 0 faces north and positive theta
  turns toward east;
* theta is kept wrapped to [-pi, pi).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

TWO_PI = 2.0 * math.pi


def wrap_angle(theta: float) -> float:
    """Wrap an angle in radians to [-pi, pi)."""
    return (theta + math.pi) % TWO_PI - math.pi


def angle_diff(a: float, b: float) -> float:
    """Smallest signed difference a - b, wrapped to [-pi, pi)."""
    return wrap_angle(a - b)


@dataclass(frozen=True)
class Pose3DoF:
    x_m: float
    y_m: float
    theta_rad: float

    def __post_init__(self):
        object.__setattr__(self, "theta_rad", wrap_angle(float(self.theta_rad)))
        if not (math.isfinite(self.x_m) and math.isfinite(self.y_m)):
            raise ValueError(f"non-finite pose position ({self.x_m}, {self.y_m})")

    def forward(self) -> tuple[float, float]:
        """Unit forward direction in (east, north)."""
        return math.sin(self.theta_rad), math.cos(self.theta_rad)

    def compose(self, other: "Pose3DoF") -> "Pose3DoF":
        """Pose of `other` expressed through this pose's frame (this ∘ other)."""
        c, s = math.cos(self.theta_rad), math.sin(self.theta_rad)
        # R_c(theta) maps local (right, up) into (east, north)
        x = self.x_m + c * other.x_m + s * other.y_m
        y = self.y_m - s * other.x_m + c * other.y_m
        return Pose3DoF(x, y, self.theta_rad + other.theta_rad)

    def as_dict(self) -> dict:
        return {"x": self.x_m, "y": self.y_m, "theta": self.theta_rad}
