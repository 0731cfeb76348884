"""Poses, pinhole intrinsics and camera/world transforms.

Conventions used throughout the package:

* World frame: x east, y north, z up (metres). Yaw is in degrees,
  counter-clockwise from +x, normalised to [0, 360).
* Camera frame: +z forward, +x right, +y down.
* Ground views are level; the aerial ``down`` view is pitched -90 degrees
  with the top of the image pointing along the body heading.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BehindCamera, FrameMismatch, InvalidDepth, OutOfBounds

CAMERA = "camera"
WORLD = "world"

DOWN_PITCH = -90.0


def normalize_yaw(yaw: float) -> float:
    y = math.fmod(float(yaw), 360.0)
    if y < 0.0:
        y += 360.0
    # fmod(-1e-18, 360) + 360 rounds to 360.0
    if y >= 360.0:
        y -= 360.0
    return y


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    z: float = 0.0
    yaw: float = 0.0
    floor_id: int = 0

    def __post_init__(self):
        for v in (self.x, self.y, self.z, self.yaw):
            if not math.isfinite(v):
                raise ValueError(f"non-finite pose component in {self!r}")
        if self.floor_id < 0:
            raise ValueError("floor_id must be >= 0")
        object.__setattr__(self, "yaw", normalize_yaw(self.yaw))

    @property
    def xy(self) -> tuple[float, float]:
        return (self.x, self.y)

    @property
    def xyz(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.z)

    def with_(self, **kw) -> "Pose":
        d = dict(x=self.x, y=self.y, z=self.z, yaw=self.yaw, floor_id=self.floor_id)
        d.update(kw)
        return Pose(**d)

    def heading(self, offset: float = 0.0) -> tuple[float, float]:
        a = math.radians(self.yaw + offset)
        return (math.cos(a), math.sin(a))

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "z": self.z, "yaw": self.yaw, "floor_id": self.floor_id}

    @classmethod
    def from_dict(cls, d: dict) -> "Pose":
        return cls(d["x"], d["y"], d.get("z", 0.0), d.get("yaw", 0.0), d.get("floor_id", 0))


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point outside the image")

    @classmethod
    def from_fov(cls, width: int, height: int, hfov_deg: float = 90.0) -> "Intrinsics":
        """Square-pixel intrinsics with the principal point at the image centre."""
        f = (width / 2.0) / math.tan(math.radians(hfov_deg) / 2.0)
        return cls(f, f, width / 2.0, height / 2.0, width, height)

    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def column_bearing(self, u: float) -> float:
        """Horizontal angle (radians, positive to the right) of the ray through column u."""
        return math.atan2(u - self.cx, self.fx)


@dataclass(frozen=True)
class Point3:
    x: float
    y: float
    z: float
    frame: str = field(default=WORLD)

    def __post_init__(self):
        if self.frame not in (CAMERA, WORLD):
            raise ValueError(f"unknown frame {self.frame!r}")
        for v in (self.x, self.y, self.z):
            if not math.isfinite(v):
                raise ValueError("non-finite point component")

    def _check(self, other: "Point3"):
        if other.frame != self.frame:
            raise FrameMismatch(f"{self.frame} vs {other.frame}")

    def __add__(self, other: "Point3") -> "Point3":
        self._check(other)
        return Point3(self.x + other.x, self.y + other.y, self.z + other.z, self.frame)

    def __sub__(self, other: "Point3") -> "Point3":
        self._check(other)
        return Point3(self.x - other.x, self.y - other.y, self.z - other.z, self.frame)

    def norm(self) -> float:
        return math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)

    def distance(self, other: "Point3") -> float:
        return (self - other).norm()

    @property
    def xy(self) -> tuple[float, float]:
        return (self.x, self.y)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


def backproject(u: float, v: float, d: float, k: Intrinsics) -> Point3:
    """Lift pixel (u, v) with depth d to a camera-frame point, d * K^-1 [u, v, 1]."""
    if not (math.isfinite(d) and d > 0.0):
        raise InvalidDepth(f"depth {d!r} at ({u}, {v})")
    if not (0 <= u < k.width and 0 <= v < k.height):
        raise OutOfBounds(f"pixel ({u}, {v}) outside {k.width}x{k.height}")
    return Point3(d * (u - k.cx) / k.fx, d * (v - k.cy) / k.fy, d, CAMERA)


def project(p: Point3, k: Intrinsics) -> tuple[float, float]:
    if p.frame != CAMERA:
        raise FrameMismatch("project expects a camera-frame point")
    if p.z <= 0.0:
        raise BehindCamera(f"z = {p.z}")
    return (k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy)


def camera_axes(pose: Pose, view_yaw_offset: float = 0.0, pitch: float = 0.0):
    """World-frame unit vectors of the camera's (right, down, forward) axes."""
    a = math.radians(normalize_yaw(pose.yaw + view_yaw_offset))
    f = np.array([math.cos(a), math.sin(a), 0.0])
    r = np.array([math.sin(a), -math.cos(a), 0.0])
    up = np.array([0.0, 0.0, 1.0])
    if pitch == 0.0:
        return r, -up, f
    if pitch == DOWN_PITCH:
        return r, -f, -up
    raise ValueError(f"unsupported pitch {pitch}")


def cam_to_world(p: Point3, pose: Pose, view_yaw_offset: float = 0.0, pitch: float = 0.0) -> Point3:
    if p.frame != CAMERA:
        raise FrameMismatch("cam_to_world expects a camera-frame point")
    right, down, fwd = camera_axes(pose, view_yaw_offset, pitch)
    w = np.array(pose.xyz) + p.x * right + p.y * down + p.z * fwd
    return Point3(float(w[0]), float(w[1]), float(w[2]), WORLD)


def world_to_cam(p: Point3, pose: Pose, view_yaw_offset: float = 0.0, pitch: float = 0.0) -> Point3:
    if p.frame != WORLD:
        raise FrameMismatch("world_to_cam expects a world-frame point")
    right, down, fwd = camera_axes(pose, view_yaw_offset, pitch)
    d = p.as_array() - np.array(pose.xyz)
    return Point3(float(d @ right), float(d @ down), float(d @ fwd), CAMERA)


def wrap_angle(deg: float) -> float:
    """Wrap an angle difference to (-180, 180]."""
    a = normalize_yaw(deg)
    return a - 360.0 if a > 180.0 else a
