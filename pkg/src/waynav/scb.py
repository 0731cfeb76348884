"""Waypoint tagging and return-to-waypoint recovery."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import EmptyFailure, Unreachable, UnknownWaypoint
from .geometry import Point3, Pose
from .mapping import OccupancyGrid
from .planner.grid2d import Path, plan_to

BUFFER_CAPACITY = 64
MAX_FAILURE_FRAMES = 8


@dataclass
class WaypointRecord:
    id: int
    pose: Pose
    panorama_key: str
    caption: str
    chosen_direction: Optional[str] = None

    def to_dict(self) -> dict:
        return {"id": self.id, "pose": self.pose.to_dict(), "panorama_key": self.panorama_key,
                "caption": self.caption, "chosen_direction": self.chosen_direction}


class WaypointBuffer:
    def __init__(self, capacity: int = BUFFER_CAPACITY):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.records: deque[WaypointRecord] = deque(maxlen=capacity)
        self.next_id = 0

    def __len__(self):
        return len(self.records)

    def __contains__(self, k) -> bool:
        return any(r.id == k for r in self.records)

    def ids(self) -> list[int]:
        return [r.id for r in self.records]

    def get(self, k: int) -> WaypointRecord:
        for r in self.records:
            if r.id == k:
                return r
        raise UnknownWaypoint(f"waypoint {k} is not in the buffer (held: {self.ids()[:1]}..{self.ids()[-1:]})")

    @property
    def latest(self) -> Optional[WaypointRecord]:
        return self.records[-1] if self.records else None


def record_waypoint(buffer: WaypointBuffer, pose: Pose, panorama_key: str, caption: str) -> int:
    k = buffer.next_id
    buffer.records.append(WaypointRecord(k, pose, panorama_key, caption))
    buffer.next_id += 1
    return k


def backtrack_path(buffer: WaypointBuffer, k: int, belief_grid: OccupancyGrid, current_pose: Pose) -> Path:
    """Route back to waypoint ``k`` planned on the map as it is now."""
    wp = buffer.get(k)
    if wp.pose.floor_id != current_pose.floor_id:
        raise Unreachable(f"waypoint {k} is on floor {wp.pose.floor_id}, agent on {current_pose.floor_id}")
    return plan_to(belief_grid, current_pose, Point3(wp.pose.x, wp.pose.y, wp.pose.z), exact_target=True)


@dataclass
class FailedSubTrajectory:
    origin_wp: int
    frames: list[str]
    poses: list[Pose]
    failed_direction: str

    def __post_init__(self):
        if len(self.frames) != len(self.poses):
            raise ValueError("frames and poses must pair up")

    def to_dict(self) -> dict:
        return {"origin_wp": self.origin_wp, "frames": list(self.frames),
                "poses": [p.to_dict() for p in self.poses], "failed_direction": self.failed_direction}


def subsample_even(n: int, limit: int = MAX_FAILURE_FRAMES) -> list[int]:
    if n <= limit:
        return list(range(n))
    return sorted({int(round(x)) for x in np.linspace(0, n - 1, limit)})


def assemble_recovery_context(buffer: WaypointBuffer, k: int, trace):
    """Evidence for re-deciding at waypoint ``k``.

    The failed direction is the last turn chosen at ``k``; the frames are the
    waypoint's view in that direction followed by the keyed step views
    recorded since, thinned evenly to at most eight.
    """
    wp = buffer.get(k)
    records = trace.records
    depart = None
    direction = None
    for i, rec in enumerate(records):
        if rec.get("type") in ("lang", "recovery") and rec.get("waypoint") == k:
            act = (rec.get("parsed") or {}).get("action") or {}
            if act.get("name") == "turn":
                depart, direction = i, act["direction"]
    if depart is None:
        raise EmptyFailure(f"no direction was chosen at waypoint {k}")
    steps = [r for r in records[depart + 1 :] if r.get("type") == "step" and r.get("frame")]
    if not steps:
        raise EmptyFailure(f"no steps recorded since leaving waypoint {k}")
    frames = [f"{wp.panorama_key}/{direction}"] + [r["frame"] for r in steps]
    poses = [wp.pose] + [Pose.from_dict(r["pose"]) for r in steps]
    keep = subsample_even(len(frames))
    traj = FailedSubTrajectory(k, [frames[i] for i in keep], [poses[i] for i in keep], direction)
    return trace.task, wp.panorama_key, direction, traj


def pose_error(a: Pose, b: Pose) -> float:
    return math.hypot(a.x - b.x, a.y - b.y)
