from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..geometry import Intrinsics, Pose

GROUND = "ground2d"
AERIAL = "aerial3d"

FAMILIES = ("VLN", "ObjectNav", "EQA", "AerialVLN")

# low-level action vocabulary (ground robots)
MOVE_FORWARD = "move_forward"
TURN_LEFT = "turn_left"
TURN_RIGHT = "turn_right"
STOP = "stop"
LOW_LEVEL_ACTIONS = (MOVE_FORWARD, TURN_LEFT, TURN_RIGHT, STOP)

FORWARD_STEP = 0.25
TURN_STEP = 30.0

IMAGE_WIDTH = 128
IMAGE_HEIGHT = 96
HFOV = 90.0
GROUND_MAX_RANGE = 10.0
AERIAL_MAX_RANGE = 60.0
FLOOR_HEIGHT = 3.0

# rows of the ground image that carry wall returns
BAND_TOP = IMAGE_HEIGHT // 4
BAND_BOTTOM = 3 * IMAGE_HEIGHT // 4

GROUND_VIEWS = {"front": 0.0, "left": 90.0, "back": 180.0, "right": 270.0}
DIRECTIONS = ("front", "left", "right", "back")

NO_RETURN = np.inf


def default_intrinsics() -> Intrinsics:
    return Intrinsics.from_fov(IMAGE_WIDTH, IMAGE_HEIGHT, HFOV)


@dataclass
class SemanticGrid2D:
    occupied: np.ndarray  # bool [rows=y, cols=x]
    labels: np.ndarray  # int32, 0 = unlabeled

    @property
    def height(self) -> int:
        return self.occupied.shape[0]

    @property
    def width(self) -> int:
        return self.occupied.shape[1]


@dataclass
class VoxelGrid:
    occupied: np.ndarray  # bool [z, y, x]
    labels: np.ndarray


@dataclass(frozen=True)
class Site:
    """A ground-truth location with an optional landmark label."""

    x: float
    y: float
    z: float = 0.0
    floor_id: int = 0
    label: str = ""

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "z": self.z, "floor_id": self.floor_id, "label": self.label}

    @classmethod
    def from_dict(cls, d: dict) -> "Site":
        return cls(d["x"], d["y"], d.get("z", 0.0), d.get("floor_id", 0), d.get("label", ""))


@dataclass(frozen=True)
class StairLink:
    floor_a: int
    cell_a: tuple[int, int]  # (row, col)
    floor_b: int
    cell_b: tuple[int, int]


@dataclass
class TaskSpec:
    family: str
    instruction: str
    start: Pose
    goal_positions: list[Site]
    success_radius: float
    ordered_subgoal_positions: Optional[list[Site]] = None
    eqa_answer: Optional[str] = None
    target_label: str = ""
    # agent-visible bearing for aerial directives ("fly north-east ...")
    direction_hint: Optional[tuple[float, float, float]] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown task family {self.family!r}")
        if not self.success_radius > 0:
            raise ValueError("success_radius must be positive")
        if self.family == "EQA" and not self.eqa_answer:
            raise ValueError("EQA tasks need an answer")
        if self.family == "VLN" and not self.ordered_subgoal_positions:
            raise ValueError("VLN tasks need ordered subgoals")
        if not self.goal_positions:
            raise ValueError("task has no goal positions")


@dataclass
class WorldModel:
    name: str
    resolution: float
    task: TaskSpec
    labels: dict[int, str]
    variant: str = GROUND
    floors: list[SemanticGrid2D] = field(default_factory=list)
    stair_links: list[StairLink] = field(default_factory=list)
    voxels: Optional[VoxelGrid] = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if not self.resolution > 0:
            raise ValueError("resolution must be positive")
        for link in self.stair_links:
            for fl, (r, c) in ((link.floor_a, link.cell_a), (link.floor_b, link.cell_b)):
                if self.floors[fl].occupied[r, c]:
                    raise ValueError(f"stair endpoint {(fl, r, c)} is occupied")

    @property
    def is_aerial(self) -> bool:
        return self.variant == AERIAL

    def label_id(self, text: str) -> int:
        for k, v in self.labels.items():
            if v == text:
                return k
        return 0

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        return (int(np.floor(y / self.resolution)), int(np.floor(x / self.resolution)))

    def cell_center(self, r: int, c: int) -> tuple[float, float]:
        return ((c + 0.5) * self.resolution, (r + 0.5) * self.resolution)

    def floor_z(self, floor_id: int) -> float:
        return floor_id * FLOOR_HEIGHT

    def is_free(self, pose: Pose) -> bool:
        if self.is_aerial:
            occ = self.voxels.occupied
            k, j, i = (int(np.floor(v / self.resolution)) for v in (pose.z, pose.y, pose.x))
            return 0 <= k < occ.shape[0] and 0 <= j < occ.shape[1] and 0 <= i < occ.shape[2] and not occ[k, j, i]
        if pose.floor_id >= len(self.floors):
            return False
        g = self.floors[pose.floor_id]
        r, c = self.cell_of(pose.x, pose.y)
        return 0 <= r < g.height and 0 <= c < g.width and not g.occupied[r, c]


@dataclass
class View:
    name: str
    depth: np.ndarray  # float64 [H, W], z-depth in metres, inf = no return
    semantic: np.ndarray  # int32 label ids
    intrinsics: Intrinsics
    yaw_offset: float
    pitch: float = 0.0
    max_range: float = GROUND_MAX_RANGE


@dataclass
class PanoramaObservation:
    views: dict[str, View]
    intrinsics: Intrinsics
    pose: Pose


@dataclass
class AgentState:
    pose: Pose
    collided_last_step: bool = False
    stopped: bool = False


@dataclass(frozen=True)
class GoalStatus:
    distance: float
    within_radius: bool
