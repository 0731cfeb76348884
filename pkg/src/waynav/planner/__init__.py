from .fmm import march
from .grid2d import (
    GROUND_INFLATION,
    DistanceField,
    Path,
    extract_path,
    fmm_field,
    path_is_clear,
    plan_to,
    planning_mask,
    polyline_length,
)
from .vis3d import direction_constrained_waypoint, plan_3d, plan_3d_on_array

__all__ = [
    "GROUND_INFLATION",
    "DistanceField",
    "Path",
    "direction_constrained_waypoint",
    "extract_path",
    "fmm_field",
    "march",
    "path_is_clear",
    "plan_3d",
    "plan_3d_on_array",
    "plan_to",
    "planning_mask",
    "polyline_length",
]
