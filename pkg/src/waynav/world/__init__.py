from .model import (
    AERIAL,
    DIRECTIONS,
    FORWARD_STEP,
    GROUND,
    GROUND_VIEWS,
    MOVE_FORWARD,
    NO_RETURN,
    STOP,
    TURN_LEFT,
    TURN_RIGHT,
    TURN_STEP,
    AgentState,
    GoalStatus,
    PanoramaObservation,
    SemanticGrid2D,
    Site,
    StairLink,
    TaskSpec,
    View,
    VoxelGrid,
    WorldModel,
    default_intrinsics,
)
from .sim import check_goal, fly_to, geodesic_distance, render_panorama, render_view, step, truth_fields
from .generator import GeneratorSpec, generate_world
from .io import dumps, load_world, save_world, world_from_dict, world_to_dict
