"""Exception hierarchy shared across the engine."""


class NavError(Exception):
    """Base class for all engine errors."""


# geometry
class InvalidDepth(NavError):
    pass


class OutOfBounds(NavError):
    pass


class FrameMismatch(NavError):
    pass


class BehindCamera(NavError):
    pass


# world
class InvalidPose(NavError):
    pass


class EpisodeTerminated(NavError):
    pass


class GenerationFailed(NavError):
    pass


class SchemaMismatch(NavError):
    """A file or trace does not match the expected schema or partner file."""


# planner
class SourceBlocked(NavError):
    pass


class Unreachable(NavError):
    pass


class NoNearbyTraversable(NavError):
    pass


class BlockedAhead(NavError):
    pass


# tdm
class EmptyPlan(NavError):
    pass


# agent
class UnparseableDecision(NavError):
    pass


class GroundingFailed(NavError):
    pass


class BackendError(NavError):
    def __init__(self, kind: str, message: str = ""):
        super().__init__(f"{kind}: {message}" if message else kind)
        self.kind = kind


# scb
class UnknownWaypoint(NavError):
    pass


class EmptyFailure(NavError):
    pass


# runner
class GroundingDepthFailure(NavError):
    pass


# metrics
class MissingReference(NavError):
    pass


class NoData(NavError):
    pass
