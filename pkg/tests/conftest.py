import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from waynav.geometry import Pose  # noqa: E402
from waynav.world.model import SemanticGrid2D, Site, TaskSpec, WorldModel  # noqa: E402


def box_world(size_m=6.0, res=0.05, walls=(), labels=None, start=(1.0, 3.0, 0.0), goal=(5.0, 3.0),
              family="ObjectNav", radius=1.0, name="box", **task_kw) -> WorldModel:
    """Square room with a one-cell border; ``walls`` are (x0, y0, x1, y1) metre rectangles to fill.

    ``labels`` maps label text to a list of rectangles painted with that label (and made occupied).
    """
    n = int(round(size_m / res))
    occ = np.zeros((n, n), bool)
    lab = np.zeros((n, n), np.int32)
    occ[0, :] = occ[-1, :] = occ[:, 0] = occ[:, -1] = True
    table = {1: "wall"}
    lab[occ] = 1

    def paint(rect, lid):
        x0, y0, x1, y1 = rect
        c0, c1 = int(round(x0 / res)), int(round(x1 / res))
        r0, r1 = int(round(y0 / res)), int(round(y1 / res))
        occ[r0:r1, c0:c1] = True
        lab[r0:r1, c0:c1] = lid

    for rect in walls:
        paint(rect, 1)
    for k, (text, rects) in enumerate((labels or {}).items(), start=2):
        table[k] = text
        for rect in rects:
            paint(rect, k)
    sx, sy, syaw = start
    extra = {}
    if family == "VLN":
        extra["ordered_subgoal_positions"] = [Site(goal[0], goal[1])]
    if family == "EQA":
        extra["eqa_answer"] = "red"
    extra.update(task_kw)
    task = TaskSpec(family, "go to the goal", Pose(sx, sy, 0.0, syaw), [Site(goal[0], goal[1])], radius, **extra)
    return WorldModel(name, res, task, table, floors=[SemanticGrid2D(occ, lab)])


@pytest.fixture
def empty_room():
    return box_world()


@pytest.fixture(scope="session")
def oracle_worlds():
    from waynav.world.generator import oracle_suite

    return oracle_suite()


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
