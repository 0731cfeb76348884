import numpy as np
import pytest

from conftest import box_world
from waynav.geometry import Pose
from waynav.mapping import FREE, OCCUPIED, UNKNOWN, OccupancyGrid, VoxelMap, integrate_panorama, known_fraction
from waynav.world import GeneratorSpec, generate_world, render_panorama, render_view
from waynav.world.model import GROUND_VIEWS


def _truth_cell(world, grid, r, c):
    R, C = r + grid.origin_cell[0], c + grid.origin_cell[1]
    occ = world.floors[0].occupied
    if not (0 <= R < occ.shape[0] and 0 <= C < occ.shape[1]):
        return None
    return bool(occ[R, C])


def test_single_view_of_wall():
    w = box_world(walls=[(3.0, 0.0, 3.2, 6.0)], start=(1.0, 3.0, 0.0))
    g = OccupancyGrid(w.resolution)
    g.integrate_view(w.task.start, render_view(w, w.task.start))
    # straight-ahead ray: cells up to the wall free, first wall cell occupied
    r, c0 = g.index_of(1.0, 3.0)
    _, cw = g.index_of(3.0, 3.0)
    assert np.all(g.cells[r, c0:cw] == FREE)
    assert g.cells[r, cw] == OCCUPIED
    assert g.cells[r, cw + 1] == UNKNOWN


def test_integration_idempotent():
    w = generate_world(4)
    pano = render_panorama(w, w.task.start)
    g = integrate_panorama(OccupancyGrid(w.resolution), w.task.start, pano)
    once = g.cells.copy()
    integrate_panorama(g, w.task.start, pano)
    assert np.array_equal(once, g.cells)


def test_two_sides_of_a_wall():
    w = box_world(walls=[(2.9, 0.0, 3.1, 6.0)])
    g = OccupancyGrid(w.resolution)
    for x, yaw in ((1.5, 0.0), (4.5, 180.0)):
        p = Pose(x, 3.0, 0, yaw)
        integrate_panorama(g, p, render_panorama(w, p))
    # both faces of the four-cell-thick wall are seen; its core stays unknown
    assert g.cells[g.index_of(2.92, 3.0)] == OCCUPIED
    assert g.cells[g.index_of(3.08, 3.0)] == OCCUPIED
    assert g.cells[g.index_of(1.5, 3.0)] == FREE
    assert g.cells[g.index_of(4.5, 3.0)] == FREE


def test_known_fraction_cases():
    assert known_fraction(OccupancyGrid(0.05)) == 0.0
    w = box_world(size_m=4.0, start=(2.0, 2.0, 0.0), goal=(3.0, 2.0))
    g = OccupancyGrid(w.resolution)
    for x in (1.0, 2.0, 3.0):
        for y in (1.0, 2.0, 3.0):
            for yaw in (0, 45):
                p = Pose(x, y, 0, yaw)
                integrate_panorama(g, p, render_panorama(w, p))
    assert known_fraction(g) >= 0.95
    open_w = generate_world(8, GeneratorSpec(layout="single_room"))
    g2 = integrate_panorama(OccupancyGrid(open_w.resolution), open_w.task.start,
                            render_panorama(open_w, open_w.task.start))
    assert 0.0 < known_fraction(g2) < 1.0


def test_known_set_only_grows():
    w = generate_world(9)
    g = OccupancyGrid(w.resolution)
    prev = 0
    rng = np.random.default_rng(0)
    free = np.argwhere(~w.floors[0].occupied)
    for _ in range(6):
        r, c = free[rng.integers(len(free))]
        x, y = w.cell_center(int(r), int(c))
        p = Pose(x, y, 0, 0)
        integrate_panorama(g, p, render_panorama(w, p))
        n = int(g.known_mask().sum())
        assert n >= prev
        prev = n


@pytest.mark.parametrize("seed", range(50))
def test_belief_sound_against_truth(seed):
    w = generate_world(1000 + seed)
    rng = np.random.default_rng(seed)
    free = np.argwhere(~w.floors[0].occupied)
    g = OccupancyGrid(w.resolution)
    for _ in range(3):
        r, c = free[rng.integers(len(free))]
        x, y = w.cell_center(int(r), int(c))
        p = Pose(x, y, 0, float(rng.uniform(0, 360)))
        integrate_panorama(g, p, render_panorama(w, p))
    known = np.argwhere(g.cells != UNKNOWN)
    for r, c in known:
        truth = _truth_cell(w, g, int(r), int(c))
        if truth is None:
            continue
        assert truth == (g.cells[r, c] == OCCUPIED)


def test_grid_grows_to_cover_rays():
    w = box_world()
    g = OccupancyGrid(w.resolution)
    g.integrate_view(w.task.start, render_view(w, w.task.start, GROUND_VIEWS["front"]))
    assert g.shape[0] > 0 and g.contains_index(*g.index_of(5.9, 3.0))


def test_pgm_dump():
    g = OccupancyGrid(0.5, (0, 0), (2, 3))
    g.cells[0, 0] = OCCUPIED
    g.cells[1, 2] = FREE
    text = g.to_pgm().splitlines()
    assert text[:3] == ["P2", "3 2", "2"]
    assert text[3] == "1 1 2" and text[4] == "0 1 1"


def test_voxel_map_marks_hits():
    w = generate_world(900, GeneratorSpec(family="AerialVLN"))
    vm = VoxelMap(w.resolution, w.voxels.occupied.shape)
    vm.integrate_panorama(w.task.start, render_panorama(w, w.task.start))
    occ = vm.cells == OCCUPIED
    assert occ.any() and (vm.cells == FREE).any()
    assert np.all(w.voxels.occupied[occ])
