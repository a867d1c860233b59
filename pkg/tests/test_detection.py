import numpy as np
import pytest

from safemap.detection import DetectedRegion, DetectedRegionSet, HoughParams, classify, detect_2d, detect_3d
from safemap.grids import make_grid
from safemap.safety import BinarySafetyMap

GRID = make_grid(((0, 1), (0, 1)), (100, 100))
PARAMS = HoughParams(radius_min=0.05, radius_max=0.15)


def as_map(bits, grid=GRID, step=1):
    return BinarySafetyMap(grid=grid, bits=np.asarray(bits, dtype=np.uint8),
                           step=step, beta_value=0.0, f_bar=0.7, lipschitz_margin=0.0)


def rasterize_disks(disks, grid=GRID):
    bits = np.zeros(len(grid), dtype=np.uint8)
    for center, radius in disks:
        d = np.linalg.norm(grid.points - np.asarray(center), axis=1)
        bits[d <= radius] = 1
    return as_map(bits, grid)


def ls_circle_fit(cells_xy):
    """Kasa algebraic least-squares circle fit (test oracle)."""
    x, y = cells_xy[:, 0], cells_xy[:, 1]
    A = np.column_stack([2 * x, 2 * y, np.ones(len(x))])
    b = x**2 + y**2
    (cx, cy, c), *_ = np.linalg.lstsq(A, b, rcond=None)
    return np.array([cx, cy]), np.sqrt(c + cx**2 + cy**2)


def boundary_points(bmap):
    from safemap.detection import _boundary_cells

    bits = bmap.bits.reshape(bmap.grid.shape)
    cells = np.argwhere(_boundary_cells(bits))
    origin = np.array([a[0] for a in bmap.grid.axes])
    return origin + cells * bmap.grid.spacing


def test_empty_map_yields_no_detections():
    det = detect_2d(as_map(np.zeros(len(GRID))), PARAMS)
    assert det.count == 0


def test_single_disk_matches_ls_fit_oracle():
    bmap = rasterize_disks([((0.25, 0.75), 0.10)])
    det = detect_2d(bmap, PARAMS)
    assert det.count == 1
    center_fit, radius_fit = ls_circle_fit(boundary_points(bmap))
    got = det.regions[0]
    assert np.linalg.norm(np.asarray(got.center) - center_fit) <= 0.02
    assert abs(got.radius - radius_fit) <= 0.011  # fit radius sits half a cell in


def test_disk_recovery_tolerances():
    for radius in (0.06, 0.10, 0.14):
        for center in ((0.25, 0.75), (0.5, 0.5), (0.62, 0.33)):
            det = detect_2d(rasterize_disks([(center, radius)]), PARAMS)
            assert det.count == 1, (radius, center)
            got = det.regions[0]
            assert np.linalg.norm(np.asarray(got.center) - center) <= 0.02
            assert abs(got.radius - radius) <= 0.01


def test_two_disjoint_disks_both_recovered():
    disks = [((0.25, 0.75), 0.12), ((0.75, 0.25), 0.12)]
    det = detect_2d(rasterize_disks(disks), PARAMS)
    assert det.count == 2
    for center, radius in disks:
        matched = min(det.regions,
                      key=lambda r: np.linalg.norm(np.asarray(r.center) - center))
        assert np.linalg.norm(np.asarray(matched.center) - center) <= 0.02
        assert abs(matched.radius - radius) <= 0.01


def test_peak_votes_near_ideal_on_exact_disk():
    from safemap.detection import _ideal_votes

    cell = GRID.spacing[0]
    for radius in (0.07, 0.10, 0.14):
        det = detect_2d(rasterize_disks([((0.5, 0.5), radius)]), PARAMS)
        ideal = _ideal_votes(radius / cell)
        assert det.regions[0].weight >= 0.9 * ideal


def test_oversize_blob_clamped_to_max_radius():
    det = detect_2d(rasterize_disks([((0.5, 0.5), 0.25)]), PARAMS)
    assert det.count == 1
    assert det.regions[0].radius == pytest.approx(0.15, abs=1e-12)
    assert det.contains((0.5, 0.5))


def test_detection_deterministic():
    bmap = rasterize_disks([((0.3, 0.6), 0.09), ((0.7, 0.3), 0.13)])
    a = detect_2d(bmap, PARAMS)
    b = detect_2d(bmap, PARAMS)
    assert a.to_dicts() == b.to_dicts()


def test_sorted_by_votes_descending():
    det = detect_2d(rasterize_disks([((0.3, 0.6), 0.14), ((0.7, 0.3), 0.07)]), PARAMS)
    weights = [r.weight for r in det.regions]
    assert weights == sorted(weights, reverse=True)


def test_degenerate_radius_range_rejected():
    with pytest.raises(ValueError):
        HoughParams(radius_min=0.15, radius_max=0.05)
    with pytest.raises(ValueError):
        HoughParams(radius_min=0.05, radius_max=0.15, accumulator_threshold=0.0)


def test_requires_2d_square_cells():
    grid3 = make_grid(((0, 1), (0, 1), (0, 1)), (5, 5, 5))
    with pytest.raises(ValueError):
        detect_2d(as_map(np.zeros(len(grid3)), grid3), PARAMS)
    rect = make_grid(((0, 1), (0, 2)), (10, 10))
    with pytest.raises(ValueError):
        detect_2d(as_map(np.zeros(len(rect)), rect), PARAMS)


class TestClassify:
    REGIONS = DetectedRegionSet(
        regions=[DetectedRegion(center=(0.25, 0.25), radius=0.125, weight=10)], step=1)

    def test_center_is_unsafe(self):
        assert classify(self.REGIONS, (0.25, 0.25)) == "unsafe"

    def test_boundary_is_unsafe_closed_ball(self):
        # distances chosen exactly representable in binary
        assert classify(self.REGIONS, (0.375, 0.25)) == "unsafe"
        assert classify(self.REGIONS, (0.3751, 0.25)) == "safe"

    def test_empty_union_all_safe(self):
        assert classify(DetectedRegionSet.empty(), (0.5, 0.5)) == "safe"

    def test_union_membership_monotone(self):
        rng = np.random.default_rng(0)
        pts = rng.uniform(0, 1, (200, 2))
        base = self.REGIONS.contains_many(pts)
        grown = DetectedRegionSet(
            regions=self.REGIONS.regions + [DetectedRegion((0.7, 0.7), 0.05, 5)], step=1)
        bigger = grown.contains_many(pts)
        assert np.all(bigger[base])  # nothing flips unsafe -> safe


class TestDetect3d:
    GRID3 = make_grid(((0, 10), (0, 10), (0, 10)), (50, 50, 50))

    def rasterize_balls(self, balls):
        bits = np.zeros(len(self.GRID3), dtype=np.uint8)
        for center, radius in balls:
            d = np.linalg.norm(self.GRID3.points - np.asarray(center), axis=1)
            bits[d <= radius] = 1
        return as_map(bits, self.GRID3)

    def test_empty_volume(self):
        det = detect_3d(as_map(np.zeros(len(self.GRID3)), self.GRID3))
        assert det.count == 0

    def test_single_ball_geometry(self):
        bmap = self.rasterize_balls([((2.0, 2.0, 0.0), 1.0)])
        det = detect_3d(bmap)
        assert det.count == 1
        got = det.regions[0]
        # oracle: centroid of the rasterized component itself
        voxels = self.GRID3.points[bmap.bits.astype(bool)]
        centroid = voxels.mean(axis=0)
        voxel = self.GRID3.spacing[0]
        assert np.linalg.norm(np.asarray(got.center) - centroid) <= voxel
        diag = voxel * np.sqrt(3)
        assert 1.0 <= got.radius <= 1.0 + diag
        # the sphere covers every voxel of the component
        assert np.all(np.linalg.norm(voxels - np.asarray(got.center), axis=1) <= got.radius)

    def test_unclipped_ball_centroid_matches_true_center(self):
        det = detect_3d(self.rasterize_balls([((5.0, 5.0, 5.0), 1.2)]))
        assert det.count == 1
        voxel = self.GRID3.spacing[0]
        assert np.linalg.norm(np.asarray(det.regions[0].center) - [5, 5, 5]) <= voxel

    def test_four_sources_from_true_field_threshold(self):
        from safemap.fields import eval_field, sim3d_field

        grid = make_grid(((0, 10), (0, 10), (0, 10)), (40, 40, 40))
        f = eval_field(sim3d_field(), grid.points)
        bmap = as_map((f > 2.0).astype(np.uint8), grid)
        det = detect_3d(bmap)
        assert det.count == 4
        for src in [(2, 2, 0), (2, 8, 0), (8, 2, 0), (8, 8, 0)]:
            assert det.contains(src)

    def test_min_voxel_floor(self):
        bits = np.zeros(len(self.GRID3), dtype=np.uint8)
        bits[0] = 1  # single voxel speck
        det = detect_3d(as_map(bits, self.GRID3), min_voxels=4)
        assert det.count == 0

    def test_component_count_with_clear_gaps(self):
        balls = [((2, 2, 5), 1.0), ((8, 8, 5), 1.0), ((2, 8, 5), 1.0)]
        det = detect_3d(self.rasterize_balls(balls))
        assert det.count == 3
