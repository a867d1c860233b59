import json
import math

import numpy as np
import pytest

from safemap.gp import Posterior
from safemap.grids import make_grid
from safemap.safety import (BinarySafetyMap, ConfidenceSchedule, beta, binary_map,
                            map_to_image, safe_subset, write_pgm)

SCHED = ConfidenceSchedule(delta=0.05, pi_rule="quadratic", lipschitz=3.0)


def test_beta_reference_value():
    # 2 ln(10000 * (pi^2/6) / 0.05)
    got = beta(SCHED, 10_000, 1)
    expected = 2.0 * math.log(10_000 * (math.pi**2 / 6.0) / 0.05)
    assert got == pytest.approx(expected, abs=1e-12)
    assert got == pytest.approx(25.41, abs=0.01)


def test_beta_nondecreasing_in_t():
    vals = [beta(SCHED, 10_000, t) for t in range(1, 200)]
    assert all(b <= a for b, a in zip(vals, vals[1:]))


def test_beta_increases_when_delta_halves():
    tighter = ConfidenceSchedule(delta=0.025, lipschitz=3.0)
    for t in (1, 10, 100):
        assert beta(tighter, 500, t) > beta(ConfidenceSchedule(delta=0.05, lipschitz=3.0), 500, t)


def test_beta_requires_t_at_least_one():
    with pytest.raises(ValueError):
        beta(SCHED, 100, 0)


def test_schedule_validation():
    with pytest.raises(ValueError):
        ConfidenceSchedule(delta=0.0, lipschitz=1.0)
    with pytest.raises(ValueError):
        ConfidenceSchedule(delta=0.5, lipschitz=-1.0)
    with pytest.raises(ValueError):
        ConfidenceSchedule(delta=0.5, pi_rule="bogus", lipschitz=1.0)


def _tiny_grid_map(mean, sd, t=1, f_bar=0.7, lipschitz=1.0):
    grid = make_grid(((0, 1), (0, 1)), (2, 2))
    sched = ConfidenceSchedule(delta=0.05, lipschitz=lipschitz)
    post = Posterior(np.full(4, mean), np.full(4, sd**2))
    return binary_map(post, sched, grid, t, f_bar), sched, grid


def test_binary_map_safe_and_unsafe_cases():
    # choose sd so sqrt(beta)*sd equals a round number
    grid = make_grid(((0, 1), (0, 1)), (2, 2))
    sched = ConfidenceSchedule(delta=0.05, lipschitz=1.0)
    b = beta(sched, 4, 3)
    margin = sched.lipschitz * grid.fill_distance

    def bit_for(mu, conf):
        post = Posterior(np.full(4, mu), np.full(4, (conf / math.sqrt(b)) ** 2))
        return binary_map(post, sched, grid, 3, 0.7).bits[0]

    assert bit_for(0.2, 0.1) == (1 if 0.3 + margin > 0.7 else 0)
    assert bit_for(0.65, 0.08) == 1  # 0.73 + margin > 0.7
    # sum exactly f_bar counts as safe
    assert bit_for(0.7 - margin - 0.1, 0.1) == 0


def test_binary_map_equality_is_safe():
    grid = make_grid(((0, 1),), (2,)) if False else make_grid(((0, 1), (0, 1)), (2, 2))
    sched = ConfidenceSchedule(delta=0.05, lipschitz=1.0)
    b = beta(sched, 4, 1)
    margin = sched.lipschitz * grid.fill_distance
    mu = 0.7 - margin - math.sqrt(b) * 0.05
    post = Posterior(np.full(4, mu), np.full(4, 0.05**2))
    assert binary_map(post, sched, grid, 1, 0.7).unsafe_count == 0


def test_binary_map_mismatched_lengths():
    grid = make_grid(((0, 1), (0, 1)), (3, 3))
    with pytest.raises(ValueError):
        binary_map(Posterior(np.zeros(4), np.ones(4)), SCHED, grid, 1, 0.7)


def test_binary_map_pure_replay_stable():
    grid = make_grid(((0, 1), (0, 1)), (5, 5))
    rng = np.random.default_rng(0)
    post = Posterior(rng.uniform(0, 1, 25), rng.uniform(0, 0.2, 25))
    a = binary_map(post, SCHED, grid, 4, 0.7)
    b = binary_map(post, SCHED, grid, 4, 0.7)
    assert np.array_equal(a.bits, b.bits)


def test_safe_subset_full_and_empty():
    grid = make_grid(((0, 1), (0, 1)), (10, 10))
    sched = ConfidenceSchedule(delta=0.05, lipschitz=0.1)
    post = Posterior(np.full(100, 0.01), np.full(100, 1e-6))
    pts = grid.points[[3, 40, 77]]
    idx = safe_subset(pts, post, sched, grid, 5, 0.7)
    assert list(idx) == [0, 1, 2]
    assert len(safe_subset(np.empty((0, 2)), post, sched, grid, 5, 0.7)) == 0


def test_safe_subset_excludes_hot_points():
    grid = make_grid(((0, 1), (0, 1)), (10, 10))
    sched = ConfidenceSchedule(delta=0.05, lipschitz=0.1)
    mean = np.full(100, 0.01)
    hot = grid.project_index((0.8, 0.8))
    mean[hot] = 0.9
    post = Posterior(mean, np.full(100, 1e-6))
    pts = np.array([grid.points[hot], [0.1, 0.1]])
    idx = safe_subset(pts, post, sched, grid, 5, 0.7)
    assert list(idx) == [1]


def test_pgm_export_layout_and_sidecar(tmp_path):
    grid = make_grid(((0, 1), (0, 1)), (3, 3))
    bits = np.zeros(9, dtype=np.uint8)
    # mark the cell at max x, max y unsafe: lattice (2, 2)
    bits[grid.lattice_to_linear((2, 2))] = 1
    bmap = BinarySafetyMap(grid=grid, bits=bits, step=7, beta_value=2.5,
                           f_bar=0.7, lipschitz_margin=0.01)
    img = map_to_image(bmap)
    # image row 0 is max y, column 2 is max x
    assert img[0, 2] == 1 and img.sum() == 1
    pgm = tmp_path / "m.pgm"
    meta = tmp_path / "m.json"
    write_pgm(bmap, pgm, meta)
    raw = pgm.read_bytes()
    assert raw.startswith(b"P5\n3 3\n255\n")
    payload = raw.split(b"255\n", 1)[1]
    assert payload == bytes([0, 0, 255, 0, 0, 0, 0, 0, 0])
    side = json.loads(meta.read_text())
    assert side == {"t": 7, "beta_t": 2.5, "f_bar": 0.7, "lipschitz_margin": 0.01}
