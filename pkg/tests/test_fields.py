import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from safemap.fields import (DomainError, FieldSource, FieldSpec, MeasurementModel,
                            SafetyThreshold, eval_field, lipschitz_estimate, measure,
                            sim2d_field, sim3d_field, true_safety)
from safemap.grids import make_grid


def test_eval_2d_preset_at_source_center():
    # direct evaluation: 1 + exp(-(0.5^2 + 0.5^2)/0.08)
    expected = 1.0 + math.exp(-6.25)
    assert eval_field(sim2d_field(), (0.25, 0.75)) == pytest.approx(expected, abs=1e-12)


def test_eval_2d_preset_at_saddle():
    # both terms equal by symmetry: 2*exp(-2*(0.25^2)/0.08)
    expected = 2.0 * math.exp(-1.5625)
    assert eval_field(sim2d_field(), (0.5, 0.5)) == pytest.approx(expected, abs=1e-12)


def test_eval_3d_preset_at_first_source():
    spec = sim3d_field()
    d12 = 6.0
    d14 = math.sqrt(72.0)
    expected = 40.0 + 2 * 20.0 * math.exp(-1.7 * d12) + 40.0 * math.exp(-1.7 * d14)
    v = eval_field(spec, (2.0, 2.0, 0.0))
    assert v == pytest.approx(expected, rel=1e-12)
    assert v == pytest.approx(40.0015, abs=1e-3)


def test_eval_out_of_domain_raises():
    with pytest.raises(DomainError):
        eval_field(sim2d_field(), (1.5, 0.5))


def test_eval_vectorized_matches_scalar():
    spec = sim2d_field()
    pts = np.array([[0.1, 0.2], [0.9, 0.9], [0.25, 0.75]])
    vec = eval_field(spec, pts)
    for p, v in zip(pts, vec):
        assert eval_field(spec, p) == pytest.approx(v, abs=1e-15)


@given(st.lists(st.tuples(st.floats(0.1, 0.9), st.floats(0.1, 0.9),
                          st.floats(0.1, 2.0), st.floats(0.01, 0.5)),
                min_size=1, max_size=4))
@settings(max_examples=30, deadline=None)
def test_eval_permutation_invariant_over_sources(raw):
    sources = tuple(FieldSource(center=(x, y), amplitude=a, scale=s) for x, y, a, s in raw)
    spec = FieldSpec(dimension=2, form="gaussian-bump", sources=sources,
                     bounds=((0, 1), (0, 1)))
    spec_rev = FieldSpec(dimension=2, form="gaussian-bump", sources=sources[::-1],
                         bounds=((0, 1), (0, 1)))
    x = (0.42, 0.58)
    assert eval_field(spec, x) == pytest.approx(eval_field(spec_rev, x), rel=1e-12)


def test_2d_preset_symmetry_under_coordinate_swap():
    spec = sim2d_field()
    rng = np.random.default_rng(3)
    for _ in range(20):
        a, b = rng.uniform(0, 1, 2)
        assert eval_field(spec, (a, b)) == pytest.approx(eval_field(spec, (b, a)), rel=1e-12)


def test_measure_zero_noise_equals_field():
    spec = sim2d_field()
    model = MeasurementModel(noise_std=0.0, rng_seed=7)
    x = (0.3, 0.4)
    assert measure(spec, model, x) == eval_field(spec, x)


def test_measure_replay_determinism():
    spec = sim2d_field()
    xs = np.random.default_rng(0).uniform(0.05, 0.95, size=(50, 2))

    def stream():
        model = MeasurementModel(noise_std=0.05, rng_seed=123)
        return [measure(spec, model, x) for x in xs]

    assert stream() == stream()


def test_measure_noise_std_statistics():
    spec = sim2d_field()
    model = MeasurementModel(noise_std=0.2, rng_seed=11)
    x = (0.5, 0.5)
    draws = np.array([measure(spec, model, x) for _ in range(10_000)])
    assert abs(draws.std() - 0.2) / 0.2 < 0.05


def test_true_safety_partition_and_boundary():
    spec = sim2d_field()
    thr = SafetyThreshold(f_bar=0.7)
    assert true_safety(spec, thr, (0.25, 0.75)) == "unsafe"
    assert true_safety(spec, thr, (0.5, 0.5)) == "safe"
    # equality counts as safe
    v = eval_field(spec, (0.4, 0.4))
    thr_eq = SafetyThreshold(f_bar=v)
    assert true_safety(spec, thr_eq, (0.4, 0.4)) == "safe"


def test_true_safety_partitions_grid():
    spec = sim2d_field()
    thr = SafetyThreshold(f_bar=0.7)
    grid = make_grid(spec.bounds, (25, 25))
    labels = {true_safety(spec, thr, p) for p in grid.points}
    assert labels <= {"safe", "unsafe"}
    n_unsafe = sum(true_safety(spec, thr, p) == "unsafe" for p in grid.points)
    n_safe = sum(true_safety(spec, thr, p) == "safe" for p in grid.points)
    assert n_safe + n_unsafe == len(grid)


def test_threshold_out_of_range_rejected():
    spec = sim2d_field()
    grid = make_grid(spec.bounds, (30, 30))
    with pytest.raises(ValueError):
        SafetyThreshold(f_bar=5.0).check_on_grid(spec, grid.points)
    with pytest.raises(ValueError):
        SafetyThreshold(f_bar=-1.0).check_on_grid(spec, grid.points)


def test_lipschitz_estimate_2d_preset():
    # analytic max gradient of a single bump: sqrt(2/(0.08*e)) at d = 0.2
    spec = sim2d_field()
    grid = make_grid(spec.bounds, (100, 100))
    lf = lipschitz_estimate(spec, grid.axes)
    assert lf == pytest.approx(3.0326, abs=0.02)


def test_field_spec_validation():
    with pytest.raises(ValueError):
        FieldSpec(dimension=2, form="gaussian-bump",
                  sources=(FieldSource((0.5, 0.5, 0.5), 1.0, 0.1),),
                  bounds=((0, 1), (0, 1)))
    with pytest.raises(ValueError):
        FieldSpec(dimension=2, form="gaussian-bump",
                  sources=(FieldSource((0.5, 0.5), 1.0, -0.1),),
                  bounds=((0, 1), (0, 1)))
    with pytest.raises(ValueError):
        FieldSpec(dimension=2, form="gaussian-bump",
                  sources=(FieldSource((0.5, 0.5), 1.0, 0.1),),
                  bounds=((0, 1), (1, 1)))
