"""Offline selection and ordering of measurement locations.

Selection is maximum-variance sampling over the test grid; ordering is a
nearest-neighbor tour from the robot's start position.  Selection never
touches measurement values, so the whole plan can be computed before the
robot moves.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .gp import GpModel, KernelParams, mutual_information
from .grids import TestGrid

PLANNED = "planned"
VISITED = "visited"
RELOCATED = "relocated"
BLOCKED = "blocked"
REINSTATED = "reinstated"

STATUSES = (PLANNED, VISITED, RELOCATED, BLOCKED, REINSTATED)


@dataclass
class PlanEntry:
    point: np.ndarray
    origin_index: int  # index into the unordered selection set
    original_point: np.ndarray
    status: str = PLANNED


@dataclass
class MeasurementPlan:
    """Ordered measurement sequence with per-point provenance."""

    entries: list[PlanEntry]
    budget: int
    start: np.ndarray | None = field(default=None)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def points(self) -> np.ndarray:
        if not self.entries:
            return np.empty((0, 0))
        return np.array([e.point for e in self.entries])

    def future_points(self, t: int) -> np.ndarray:
        """Coordinates of entries not yet visited after step t (0-based slots t..)."""
        if t >= len(self.entries):
            return np.empty((0, self.points.shape[1] if self.entries else 0))
        return np.array([e.point for e in self.entries[t:]])


def _variance_tracker(params: KernelParams, grid: TestGrid) -> GpModel:
    # conditioning values are irrelevant to the variance, so zeros are used;
    # the mean output of this tracker is never consumed
    gp = GpModel(params)
    gp.attach_grid(grid.points)
    return gp


def mvs_select(params: KernelParams, grid: TestGrid, budget: int,
               start=None, seed_points=None) -> np.ndarray:
    """Greedy maximum-variance selection of ``budget`` grid points.

    Each pick is the argmax of the current posterior variance over the
    not-yet-chosen grid points (ties -> lowest linear index), after
    conditioning on all previous picks.  ``seed_points`` are conditioned
    on without being part of the returned set.  ``start`` is accepted for
    symmetry with the tour ordering but does not influence selection:
    posterior variance is independent of the robot position.
    """
    if budget < 0:
        raise ValueError("budget must be >= 0")
    if budget > len(grid):
        raise ValueError(f"budget {budget} exceeds grid size {len(grid)}")
    gp = _variance_tracker(params, grid)
    if seed_points is not None:
        for p in np.atleast_2d(np.asarray(seed_points, dtype=float)):
            gp.add(p, 0.0)
    chosen = np.zeros(len(grid), dtype=bool)
    picks = []
    for _ in range(budget):
        var = gp.grid_posterior().variance
        var[chosen] = -np.inf
        idx = int(np.argmax(var))
        picks.append(idx)
        chosen[idx] = True
        gp.add(grid.points[idx], 0.0)
    return grid.points[picks].copy()


def greedy_info_gain(params: KernelParams, grid: TestGrid, budget: int) -> tuple[np.ndarray, float]:
    """Greedy mutual-information maximization and the gain it achieves.

    The per-candidate gain of adding x to the chosen set is the closed
    form 0.5*ln(1 + var(x)/noise_var), so the greedy argmax coincides
    with the maximum-variance pick under the same tie-breaking.  Returns
    (selected points, total mutual information in nats).
    """
    if budget < 0:
        raise ValueError("budget must be >= 0")
    if budget > len(grid):
        raise ValueError(f"budget {budget} exceeds grid size {len(grid)}")
    gp = _variance_tracker(params, grid)
    chosen = np.zeros(len(grid), dtype=bool)
    picks = []
    for _ in range(budget):
        var = gp.grid_posterior().variance
        gain = 0.5 * np.log1p(var / params.noise_var)
        gain[chosen] = -np.inf
        idx = int(np.argmax(gain))
        picks.append(idx)
        chosen[idx] = True
        gp.add(grid.points[idx], 0.0)
    pts = grid.points[picks].copy()
    return pts, mutual_information(params, pts)


def nn_order(points: np.ndarray, start) -> MeasurementPlan:
    """Nearest-neighbor tour over the points, beginning nearest to start.

    Euclidean metric; distance ties go to the lowest index in the input
    set.  Every input point appears exactly once.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if len(pts) == 0 or pts.size == 0:
        raise ValueError("no points to order")
    start = np.asarray(start, dtype=float).ravel()
    remaining = list(range(len(pts)))
    order = []
    current = start
    while remaining:
        d = np.linalg.norm(pts[remaining] - current, axis=1)
        j = int(np.argmin(d))
        idx = remaining.pop(j)
        order.append(idx)
        current = pts[idx]
    entries = [
        PlanEntry(point=pts[i].copy(), origin_index=i, original_point=pts[i].copy())
        for i in order
    ]
    return MeasurementPlan(entries=entries, budget=len(pts), start=start.copy())


def write_plan_csv(plan: MeasurementPlan, path) -> None:
    dim = plan.points.shape[1] if len(plan) else 2
    coord_cols = ["x", "y", "z"][:dim]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", *coord_cols, "status", "origin_index"])
        for i, e in enumerate(plan.entries):
            writer.writerow([i, *[repr(float(c)) for c in e.point], e.status, e.origin_index])


def read_plan_points(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    ncoord = sum(1 for c in header if c in ("x", "y", "z"))
    return np.array([[float(v) for v in row[1 : 1 + ncoord]] for row in rows[1:]])
