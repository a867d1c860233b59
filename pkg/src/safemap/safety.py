"""Confidence scaling and the binary safety map.

A grid point is marked safe (bit 0) when the GP upper confidence bound
plus the Lipschitz fill-distance margin stays at or below the safety
threshold; everything else is bit 1 (potentially unsafe).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .gp import Posterior
from .grids import TestGrid

PI_RULES = {
    # canonical choice with sum(1/pi_t) = 1
    "quadratic": lambda t: (math.pi**2 / 6.0) * t * t,
    "geometric": lambda t: 2.0**t,
}


@dataclass(frozen=True)
class ConfidenceSchedule:
    """Confidence level delta, the pi_t rule, and the Lipschitz constant."""

    delta: float
    pi_rule: str = "quadratic"
    lipschitz: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must be in (0, 1)")
        if self.pi_rule not in PI_RULES:
            raise ValueError(f"unknown pi rule {self.pi_rule!r}; options: {sorted(PI_RULES)}")
        if not self.lipschitz > 0:
            raise ValueError("lipschitz must be > 0")

    def pi(self, t: int) -> float:
        return PI_RULES[self.pi_rule](t)


def beta(schedule: ConfidenceSchedule, M: int, t: int) -> float:
    """Confidence scaling 2 ln(M pi_t / delta) for step t >= 1."""
    if t < 1:
        raise ValueError("t must be >= 1")
    return 2.0 * math.log(M * schedule.pi(t) / schedule.delta)


@dataclass
class BinarySafetyMap:
    """Per-grid-point safety bits at one step (0 safe, 1 unsafe)."""

    grid: TestGrid
    bits: np.ndarray  # uint8, flat over grid.points
    step: int
    beta_value: float
    f_bar: float
    lipschitz_margin: float  # L_f * fill distance

    @property
    def unsafe_count(self) -> int:
        return int(self.bits.sum())


def binary_map(post: Posterior, schedule: ConfidenceSchedule, grid: TestGrid,
               t: int, f_bar: float) -> BinarySafetyMap:
    """Threshold mean + sqrt(beta_t) sigma + L_f h against f_bar.

    ``post`` must be the posterior evaluated at exactly the grid points,
    conditioned on the data available before step t (the t-1 dataset).
    Equality with f_bar counts as safe.
    """
    if len(post.mean) != len(grid) or len(post.variance) != len(grid):
        raise ValueError("posterior arrays must match the grid size")
    b = beta(schedule, len(grid), t)
    margin = schedule.lipschitz * grid.fill_distance
    ucb = post.mean + np.sqrt(b) * np.sqrt(post.variance) + margin
    bits = (ucb > f_bar).astype(np.uint8)
    return BinarySafetyMap(grid=grid, bits=bits, step=t, beta_value=b,
                           f_bar=f_bar, lipschitz_margin=margin)


def safe_subset(points: np.ndarray, post: Posterior, schedule: ConfidenceSchedule,
                grid: TestGrid, t: int, f_bar: float) -> np.ndarray:
    """Indices of the given plan points currently certified safe.

    Implements the time-varying certified subset: each point is looked
    up at its nearest grid point (plan points are grid-aligned by
    construction) and kept when mean + sqrt(beta_t) sigma + L_f h <=
    f_bar under the step-t posterior supplied by the caller.  The
    complement is the caller's relocation queue.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if len(pts) == 0 or pts.size == 0:
        return np.array([], dtype=int)
    b = beta(schedule, len(grid), t)
    margin = schedule.lipschitz * grid.fill_distance
    gi = grid.project_indices(pts)
    ucb = post.mean[gi] + np.sqrt(b) * np.sqrt(post.variance[gi]) + margin
    return np.flatnonzero(ucb <= f_bar)


def map_to_image(bmap: BinarySafetyMap) -> np.ndarray:
    """2D bits as an image array, rows running from max y downward."""
    if bmap.grid.dim != 2:
        raise ValueError("image export requires a 2D grid")
    nx, ny = bmap.grid.shape
    return bmap.bits.reshape(nx, ny).T[::-1, :]


def write_pgm(bmap: BinarySafetyMap, path, sidecar_path=None) -> None:
    """Binary P5 export: 0 = safe (black), 255 = unsafe (white)."""
    img = map_to_image(bmap) * np.uint8(255)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())
    if sidecar_path is not None:
        meta = {
            "t": bmap.step,
            "beta_t": bmap.beta_value,
            "f_bar": bmap.f_bar,
            "lipschitz_margin": bmap.lipschitz_margin,
        }
        with open(sidecar_path, "w") as fh:
            json.dump(meta, fh, sort_keys=True, indent=2)
            fh.write("\n")
