"""Finite test grids: geometry measures and nearest-point projection.

Grid points are stored row-major with axis 0 slowest, so the linear
index of lattice coordinates (i0, i1, ...) is ``ravel_multi_index`` in C
order.  All argmin/argmax tie-breaks in the package resolve to the
lowest linear index under this ordering.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree


@dataclass
class TestGrid:
    """Uniform axis-aligned lattice of test locations."""

    __test__ = False  # not a pytest class, despite the name

    axes: list[np.ndarray]
    bounds: tuple[tuple[float, float], ...]
    points: np.ndarray = field(init=False)
    shape: tuple[int, ...] = field(init=False)
    spacing: np.ndarray = field(init=False)

    def __post_init__(self):
        self.axes = [np.asarray(a, dtype=float) for a in self.axes]
        self.shape = tuple(len(a) for a in self.axes)
        mesh = np.meshgrid(*self.axes, indexing="ij")
        self.points = np.stack([m.ravel() for m in mesh], axis=1)
        self.spacing = np.array([a[1] - a[0] if len(a) > 1 else np.inf for a in self.axes])

    def __len__(self) -> int:
        return len(self.points)

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def separation_radius(self) -> float:
        """Minimum pairwise distance; +inf sentinel for a single point."""
        if len(self) < 2:
            return np.inf
        return float(self.spacing.min())

    @property
    def fill_distance(self) -> float:
        """Worst-case distance from a domain point to the grid.

        For a uniform lattice whose extreme points sit on the domain
        boundary this is half the cell diagonal, attained at cell
        centers (and at box corners when an axis has a single point).
        """
        half = np.empty(self.dim)
        for k, (a, (lo, hi)) in enumerate(zip(self.axes, self.bounds)):
            if len(a) > 1:
                half[k] = (a[1] - a[0]) / 2.0
            else:
                half[k] = max(a[0] - lo, hi - a[0])
        return float(np.sqrt(np.sum(half**2)))

    def lattice_to_linear(self, idx) -> int:
        return int(np.ravel_multi_index(tuple(int(i) for i in idx), self.shape))

    def linear_to_lattice(self, i: int) -> tuple[int, ...]:
        return tuple(int(v) for v in np.unravel_index(int(i), self.shape))

    def project_index(self, x) -> int:
        """Linear index of the nearest grid point (ties -> lowest index)."""
        x = np.asarray(x, dtype=float).ravel()
        idx = []
        for k, a in enumerate(self.axes):
            if len(a) == 1:
                idx.append(0)
                continue
            c = (x[k] - a[0]) / (a[1] - a[0])
            # round halves down so exact midpoints take the lower index
            i = int(np.ceil(c - 0.5))
            idx.append(min(max(i, 0), len(a) - 1))
        return self.lattice_to_linear(idx)

    def project_indices(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.zeros((len(pts), self.dim), dtype=int)
        for k, a in enumerate(self.axes):
            if len(a) == 1:
                continue
            c = (pts[:, k] - a[0]) / (a[1] - a[0])
            out[:, k] = np.clip(np.ceil(c - 0.5).astype(int), 0, len(a) - 1)
        return np.ravel_multi_index(tuple(out.T), self.shape)


def make_grid(bounds, resolution) -> TestGrid:
    """Uniform grid with the given per-axis point counts, spanning bounds."""
    bounds = tuple((float(lo), float(hi)) for lo, hi in bounds)
    resolution = tuple(int(n) for n in resolution)
    if len(resolution) != len(bounds):
        raise ValueError("resolution must list one point count per axis")
    if any(n < 1 for n in resolution):
        raise ValueError("resolution entries must be >= 1")
    axes = [np.linspace(lo, hi, n) for (lo, hi), n in zip(bounds, resolution)]
    return TestGrid(axes=axes, bounds=bounds)


def project(grid: TestGrid, x) -> np.ndarray:
    """Nearest grid point to x (Euclidean, ties by lowest linear index)."""
    return grid.points[grid.project_index(x)].copy()


def grid_geometry(points: np.ndarray, bounds, probe_density: int = 400) -> tuple[float, float]:
    """Approximate fill distance and exact separation radius of a point set.

    The sup in the fill distance is approximated by probing a dense
    ``probe_density``-per-axis lattice over the domain box.  Returns
    (h, q); q is +inf for a single point, and the single-point h is the
    exact max corner distance.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if len(pts) == 0:
        raise ValueError("empty point set")
    bounds = tuple((float(lo), float(hi)) for lo, hi in bounds)
    if len(pts) == 1:
        corners = np.array(np.meshgrid(*[[lo, hi] for lo, hi in bounds], indexing="ij"))
        corners = corners.reshape(len(bounds), -1).T
        h = float(np.max(np.linalg.norm(corners - pts[0], axis=1)))
        return h, np.inf
    tree = cKDTree(pts)
    d, _ = tree.query(pts, k=2)
    q = float(d[:, 1].min())
    probe_axes = [np.linspace(lo, hi, probe_density) for lo, hi in bounds]
    mesh = np.meshgrid(*probe_axes, indexing="ij")
    probes = np.stack([m.ravel() for m in mesh], axis=1)
    h = 0.0
    for chunk in np.array_split(probes, max(1, len(probes) // 200_000)):
        dist, _ = tree.query(chunk, k=1)
        h = max(h, float(dist.max()))
    return h, q
