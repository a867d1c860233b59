"""Ball-shaped unsafe-region extraction from the binary safety map.

2D maps go through a circular Hough transform: boundary cells of the
unsafe region vote in a (cx, cy, r) accumulator, candidate circles are
thresholded local maxima, and overlapping candidates are suppressed.
3D maps use 6-connected component labeling with bounding spheres.  Both
outputs over-approximate their blobs so that treating the balls as
obstacles errs toward safety.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .safety import BinarySafetyMap

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class HoughParams:
    """Accumulator configuration.

    ``accumulator_threshold`` is the accepted fraction of the vote count
    an ideal full circle would produce at each radius.  ``radius_step``
    and ``clamp_band`` default to one grid cell and twice the radius
    range respectively.  Boundary cells up to ``clamp_band`` beyond the
    top radius still vote there (with quadratically tapered weight), so
    blobs wider than ``radius_max`` surface as clamped max-radius
    detections instead of disappearing.  ``min_voxels`` is the 3D
    component size floor.
    """

    radius_min: float
    radius_max: float
    radius_step: float | None = None
    accumulator_threshold: float = 0.5
    edge_method: str = "four-neighbor"
    clamp_band: float | None = None
    min_voxels: int = 4

    def __post_init__(self):
        if not 0 < self.radius_min < self.radius_max:
            raise ValueError("require 0 < radius_min < radius_max")
        if self.radius_step is not None and not self.radius_step > 0:
            raise ValueError("radius_step must be positive")
        if not 0 < self.accumulator_threshold <= 1:
            raise ValueError("accumulator_threshold must be in (0, 1]")
        if self.edge_method != "four-neighbor":
            raise ValueError(f"unknown edge method {self.edge_method!r}")


@dataclass(frozen=True)
class DetectedRegion:
    center: tuple[float, ...]
    radius: float
    weight: float  # accumulator votes (2D) or voxel count (3D)


@dataclass
class DetectedRegionSet:
    """Detected balls whose union over-approximates the unsafe region."""

    regions: list[DetectedRegion]
    step: int = 0

    @classmethod
    def empty(cls, step: int = 0) -> "DetectedRegionSet":
        return cls(regions=[], step=step)

    @property
    def count(self) -> int:
        return len(self.regions)

    def contains(self, x) -> bool:
        """Membership in the union of closed balls."""
        x = np.asarray(x, dtype=float).ravel()
        return any(np.linalg.norm(x - np.asarray(r.center)) <= r.radius for r in self.regions)

    def contains_many(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        mask = np.zeros(len(pts), dtype=bool)
        for r in self.regions:
            d = np.linalg.norm(pts - np.asarray(r.center), axis=1)
            mask |= d <= r.radius
        return mask

    def to_dicts(self) -> list[dict]:
        names = ["cx", "cy", "cz"]
        out = []
        for r in self.regions:
            d = {names[i]: float(c) for i, c in enumerate(r.center)}
            d["r"] = float(r.radius)
            d["weight"] = float(r.weight)
            out.append(d)
        return out


def classify(regions: DetectedRegionSet, x) -> str:
    """'unsafe' when x lies in the detected union, else 'safe'."""
    return "unsafe" if regions.contains(x) else "safe"


def _boundary_cells(bits2d: np.ndarray) -> np.ndarray:
    """Unsafe cells with at least one safe 4-neighbor (off-grid counts safe)."""
    b = bits2d.astype(bool)
    padded = np.pad(b, 1, constant_values=False)
    safe_n = (
        ~padded[:-2, 1:-1] | ~padded[2:, 1:-1] | ~padded[1:-1, :-2] | ~padded[1:-1, 2:]
    )
    return b & safe_n


def _ring_cell_count(radius_cells: float) -> int:
    """Cells within half a cell of the circle: the threshold normalizer.

    Deliberately counts more cells than a rasterized disk boundary can
    supply at small radii, which keeps small-radius acceptance strict.
    """
    r_hi = int(np.ceil(radius_cells + 1))
    rng = np.arange(-r_hi, r_hi + 1)
    dx, dy = np.meshgrid(rng, rng, indexing="ij")
    dist = np.sqrt(dx**2 + dy**2)
    return int(np.sum(np.abs(dist - radius_cells) <= 0.5))


def _ideal_votes(radius_cells: float) -> int:
    """Boundary-cell count of an exact rasterized disk of this radius.

    The vote count a perfect in-range circle actually produces; exact
    disks should score at least ~90% of this.
    """
    r_hi = int(np.ceil(radius_cells)) + 2
    rng = np.arange(-r_hi, r_hi + 1)
    dx, dy = np.meshgrid(rng, rng, indexing="ij")
    disk = dx**2 + dy**2 <= radius_cells**2
    return int(_boundary_cells(disk).sum())


def _inward_normals(bits2d: np.ndarray, cells: np.ndarray, window: int = 7) -> tuple[np.ndarray, np.ndarray]:
    """Unit normals at boundary cells pointing into the unsafe mass.

    Estimated as the local centroid offset of unsafe cells in a window;
    cells whose offset is degenerate (isolated specks) are masked out.
    """
    half = window // 2
    rng = np.arange(-half, half + 1, dtype=float)
    kx = np.repeat(rng[:, None], window, axis=1)
    b = bits2d.astype(float)
    gx = ndimage.correlate(b, kx, mode="constant")
    gy = ndimage.correlate(b, kx.T, mode="constant")
    vx = gx[cells[:, 0], cells[:, 1]]
    vy = gy[cells[:, 0], cells[:, 1]]
    norm = np.sqrt(vx**2 + vy**2)
    ok = norm > 0.25
    normals = np.zeros((len(cells), 2))
    normals[ok, 0] = vx[ok] / norm[ok]
    normals[ok, 1] = vy[ok] / norm[ok]
    return normals, ok


def _ray_vote(acc: np.ndarray, cells: np.ndarray, normals: np.ndarray,
              radius_cells: float, weight: float = 1.0, lateral: int = 0) -> None:
    """Each boundary cell votes along its inward normal.

    ``lateral`` > 0 additionally stamps cells perpendicular to the ray at
    the same weight; long-range (clamped) votes use this to stay
    catchable under normal-estimation error, which grows with range.
    """
    p = cells + radius_cells * normals
    perp = np.stack([-normals[:, 1], normals[:, 0]], axis=1)
    for j in range(-lateral, lateral + 1):
        ij = np.rint(p + j * perp).astype(int)
        ok = (
            (ij[:, 0] >= 0) & (ij[:, 0] < acc.shape[0])
            & (ij[:, 1] >= 0) & (ij[:, 1] < acc.shape[1])
        )
        np.add.at(acc, (ij[ok, 0], ij[ok, 1]), weight)


def detect_2d(bmap: BinarySafetyMap, params: HoughParams) -> DetectedRegionSet:
    """Circular Hough transform over the unsafe-region boundary.

    Gradient-directed voting: every boundary cell casts one vote per
    radius slice at the point that far along its inward normal, so only
    curvature-consistent arcs accumulate (straight edges and bridges
    between blobs stay below threshold).  Slices are box-summed before
    peak finding to absorb normal-estimation noise.  A candidate must be
    a local maximum of its slice, collect at least
    ``accumulator_threshold`` of an ideal circle's votes, and sit on an
    unsafe cell (a ball meant to cover unsafe area cannot be centered on
    certified-safe ground).  Accepted candidates suppress later ones
    whose centers they contain.  Output radii carry a half-cell
    rasterization correction and are clipped to the configured range.
    """
    grid = bmap.grid
    if grid.dim != 2:
        raise ValueError("detect_2d requires a 2D grid")
    sx, sy = grid.spacing
    if not np.isclose(sx, sy, rtol=1e-6):
        raise ValueError("detect_2d requires square grid cells")
    cell = float(sx)

    bits = bmap.bits.reshape(grid.shape)
    boundary = _boundary_cells(bits)
    cells = np.argwhere(boundary)
    if len(cells) == 0:
        return DetectedRegionSet.empty(step=bmap.step)
    normals, ok_n = _inward_normals(bits, cells, window=9)
    cells = cells[ok_n]
    normals = normals[ok_n]
    if len(cells) == 0:
        return DetectedRegionSet.empty(step=bmap.step)

    step_c = (params.radius_step or cell) / cell
    r_lo = params.radius_min / cell
    r_hi = params.radius_max / cell
    radii_cells = np.arange(r_lo, r_hi + 1e-9, step_c)
    if len(radii_cells) == 0 or radii_cells[-1] < r_hi - 1e-9:
        radii_cells = np.append(radii_cells, r_hi)
    band_c = (params.clamp_band if params.clamp_band is not None
              else 3.0 * (params.radius_max - params.radius_min)) / cell
    box = np.ones((5, 5))

    candidates = []  # (votes, slice k, ix, iy)
    raw_slices = []
    top = len(radii_cells) - 1
    for k, rc in enumerate(radii_cells):
        acc = np.zeros(grid.shape, dtype=np.float64)
        _ray_vote(acc, cells, normals, rc)
        if k == top and band_c > 0:
            # oversize blobs: boundary beyond the top radius still votes
            # there with tapered weight, so they surface as clamped
            # max-radius circles instead of disappearing; the 1/5 factor
            # compensates the box filter pooling ~5 consecutive ray
            # endpoints radially, keeping one effective vote per cell
            # weight 1/25 keeps one effective vote per boundary cell: the
            # 5x5 box sum pools ~5 radial ray steps x ~5 lateral stamps
            extra = np.arange(1.0, band_c + 1e-9, 1.0)
            for e in extra:
                w = (1.0 - (e / band_c) ** 2) / 25.0
                _ray_vote(acc, cells, normals, rc + e, weight=w, lateral=4)
        raw_slices.append(acc.copy())
        acc = ndimage.correlate(acc, box, mode="constant")
        ideal = _ring_cell_count(rc)
        need = params.accumulator_threshold * ideal
        local_max = acc == ndimage.maximum_filter(acc, size=3, mode="constant")
        ok = local_max & (acc >= need) & (acc > 0) & bits.astype(bool)
        for ix, iy in np.argwhere(ok):
            candidates.append((float(acc[ix, iy]), k, int(ix), int(iy)))
    # sub-cell peak refinement from the unsmoothed accumulator: the
    # center is the vote centroid in a small window around the peak, the
    # radius the vote-weighted mean slice radius at that center
    raw = np.array(raw_slices)
    raw_total = raw.sum(axis=0)
    raw_local = np.array([ndimage.correlate(s, np.ones((3, 3)), mode="constant") for s in raw])
    nx, ny = grid.shape

    def _refine(ix: int, iy: int, k: int) -> tuple[float, float, float]:
        """(cx_cells, cy_cells, r_cells) around accumulator peak (ix, iy)."""
        x0, x1 = max(ix - 2, 0), min(ix + 3, nx)
        y0, y1 = max(iy - 2, 0), min(iy + 3, ny)
        win = raw_total[x0:x1, y0:y1]
        total = win.sum()
        if total <= 0:
            return float(ix), float(iy), float(radii_cells[k])
        gx, gy = np.meshgrid(np.arange(x0, x1), np.arange(y0, y1), indexing="ij")
        cx = float((win * gx).sum() / total)
        cy = float((win * gy).sum() / total)
        col = raw_local[:, int(round(cx)), int(round(cy))]
        r_cells = float(np.sum(col * radii_cells) / col.sum()) if col.sum() > 0 else float(radii_cells[k])
        return cx, cy, r_cells

    candidates.sort(key=lambda c: (-c[0], c[1], c[2] * grid.shape[1] + c[3]))
    origin = np.array([a[0] for a in grid.axes])
    accepted: list[DetectedRegion] = []
    for votes, k, ix, iy in candidates:
        peak = grid.points[grid.lattice_to_linear((ix, iy))]
        if any(np.linalg.norm(peak - np.asarray(r.center)) <= r.radius for r in accepted):
            continue
        cx, cy, r_cells = _refine(ix, iy, k)
        center = origin + np.array([cx, cy]) * cell
        radius = float(np.clip((r_cells + 0.5) * cell, params.radius_min, params.radius_max))
        if k == top:
            log.debug("detection at max radius %.4g (possible oversize blob), center %s",
                      radius, tuple(center))
        accepted.append(DetectedRegion(center=tuple(float(c) for c in center),
                                       radius=radius, weight=votes))
    return DetectedRegionSet(regions=accepted, step=bmap.step)


def detect_3d(bmap: BinarySafetyMap, radius_min: float | None = None,
              radius_max: float | None = None, min_voxels: int = 4) -> DetectedRegionSet:
    """Bounding spheres of 6-connected unsafe voxel components.

    Per component the center is the voxel centroid and the radius is the
    max voxel distance from it plus half the voxel diagonal, so the
    sphere covers every voxel cell entirely.  Components smaller than
    ``min_voxels`` voxels (or ``radius_min``) are dropped; components
    wider than ``radius_max`` are kept and logged.
    """
    grid = bmap.grid
    if grid.dim != 3:
        raise ValueError("detect_3d requires a 3D grid")
    bits = bmap.bits.reshape(grid.shape).astype(bool)
    labels, n = ndimage.label(bits)  # default structure = face connectivity
    half_diag = 0.5 * float(np.linalg.norm(grid.spacing))
    regions = []
    for lab in range(1, n + 1):
        idx = np.flatnonzero(labels.ravel() == lab)
        if len(idx) < min_voxels:
            continue
        pts = grid.points[idx]
        centroid = pts.mean(axis=0)
        radius = float(np.max(np.linalg.norm(pts - centroid, axis=1))) + half_diag
        if radius_min is not None and radius < radius_min:
            continue
        if radius_max is not None and radius > radius_max:
            log.debug("component radius %.4g exceeds radius_max %.4g; kept", radius, radius_max)
        regions.append(DetectedRegion(center=tuple(float(c) for c in centroid),
                                      radius=radius, weight=len(idx)))
    regions.sort(key=lambda r: -r.weight)
    return DetectedRegionSet(regions=regions, step=bmap.step)
