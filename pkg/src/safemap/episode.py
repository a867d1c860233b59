"""Measurement-loop orchestration.

Runs the full mapping episode: offline variance-greedy plan, then per
step measure, update the GP, rebuild the binary safety map, re-detect
unsafe balls, relocate endangered future points to the nearest
estimated-safe grid point, reinstate previously blocked originals that
became safe again, and move to the next point on an RRT* path.

An alternate loop ("safe-mvs" mode) drops the fixed plan and instead
samples the highest-variance grid point inside the current estimated
safe set each step; it exists for convergence diagnostics.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .detection import DetectedRegionSet, HoughParams, detect_2d, detect_3d
from .fields import MeasurementModel, SafetyThreshold, lipschitz_estimate, measure, true_safety
from .gp import GpModel, KernelParams, Posterior
from .grids import TestGrid, make_grid
from .planning import (PLANNED, REINSTATED, RELOCATED, VISITED, MeasurementPlan,
                       mvs_select, nn_order)
from .rrt import Path, PlanTimeout
from .rrt import plan as rrt_plan
from .safety import BinarySafetyMap, ConfidenceSchedule, binary_map, safe_subset
from .seeding import RRT_LEG, rng_stream

log = logging.getLogger(__name__)


class EpisodeAbort(RuntimeError):
    """Episode cannot continue; carries the step and any partial result."""

    def __init__(self, reason: str, step: int | None = None, partial=None):
        super().__init__(reason if step is None else f"step {step}: {reason}")
        self.reason = reason
        self.step = step
        self.partial = partial


@dataclass
class StepLog:
    t: int
    x: list[float]
    y: float
    beta_map: float
    regions: list[dict]
    relocations: list[dict]
    reinstated: list[dict]
    dropped: list[dict]
    path_len: float
    map_unsafe: int
    n_future: int
    n_future_certified: int
    future_unsafe_after: int
    truly_unsafe_visit: bool
    deferred: list[int] = field(default_factory=list)  # origin indices

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "x_t": self.x,
            "y_t": self.y,
            "beta_t": self.beta_map,
            "regions": self.regions,
            "relocations": self.relocations,
            "reinstated": self.reinstated,
            "dropped": self.dropped,
            "deferred": self.deferred,
            "path_len": self.path_len,
            "map_unsafe": self.map_unsafe,
            "n_future": self.n_future,
            "n_future_certified": self.n_future_certified,
            "future_unsafe_after": self.future_unsafe_after,
            "truly_unsafe_visit": self.truly_unsafe_visit,
        }


@dataclass
class Snapshots:
    """Grid posterior (mean, std) after k measurements, for selected k."""

    steps: np.ndarray  # (n,)
    mean: np.ndarray  # (n, M)
    std: np.ndarray  # (n, M)


@dataclass
class EpisodeResult:
    grid: TestGrid
    schedule: ConfidenceSchedule
    kernel: KernelParams
    f_bar: float
    seed: int
    mode: str
    lipschitz_margin: float
    mvs_points: np.ndarray
    plan: MeasurementPlan | None
    executed: np.ndarray
    values: np.ndarray
    trajectory: list[Path]
    logs: list[StepLog]
    snapshots: Snapshots | None
    final_regions: DetectedRegionSet
    final_map: BinarySafetyMap | None
    final_posterior: Posterior
    blocked_pool: list[dict] = field(default_factory=list)
    maps: list[tuple[int, BinarySafetyMap]] = field(default_factory=list)


def relocate(point, regions: DetectedRegionSet, grid: TestGrid, taken_points,
             clearance: float = 0.0,
             _safe_mask: np.ndarray | None = None) -> tuple[np.ndarray, int]:
    """Nearest estimated-safe grid point replacing an endangered point.

    ``taken_points`` are coordinates already claimed by the plan (visited
    or future); they are excluded so the budget is not spent twice at one
    location.  ``clearance`` pads the detected balls so the target stays
    reachable by a path planner that inflates obstacles.  Ties resolve to
    the lowest grid index.  Raises ValueError when the point is not
    actually inside the detected unsafe union and EpisodeAbort when no
    estimated-safe grid point remains.
    """
    point = np.asarray(point, dtype=float).ravel()
    if not regions.contains(point):
        raise ValueError("relocate called on a point outside the detected unsafe union")
    mask = _safe_mask if _safe_mask is not None else _clear_mask(regions, grid, clearance)
    mask = mask.copy()
    taken = np.atleast_2d(np.asarray(taken_points, dtype=float))
    if taken.size:
        mask[grid.project_indices(taken)] = False
    if not mask.any():
        raise EpisodeAbort("entire grid estimated unsafe")
    d2 = np.sum((grid.points - point) ** 2, axis=1)
    d2[~mask] = np.inf
    idx = int(np.argmin(d2))
    return grid.points[idx].copy(), idx


def _clear_mask(regions: DetectedRegionSet, grid: TestGrid, clearance: float) -> np.ndarray:
    """Grid points outside every detected ball padded by ``clearance``."""
    mask = np.ones(len(grid), dtype=bool)
    for r in regions.regions:
        d = np.linalg.norm(grid.points - np.asarray(r.center), axis=1)
        mask &= d > r.radius + clearance
    return mask


def _reachable_mask(clear: np.ndarray, grid: TestGrid, pos: np.ndarray,
                    escape_scale: float = 0.0) -> np.ndarray:
    """Clear grid cells connected (face adjacency) to the robot position.

    Detected balls can seal off pockets of geometrically clear cells; a
    plan point inside such a pocket has no collision-free path to it, so
    the episode treats unreachable like unsafe and relocates.  When the
    position cell itself is not clear (a fresh ball grew over it), the
    robot is assumed to escape to the largest free component within
    ``escape_scale`` of the nearest one; a sealed one-cell pocket right
    next to the position must not masquerade as its whole world.
    """
    if clear.all():
        return clear
    labels, n = ndimage.label(clear.reshape(grid.shape))
    flat = labels.ravel()
    pos_idx = grid.project_index(pos)
    if clear[pos_idx]:
        comp = flat[pos_idx]
    else:
        d2 = np.sum((grid.points - pos) ** 2, axis=1)
        if not clear.any():
            return np.zeros_like(clear)
        dmin = np.full(n + 1, np.inf)
        size = np.bincount(flat, minlength=n + 1)
        for c in range(1, n + 1):
            sel = flat == c
            dmin[c] = float(np.sqrt(d2[sel].min()))
        near = float(np.nanmin(dmin[1:]))
        candidates = [c for c in range(1, n + 1) if dmin[c] <= near + escape_scale]
        comp = max(candidates, key=lambda c: (size[c], -dmin[c]))
    return (flat == comp) & clear


def _detect(bmap: BinarySafetyMap, hough: HoughParams) -> DetectedRegionSet:
    if bmap.grid.dim == 2:
        return detect_2d(bmap, hough)
    return detect_3d(bmap, radius_min=hough.radius_min, radius_max=hough.radius_max,
                     min_voxels=hough.min_voxels)


class _SnapshotStore:
    def __init__(self, stride: int, horizon: int):
        self.stride = stride
        self.horizon = horizon
        self.steps: list[int] = []
        self.mean: list[np.ndarray] = []
        self.std: list[np.ndarray] = []

    def record(self, k: int, post: Posterior) -> None:
        if self.stride <= 0:
            return
        if k % self.stride == 0 or k == self.horizon:
            self.steps.append(k)
            self.mean.append(post.mean.copy())
            self.std.append(np.sqrt(post.variance))

    def build(self) -> Snapshots | None:
        if not self.steps:
            return None
        return Snapshots(steps=np.array(self.steps, dtype=int),
                         mean=np.array(self.mean), std=np.array(self.std))


def _plan_leg(pos, target, regions, rrt_params, bounds, seed, leg_index) -> Path:
    # a ball the robot is already standing in cannot constrain its
    # egress; drop such balls from the obstacle set for this leg only
    pos = np.asarray(pos, dtype=float)
    kept = [r for r in regions.regions
            if np.linalg.norm(pos - np.asarray(r.center)) > r.radius]
    if len(kept) < regions.count:
        log.debug("leg %d: ignoring %d ball(s) covering the current position",
                  leg_index, regions.count - len(kept))
        regions = DetectedRegionSet(regions=kept, step=regions.step)
    try:
        return rrt_plan(pos, target, regions, rrt_params, bounds,
                        rng=rng_stream(seed, RRT_LEG, leg_index, 0))
    except PlanTimeout:
        # one deterministic retry with a larger budget before giving up
        retry = dataclasses.replace(rrt_params, max_iterations=rrt_params.max_iterations * 4)
        log.warning("leg %d: retrying RRT* with %d iterations", leg_index, retry.max_iterations)
        return rrt_plan(pos, target, regions, retry, bounds,
                        rng=rng_stream(seed, RRT_LEG, leg_index, 1))


def run_episode(cfg) -> EpisodeResult:
    """Execute one experiment as configured; see ExperimentConfig.

    Deterministic given the config seed.  Raises EpisodeAbort (with the
    partial result attached) if relocation or path planning becomes
    impossible.
    """
    spec = cfg.field
    grid = make_grid(spec.bounds, cfg.grid_resolution)
    threshold = SafetyThreshold(cfg.f_bar)
    threshold.check_on_grid(spec, grid.points)
    start = np.asarray(cfg.start, dtype=float)
    if true_safety(spec, threshold, start) != "safe":
        raise ValueError("configured start point is not truly safe")
    lf = cfg.lipschitz if cfg.lipschitz is not None else lipschitz_estimate(spec, grid.axes)
    schedule = ConfidenceSchedule(delta=cfg.delta, pi_rule=cfg.pi_rule, lipschitz=lf)
    kparams = KernelParams(alpha=cfg.alpha, length_scale=cfg.length_scale,
                           noise_var=cfg.noise_var if cfg.noise_var is not None else cfg.noise_std**2)
    model = MeasurementModel(noise_std=cfg.noise_std, rng_seed=cfg.seed)
    if cfg.mode == "safe-mvs":
        return _run_safe_mvs(cfg, spec, grid, threshold, schedule, kparams, model, start)
    return _run_finite(cfg, spec, grid, threshold, schedule, kparams, model, start)


def _run_finite(cfg, spec, grid, threshold, schedule, kparams, model, start) -> EpisodeResult:
    T = cfg.budget
    mvs_points = mvs_select(kparams, grid, T, start=start)
    plan = nn_order(mvs_points, start) if T > 0 else MeasurementPlan(entries=[], budget=0, start=start)
    gp = GpModel(kparams)
    gp.attach_grid(grid.points)
    store = _SnapshotStore(cfg.snapshot_every, T)
    store.record(0, gp.grid_posterior())

    regions = DetectedRegionSet.empty(step=0)
    bmap: BinarySafetyMap | None = None
    pos = start.copy()
    blocked: set[int] = set()  # origin indices whose original point is displaced
    trajectory: list[Path] = []
    logs: list[StepLog] = []
    executed: list[np.ndarray] = []
    values: list[float] = []
    maps: list[tuple[int, BinarySafetyMap]] = []

    def partial() -> EpisodeResult:
        return _result(cfg, grid, schedule, kparams, mvs_points, plan, executed, values,
                       trajectory, logs, store, regions, bmap, gp, blocked, maps)

    for t in range(1, T + 1):
        # a target sealed off by fresh detections is deferred to the back
        # of the plan and retried once the estimate has evolved
        deferred: list[int] = []
        leg = None
        for _attempt in range(T - t + 1):
            slot = plan.entries[t - 1]
            target = slot.point
            try:
                leg = _plan_leg(pos, target, regions, cfg.rrt, spec.bounds, cfg.seed, t - 1)
                break
            except (PlanTimeout, ValueError) as exc:
                if t < T:
                    log.warning("step %d: target %s unreachable (%s); deferring",
                                t, tuple(target), exc)
                    deferred.append(slot.origin_index)
                    plan.entries.append(plan.entries.pop(t - 1))
                else:
                    raise EpisodeAbort(f"path planning failed: {exc}", step=t,
                                       partial=partial()) from exc
        if leg is None:
            raise EpisodeAbort("no reachable target remains in the plan", step=t,
                               partial=partial())
        trajectory.append(leg)
        pos = target.copy()

        y = measure(spec, model, target)
        gp.add(target, y)
        slot.status = VISITED
        executed.append(target.copy())
        values.append(y)

        post = gp.grid_posterior()
        store.record(t, post)
        bmap = binary_map(post, schedule, grid, t + 1, cfg.f_bar)
        maps.append((t, bmap))
        regions = _detect(bmap, cfg.hough)

        taken = {grid.project_index(e.point) for e in plan.entries}
        clear = _clear_mask(regions, grid, cfg.rrt.resolution)
        escape = 2.0 * max((r.radius for r in regions.regions), default=0.0)
        reachable = _reachable_mask(clear, grid, pos, escape_scale=escape)
        relocations = []
        relocated_now: list[int] = []
        try:
            for k in range(t, T):
                e = plan.entries[k]
                inside = regions.contains(e.point)
                if not inside and reachable[grid.project_index(e.point)]:
                    continue
                if e.status in (PLANNED, REINSTATED):
                    blocked.add(e.origin_index)
                old = e.point.copy()
                taken.discard(grid.project_index(old))
                mask = reachable.copy()
                if taken:
                    mask[list(taken)] = False
                if not mask.any():
                    if not reachable.any():
                        raise EpisodeAbort("entire grid estimated unsafe")
                    # every reachable cell is claimed; fall back to
                    # duplicating a plan point rather than aborting
                    log.warning("step %d: relocation target pool exhausted; duplicating", t)
                    mask = reachable.copy()
                d2 = np.sum((grid.points - old) ** 2, axis=1)
                d2[~mask] = np.inf
                gi = int(np.argmin(d2))
                new_pt = grid.points[gi].copy()
                taken.add(gi)
                e.point = new_pt
                e.status = RELOCATED
                relocated_now.append(e.origin_index)
                relocations.append({"slot": k, "origin": e.origin_index,
                                    "from": old.tolist(), "to": new_pt.tolist(),
                                    "cause": "unsafe" if inside else "unreachable"})
        except EpisodeAbort as exc:
            raise EpisodeAbort(exc.reason, step=t, partial=partial()) from exc
        if relocated_now:
            # substitutes move to the front of the future plan: they hug
            # the ball boundary, so measuring them right away erodes
            # false-positive detections while the blocked originals are
            # still reinstatable
            moved = set(relocated_now)
            future = plan.entries[t:]
            plan.entries[t:] = ([e for e in future if e.origin_index in moved]
                                + [e for e in future if e.origin_index not in moved])

        reinstated, dropped = [], []
        slot_of = {e.origin_index: k for k, e in enumerate(plan.entries)}
        for origin in sorted(blocked):
            k = slot_of[origin]
            e = plan.entries[k]
            original = e.original_point
            if e.status == VISITED:
                # the substitute consumed the budget slot for good
                dropped.append({"slot": k, "origin": origin, "point": original.tolist()})
                blocked.discard(origin)
                continue
            gi = grid.project_index(original)
            if regions.contains(original) or not reachable[gi]:
                continue
            if gi in taken:
                continue
            taken.discard(grid.project_index(e.point))
            taken.add(gi)
            e.point = original.copy()
            e.status = REINSTATED
            blocked.discard(origin)
            reinstated.append({"slot": k, "origin": origin, "point": original.tolist()})

        future = plan.future_points(t)
        future_unsafe = int(regions.contains_many(future).sum()) if len(future) else 0
        certified = safe_subset(future, post, schedule, grid, t, cfg.f_bar) if len(future) else np.array([])
        logs.append(StepLog(
            t=t, x=[float(c) for c in target], y=float(y), beta_map=bmap.beta_value,
            regions=regions.to_dicts(), relocations=relocations, reinstated=reinstated,
            dropped=dropped, deferred=deferred, path_len=float(leg.length),
            map_unsafe=bmap.unsafe_count,
            n_future=len(future), n_future_certified=int(len(certified)),
            future_unsafe_after=future_unsafe,
            truly_unsafe_visit=true_safety(spec, threshold, target) == "unsafe",
        ))

    return _result(cfg, grid, schedule, kparams, mvs_points, plan, executed, values,
                   trajectory, logs, store, regions, bmap, gp, blocked, maps)


def _run_safe_mvs(cfg, spec, grid, threshold, schedule, kparams, model, start) -> EpisodeResult:
    """Infinite-budget style loop: sample max variance on the estimated safe set.

    No fixed plan and no path planning; each step picks the
    highest-variance grid point outside the detected balls (resampling
    allowed), starting at the grid point nearest the asserted-safe start.
    """
    T = cfg.budget
    gp = GpModel(kparams)
    gp.attach_grid(grid.points)
    store = _SnapshotStore(cfg.snapshot_every, T)
    store.record(0, gp.grid_posterior())
    regions = DetectedRegionSet.empty(step=0)
    bmap: BinarySafetyMap | None = None
    logs: list[StepLog] = []
    executed: list[np.ndarray] = []
    values: list[float] = []
    maps: list[tuple[int, BinarySafetyMap]] = []

    for t in range(1, T + 1):
        if t == 1:
            idx = grid.project_index(start)
        else:
            var = gp.grid_posterior().variance.copy()
            if regions.count:
                var[regions.contains_many(grid.points)] = -np.inf
            if not np.isfinite(var.max()):
                raise EpisodeAbort("entire grid estimated unsafe", step=t)
            idx = int(np.argmax(var))
        x = grid.points[idx]
        y = measure(spec, model, x)
        gp.add(x, y)
        executed.append(x.copy())
        values.append(y)
        post = gp.grid_posterior()
        store.record(t, post)
        bmap = binary_map(post, schedule, grid, t + 1, cfg.f_bar)
        maps.append((t, bmap))
        regions = _detect(bmap, cfg.hough)
        logs.append(StepLog(
            t=t, x=[float(c) for c in x], y=float(y), beta_map=bmap.beta_value,
            regions=regions.to_dicts(), relocations=[], reinstated=[], dropped=[],
            path_len=0.0, map_unsafe=bmap.unsafe_count, n_future=0,
            n_future_certified=0, future_unsafe_after=0,
            truly_unsafe_visit=true_safety(spec, threshold, x) == "unsafe",
        ))

    return _result(cfg, grid, schedule, kparams, np.array(executed), None, executed,
                   values, [], logs, store, regions, bmap, gp, set(), maps)


def _result(cfg, grid, schedule, kparams, mvs_points, plan, executed, values,
            trajectory, logs, store, regions, bmap, gp, blocked, maps) -> EpisodeResult:
    dim = grid.dim
    return EpisodeResult(
        grid=grid, schedule=schedule, kernel=kparams, f_bar=cfg.f_bar, seed=cfg.seed,
        mode=cfg.mode, lipschitz_margin=schedule.lipschitz * grid.fill_distance,
        mvs_points=np.asarray(mvs_points).reshape(-1, dim),
        plan=plan,
        executed=np.array(executed).reshape(-1, dim),
        values=np.array(values, dtype=float),
        trajectory=trajectory, logs=logs, snapshots=store.build(),
        final_regions=regions, final_map=bmap, final_posterior=gp.grid_posterior(),
        blocked_pool=[{"origin": o, "point": next(
            e.original_point.tolist() for e in plan.entries if e.origin_index == o)}
            for o in sorted(blocked)] if plan is not None else [],
        maps=maps,
    )
