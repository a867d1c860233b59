"""RRT* path planning with ball obstacles.

Plans a collision-free path between consecutive measurement locations,
treating the currently detected unsafe balls as obstacles.  Standard
RRT*: sample, extend the nearest node by at most one step, connect to
the cheapest collision-free parent in the shrinking rewire ball, then
rewire neighbors through the new node.  Nearest-neighbor queries use an
exact grid-bucket spatial hash.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .detection import DetectedRegionSet
from .seeding import rng_stream

log = logging.getLogger(__name__)


class PlanTimeout(RuntimeError):
    """No path found within the iteration budget."""

    def __init__(self, msg: str, nodes: int, best_goal_distance: float):
        super().__init__(msg)
        self.nodes = nodes
        self.best_goal_distance = best_goal_distance


@dataclass(frozen=True)
class PlannerParams:
    step_size: float = 0.05
    rewire_radius_gamma: float | None = None  # None -> auto from domain volume
    max_iterations: int = 5000
    goal_bias: float = 0.05
    goal_tolerance: float | None = None  # None -> step_size
    collision_resolution: float | None = None  # None -> step_size / 5
    seed: int = 0

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError("step_size must be > 0")
        if not 0.0 <= self.goal_bias < 1.0:
            raise ValueError("goal_bias must be in [0, 1)")
        res = self.collision_resolution
        if res is not None and res > self.step_size:
            raise ValueError("collision_resolution must be <= step_size")

    @property
    def resolution(self) -> float:
        return self.collision_resolution if self.collision_resolution is not None else self.step_size / 5.0

    @property
    def tolerance(self) -> float:
        return self.goal_tolerance if self.goal_tolerance is not None else self.step_size


@dataclass
class Path:
    waypoints: np.ndarray  # (n, d)
    length: float


def path_length(path) -> float:
    """Total Euclidean length of a waypoint sequence (0 for one point)."""
    wp = path.waypoints if isinstance(path, Path) else np.atleast_2d(np.asarray(path, dtype=float))
    if len(wp) == 0:
        raise ValueError("empty path")
    return float(np.sum(np.linalg.norm(np.diff(wp, axis=0), axis=1)))


class _Obstacles:
    """Ball obstacles; segment checks use radii inflated by the sampling
    half-step to bound discretization error, while start/goal validity is
    judged against the raw balls."""

    def __init__(self, regions: DetectedRegionSet, inflation: float):
        self.centers = np.array([r.center for r in regions.regions]) if regions.count else np.empty((0, 0))
        self.radii = np.array([r.radius for r in regions.regions])
        self.inflation = inflation

    def blocked(self, pts: np.ndarray, inflated: bool = True) -> bool:
        if len(self.radii) == 0:
            return False
        pts = np.atleast_2d(pts)
        pad = self.inflation if inflated else 0.0
        for c, r in zip(self.centers, self.radii):
            if np.any(np.sum((pts - c) ** 2, axis=1) <= (r + pad) ** 2):
                return True
        return False


class _Hash:
    """Exact nearest/near queries over grid buckets of side ``cell``."""

    def __init__(self, cell: float, dim: int):
        self.cell = cell
        self.dim = dim
        self.buckets: dict[tuple, list[int]] = {}

    def key(self, p: np.ndarray) -> tuple:
        return tuple((p // self.cell).astype(int))

    def insert(self, idx: int, p: np.ndarray) -> None:
        self.buckets.setdefault(self.key(p), []).append(idx)

    def _ring_keys(self, center_key: tuple, ring: int):
        if ring == 0:
            yield center_key
            return
        rng = range(-ring, ring + 1)
        if self.dim == 2:
            for i in rng:
                for j in rng:
                    if max(abs(i), abs(j)) == ring:
                        yield (center_key[0] + i, center_key[1] + j)
        else:
            for i in rng:
                for j in rng:
                    for k in rng:
                        if max(abs(i), abs(j), abs(k)) == ring:
                            yield (center_key[0] + i, center_key[1] + j, center_key[2] + k)

    def nearest(self, p: np.ndarray, pts: np.ndarray) -> int:
        ck = self.key(p)
        best, best_d = -1, np.inf
        ring = 0
        while True:
            for key in self._ring_keys(ck, ring):
                idxs = self.buckets.get(key)
                if not idxs:
                    continue
                d = np.sum((pts[idxs] - p) ** 2, axis=1)
                j = int(np.argmin(d))
                if d[j] < best_d:
                    best_d, best = float(d[j]), idxs[j]
            # any bucket beyond this ring is at least ring*cell away
            if best >= 0 and best_d <= (ring * self.cell) ** 2:
                return best
            ring += 1

    def near(self, p: np.ndarray, radius: float, pts: np.ndarray) -> list[int]:
        rings = int(math.ceil(radius / self.cell)) + 1
        out = []
        r2 = radius * radius
        for ring in range(rings + 1):
            for key in self._ring_keys(self.key(p), ring):
                for i in self.buckets.get(key, ()):
                    if np.sum((pts[i] - p) ** 2) <= r2:
                        out.append(i)
        return out


def _segment_points(a: np.ndarray, b: np.ndarray, resolution: float) -> np.ndarray:
    n = max(2, int(math.ceil(np.linalg.norm(b - a) / resolution)) + 1)
    ts = np.linspace(0.0, 1.0, n)
    return a[None, :] + ts[:, None] * (b - a)[None, :]


def _default_gamma(bounds, dim: int) -> float:
    volume = float(np.prod([hi - lo for lo, hi in bounds]))
    unit_ball = math.pi if dim == 2 else 4.0 * math.pi / 3.0
    return 2.0 * ((1.0 + 1.0 / dim) * volume / unit_ball) ** (1.0 / dim)


def _snap_free(start: np.ndarray, goal: np.ndarray, obs: _Obstacles,
               params: PlannerParams, bounds) -> np.ndarray:
    """Free point near a blocked start, preferring the goal side.

    Scans rings of directions at growing radii (up to 2 step sizes) and
    returns the free candidate on the smallest ring that lies closest to
    the goal, so the escape does not strand the planner in a sealed
    pocket on the wrong side of the obstacle.
    """
    dim = len(start)
    if dim == 2:
        angles = np.linspace(0, 2 * math.pi, 16, endpoint=False)
        dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    else:
        grid = [np.array(v) for v in np.ndindex(3, 3, 3) if any(np.array(v) != 1)]
        dirs = np.array([(v - 1) / np.linalg.norm(v - 1) for v in grid])
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    step = params.resolution
    r = step
    while r <= 2.0 * params.step_size + 1e-12:
        free = []
        for d in dirs:
            cand = np.clip(start + r * d, lo, hi)
            if not obs.blocked(cand[None, :]):
                free.append(cand)
        if free:
            cand = min(free, key=lambda c: float(np.linalg.norm(c - goal)))
            log.debug("snapped blocked start %s to %s", tuple(start), tuple(cand))
            return cand
        r += step
    raise ValueError("start lies inside an obstacle and no free point found within 2 step sizes")


def plan(start, goal, regions: DetectedRegionSet, params: PlannerParams,
         bounds, rng: np.random.Generator | None = None) -> Path:
    """RRT* path from start to goal avoiding the detected balls.

    Returns the lowest-cost path to any tree node within goal tolerance
    after ``max_iterations`` samples; the exact goal is appended when the
    final hop is collision-free.  Raises ValueError when the goal is
    inside an obstacle and PlanTimeout when no connection is found.
    """
    start = np.asarray(start, dtype=float).ravel()
    goal = np.asarray(goal, dtype=float).ravel()
    bounds = tuple((float(lo), float(hi)) for lo, hi in bounds)
    dim = len(bounds)
    if start.shape != (dim,) or goal.shape != (dim,):
        raise ValueError("start/goal dimension mismatch with bounds")
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    if np.any(start < lo) or np.any(start > hi) or np.any(goal < lo) or np.any(goal > hi):
        raise ValueError("start and goal must lie inside the bounds")

    obs = _Obstacles(regions, params.resolution / 2.0)
    if obs.blocked(goal[None, :], inflated=False):
        raise ValueError("goal lies inside a detected obstacle ball")
    if obs.blocked(start[None, :]):
        start = _snap_free(start, goal, obs, params, bounds)

    rng = rng if rng is not None else rng_stream(params.seed)
    gamma = params.rewire_radius_gamma or _default_gamma(bounds, dim)
    res = params.resolution
    tol = params.tolerance
    step = params.step_size
    max_iter = params.max_iterations

    cap = max_iter + 1
    pts = np.zeros((cap, dim))
    parent = np.full(cap, -1, dtype=int)
    cost = np.zeros(cap)
    children: list[list[int]] = [[] for _ in range(cap)]
    pts[0] = start
    n = 1
    hash_ = _Hash(step, dim)
    hash_.insert(0, start)

    def collision_free(a: np.ndarray, b: np.ndarray) -> bool:
        return not obs.blocked(_segment_points(a, b, res))

    # fixed-size random blocks keep the draw sequence replayable
    coins = rng.random(max_iter)
    samples = lo + rng.random((max_iter, dim)) * (hi - lo)

    goal_nodes: list[int] = []
    goal_d_best = np.inf

    for it in range(max_iter):
        target = goal if coins[it] < params.goal_bias else samples[it]
        ni = hash_.nearest(target, pts)
        delta = target - pts[ni]
        dist = float(np.linalg.norm(delta))
        if dist < 1e-9:
            continue
        x_new = pts[ni] + (min(step, dist) / dist) * delta
        if obs.blocked(x_new[None, :]):
            continue
        if not collision_free(pts[ni], x_new):
            continue
        radius = min(gamma * (math.log(n + 1) / (n + 1)) ** (1.0 / dim), step)
        near = hash_.near(x_new, radius, pts)
        if ni not in near:
            near.append(ni)
        # cheapest collision-free parent
        best_p, best_c = ni, cost[ni] + float(np.linalg.norm(x_new - pts[ni]))
        for j in sorted(near):
            c = cost[j] + float(np.linalg.norm(x_new - pts[j]))
            if c < best_c and collision_free(pts[j], x_new):
                best_p, best_c = j, c
        idx = n
        pts[idx] = x_new
        parent[idx] = best_p
        cost[idx] = best_c
        children[best_p].append(idx)
        hash_.insert(idx, x_new)
        n += 1
        # rewire neighbors through the new node
        for j in sorted(near):
            c_through = best_c + float(np.linalg.norm(x_new - pts[j]))
            if c_through + 1e-12 < cost[j] and collision_free(x_new, pts[j]):
                children[parent[j]].remove(j)
                parent[j] = idx
                children[idx].append(j)
                drop = cost[j] - c_through
                stack = [j]
                while stack:
                    k = stack.pop()
                    cost[k] -= drop
                    stack.extend(children[k])
        # goal bookkeeping
        d_goal = float(np.linalg.norm(x_new - goal))
        goal_d_best = min(goal_d_best, d_goal)
        if d_goal <= tol:
            goal_nodes.append(idx)

    if not goal_nodes:
        raise PlanTimeout(
            f"no path within {max_iter} iterations "
            f"(tree size {n}, closest approach {goal_d_best:.4g})",
            nodes=n, best_goal_distance=goal_d_best,
        )
    # pick the cheapest connection now: rewiring may have lowered costs
    # after a goal node was first reached
    totals = [cost[j] + float(np.linalg.norm(pts[j] - goal)) for j in goal_nodes]
    best_goal_node = goal_nodes[int(np.argmin(totals))]
    chain = []
    node = best_goal_node
    while node >= 0:
        chain.append(pts[node])
        node = parent[node]
    chain.reverse()
    if float(np.linalg.norm(chain[-1] - goal)) > 1e-12 and collision_free(chain[-1], goal):
        chain.append(goal.copy())
    waypoints = np.array(chain)
    return Path(waypoints=waypoints, length=path_length(waypoints))
