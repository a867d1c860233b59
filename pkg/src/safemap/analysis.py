"""Information-loss accounting and convergence diagnostics.

Quantifies how much mutual information the safety-constrained executed
measurement set gave up relative to the unconstrained greedy set, and
audits episode snapshots against the field oracle: did the confidence
event hold, was every certified grid point truly safe, and when did
interior-safe points become (and stay) certified.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .fields import FieldSpec, SafetyThreshold, eval_field
from .gp import KernelParams, kernel_matrix, mutual_information
from .grids import TestGrid
from .safety import ConfidenceSchedule, beta

BRUTE_FORCE_MAX_T = 5
BRUTE_FORCE_MAX_GRID = 10


@dataclass
class InfoReport:
    gamma_g: float  # greedy / initially planned set
    gamma_s: float  # executed (safety-constrained) set
    delta_gamma: float
    eig_g: np.ndarray
    eig_s: np.ndarray
    lower_bound_ratio: float  # (gamma_s/gamma_g) * (1 - 1/e)
    gamma_o: float | None = None  # exhaustive optimum, test-scale inputs only

    def to_dict(self) -> dict:
        return {
            "gamma_greedy": self.gamma_g,
            "gamma_executed": self.gamma_s,
            "delta_gamma": self.delta_gamma,
            "lower_bound_ratio": self.lower_bound_ratio,
            "gamma_optimal": self.gamma_o,
            "eigenvalues_greedy": [float(v) for v in self.eig_g],
            "eigenvalues_executed": [float(v) for v in self.eig_s],
        }


@dataclass
class ConvergenceReport:
    event_held: bool
    event_failed_steps: list[int]
    soundness_violations: int | None  # None when the event failed (not asserted)
    continuous_violations: int | None
    first_certified: np.ndarray  # per grid point; -1 = never stayed certified
    interior_mask: np.ndarray  # membership in the eta-interior safe grid
    t_star: int | None  # max first-certification step over the interior set
    eta: float
    horizon: int
    audited_steps: list[int]

    def to_dict(self) -> dict:
        interior = np.flatnonzero(self.interior_mask)
        return {
            "event_held": self.event_held,
            "event_failed_steps": self.event_failed_steps,
            "soundness_violations": self.soundness_violations,
            "continuous_violations": self.continuous_violations,
            "eta": self.eta,
            "horizon": self.horizon,
            "interior_points": int(self.interior_mask.sum()),
            "interior_certified": int(np.sum(self.first_certified[interior] >= 0)),
            "t_star": self.t_star,
            "audited_steps": self.audited_steps,
        }


def info_gain_eigen(params: KernelParams, locations) -> tuple[float, np.ndarray]:
    """Information gain via the kernel-matrix spectrum.

    Returns (0.5 * sum ln(1 + lambda_i / noise_var), eigenvalues).
    """
    X = np.atleast_2d(np.asarray(locations, dtype=float))
    if len(X) == 0 or X.size == 0:
        return 0.0, np.array([])
    eig = np.linalg.eigvalsh(kernel_matrix(params, X))
    value = 0.5 * float(np.sum(np.log1p(np.maximum(eig, 0.0) / params.noise_var)))
    return value, eig


def _exhaustive_optimum(params: KernelParams, grid_points: np.ndarray, budget: int) -> float:
    best = 0.0
    for combo in itertools.combinations(range(len(grid_points)), budget):
        best = max(best, mutual_information(params, grid_points[list(combo)]))
    return best


def info_loss(params: KernelParams, greedy_set, executed_set,
              grid_points=None) -> InfoReport:
    """Information gain of executed vs greedy sets and the gap between them.

    The exhaustive optimum gamma_o is included only for test-scale inputs
    (budget <= 5 on a grid of <= 10 candidates); the subset enumeration
    is intractable beyond that and never runs in the library path.
    """
    G = np.atleast_2d(np.asarray(greedy_set, dtype=float))
    S = np.atleast_2d(np.asarray(executed_set, dtype=float))
    if len(G) != len(S):
        raise ValueError("greedy and executed sets must have equal cardinality")
    gamma_g, eig_g = info_gain_eigen(params, G)
    gamma_s, eig_s = info_gain_eigen(params, S)
    ratio = (gamma_s / gamma_g) * (1.0 - 1.0 / np.e) if gamma_g > 0 else 0.0
    gamma_o = None
    if grid_points is not None:
        pts = np.atleast_2d(np.asarray(grid_points, dtype=float))
        if len(G) <= BRUTE_FORCE_MAX_T and len(pts) <= BRUTE_FORCE_MAX_GRID:
            gamma_o = _exhaustive_optimum(params, pts, len(G))
    return InfoReport(gamma_g=gamma_g, gamma_s=gamma_s, delta_gamma=gamma_g - gamma_s,
                      eig_g=eig_g, eig_s=eig_s, lower_bound_ratio=ratio, gamma_o=gamma_o)


def convergence_audit(snapshots, spec: FieldSpec, threshold: SafetyThreshold,
                      schedule: ConfidenceSchedule, grid: TestGrid, eta: float,
                      continuous_samples: int = 0,
                      rng: np.random.Generator | None = None) -> ConvergenceReport:
    """Audit episode snapshots against the field oracle.

    For each stored posterior after k measurements (checked with the
    step-(k+1) confidence scaling): (a) does |f - mean| <= sqrt(beta)
    sigma hold at every grid point; (b) conditionally on (a) holding
    everywhere, is every certified point truly safe; (c) per grid point,
    the first audited step from which certification persists through the
    horizon, and the max of those over the eta-interior safe grid.

    ``continuous_samples`` > 0 additionally spot-checks the
    Lipschitz-lifted continuous certification against the oracle at
    random domain points under the final snapshot.
    """
    if snapshots is None or len(snapshots.steps) == 0:
        raise ValueError("episode snapshots are required for the audit")
    f = np.asarray(eval_field(spec, grid.points))
    true_safe = f <= threshold.f_bar
    M = len(grid)
    margin = schedule.lipschitz * grid.fill_distance

    event_failed = []
    certified_history = []
    for i, k in enumerate(snapshots.steps):
        b = beta(schedule, M, int(k) + 1)
        mu, sd = snapshots.mean[i], snapshots.std[i]
        if np.any(np.abs(f - mu) > np.sqrt(b) * sd + 1e-12):
            event_failed.append(int(k))
        certified_history.append(mu + np.sqrt(b) * sd <= threshold.f_bar)
    certified_history = np.array(certified_history)  # (n_snap, M)
    event_held = not event_failed

    soundness = None
    if event_held:
        soundness = int(np.sum(certified_history & ~true_safe[None, :]))

    continuous = None
    if continuous_samples > 0:
        rng = rng if rng is not None else np.random.default_rng(0)
        lo = np.array([b_[0] for b_ in spec.bounds])
        hi = np.array([b_[1] for b_ in spec.bounds])
        pts = lo + rng.random((continuous_samples, len(lo))) * (hi - lo)
        gi = grid.project_indices(pts)
        i_last = len(snapshots.steps) - 1
        b = beta(schedule, M, int(snapshots.steps[i_last]) + 1)
        lifted = snapshots.mean[i_last][gi] + np.sqrt(b) * snapshots.std[i_last][gi] + margin
        cert = lifted <= threshold.f_bar
        f_cont = np.asarray(eval_field(spec, pts))
        continuous = int(np.sum(cert & (f_cont > threshold.f_bar))) if event_held else None

    # persistence: first audited step from which the point stays certified
    n_snap = len(snapshots.steps)
    ever = certified_history.any(axis=0)
    suffix_ok = np.cumprod(certified_history[::-1], axis=0)[::-1].astype(bool)
    first_cert = np.full(M, -1, dtype=int)
    for j in range(M):
        if not ever[j]:
            continue
        idx = np.flatnonzero(suffix_ok[:, j])
        if len(idx):
            first_cert[j] = int(snapshots.steps[idx[0]])

    interior = f <= threshold.f_bar - margin - eta
    t_star: int | None = None
    if interior.any():
        fc = first_cert[interior]
        t_star = int(fc.max()) if np.all(fc >= 0) else None

    return ConvergenceReport(
        event_held=event_held, event_failed_steps=event_failed,
        soundness_violations=soundness, continuous_violations=continuous,
        first_certified=first_cert, interior_mask=interior, t_star=t_star,
        eta=eta, horizon=int(snapshots.steps.max()),
        audited_steps=[int(k) for k in snapshots.steps],
    )


def rmse_by_step(snapshots, spec: FieldSpec, threshold: SafetyThreshold,
                 grid: TestGrid) -> list[tuple[int, float]]:
    """RMSE of the posterior mean against the oracle over the true-safe grid."""
    f = np.asarray(eval_field(spec, grid.points))
    safe = f <= threshold.f_bar
    out = []
    for i, k in enumerate(snapshots.steps):
        err = snapshots.mean[i][safe] - f[safe]
        out.append((int(k), float(np.sqrt(np.mean(err**2)))))
    return out
