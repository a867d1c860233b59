"""Squared-exponential Gaussian-process regression.

Provides the stateless posterior/mutual-information routines used by the
planner and analysis code, plus an incremental model (Cholesky factor
append per measurement) that the episode loop uses to keep a full-grid
posterior cheap to maintain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cholesky, solve_triangular
from scipy.spatial.distance import cdist

JITTER_LADDER = (0.0, 1e-10, 1e-8, 1e-6)


class NumericalError(RuntimeError):
    """Gram factorization failed even after jitter escalation."""


@dataclass(frozen=True)
class KernelParams:
    """Signal std alpha, length scale, and regressor noise variance.

    The regressor nugget defaults to the sensor noise variance; the two
    are a single parameter unless explicitly overridden in the config.
    """

    alpha: float
    length_scale: float
    noise_var: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")
        if not self.length_scale > 0:
            raise ValueError("length_scale must be > 0")
        if not self.noise_var > 0:
            raise ValueError("noise_var must be strictly positive")


@dataclass
class Dataset:
    """Ordered measurement locations and values."""

    locations: np.ndarray  # (t, d)
    values: np.ndarray  # (t,)

    def __post_init__(self):
        self.locations = np.atleast_2d(np.asarray(self.locations, dtype=float))
        self.values = np.asarray(self.values, dtype=float).ravel()
        if self.locations.size == 0:
            self.locations = self.locations.reshape(0, max(1, self.locations.shape[-1]))
        if len(self.locations) != len(self.values):
            raise ValueError("locations and values must have equal length")

    def __len__(self) -> int:
        return len(self.values)

    @classmethod
    def empty(cls, dim: int) -> "Dataset":
        return cls(np.empty((0, dim)), np.empty(0))


@dataclass
class Posterior:
    mean: np.ndarray
    variance: np.ndarray


def kernel(params: KernelParams, x, xp) -> float:
    """SE covariance alpha^2 * exp(-||x-x'||^2 / (2 l^2))."""
    x = np.asarray(x, dtype=float)
    xp = np.asarray(xp, dtype=float)
    d2 = float(np.sum((x - xp) ** 2))
    return params.alpha**2 * float(np.exp(-d2 / (2.0 * params.length_scale**2)))


def kernel_matrix(params: KernelParams, X, Y=None) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = X if Y is None else np.atleast_2d(np.asarray(Y, dtype=float))
    if len(X) == 0 or len(Y) == 0:
        return np.zeros((len(X), len(Y)))
    d2 = cdist(X, Y, metric="sqeuclidean")
    return params.alpha**2 * np.exp(-d2 / (2.0 * params.length_scale**2))


def _chol_gram(params: KernelParams, X: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of (K + noise_var I), with jitter escalation."""
    K = kernel_matrix(params, X)
    n = len(X)
    for jitter in JITTER_LADDER:
        try:
            return cholesky(K + (params.noise_var + jitter * params.alpha**2) * np.eye(n), lower=True)
        except np.linalg.LinAlgError:
            continue
    cond = float(np.linalg.cond(K + params.noise_var * np.eye(n)))
    raise NumericalError(f"Gram factorization failed; condition estimate {cond:.3e}")


def posterior(params: KernelParams, data: Dataset, queries) -> Posterior:
    """Posterior mean/variance at the query points (from-scratch solve).

    An empty dataset returns the zero-mean prior with variance alpha^2.
    """
    Q = np.atleast_2d(np.asarray(queries, dtype=float))
    if len(data) == 0:
        return Posterior(np.zeros(len(Q)), np.full(len(Q), params.alpha**2))
    L = _chol_gram(params, data.locations)
    Kqt = kernel_matrix(params, Q, data.locations)  # (m, t)
    V = solve_triangular(L, Kqt.T, lower=True)  # (t, m)
    u = solve_triangular(L, data.values, lower=True)
    mean = V.T @ u
    var = params.alpha**2 - np.sum(V**2, axis=0)
    return Posterior(mean, np.maximum(var, 0.0))


def posterior_covariance_matrix(params: KernelParams, data: Dataset, queries) -> np.ndarray:
    """Full posterior covariance over the query points."""
    Q = np.atleast_2d(np.asarray(queries, dtype=float))
    Kqq = kernel_matrix(params, Q)
    if len(data) == 0:
        return Kqq
    L = _chol_gram(params, data.locations)
    V = solve_triangular(L, kernel_matrix(params, data.locations, Q), lower=True)
    return Kqq - V.T @ V


def mutual_information(params: KernelParams, locations) -> float:
    """0.5 * ln det(I + K/noise_var) for the given locations, in nats."""
    X = np.atleast_2d(np.asarray(locations, dtype=float))
    if len(X) == 0 or X.size == 0:
        return 0.0
    C = np.eye(len(X)) + kernel_matrix(params, X) / params.noise_var
    L = cholesky(C, lower=True)
    return float(np.sum(np.log(np.diag(L))))


class GpModel:
    """Incremental GP conditioned one measurement at a time.

    Appends a row to the Cholesky factor of (K + noise_var I) per new
    point and, when a query grid is attached, maintains the whitened
    cross-covariance rows so the full-grid posterior updates in O(t M)
    per measurement.  A from-scratch refactorization runs every
    ``refactor_every`` additions to bound floating-point drift.
    """

    def __init__(self, params: KernelParams, refactor_every: int = 64):
        self.params = params
        self.refactor_every = refactor_every
        self._X: list[np.ndarray] = []
        self._y: list[float] = []
        self._L = np.zeros((0, 0))
        self._u = np.zeros(0)
        self._grid: np.ndarray | None = None
        self._V: np.ndarray | None = None  # (t, M)
        self._grid_mean: np.ndarray | None = None
        self._grid_var: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self._y)

    @property
    def dataset(self) -> Dataset:
        if not self._X:
            return Dataset.empty(1 if self._grid is None else self._grid.shape[1])
        return Dataset(np.array(self._X), np.array(self._y))

    def attach_grid(self, points: np.ndarray) -> None:
        """Register the fixed query grid whose posterior is tracked."""
        self._grid = np.atleast_2d(np.asarray(points, dtype=float))
        self._rebuild_grid_state()

    def _rebuild_grid_state(self) -> None:
        if self._grid is None:
            return
        M = len(self._grid)
        a2 = self.params.alpha**2
        if not self._X:
            self._V = np.zeros((0, M))
            self._grid_mean = np.zeros(M)
            self._grid_var = np.full(M, a2)
            return
        X = np.array(self._X)
        self._V = solve_triangular(self._L, kernel_matrix(self.params, X, self._grid), lower=True)
        self._grid_mean = self._V.T @ self._u
        self._grid_var = np.maximum(a2 - np.sum(self._V**2, axis=0), 0.0)

    def _refactor(self) -> None:
        X = np.array(self._X)
        self._L = _chol_gram(self.params, X)
        self._u = solve_triangular(self._L, np.array(self._y), lower=True)
        self._rebuild_grid_state()

    def add(self, x, y: float) -> None:
        x = np.asarray(x, dtype=float).ravel()
        self._X.append(x)
        self._y.append(float(y))
        t = len(self._y)
        if t == 1 or (self.refactor_every and t % self.refactor_every == 0):
            self._refactor()
            return
        k_vec = kernel_matrix(self.params, np.array(self._X[:-1]), x[None, :]).ravel()
        a = solve_triangular(self._L, k_vec, lower=True)
        d2 = self.params.alpha**2 + self.params.noise_var - float(a @ a)
        if d2 <= 1e-12 * self.params.alpha**2:
            # near-duplicate point made the append ill-conditioned
            self._refactor()
            return
        d = np.sqrt(d2)
        t_old = t - 1
        L = np.zeros((t, t))
        L[:t_old, :t_old] = self._L
        L[t_old, :t_old] = a
        L[t_old, t_old] = d
        self._L = L
        u_new = (self._y[-1] - float(a @ self._u)) / d
        self._u = np.append(self._u, u_new)
        if self._grid is not None:
            k_grid = kernel_matrix(self.params, x[None, :], self._grid).ravel()
            v = (k_grid - a @ self._V) / d
            self._V = np.vstack([self._V, v[None, :]])
            self._grid_mean = self._grid_mean + u_new * v
            self._grid_var = np.maximum(self._grid_var - v**2, 0.0)

    def grid_posterior(self) -> Posterior:
        if self._grid is None:
            raise RuntimeError("no grid attached")
        return Posterior(self._grid_mean.copy(), self._grid_var.copy())

    def posterior(self, queries) -> Posterior:
        """Posterior at arbitrary queries from the current factor."""
        Q = np.atleast_2d(np.asarray(queries, dtype=float))
        a2 = self.params.alpha**2
        if not self._X:
            return Posterior(np.zeros(len(Q)), np.full(len(Q), a2))
        V = solve_triangular(self._L, kernel_matrix(self.params, np.array(self._X), Q), lower=True)
        return Posterior(V.T @ self._u, np.maximum(a2 - np.sum(V**2, axis=0), 0.0))
