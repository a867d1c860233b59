"""Ground-truth synthetic scalar fields and the noisy measurement model.

The true field is only available to the simulator and to post-hoc
evaluation code; the mapping algorithm itself sees nothing but noisy
point measurements.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .seeding import NOISE, rng_stream

GAUSSIAN_BUMP = "gaussian-bump"
EXPONENTIAL_DECAY = "exponential-decay"


class DomainError(ValueError):
    """Coordinate outside the field's domain box."""


@dataclass(frozen=True)
class FieldSource:
    """One localized intensity peak.

    ``scale`` is the squared-spread denominator for gaussian-bump sources
    (f_i = A * exp(-||x-c||^2 / scale)) and the spatial decay rate for
    exponential-decay sources (f_i = A * exp(-scale * ||x-c||)).
    """

    center: tuple[float, ...]
    amplitude: float
    scale: float


@dataclass(frozen=True)
class FieldSpec:
    dimension: int
    form: str
    sources: tuple[FieldSource, ...]
    bounds: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if self.dimension not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {self.dimension}")
        if self.form not in (GAUSSIAN_BUMP, EXPONENTIAL_DECAY):
            raise ValueError(f"unknown field form {self.form!r}")
        if len(self.bounds) != self.dimension:
            raise ValueError("bounds must have one (min, max) pair per axis")
        for lo, hi in self.bounds:
            if not lo < hi:
                raise ValueError(f"degenerate bounds ({lo}, {hi})")
        for s in self.sources:
            if len(s.center) != self.dimension:
                raise ValueError("source center dimension mismatch")
            if not s.scale > 0:
                raise ValueError("source spread/decay must be positive")

    def contains(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        lo = np.array([b[0] for b in self.bounds])
        hi = np.array([b[1] for b in self.bounds])
        return np.all((x >= lo) & (x <= hi), axis=1)


@dataclass
class MeasurementModel:
    """Additive zero-mean Gaussian sensor noise with known std.

    The noise stream is derived from ``rng_seed``; two models built with
    the same seed replay the same noise sequence draw-for-draw.
    """

    noise_std: float = 0.01
    rng_seed: int = 0
    _rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        self.reset()

    def reset(self) -> None:
        """Rewind the noise stream to its start."""
        self._rng = rng_stream(self.rng_seed, NOISE)

    def draw_noise(self, n: int = 1) -> np.ndarray:
        return self._rng.normal(0.0, self.noise_std, size=n)


@dataclass(frozen=True)
class SafetyThreshold:
    f_bar: float

    def check_on_grid(self, spec: FieldSpec, points: np.ndarray) -> None:
        """Numerically verify f_min < f_bar < f_max over the given points."""
        values = eval_field(spec, points)
        fmin, fmax = float(values.min()), float(values.max())
        if not (fmin < self.f_bar < fmax):
            raise ValueError(
                f"f_bar={self.f_bar} outside field range ({fmin:.4g}, {fmax:.4g}) on grid"
            )


def eval_field(spec: FieldSpec, x) -> float | np.ndarray:
    """True field value, summed over sources.

    Accepts a single coordinate (returns a float) or an (n, d) array
    (returns an (n,) array).  Raises DomainError off the domain box.
    """
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    pts = np.atleast_2d(arr)
    if pts.shape[1] != spec.dimension:
        raise DomainError(f"expected {spec.dimension}-dimensional coordinates")
    inside = spec.contains(pts)
    if not inside.all():
        bad = pts[~inside][0]
        raise DomainError(f"coordinate {tuple(bad)} outside domain bounds")
    total = np.zeros(len(pts))
    for s in spec.sources:
        d2 = np.sum((pts - np.asarray(s.center)) ** 2, axis=1)
        if spec.form == GAUSSIAN_BUMP:
            total += s.amplitude * np.exp(-d2 / s.scale)
        else:
            total += s.amplitude * np.exp(-s.scale * np.sqrt(d2))
    return float(total[0]) if single else total


def measure(spec: FieldSpec, model: MeasurementModel, x) -> float:
    """Noisy measurement y = f(x) + eps, eps ~ N(0, noise_std^2)."""
    return float(eval_field(spec, x)) + float(model.draw_noise(1)[0])


def true_safety(spec: FieldSpec, threshold: SafetyThreshold, x) -> str:
    """Oracle classification: 'unsafe' iff f(x) > f_bar (strict)."""
    return "unsafe" if float(eval_field(spec, x)) > threshold.f_bar else "safe"


def unsafe_mask(spec: FieldSpec, threshold: SafetyThreshold, points: np.ndarray) -> np.ndarray:
    """Vectorized oracle: boolean mask of truly unsafe points."""
    return np.asarray(eval_field(spec, points)) > threshold.f_bar


def lipschitz_estimate(spec: FieldSpec, axes: list[np.ndarray]) -> float:
    """Max gradient magnitude of f over the grid, by central differences.

    ``axes`` are the per-axis coordinate vectors of a uniform grid.
    """
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    values = eval_field(spec, pts).reshape(mesh[0].shape)
    grads = np.gradient(values, *axes)
    mag = np.sqrt(sum(g**2 for g in grads))
    return float(mag.max())


def sim2d_field() -> FieldSpec:
    """Two gaussian bumps on the unit square."""
    return FieldSpec(
        dimension=2,
        form=GAUSSIAN_BUMP,
        sources=(
            FieldSource(center=(0.25, 0.75), amplitude=1.0, scale=0.08),
            FieldSource(center=(0.75, 0.25), amplitude=1.0, scale=0.08),
        ),
        bounds=((0.0, 1.0), (0.0, 1.0)),
    )


def sim3d_field() -> FieldSpec:
    """Four exponentially decaying sources on the ground plane of [0,10]^3."""
    return FieldSpec(
        dimension=3,
        form=EXPONENTIAL_DECAY,
        sources=(
            FieldSource(center=(2.0, 2.0, 0.0), amplitude=40.0, scale=1.7),
            FieldSource(center=(2.0, 8.0, 0.0), amplitude=20.0, scale=1.7),
            FieldSource(center=(8.0, 2.0, 0.0), amplitude=20.0, scale=1.7),
            FieldSource(center=(8.0, 8.0, 0.0), amplitude=40.0, scale=1.7),
        ),
        bounds=((0.0, 10.0), (0.0, 10.0), (0.0, 10.0)),
    )
