"""Experiment configuration: schema, validation, presets, serialization.

A config is one JSON document; ``preset("sim2d")`` / ``preset("sim3d")``
return the two desk-scale simulation studies shipped with the package.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass

from .detection import HoughParams
from .fields import FieldSource, FieldSpec, sim2d_field, sim3d_field
from .rrt import PlannerParams

MODES = ("episode", "safe-mvs")


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    field: FieldSpec
    grid_resolution: tuple[int, ...]
    budget: int
    start: tuple[float, ...]
    f_bar: float
    noise_std: float
    alpha: float
    length_scale: float
    delta: float
    hough: HoughParams
    rrt: PlannerParams
    seed: int
    noise_var: float | None = None  # regressor nugget; None -> noise_std^2
    pi_rule: str = "quadratic"
    lipschitz: float | None = None  # None -> finite-difference estimate
    snapshot_every: int = 1
    mode: str = "episode"

    def validate(self) -> None:
        if self.budget < 0:
            raise ConfigError("budget", "must be >= 0")
        grid_size = 1
        for n in self.grid_resolution:
            grid_size *= n
        if self.budget > grid_size:
            raise ConfigError("budget", f"budget {self.budget} exceeds grid size {grid_size}")
        if len(self.grid_resolution) != self.field.dimension:
            raise ConfigError("grid.resolution", "must match the field dimension")
        if any(n < 2 for n in self.grid_resolution):
            raise ConfigError("grid.resolution", "needs at least 2 points per axis")
        if len(self.start) != self.field.dimension:
            raise ConfigError("start", "must match the field dimension")
        for k, (lo, hi) in enumerate(self.field.bounds):
            if not lo <= self.start[k] <= hi:
                raise ConfigError("start", f"coordinate {k} outside bounds ({lo}, {hi})")
        if self.noise_std < 0:
            raise ConfigError("measurement.noise_std", "must be >= 0")
        if self.alpha <= 0:
            raise ConfigError("kernel.alpha", "must be > 0")
        if self.length_scale <= 0:
            raise ConfigError("kernel.length_scale", "must be > 0")
        if self.noise_var is not None and self.noise_var <= 0:
            raise ConfigError("kernel.noise_var", "must be > 0 when set")
        if not 0 < self.delta < 1:
            raise ConfigError("safety.delta", "must be in (0, 1)")
        if self.lipschitz is not None and self.lipschitz <= 0:
            raise ConfigError("safety.lipschitz", "must be > 0 when set")
        if self.mode not in MODES:
            raise ConfigError("mode", f"must be one of {MODES}")
        if self.snapshot_every < 0:
            raise ConfigError("snapshot_every", "must be >= 0")
        if self.seed is None:
            raise ConfigError("seed", "seed is mandatory")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "field": {
                "dimension": self.field.dimension,
                "form": self.field.form,
                "bounds": [list(b) for b in self.field.bounds],
                "sources": [
                    {"center": list(s.center), "amplitude": s.amplitude, "scale": s.scale}
                    for s in self.field.sources
                ],
            },
            "grid": {"resolution": list(self.grid_resolution)},
            "budget": self.budget,
            "start": list(self.start),
            "safety": {
                "f_bar": self.f_bar,
                "delta": self.delta,
                "pi_rule": self.pi_rule,
                "lipschitz": self.lipschitz,
            },
            "measurement": {"noise_std": self.noise_std},
            "kernel": {
                "alpha": self.alpha,
                "length_scale": self.length_scale,
                "noise_var": self.noise_var,
            },
            "hough": {
                "radius_min": self.hough.radius_min,
                "radius_max": self.hough.radius_max,
                "radius_step": self.hough.radius_step,
                "accumulator_threshold": self.hough.accumulator_threshold,
                "edge_method": self.hough.edge_method,
                "clamp_band": self.hough.clamp_band,
                "min_voxels": self.hough.min_voxels,
            },
            "rrt": {
                "step_size": self.rrt.step_size,
                "rewire_radius_gamma": self.rrt.rewire_radius_gamma,
                "max_iterations": self.rrt.max_iterations,
                "goal_bias": self.rrt.goal_bias,
                "goal_tolerance": self.rrt.goal_tolerance,
                "collision_resolution": self.rrt.collision_resolution,
            },
            "seed": self.seed,
            "snapshot_every": self.snapshot_every,
            "mode": self.mode,
        }

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def content_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def replace(self, **kwargs) -> "ExperimentConfig":
        return dataclasses.replace(self, **kwargs)


def _require(section: dict, key: str, path: str):
    if key not in section:
        raise ConfigError(f"{path}.{key}", "missing")
    return section[key]


def from_dict(doc: dict) -> ExperimentConfig:
    try:
        fdoc = _require(doc, "field", "")
        field_spec = FieldSpec(
            dimension=int(_require(fdoc, "dimension", "field")),
            form=str(_require(fdoc, "form", "field")),
            sources=tuple(
                FieldSource(center=tuple(float(c) for c in s["center"]),
                            amplitude=float(s["amplitude"]), scale=float(s["scale"]))
                for s in _require(fdoc, "sources", "field")
            ),
            bounds=tuple(tuple(float(v) for v in b) for b in _require(fdoc, "bounds", "field")),
        )
        hdoc = _require(doc, "hough", "")
        hough = HoughParams(
            radius_min=float(_require(hdoc, "radius_min", "hough")),
            radius_max=float(_require(hdoc, "radius_max", "hough")),
            radius_step=None if hdoc.get("radius_step") is None else float(hdoc["radius_step"]),
            accumulator_threshold=float(hdoc.get("accumulator_threshold", 0.5)),
            edge_method=str(hdoc.get("edge_method", "four-neighbor")),
            clamp_band=None if hdoc.get("clamp_band") is None else float(hdoc["clamp_band"]),
            min_voxels=int(hdoc.get("min_voxels", 4)),
        )
        rdoc = _require(doc, "rrt", "")
        rrt = PlannerParams(
            step_size=float(_require(rdoc, "step_size", "rrt")),
            rewire_radius_gamma=None if rdoc.get("rewire_radius_gamma") is None
            else float(rdoc["rewire_radius_gamma"]),
            max_iterations=int(rdoc.get("max_iterations", 5000)),
            goal_bias=float(rdoc.get("goal_bias", 0.05)),
            goal_tolerance=None if rdoc.get("goal_tolerance") is None
            else float(rdoc["goal_tolerance"]),
            collision_resolution=None if rdoc.get("collision_resolution") is None
            else float(rdoc["collision_resolution"]),
        )
        sdoc = _require(doc, "safety", "")
        kdoc = _require(doc, "kernel", "")
        mdoc = _require(doc, "measurement", "")
        cfg = ExperimentConfig(
            name=str(doc.get("name", "experiment")),
            field=field_spec,
            grid_resolution=tuple(int(n) for n in _require(_require(doc, "grid", ""), "resolution", "grid")),
            budget=int(_require(doc, "budget", "")),
            start=tuple(float(v) for v in _require(doc, "start", "")),
            f_bar=float(_require(sdoc, "f_bar", "safety")),
            delta=float(_require(sdoc, "delta", "safety")),
            pi_rule=str(sdoc.get("pi_rule", "quadratic")),
            lipschitz=None if sdoc.get("lipschitz") is None else float(sdoc["lipschitz"]),
            noise_std=float(_require(mdoc, "noise_std", "measurement")),
            alpha=float(_require(kdoc, "alpha", "kernel")),
            length_scale=float(_require(kdoc, "length_scale", "kernel")),
            noise_var=None if kdoc.get("noise_var") is None else float(kdoc["noise_var"]),
            hough=hough,
            rrt=rrt,
            seed=int(_require(doc, "seed", "")),
            snapshot_every=int(doc.get("snapshot_every", 1)),
            mode=str(doc.get("mode", "episode")),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError("<document>", str(exc)) from exc
    cfg.validate()
    return cfg


def preset(name: str) -> ExperimentConfig:
    """Built-in experiment configurations."""
    if name == "sim2d":
        cfg = ExperimentConfig(
            name="sim2d",
            field=sim2d_field(),
            grid_resolution=(100, 100),
            budget=100,
            start=(0.05, 0.05),
            f_bar=0.7,
            noise_std=0.01,
            alpha=1.0,
            length_scale=0.15,
            delta=0.05,
            hough=HoughParams(radius_min=0.05, radius_max=0.15,
                              accumulator_threshold=0.65),
            rrt=PlannerParams(step_size=0.05, goal_bias=0.05, max_iterations=300,
                              collision_resolution=0.01),
            seed=0,
            snapshot_every=1,
        )
    elif name == "sim3d":
        cfg = ExperimentConfig(
            name="sim3d",
            field=sim3d_field(),
            grid_resolution=(40, 40, 40),
            budget=450,
            start=(5.0, 5.0, 1.0),
            f_bar=2.0,
            noise_std=0.01,
            alpha=1.0,
            length_scale=2.5,
            delta=0.05,
            # a decay field's gradient norm is at most decay_rate * field
            # value, so decay_rate * f_bar bounds it over the safe side
            lipschitz=1.7 * 2.0,
            hough=HoughParams(radius_min=0.4, radius_max=4.0, min_voxels=27),
            rrt=PlannerParams(step_size=0.5, goal_bias=0.05, max_iterations=400,
                              collision_resolution=0.1),
            seed=0,
            snapshot_every=25,
        )
    else:
        raise ConfigError("preset", f"unknown preset {name!r}; options: sim2d, sim3d")
    cfg.validate()
    return cfg


def load_config(path_or_name: str) -> ExperimentConfig:
    """Load a config JSON file, or a named preset."""
    if path_or_name in ("sim2d", "sim3d"):
        return preset(path_or_name)
    try:
        with open(path_or_name) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path_or_name}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON in {path_or_name}: {exc}") from exc
    return from_dict(doc)
