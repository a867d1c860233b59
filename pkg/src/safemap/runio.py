"""Run-directory file formats.

Everything an episode emits is text or byte-exact binary (CSV with
repr'd floats, JSON with sorted keys, raw .npy, binary PGM), so a rerun
with the same config and seed reproduces every file byte for byte.  The
manifest lists each output with its sha256 content hash.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from pathlib import Path as FsPath

import numpy as np

from .episode import EpisodeResult, Snapshots
from .planning import MeasurementPlan, write_plan_csv
from .safety import write_pgm

MANIFEST = "manifest.json"


def _dump_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_measurements_csv(executed: np.ndarray, values: np.ndarray, path) -> None:
    dim = executed.shape[1] if executed.size else 2
    coord_cols = ["x", "y", "z"][:dim]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", *coord_cols, "value"])
        for i, (x, y) in enumerate(zip(executed, values), start=1):
            writer.writerow([i, *[repr(float(c)) for c in x], repr(float(y))])


def read_measurements_csv(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    ncoord = sum(1 for c in rows[0] if c in ("x", "y", "z"))
    pts = np.array([[float(v) for v in r[1 : 1 + ncoord]] for r in rows[1:]])
    vals = np.array([float(r[1 + ncoord]) for r in rows[1:]])
    return pts, vals


def write_trajectory_csv(trajectory, path) -> None:
    dim = trajectory[0].waypoints.shape[1] if trajectory else 2
    coord_cols = ["x", "y", "z"][:dim]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["leg_index", "waypoint_index", *coord_cols])
        for leg, p in enumerate(trajectory):
            for w, point in enumerate(p.waypoints):
                writer.writerow([leg, w, *[repr(float(c)) for c in point]])


def write_run_dir(result: EpisodeResult, cfg, out_dir, maps_to_write=None,
                  abort: dict | None = None) -> FsPath:
    """Write all episode outputs plus the hashing manifest.

    ``maps_to_write`` is an optional list of (step, BinarySafetyMap) to
    export; 2D maps become PGM files with JSON sidecars, higher
    dimensional maps are stored as .npy bit arrays.
    """
    out = FsPath(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "maps").mkdir(exist_ok=True)

    _dump_json(cfg.to_dict(), out / "config.json")
    resolved = {
        "lipschitz": result.schedule.lipschitz,
        "noise_var": result.kernel.noise_var,
        "lipschitz_margin": result.lipschitz_margin,
        "fill_distance": result.grid.fill_distance,
        "separation_radius": None if np.isinf(result.grid.separation_radius)
        else result.grid.separation_radius,
    }
    _dump_json(resolved, out / "resolved.json")

    if result.plan is not None:
        initial = MeasurementPlan(
            entries=[type(e)(point=e.original_point, origin_index=e.origin_index,
                             original_point=e.original_point, status="planned")
                     for e in result.plan.entries],
            budget=result.plan.budget, start=result.plan.start)
        write_plan_csv(initial, out / "plan_initial.csv")
        write_plan_csv(result.plan, out / "plan_final.csv")
    write_measurements_csv(result.executed, result.values, out / "measurements.csv")
    if result.trajectory:
        write_trajectory_csv(result.trajectory, out / "trajectory.csv")

    with open(out / "steps.jsonl", "w") as fh:
        for rec in result.logs:
            fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")

    _dump_json({"step": result.final_regions.step,
                "regions": result.final_regions.to_dicts()}, out / "regions.json")

    for step, bmap in maps_to_write or []:
        if bmap is None:
            continue
        if bmap.grid.dim == 2:
            write_pgm(bmap, out / "maps" / f"step_{step:04d}.pgm",
                      out / "maps" / f"step_{step:04d}.json")
        else:
            np.save(out / "maps" / f"step_{step:04d}.npy",
                    bmap.bits.reshape(bmap.grid.shape))
            _dump_json({"t": bmap.step, "beta_t": bmap.beta_value, "f_bar": bmap.f_bar,
                        "lipschitz_margin": bmap.lipschitz_margin},
                       out / "maps" / f"step_{step:04d}.json")

    if result.snapshots is not None:
        np.save(out / "snapshot_steps.npy", result.snapshots.steps)
        np.save(out / "snapshot_mean.npy", result.snapshots.mean)
        np.save(out / "snapshot_std.npy", result.snapshots.std)

    files = {}
    for root, _dirs, names in os.walk(out):
        for name in sorted(names):
            p = FsPath(root) / name
            rel = str(p.relative_to(out))
            if rel == MANIFEST or rel.startswith("analysis"):
                continue
            files[rel] = sha256_file(p)
    manifest = {
        "config_hash": cfg.content_hash(),
        "seed": cfg.seed,
        "mode": cfg.mode,
        "aborted": abort,
        "files": files,
    }
    _dump_json(manifest, out / MANIFEST)
    return out


def load_manifest(run_dir) -> dict:
    path = FsPath(run_dir) / MANIFEST
    with open(path) as fh:
        return json.load(fh)


def load_snapshots(run_dir) -> Snapshots | None:
    run_dir = FsPath(run_dir)
    if not (run_dir / "snapshot_steps.npy").exists():
        return None
    return Snapshots(
        steps=np.load(run_dir / "snapshot_steps.npy"),
        mean=np.load(run_dir / "snapshot_mean.npy"),
        std=np.load(run_dir / "snapshot_std.npy"),
    )
