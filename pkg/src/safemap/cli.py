"""Command-line harness: plan, run, analyze.

Exit codes: 0 ok, 2 configuration error, 3 episode abort (partial
outputs are retained with an abort record in the manifest).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path as FsPath

import numpy as np

from . import runio
from .analysis import convergence_audit, info_loss, rmse_by_step
from .config import ConfigError, load_config
from .episode import EpisodeAbort, run_episode
from .fields import SafetyThreshold, lipschitz_estimate
from .gp import KernelParams
from .grids import make_grid
from .planning import mvs_select, nn_order, read_plan_points, write_plan_csv
from .safety import ConfidenceSchedule


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="safemap",
                                description="Safety-aware scalar field mapping simulator")
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True,
                        help="config JSON path or preset name (sim2d, sim3d)")
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--snapshot-every", type=int, default=None,
                        help="override posterior snapshot stride (0 disables)")

    sub.add_parser("plan", parents=[common],
                   help="select and order measurement locations offline")
    sub.add_parser("run", parents=[common], help="execute a full mapping episode")

    pa = sub.add_parser("analyze", help="post-hoc reports for a finished run")
    pa.add_argument("run_dir", help="directory produced by `safemap run`")
    pa.add_argument("--eta", type=float, default=0.1,
                    help="interior margin for the certification audit")
    return p


def _load(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    if args.snapshot_every is not None:
        cfg = cfg.replace(snapshot_every=args.snapshot_every)
    cfg.validate()
    return cfg


def _default_out(cfg, kind: str) -> str:
    return f"{kind}_{cfg.name}_seed{cfg.seed}"


def cmd_plan(args) -> int:
    cfg = _load(args)
    out = FsPath(args.out or _default_out(cfg, "plan"))
    out.mkdir(parents=True, exist_ok=True)
    grid = make_grid(cfg.field.bounds, cfg.grid_resolution)
    params = KernelParams(alpha=cfg.alpha, length_scale=cfg.length_scale,
                          noise_var=cfg.noise_var if cfg.noise_var is not None else cfg.noise_std**2)
    points = mvs_select(params, grid, cfg.budget, start=cfg.start)
    if cfg.budget > 0:
        plan = nn_order(points, cfg.start)
    else:
        from .planning import MeasurementPlan

        plan = MeasurementPlan(entries=[], budget=0, start=np.asarray(cfg.start))
    write_plan_csv(plan, out / "plan.csv")
    geometry = {
        "M": len(grid),
        "fill_distance": grid.fill_distance,
        "separation_radius": None if np.isinf(grid.separation_radius) else grid.separation_radius,
    }
    with open(out / "geometry.json", "w") as fh:
        json.dump(geometry, fh, sort_keys=True, indent=2)
        fh.write("\n")
    print(f"plan written to {out} ({len(plan)} locations on a {len(grid)}-point grid)")
    return 0


def cmd_run(args) -> int:
    cfg = _load(args)
    out = args.out or _default_out(cfg, "run")
    try:
        result = run_episode(cfg)
    except EpisodeAbort as exc:
        if exc.partial is not None:
            runio.write_run_dir(exc.partial, cfg, out, maps_to_write=exc.partial.maps,
                                abort={"step": exc.step, "reason": exc.reason})
            print(f"episode aborted at step {exc.step}: {exc.reason}; "
                  f"partial outputs in {out}", file=sys.stderr)
        else:
            print(f"episode aborted: {exc.reason}", file=sys.stderr)
        return 3
    runio.write_run_dir(result, cfg, out, maps_to_write=result.maps)
    print(f"run complete: {len(result.executed)} measurements, "
          f"{result.final_regions.count} detected regions, outputs in {out}")
    return 0


def cmd_analyze(args) -> int:
    run_dir = FsPath(args.run_dir)
    try:
        manifest = runio.load_manifest(run_dir)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"cannot load manifest from {run_dir}: {exc}", file=sys.stderr)
        return 2
    if "files" not in manifest or "config_hash" not in manifest:
        print(f"manifest in {run_dir} is missing required keys", file=sys.stderr)
        return 2
    cfg = load_config(str(run_dir / "config.json"))
    out = run_dir / "analysis"
    out.mkdir(exist_ok=True)

    grid = make_grid(cfg.field.bounds, cfg.grid_resolution)
    params = KernelParams(alpha=cfg.alpha, length_scale=cfg.length_scale,
                          noise_var=cfg.noise_var if cfg.noise_var is not None else cfg.noise_std**2)
    executed, _values = runio.read_measurements_csv(run_dir / "measurements.csv")
    planned_path = run_dir / "plan_initial.csv"
    planned = read_plan_points(planned_path) if planned_path.exists() else executed
    report = info_loss(params, planned[: len(executed)], executed)
    with open(out / "info_report.json", "w") as fh:
        json.dump(report.to_dict(), fh, sort_keys=True, indent=2)
        fh.write("\n")

    snapshots = runio.load_snapshots(run_dir)
    if snapshots is None:
        note = {"skipped": "run stored no posterior snapshots"}
        with open(out / "convergence_report.json", "w") as fh:
            json.dump(note, fh, sort_keys=True, indent=2)
            fh.write("\n")
        print(f"analysis written to {out} (no snapshots; audit skipped)")
        return 0

    lf = cfg.lipschitz if cfg.lipschitz is not None else lipschitz_estimate(cfg.field, grid.axes)
    schedule = ConfidenceSchedule(delta=cfg.delta, pi_rule=cfg.pi_rule, lipschitz=lf)
    threshold = SafetyThreshold(cfg.f_bar)
    audit = convergence_audit(snapshots, cfg.field, threshold, schedule, grid,
                              eta=args.eta, continuous_samples=10_000)
    with open(out / "convergence_report.json", "w") as fh:
        json.dump(audit.to_dict(), fh, sort_keys=True, indent=2)
        fh.write("\n")

    with open(out / "rmse_by_step.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "rmse_safe_grid"])
        for t, rmse in rmse_by_step(snapshots, cfg.field, threshold, grid):
            writer.writerow([t, repr(rmse)])

    print(f"analysis written to {out} (delta_gamma={report.delta_gamma:.6g}, "
          f"event_held={audit.event_held})")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "plan":
            return cmd_plan(args)
        if args.command == "run":
            return cmd_run(args)
        return cmd_analyze(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
