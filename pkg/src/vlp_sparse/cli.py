"""Command-line front end: fingerprint/simulate/sweep/baseline subcommands.

Outputs are plot-ready CSV tables (floats at 17 significant digits, so the
text round-trips) with JSON mirrors, plus a run manifest with content
digests.  Reruns with the same config and seed are byte-identical, for any
``--jobs``; volatile values (wall-clock runtimes, timestamps) never enter
the CSV/JSON result files, only the manifest.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .evaluation import (CampaignReport, aligned_estimates, build_scene,
                         run_campaign, run_trial)
from .measurement import MeasurementVector
from .scenario import (SCHEMES, SOLVERS, ConfigError, SceneConfig,
                       apply_overrides, config_from_dict, config_to_dict,
                       load_config)

REPORT_COLUMNS = ("scheme", "K", "snr_db", "L", "trials",
                  "mean_error_m", "std_error_m", "success_rate")


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def _write_json(path: str, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _write_matrix_csv(path: str, matrix: np.ndarray) -> None:
    np.savetxt(path, np.atleast_2d(matrix), delimiter=",", fmt="%.17g")


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, float) and not np.isfinite(value):
        return None
    return value


def cmd_fingerprint(config: SceneConfig, out_dir: str) -> list[str]:
    """Write the gain matrix and both fingerprints plus a metadata sidecar."""
    scene = build_scene(config)
    paths = {
        "H.csv": scene.gains,
        "J.csv": scene.power_fp,
        "Psi.csv": scene.corr_fp,
    }
    written = []
    for name, matrix in paths.items():
        path = os.path.join(out_dir, name)
        _write_matrix_csv(path, matrix)
        written.append(path)
    meta = {
        "config": config_to_dict(config),
        "shapes": {"H": list(scene.gains.shape),
                   "J": list(scene.power_fp.shape),
                   "Psi": list(scene.corr_fp.shape)},
        "pair_order": "Psi rows follow anchor pairs (i, j), i <= j, "
                      "in lexicographic order; i == j rows equal rows of J",
        "pairs": [[int(i), int(j)] for i, j in
                  zip(scene.pairs.first, scene.pairs.second)],
        "csv_float_format": "%.17g",
    }
    meta_path = os.path.join(out_dir, "meta.json")
    _write_json(meta_path, meta)
    written.append(meta_path)
    return written


def _measurement_rows(meas) -> list[MeasurementVector]:
    return list(meas) if isinstance(meas, list) else [meas]


def cmd_simulate(config: SceneConfig, out_dir: str,
                 dump_measurements: bool = False) -> list[str]:
    """Run one trial of the configured scheme and write scatter + trial files."""
    rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    results = run_trial(config, rng, schemes=[config.scheme])
    result = results[config.scheme]
    if result.failed:
        raise ConfigError(f"trial failed for scheme '{config.scheme}'")

    scatter_path = os.path.join(out_dir, "scatter.csv")
    aligned = aligned_estimates(result.est_positions, result.true_positions)
    with open(scatter_path, "w") as fh:
        fh.write("trial,scheme,true_x,true_y,est_x,est_y\n")
        for truth, est in zip(result.true_positions, aligned):
            fh.write(",".join(["0", config.scheme, _fmt(float(truth[0])),
                               _fmt(float(truth[1])), _fmt(float(est[0])),
                               _fmt(float(est[1]))]) + "\n")

    trial_path = os.path.join(out_dir, "trial.json")
    _write_json(trial_path, {
        "config": config_to_dict(config),
        "scheme": config.scheme,
        "error_m": result.error_m,
        "exact_support": bool(result.exact_support),
        "snr_db": _jsonable(result.snr_db),
        "snapshots": result.snapshots,
        "support": _jsonable(result.support),
        "true_positions": _jsonable(result.true_positions),
        "est_positions": _jsonable(aligned),
    })
    written = [scatter_path, trial_path]

    if dump_measurements:
        rows = _measurement_rows(result.measurement)
        meas_path = os.path.join(out_dir, "measurements.csv")
        width = rows[0].values.size
        header = ["model", "L", "sigma2"] + [f"v{i:03d}" for i in range(width)]
        with open(meas_path, "w") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                cells = [row.model, str(row.snapshots), _fmt(row.noise_variance)]
                cells += [_fmt(float(v)) for v in row.values]
                fh.write(",".join(cells) + "\n")
        written.append(meas_path)
    return written


def _write_report(report: CampaignReport, out_dir: str) -> list[str]:
    csv_path = os.path.join(out_dir, "report.csv")
    with open(csv_path, "w") as fh:
        fh.write(",".join(REPORT_COLUMNS) + "\n")
        for row in report.rows:
            fh.write(",".join(_fmt(row[c]) for c in REPORT_COLUMNS) + "\n")
    json_path = os.path.join(out_dir, "report.json")
    _write_json(json_path, {
        "config": config_to_dict(report.config),
        "axes": {"K": report.k_list, "snr_db": report.snr_list,
                 "trials": report.trials, "schemes": list(report.schemes)},
        "rows": report.rows,
    })
    return [csv_path, json_path]


def _write_manifest(out_dir: str, command: str, config: SceneConfig,
                    written: list[str], started: str, **extras) -> str:
    """Digest every output and write the manifest atomically, last."""
    manifest = {
        "tool": "vlp-sparse",
        "version": __version__,
        "command": command,
        "config": config_to_dict(config),
        "seed": config.seed,
        "started_utc": started,
        "finished_utc": datetime.now(timezone.utc).isoformat(),
        "outputs": [{"path": os.path.basename(p), "sha256": _sha256(p)}
                    for p in written],
        **extras,
    }
    manifest_path = os.path.join(out_dir, "manifest.json")
    tmp_path = manifest_path + ".tmp"
    _write_json(tmp_path, manifest)
    os.replace(tmp_path, manifest_path)
    return manifest_path


def cmd_sweep(config: SceneConfig, out_dir: str, k_list, snr_list,
              trials: int, jobs: int) -> int:
    """Run the campaign, write report files, then the manifest."""
    started = datetime.now(timezone.utc).isoformat()
    report = run_campaign(config, k_list, snr_list, trials, jobs=jobs)
    written = _write_report(report, out_dir)
    manifest_path = _write_manifest(
        out_dir, "sweep", config, written, started,
        sweep={"k_list": list(report.k_list), "snr_list": list(report.snr_list),
               "trials": report.trials, "schemes": list(report.schemes)})

    for path in written + [manifest_path]:
        print(path)
    dead_cells = [row for row in report.rows if row["failures"] == report.trials]
    if dead_cells:
        print(f"error: {len(dead_cells)} report cell(s) had 100% solver failure",
              file=sys.stderr)
        return 1
    return 0


def _parse_int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got '{text}'") from None


def _parse_float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got '{text}'") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH",
                        help="JSON config file (SceneConfig field names)")
    common.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE",
                        help="override a config key (pd.* reaches the optics)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out-dir", default=None,
                        help="output directory (default: $VLP_SPARSE_OUT or .)")
    common.add_argument("--jobs", type=int, default=1,
                        help="parallel workers for sweeps")

    parser = argparse.ArgumentParser(
        prog="vlp-sparse",
        description="Sparse-recovery simulation of cooperative multi-target "
                    "visible light positioning")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("fingerprint", parents=[common],
                   help="write gain matrix and fingerprint databases as CSV")

    sim = sub.add_parser("simulate", parents=[common],
                         help="run one trial and write a scatter table")
    sim.add_argument("--K", type=int, help="number of targets")
    sim.add_argument("--scheme", choices=SCHEMES)
    sim.add_argument("--solver", choices=SOLVERS)
    sim.add_argument("--dump-measurements", action="store_true",
                     help="also write the raw measurement vector(s)")

    base = sub.add_parser("baseline", parents=[common],
                          help="run one RSS-lateration trial")
    base.add_argument("--K", type=int, help="number of targets")
    base.add_argument("--dump-measurements", action="store_true")

    sweep = sub.add_parser("sweep", parents=[common],
                           help="Monte-Carlo campaign over K and SNR")
    sweep.add_argument("--solver", choices=SOLVERS)
    sweep.add_argument("--K-list", default="2,4,6,8,10", metavar="K1,K2,...")
    sweep.add_argument("--snr-list", default="20", metavar="DB1,DB2,...")
    sweep.add_argument("--trials", type=int, default=200)
    sweep.add_argument("--from-manifest", metavar="PATH",
                       help="rerun the sweep recorded in a manifest")
    return parser


def _effective_config(args, base: SceneConfig | None = None) -> SceneConfig:
    config = base
    if config is None:
        config = load_config(args.config) if args.config else SceneConfig()
    if args.overrides:
        config = apply_overrides(config, args.overrides)
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if getattr(args, "K", None) is not None:
        updates["targets_k"] = args.K
    if getattr(args, "scheme", None) is not None:
        updates["scheme"] = args.scheme
    if getattr(args, "solver", None) is not None:
        updates["solver"] = args.solver
    return dataclasses.replace(config, **updates) if updates else config


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    out_dir = args.out_dir or os.environ.get("VLP_SPARSE_OUT") or "."
    try:
        if args.command == "sweep" and args.from_manifest:
            with open(args.from_manifest) as fh:
                manifest = json.load(fh)
            if "config" not in manifest or "sweep" not in manifest:
                raise ConfigError(f"{args.from_manifest}: not a sweep manifest")
            config = _effective_config(
                args, base=config_from_dict(manifest["config"]))
            k_list = manifest["sweep"]["k_list"]
            snr_list = manifest["sweep"]["snr_list"]
            trials = manifest["sweep"]["trials"]
        elif args.command == "sweep":
            config = _effective_config(args)
            k_list = _parse_int_list(args.K_list)
            snr_list = _parse_float_list(args.snr_list)
            trials = args.trials
        else:
            config = _effective_config(args)

        os.makedirs(out_dir, exist_ok=True)
        if args.command in ("fingerprint", "simulate", "baseline"):
            started = datetime.now(timezone.utc).isoformat()
            if args.command == "fingerprint":
                written = cmd_fingerprint(config, out_dir)
            else:
                if args.command == "baseline":
                    config = dataclasses.replace(config, scheme="rss_baseline")
                written = cmd_simulate(config, out_dir, args.dump_measurements)
            written.append(_write_manifest(out_dir, args.command, config,
                                           written, started))
            for path in written:
                print(path)
            return 0
        if args.command == "sweep":
            return cmd_sweep(config, out_dir, k_list, snr_list, trials,
                             jobs=args.jobs)
        raise ConfigError(f"unknown command '{args.command}'")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
