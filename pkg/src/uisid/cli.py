"""Command-line front end: simulate, fit, experiment, report.

Batch-oriented: a single JSON config describes a whole Monte-Carlo
campaign, every default is pre-filled, and repeated invocations with the
same config and master seed reproduce every output byte regardless of
the worker count.  Results accumulate in an append-only CSV so long
campaigns can resume; a completed experiment rewrites the file in
canonical (run_id, estimator, target) order.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import copy
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from .bench import CascadeDataset, DatasetSpec, generate_dataset, load_dataset, write_dataset
from .runner import (
    UsageError,
    allowed_estimators,
    dataset_spec,
    fit_dataset,
    run_experiment_job,
)

RESULT_FIELDS = ("run_id", "estimator", "target", "fit")

CASCADE_DEFAULTS = {
    "dataset": {"kind": "cascade", "n": 200, "runs": 20, "noise_ratio_v": 1.0, "noise_ratio_y": 0.01},
    "estimators": ["mcem", "vbem", "two-stage", "naive"],
    "em": {"rel_tol": 1e-2, "max_outer": 50},
    "chain": {"burn_in": 400, "retained": 2000},
    "vb": {"tol": 1e-6, "max_iter": 500},
    "seeds": {"master": 0},
}

HAMMERSTEIN_DEFAULTS = {
    "dataset": {"kind": "hammerstein", "n": 200, "runs": 20, "orders": "lolo", "noise_ratio_y": 0.01},
    "estimators": ["semiparam", "mcem", "vbem"],
    "em": {"rel_tol": 1e-2, "max_outer": 50},
    "chain": {"burn_in": 200, "retained": 500},
    "vb": {"tol": 1e-6, "max_iter": 500},
    "seeds": {"master": 0},
}


class ConfigError(ValueError):
    pass


def default_config(kind: str) -> dict:
    if kind == "cascade":
        return copy.deepcopy(CASCADE_DEFAULTS)
    if kind == "hammerstein":
        return copy.deepcopy(HAMMERSTEIN_DEFAULTS)
    raise ConfigError(f"dataset.kind must be 'cascade' or 'hammerstein', got {kind!r}")


def load_config(path) -> dict:
    """Read a config file and fill every omitted key with its default.

    The only required key is ``dataset.kind``; everything else falls back
    to the benchmark defaults for that kind.  Unknown keys are rejected
    so typos do not silently vanish into the defaults.
    """
    with open(path) as fh:
        user = json.load(fh)
    if "dataset" not in user:
        raise ConfigError("missing config key: dataset")
    if "kind" not in user["dataset"]:
        raise ConfigError("missing config key: dataset.kind")
    cfg = default_config(user["dataset"]["kind"])
    for section, value in user.items():
        if section == "estimators":
            cfg["estimators"] = list(value)
            continue
        if section not in cfg:
            raise ConfigError(f"unknown config key: {section}")
        if not isinstance(value, dict):
            raise ConfigError(f"config section {section!r} must be an object")
        for key, item in value.items():
            if key not in cfg[section]:
                raise ConfigError(f"unknown config key: {section}.{key}")
            cfg[section][key] = item
    kind = cfg["dataset"]["kind"]
    for name in cfg["estimators"]:
        if name not in allowed_estimators(kind):
            raise ConfigError(
                f"estimator {name!r} does not apply to {kind} datasets; choose from {allowed_estimators(kind)}"
            )
    return cfg


def _out_dir(args) -> Path:
    out = args.out or os.environ.get("UISID_OUT")
    if out is None:
        raise ConfigError("no output directory: pass --out or set UISID_OUT")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _apply_overrides(cfg: dict, args) -> dict:
    if getattr(args, "seed", None) is not None:
        cfg["seeds"]["master"] = int(args.seed)
    if getattr(args, "estimators", None):
        kind = cfg["dataset"]["kind"]
        for name in args.estimators:
            if name not in allowed_estimators(kind):
                raise ConfigError(
                    f"estimator {name!r} does not apply to {kind} datasets; choose from {allowed_estimators(kind)}"
                )
        cfg["estimators"] = list(args.estimators)
    return cfg


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    out = _out_dir(args)
    runs = int(cfg["dataset"]["runs"])
    resolved = []
    for run_id in range(runs):
        spec = dataset_spec(cfg, run_id)
        ds = generate_dataset(spec)
        write_dataset(ds, out / f"dataset_{run_id:04d}.csv", out / f"dataset_{run_id:04d}.json")
        resolved.append(spec.seed)
        print(f"run {run_id}: wrote dataset_{run_id:04d}.csv (seed {spec.seed})")
    echo = copy.deepcopy(cfg)
    echo["resolved_seeds"] = resolved
    with open(out / "config_resolved.json", "w") as fh:
        json.dump(echo, fh, sort_keys=True, indent=1)
    return 0


# ---------------------------------------------------------------------------
# fit


def cmd_fit(args) -> int:
    dataset_path = Path(args.dataset)
    sidecar = dataset_path.with_suffix(".json")
    ds = load_dataset(dataset_path, sidecar)
    kind = "cascade" if isinstance(ds, CascadeDataset) else "hammerstein"
    if args.config:
        cfg = load_config(args.config)
        if cfg["dataset"]["kind"] != kind:
            raise ConfigError(f"config is for {cfg['dataset']['kind']} datasets but {dataset_path} is {kind}")
    else:
        cfg = default_config(kind)
    if args.estimator not in allowed_estimators(kind):
        raise UsageError(
            f"estimator {args.estimator!r} does not apply to {kind} datasets; choose from {allowed_estimators(kind)}"
        )
    out = _out_dir(args)
    seed = int(args.seed) if args.seed is not None else int(ds.seed)
    outcome = fit_dataset(ds, args.estimator, cfg, seed=seed)

    payload = {
        "estimator": args.estimator,
        "fits": outcome.fits,
        "converged": bool(outcome.converged),
        "g_hat": None if outcome.g_hat is None else list(np.asarray(outcome.g_hat, dtype=float)),
        "w_hat": None if outcome.w_hat is None else list(np.asarray(outcome.w_hat, dtype=float)),
    }
    if outcome.tau is not None:
        payload["tau"] = {
            "rho": list(outcome.tau.rho),
            "theta": list(outcome.tau.theta),
            "sigma_y2": outcome.tau.sigma_y2,
            "sigma_v2": None if not np.isfinite(outcome.tau.sigma_v2) else outcome.tau.sigma_v2,
        }
    with open(out / "estimate.json", "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
    if outcome.result is not None:
        outcome.result.trace.to_csv(out / "trace.csv")
    for target in sorted(outcome.fits):
        print(f"{args.estimator} fit[{target}] = {outcome.fits[target]:.4f}")
    return 0 if outcome.converged else 2


# ---------------------------------------------------------------------------
# experiment


def _read_results(path: Path) -> list:
    rows = []
    if not path.exists():
        return rows
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            rows.append(
                {
                    "run_id": int(row["run_id"]),
                    "estimator": row["estimator"],
                    "target": row["target"],
                    "fit": float(row["fit"]),
                }
            )
    return rows


def _write_results(path: Path, rows: list):
    rows = sorted(rows, key=lambda r: (r["run_id"], r["estimator"], r["target"]))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_FIELDS)
        for r in rows:
            writer.writerow([r["run_id"], r["estimator"], r["target"], repr(float(r["fit"]))])


def _append_results(path: Path, rows: list):
    new_file = not path.exists()
    with open(path, "a", newline="") as fh:
        writer = csv.writer(fh)
        if new_file:
            writer.writerow(RESULT_FIELDS)
        for r in rows:
            writer.writerow([r["run_id"], r["estimator"], r["target"], repr(float(r["fit"]))])
        fh.flush()


def summarize_results(rows: list) -> dict:
    """Median and quartiles (linear interpolation) per estimator and target."""
    groups: dict = {}
    for r in rows:
        groups.setdefault((r["estimator"], r["target"]), []).append(r["fit"])
    summary = {}
    for (estimator, target), fits in sorted(groups.items()):
        values = np.array([f for f in fits if np.isfinite(f)])
        entry = {"count": len(fits), "missing": int(len(fits) - len(values))}
        if len(values):
            q1, med, q3 = np.percentile(values, [25.0, 50.0, 75.0])
            entry.update(
                {
                    "min": float(values.min()),
                    "q1": float(q1),
                    "median": float(med),
                    "q3": float(q3),
                    "max": float(values.max()),
                }
            )
        summary.setdefault(estimator, {})[target] = entry
    return summary


def run_experiment(cfg: dict, out: Path, workers: int) -> list:
    """Execute all missing runs and rewrite the canonical results file."""
    results_path = out / "results.csv"
    rows = _read_results(results_path)
    done = {r["run_id"] for r in rows}
    runs = int(cfg["dataset"]["runs"])
    pending = [run_id for run_id in range(runs) if run_id not in done]

    if pending:
        if workers > 1:
            with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
                futures = {pool.submit(run_experiment_job, cfg, run_id): run_id for run_id in pending}
                for future in concurrent.futures.as_completed(futures):
                    job_rows = future.result()
                    rows.extend(job_rows)
                    _append_results(results_path, job_rows)
                    print(f"run {futures[future]} done")
        else:
            for run_id in pending:
                job_rows = run_experiment_job(cfg, run_id)
                rows.extend(job_rows)
                _append_results(results_path, job_rows)
                print(f"run {run_id} done")

    rows = [r for r in rows if r["run_id"] < runs]
    _write_results(results_path, rows)
    with open(out / "summary.json", "w") as fh:
        json.dump(summarize_results(rows), fh, sort_keys=True, indent=1)
    return rows


def cmd_experiment(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    out = _out_dir(args)
    run_experiment(cfg, out, max(1, int(args.workers)))
    print(f"results in {out / 'results.csv'}")
    return 0


# ---------------------------------------------------------------------------
# report


def cmd_report(args) -> int:
    rows = _read_results(Path(args.results))
    if not rows:
        print("error: no result rows found", file=sys.stderr)
        return 1
    summary = summarize_results(rows)
    header = f"{'estimator':<12} {'target':<8} {'count':>5} {'min':>8} {'q1':>8} {'median':>8} {'q3':>8} {'max':>8}"
    print(header)
    print("-" * len(header))
    lines = []
    for estimator in sorted(summary):
        for target in sorted(summary[estimator]):
            e = summary[estimator][target]
            if "median" not in e:
                continue
            line = (
                f"{estimator:<12} {target:<8} {e['count']:>5} "
                f"{e['min']:>8.3f} {e['q1']:>8.3f} {e['median']:>8.3f} {e['q3']:>8.3f} {e['max']:>8.3f}"
            )
            print(line)
            lines.append((estimator, target, e))
    if args.out:
        out_path = Path(args.out)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        with open(out_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["estimator", "target", "count", "min", "q1", "median", "q3", "max"])
            for estimator, target, e in lines:
                writer.writerow(
                    [estimator, target, e["count"], repr(e["min"]), repr(e["q1"]), repr(e["median"]), repr(e["q3"]), repr(e["max"])]
                )
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uisid", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate benchmark datasets from a config")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit one estimator to one dataset")
    p.add_argument("--dataset", required=True, help="dataset CSV (sidecar JSON alongside)")
    p.add_argument("--estimator", required=True)
    p.add_argument("--config")
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("experiment", help="run a Monte-Carlo campaign")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--estimators", nargs="+")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("report", help="five-number summaries of a results CSV")
    p.add_argument("--results", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
