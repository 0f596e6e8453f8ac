"""Command-line front end: ``momtopo simulate | estimate | report``.

``simulate`` writes ``trial_0001.trial`` ... plus ``manifest.json``;
``estimate`` reads a directory of trials and writes ``report.json`` and
``errors.csv``; ``report`` summarizes ``report.json``.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure
(outputs written so far are kept).
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
import yaml

from .errors import DivergenceError, TrialFormatError
from .estimator import EstimatorConfig, select_topology
from .exploration import FREQUENCY_FLOOR, sample_sinusoid
from .fixtures import get_fixture
from .sim import SimConfig, default_initial_position, run_trial
from .store import read_trial, write_trial

OUTPUT_ENV = "MOMTOPO_OUTPUT_DIR"
MANIFEST_SCHEMA = "campaign/v1"
REPORT_SCHEMA = "report/v1"
CSV_HEADER = "# momtopo errors.csv v1"
CSV_COLUMNS = ("trial", "candidate", "error", "selected", "inconclusive")
# Extra draws allowed per requested trial when only moving trials are kept.
MAX_DRAWS_PER_TRIAL = 20

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class ConfigError(Exception):
    pass


class CampaignError(Exception):
    pass


@dataclass
class CampaignConfig:
    fixture: str = "revolute-demo"
    trials: int = 10
    seed: int = 0
    duration: float = 5.0
    dt: float = 0.001
    smoothing_window: int = 5
    parallelism: int = 1
    output_dir: str = "momtopo-out"
    excitation: str = "motion"
    require_moving: bool = False
    frequency_floor: float = FREQUENCY_FLOOR

    def validate(self):
        if not isinstance(self.trials, int) or self.trials < 1:
            raise ConfigError("trials must be an integer >= 1")
        if not self.duration > 0:
            raise ConfigError("duration must be positive")
        if not 0 < self.dt <= self.duration:
            raise ConfigError("dt must be positive and no longer than the duration")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")
        if self.smoothing_window < 1 or self.smoothing_window % 2 == 0:
            raise ConfigError("smoothing_window must be a positive odd integer")
        if self.excitation not in ("motion", "constrained"):
            raise ConfigError("excitation must be 'motion' or 'constrained'")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _load_config_file(path):
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping")
    known = {f.name for f in fields(CampaignConfig)}
    data = {k.replace("-", "_"): v for k, v in data.items()}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return data


def campaign_config(args) -> CampaignConfig:
    """Merge defaults, config file, environment and flags (flags win)."""
    values = {}
    if args.config:
        values.update(_load_config_file(args.config))
    if os.environ.get(OUTPUT_ENV):
        values["output_dir"] = os.environ[OUTPUT_ENV]
    for f in fields(CampaignConfig):
        given = getattr(args, f.name, None)
        if given is not None:
            values[f.name] = given
    try:
        cfg = CampaignConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    cfg.validate()
    return cfg


# -- simulate -----------------------------------------------------------------


def _attempt(job):
    try:
        return run_trial(**job), None
    except DivergenceError as exc:
        return None, str(exc)


def _jobs(cfg, fixture, seeds):
    mask = fixture.motion_mask if cfg.excitation == "motion" else fixture.constrained_mask
    q0 = fixture.initial_position
    if q0 is None:
        q0 = default_initial_position(fixture.spec)
    for seed in seeds:
        signal = sample_sinusoid(np.random.default_rng(seed), mask, cfg.frequency_floor)
        sim_cfg = SimConfig(dt=cfg.dt, duration=cfg.duration, seed=seed)
        yield {
            "spec": fixture.spec,
            "topology": fixture.topology,
            "signal": signal,
            "cfg": sim_cfg,
            "q0": np.array(q0, dtype=float),
            "metadata": {"fixture": fixture.name, "excitation": cfg.excitation},
        }


def _trial_seeds(seed, count):
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(count)]


def cmd_simulate(cfg: CampaignConfig, out=None):
    out = out or sys.stdout
    try:
        fixture = get_fixture(cfg.fixture)
    except (OSError, ValueError, KeyError, TypeError, yaml.YAMLError) as exc:
        raise ConfigError(f"fixture {cfg.fixture!r}: {exc}") from None
    mask = fixture.motion_mask if cfg.excitation == "motion" else fixture.constrained_mask
    if mask == 0:
        raise ConfigError(f"fixture {fixture.name} has no {cfg.excitation} components")
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)

    draws = cfg.trials * (MAX_DRAWS_PER_TRIAL if cfg.require_moving else 1)
    seeds = _trial_seeds(cfg.seed, draws)
    min_motion = EstimatorConfig().min_motion_fraction
    entries = []
    kept = 0
    pool = ProcessPoolExecutor(cfg.parallelism) if cfg.parallelism > 1 else None
    try:
        batch = cfg.parallelism
        pos = 0
        while kept < cfg.trials and pos < len(seeds):
            chunk = seeds[pos : pos + max(batch, cfg.trials - kept)]
            pos += len(chunk)
            jobs = list(_jobs(cfg, fixture, chunk))
            results = pool.map(_attempt, jobs) if pool else map(_attempt, jobs)
            for seed, (record, failure) in zip(chunk, results):
                if kept >= cfg.trials:
                    break
                moving = record is not None and record.motion_fraction >= min_motion
                if cfg.require_moving and record is not None and not moving:
                    continue
                kept += 1
                name = f"trial_{kept:04d}"
                entry = {"trial": name, "seed": seed}
                if record is None:
                    entry.update(status="failed", error=failure)
                    print(f"{name}: FAILED ({failure})", file=out)
                else:
                    record.metadata["trial"] = name
                    write_trial(record, outdir / f"{name}.trial")
                    entry.update(status="ok", moving=moving, motion_fraction=record.motion_fraction)
                    print(f"{name}: seed {seed} motion {record.motion_fraction:.3f}", file=out)
                entries.append(entry)
    finally:
        if pool:
            pool.shutdown()

    manifest = {
        "schema": MANIFEST_SCHEMA,
        "config": {k: v for k, v in asdict(cfg).items() if k not in ("output_dir", "parallelism")},
        "fixture": fixture.name,
        "fixture_hash": fixture.spec.digest(),
        "true_topology": str(fixture.topology),
        "trials": entries,
    }
    with open(outdir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if kept < cfg.trials:
        raise CampaignError(f"only {kept} of {cfg.trials} moving trials after {len(seeds)} draws")
    failed = sum(e["status"] == "failed" for e in entries)
    if failed:
        raise CampaignError(f"{failed} of {len(entries)} trials diverged")
    return manifest


# -- estimate -----------------------------------------------------------------


def _estimate_one(args):
    path, window = args
    try:
        record = read_trial(path)
        report = select_topology(record, config=EstimatorConfig(smoothing_window=window))
    except (TrialFormatError, ValueError, KeyError) as exc:
        return None, f"{type(exc).__name__}: {exc}"
    errors = [e.error for e in report.errors]
    hi, lo = max(errors), min(errors)
    return {
        "trial": Path(path).stem,
        "fixture": record.metadata.get("fixture", record.metadata.get("object", {}).get("name", "")),
        "true_topology": record.metadata.get("true_topology", ""),
        "errors": [{"candidate": str(e.topology), "error": e.error} for e in report.errors],
        "selected": str(report.selected),
        "inconclusive": report.inconclusive,
        "motion_fraction": report.motion_fraction,
        "separation": (hi - lo) / max(hi, EstimatorConfig().eps_abs),
    }, None


def _csv_float(x):
    return repr(float(x))


def cmd_estimate(input_dir, output_dir=None, smoothing_window=5, parallelism=1, out=None):
    out = out or sys.stdout
    indir = Path(input_dir)
    if not indir.is_dir():
        raise CampaignError(f"{indir} is not a directory")
    paths = sorted(indir.glob("*.trial"))
    if not paths:
        raise CampaignError(f"no trials found in {indir}")
    jobs = [(str(p), smoothing_window) for p in paths]
    if parallelism > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(parallelism) as pool:
            results = list(pool.map(_estimate_one, jobs))
    else:
        results = [_estimate_one(j) for j in jobs]

    trials, skipped = [], []
    for path, (row, err) in zip(paths, results):
        if row is None:
            skipped.append({"file": path.name, "error": err})
            print(f"skipped {path.name}: {err}", file=out)
        else:
            trials.append(row)
    outdir = Path(output_dir) if output_dir else indir
    outdir.mkdir(parents=True, exist_ok=True)
    report = {"schema": REPORT_SCHEMA, "smoothing_window": smoothing_window, "trials": trials, "skipped": skipped}
    with open(outdir / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    lines = [CSV_HEADER, ",".join(CSV_COLUMNS)]
    for row in trials:
        for e in row["errors"]:
            chosen = int(e["candidate"] == row["selected"])
            lines.append(f"{row['trial']},{e['candidate']},{_csv_float(e['error'])},{chosen},{int(row['inconclusive'])}")
    with open(outdir / "errors.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"estimated {len(trials)} trials, skipped {len(skipped)}", file=out)
    if not trials:
        raise CampaignError("no readable trials")
    return report


# -- report -------------------------------------------------------------------


def summarize(report):
    """Per-fixture counts of correct, inconclusive and wrong selections."""
    groups = {}
    for row in report["trials"]:
        g = groups.setdefault(row["fixture"] or "unnamed", {"correct": 0, "inconclusive": 0, "wrong": 0, "sep": []})
        if row["inconclusive"]:
            g["inconclusive"] += 1
        elif row["selected"] == row["true_topology"]:
            g["correct"] += 1
        else:
            g["wrong"] += 1
        g["sep"].append(row["separation"])
    return {
        name: {
            "correct": g["correct"],
            "inconclusive": g["inconclusive"],
            "wrong": g["wrong"],
            "total": len(g["sep"]),
            "mean_separation": float(np.mean(g["sep"])),
        }
        for name, g in sorted(groups.items())
    }


def cmd_report(input_dir, out=None):
    out = out or sys.stdout
    path = Path(input_dir) / "report.json"
    try:
        with open(path, encoding="utf-8") as fh:
            report = json.load(fh)
    except FileNotFoundError:
        raise CampaignError(f"no estimation outputs in {input_dir} (run 'momtopo estimate' first)") from None
    except json.JSONDecodeError as exc:
        raise CampaignError(f"{path}: {exc}") from None
    summary = summarize(report)
    for name, s in summary.items():
        print(
            f"{name}: {s['correct']}/{s['total']} correct, {s['inconclusive']} inconclusive, "
            f"{s['wrong']} wrong, mean separation {s['mean_separation']:.3f}",
            file=out,
        )
    if report.get("skipped"):
        print(f"skipped files: {', '.join(s['file'] for s in report['skipped'])}", file=out)
    return summary


# -- entry point --------------------------------------------------------------


def build_parser():
    parser = _Parser(prog="momtopo", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sim = sub.add_parser("simulate", help="run an exploration campaign and write trial files")
    sim.add_argument("--config", help="YAML file with campaign settings (same keys as the flags)")
    sim.add_argument("--fixture", help="revolute-demo, prismatic-demo or a fixture YAML path")
    sim.add_argument("--trials", type=int)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--duration", type=float)
    sim.add_argument("--dt", type=float)
    sim.add_argument("--smoothing-window", dest="smoothing_window", type=int)
    sim.add_argument("--parallelism", type=int)
    sim.add_argument("--output-dir", dest="output_dir")
    sim.add_argument("--excitation", choices=("motion", "constrained"))
    sim.add_argument("--require-moving", dest="require_moving", action="store_true", default=None,
                     help="draw extra seeds until every kept trial moved")
    sim.add_argument("--frequency-floor", dest="frequency_floor", type=float)

    est = sub.add_parser("estimate", help="score every candidate topology for each trial")
    est.add_argument("input_dir")
    est.add_argument("--output-dir", dest="output_dir")
    est.add_argument("--smoothing-window", dest="smoothing_window", type=int, default=5)
    est.add_argument("--parallelism", type=int, default=1)

    rep = sub.add_parser("report", help="summarize estimation results")
    rep.add_argument("input_dir")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            cmd_simulate(campaign_config(args))
        elif args.command == "estimate":
            if args.smoothing_window < 1 or args.smoothing_window % 2 == 0:
                raise ConfigError("smoothing window must be a positive odd integer")
            if args.parallelism < 1:
                raise ConfigError("parallelism must be >= 1")
            output_dir = args.output_dir or os.environ.get(OUTPUT_ENV)
            cmd_estimate(args.input_dir, output_dir, args.smoothing_window, args.parallelism)
        else:
            cmd_report(args.input_dir)
    except ConfigError as exc:
        print(f"momtopo: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CampaignError, OSError) as exc:
        print(f"momtopo: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
