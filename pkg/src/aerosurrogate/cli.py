"""Command-line pipeline: simulate -> preprocess -> train -> bounds, plus curves.

Exit codes: 0 success, 1 data or runtime error, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, physics, preprocess, simgen
from .core import Config, ConfigError, load_config, read_dataset_csv, write_dataset_csv, write_rows
from .learn import FAMILIES, TrainedEstimator, bound_report, prediction_curves, run_experiment
from .learn.experiment import read_table_csv, stream_seed, write_bounds_csv

DEFAULT_ALPHAS_DEG = (2.0, 2.25, 2.5, 2.75, 3.0)
DEFAULT_MACH_RANGE = (0.77, 0.80)


class UsageError(Exception):
    pass


@dataclass
class RunManifest:
    command: str
    config_digest: str
    seed: int | None
    inputs: list[str] = field(default_factory=list)
    outputs: list[str] = field(default_factory=list)
    timings_s: dict[str, float] = field(default_factory=dict)
    tool_version: str = __version__

    def write(self, out: Path) -> Path:
        path = out / "manifest.json"
        doc = {"command": self.command, "config_digest": self.config_digest, "seed": self.seed,
               "inputs": self.inputs, "outputs": sorted(self.outputs), "timings_s": self.timings_s,
               "tool_version": self.tool_version}
        path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
        return path


class _Timer:
    def __init__(self, manifest: RunManifest, stage: str):
        self.m, self.stage = manifest, stage

    def __enter__(self):
        self.t0 = time.perf_counter()

    def __exit__(self, *exc):
        self.m.timings_s[self.stage] = round(time.perf_counter() - self.t0, 6)


def _rel(path: Path, out: Path) -> str:
    try:
        return str(path.relative_to(out))
    except ValueError:
        return str(path)


def _targets(arg: str) -> tuple[str, ...]:
    return ("cd", "cl") if arg == "both" else (arg,)


# --- commands --------------------------------------------------------------------------

def cmd_simulate(config: Config, n_flights: int, seed: int, out: Path) -> RunManifest:
    man = RunManifest("simulate", config.digest(), seed)
    settings = simgen.SimulationSettings.from_dict(config.extra.get("simulation", {}))
    polar = simgen.GroundTruthPolar(**{k: tuple(v) if isinstance(v, list) else v
                                       for k, v in config.extra.get("polar", {}).items()})
    (out / "flights").mkdir(parents=True, exist_ok=True)
    (out / "truth").mkdir(parents=True, exist_ok=True)
    with _Timer(man, "simulate"):
        for i in range(n_flights):
            fid = f"F{i:04d}"
            profile = simgen.random_profile(np.random.default_rng([seed, i]), fid, settings)
            try:
                frame, trace = simgen.generate(polar, profile, config.engine, seed=stream_seed(seed, i, 1))
            except simgen.SimulationError as exc:
                raise simgen.SimulationError(f"flight {fid}: {exc}") from exc
            fp, tp = out / "flights" / f"{fid}.csv", out / "truth" / f"{fid}_truth.csv"
            simgen.write_raw_csv(frame, fp)
            simgen.write_truth_csv(trace, tp)
            man.outputs += [_rel(fp, out), _rel(tp, out)]
    return man


def _flight_files(paths: list[str]) -> list[Path]:
    files = []
    for p in map(Path, paths):
        if p.is_dir():
            files += sorted(q for q in p.glob("*.csv") if not q.name.endswith("_truth.csv"))
        else:
            files.append(p)
    return files


def cmd_preprocess(config: Config, flights: list[str], out: Path) -> RunManifest:
    man = RunManifest("preprocess", config.digest(), config.pipeline.seed)
    files = _flight_files(flights)
    man.inputs = [str(f) for f in files]
    frames = []
    with _Timer(man, "ingest"):
        for f in files:
            try:
                frames.append(preprocess.to_si(preprocess.read_raw_csv(f), flight_id=f.stem))
            except (preprocess.SchemaError, ValueError) as exc:
                raise preprocess.SchemaError(f"{f}: {exc}") from exc
    with _Timer(man, "preprocess"):
        dataset, reports = preprocess.preprocess_flights(frames, config, "cd")
    out.mkdir(parents=True, exist_ok=True)
    ds_path, rep_path = out / "dataset.csv", out / "segmentation.json"
    write_dataset_csv(dataset, ds_path)
    rep_path.write_text(json.dumps({"phase": config.pipeline.phase,
                                    "flights": [r.to_dict() for r in reports]}, indent=1, sort_keys=True) + "\n")
    man.outputs += [_rel(ds_path, out), _rel(rep_path, out)]
    return man


def cmd_train(config: Config, dataset_path: str, families: tuple[str, ...], repetitions: int, seed: int,
              target: str, out: Path) -> RunManifest:
    man = RunManifest("train", config.digest(), seed, inputs=[dataset_path])
    out.mkdir(parents=True, exist_ok=True)
    (out / "models").mkdir(exist_ok=True)
    exp_cfg = config.extra.get("experiment", {})
    for t in _targets(target):
        ds = read_dataset_csv(dataset_path, t)
        with _Timer(man, f"train_{t}"), warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)  # infeasible knn candidates on small folds
            res = run_experiment(ds, families, repetitions, seed, config.pipeline.split_fractions,
                                 grids=exp_cfg.get("grids"), k=int(exp_cfg.get("folds", 3)),
                                 by_flight=config.pipeline.split_by_flight)
        csv_p, json_p = out / f"table_{t}.csv", out / f"table_{t}.json"
        res.write_csv(csv_p)
        res.write_json(json_p)
        man.outputs += [_rel(csv_p, out), _rel(json_p, out)]
        for fam, est in res.best_models.items():
            mp = out / "models" / f"{t}_{fam}.json"
            est.save(mp)
            man.outputs.append(_rel(mp, out))
    return man


def cmd_bounds(config: Config, experiment: str | None, dataset_path: str | None, target: str,
               out: Path) -> tuple[RunManifest, list[str]]:
    """Per-family total-error bounds; climb data gets the learning-error table only."""
    man = RunManifest("bounds", config.digest(), None)
    out.mkdir(parents=True, exist_ok=True)
    notes = []
    overrides = config.extra.get("bounds", {})
    for t in _targets(target):
        ov = overrides.get(t, {})
        if "mae_means" in ov:
            unknown = sorted(set(ov["mae_means"]) - set(FAMILIES))
            if unknown:
                raise ConfigError(f"bounds.{t}.mae_means: unknown families {unknown}")
            mae = {k: float(ov["mae_means"][k]) for k in FAMILIES if k in ov["mae_means"]}
        elif experiment is not None:
            table_p = Path(experiment) / f"table_{t}.csv"
            man.inputs.append(str(table_p))
            mae = {fam: row["mae_mean"] for fam, row in read_table_csv(table_p).items()}
        else:
            raise UsageError(f"bounds for {t} need --experiment or MAE means in the config")
        path = out / f"bounds_{t}.csv"
        if not config.pipeline.bounds_available:
            write_rows(path, ("family", "mae_mean"), sorted(mae.items(), key=lambda kv: FAMILIES.index(kv[0])))
            notes.append(f"{t}: physical error bound not available for the {config.pipeline.phase} phase "
                         "(no fuel-consumption error mean is known there); wrote learning errors only")
            man.outputs.append(_rel(path, out))
            continue
        r, mean_phi = ov.get("r"), ov.get("mean_phi")
        if r is None or mean_phi is None:
            if dataset_path is None:
                raise UsageError(f"bounds for {t} need --dataset or r and mean_phi in the config")
            ds = read_dataset_csv(dataset_path, t)
            if str(dataset_path) not in man.inputs:
                man.inputs.append(str(dataset_path))
            k_cd, k_cl = physics.k_constants(ds, config.engine)
            if r is None:
                r = physics.physical_bound(k_cd if t == "cd" else k_cl, config.pipeline.csr_rel_error)
            if mean_phi is None:
                mean_phi = float(np.mean(ds.y))
        rows = bound_report(mae, float(r), float(mean_phi))
        if any(row.total_rel_pct is None for row in rows):
            notes.append(f"{t}: mean surrogate {mean_phi:.4g} does not exceed r={r:.4g}; relative bound N/A")
        write_bounds_csv(rows, path)
        man.outputs.append(_rel(path, out))
    return man, notes


def cmd_curves(config: Config, model_path: str, alphas_deg, mach_range, mach_points: int,
               out: Path) -> tuple[RunManifest, list[str]]:
    man = RunManifest("curves", config.digest(), None, inputs=[model_path])
    est = TrainedEstimator.load(model_path)
    lo, hi = mach_range
    if mach_points < 1 or not hi > lo:
        raise UsageError("empty Mach range")
    alphas = np.radians(np.asarray(alphas_deg, float))
    notes = []
    if est.support is not None:
        (a_lo, _), (a_hi, _) = est.support
        outside = [a for a in alphas if a < a_lo or a > a_hi]
        if outside:
            notes.append("angles of attack outside the training support: "
                         + ", ".join(f"{math.degrees(a):.3g} deg" for a in outside))
    mach = np.linspace(lo, hi, mach_points) if mach_points > 1 else np.array([lo])
    curves = prediction_curves(est, alphas, mach)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "curves.csv"
    curves.write_csv(path)
    man.outputs.append(_rel(path, out))
    return man, notes


# --- argument parsing ------------------------------------------------------------------

def _float_list(s: str) -> list[float]:
    try:
        vals = [float(v) for v in s.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc
    return vals


def _families(s: str) -> tuple[str, ...]:
    fams = tuple(f.strip() for f in s.split(",") if f.strip())
    bad = [f for f in fams if f not in FAMILIES]
    if bad or not fams:
        raise argparse.ArgumentTypeError(f"unknown families {bad}; choose from {','.join(FAMILIES)}")
    return fams


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("--phase", choices=("cruise", "climb"), help="flight phase (overrides config)")

    ap = argparse.ArgumentParser(prog="aerosurrogate", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="write synthetic flights and ground truth")
    s.add_argument("--n-flights", type=int, default=10)
    s.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("preprocess", parents=[common], help="flight CSVs -> observation dataset")
    s.add_argument("flights", nargs="+", help="flight CSV files or directories")

    s = sub.add_parser("train", parents=[common], help="repeated CV experiment over the model zoo")
    s.add_argument("dataset")
    s.add_argument("--families", type=_families, default=FAMILIES)
    s.add_argument("--repetitions", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--target", choices=("cd", "cl", "both"), default="both")

    s = sub.add_parser("bounds", parents=[common], help="total-error bound tables")
    s.add_argument("--experiment", help="train output directory holding table_<target>.csv")
    s.add_argument("--dataset", help="dataset CSV for K constants and mean surrogate values")
    s.add_argument("--target", choices=("cd", "cl", "both"), default="both")

    s = sub.add_parser("curves", parents=[common], help="prediction curves along Mach")
    s.add_argument("model")
    s.add_argument("--alphas", type=_float_list, default=None, help="angles of attack in degrees")
    s.add_argument("--mach-range", type=_float_list, default=None, help="lo,hi")
    s.add_argument("--mach-points", type=int, default=None)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)  # exits with status 2 on usage errors
    out = Path(args.out)
    try:
        config = load_config(args.config)
        if args.phase:
            config = config.with_phase(args.phase)
        notes: list[str] = []
        if args.command == "simulate":
            if args.n_flights < 0:
                raise UsageError("--n-flights must be >= 0")
            man = cmd_simulate(config, args.n_flights, args.seed, out)
        elif args.command == "preprocess":
            man = cmd_preprocess(config, args.flights, out)
        elif args.command == "train":
            if args.repetitions < 1:
                raise UsageError("--repetitions must be >= 1")
            man = cmd_train(config, args.dataset, args.families, args.repetitions, args.seed, args.target, out)
        elif args.command == "bounds":
            man, notes = cmd_bounds(config, args.experiment, args.dataset, args.target, out)
        else:
            cc = config.extra.get("curves", {})
            alphas = args.alphas if args.alphas is not None else cc.get("alphas_deg", DEFAULT_ALPHAS_DEG)
            mrange = args.mach_range if args.mach_range is not None else cc.get("mach_range", DEFAULT_MACH_RANGE)
            points = args.mach_points if args.mach_points is not None else int(cc.get("mach_points", 50))
            if len(mrange) != 2 or not alphas:
                raise UsageError("need --mach-range lo,hi and at least one angle of attack")
            man, notes = cmd_curves(config, args.model, alphas, mrange, points, out)
    except UsageError as exc:
        ap.print_usage(sys.stderr)
        print(f"aerosurrogate: error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, OSError, ValueError, RuntimeError, KeyError) as exc:
        print(f"aerosurrogate: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    for n in notes:
        print(f"aerosurrogate: {n}", file=sys.stderr)
    man.write(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
