"""End-to-end run on simulated flights: simulate, preprocess, train, bounds, curves.

    python3 scripts/synthetic_study.py OUT_DIR [--flights 3] [--repetitions 10] [--config configs/quick_study.json]
"""
import argparse
from pathlib import Path

from aerosurrogate.cli import main as cli

ROOT = Path(__file__).parents[1]


def run(*args):
    code = cli([str(a) for a in args])
    if code != 0:
        raise SystemExit(f"step {args[0]} failed with exit code {code}")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out", type=Path)
    ap.add_argument("--flights", type=int, default=3)
    ap.add_argument("--repetitions", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--config", default=ROOT / "configs" / "quick_study.json")
    a = ap.parse_args()
    o, cfg = a.out, a.config

    run("simulate", "--config", cfg, "--n-flights", a.flights, "--seed", a.seed, "--out", o / "sim")
    run("preprocess", "--config", cfg, o / "sim" / "flights", "--out", o / "pre")
    run("train", "--config", cfg, o / "pre" / "dataset.csv", "--repetitions", a.repetitions, "--seed", a.seed,
        "--out", o / "train")
    run("bounds", "--config", cfg, "--experiment", o / "train", "--dataset", o / "pre" / "dataset.csv",
        "--out", o / "bounds")
    for fam in ("polynomial", "tree", "gbt"):
        run("curves", "--config", cfg, o / "train" / "models" / f"cd_{fam}.json", "--out", o / "curves" / fam)

    for t in ("cd", "cl"):
        print(f"\n{t}: " + (o / "train" / f"table_{t}.csv").read_text())
        print((o / "bounds" / f"bounds_{t}.csv").read_text())


if __name__ == "__main__":
    main()
