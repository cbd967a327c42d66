"""Print absolute and relative total-error bounds from MAE means stored in a config.

    python3 scripts/reproduce_bound_table.py [configs/reference_bounds.json]
"""
import sys
from pathlib import Path

from aerosurrogate.core import load_config
from aerosurrogate.learn import FAMILIES, bound_report

NAMES = {"constant": "Constant", "linear": "Linear", "polynomial": "Polynomial", "svr": "SVM",
         "knn": "k-NN", "tree": "Decision tree", "forest": "Random forest", "gbt": "Gradient boosting"}


def main(path):
    bounds = load_config(path).extra["bounds"]
    rows = {t: bound_report({f: b["mae_means"][f] for f in FAMILIES}, b["r"], b["mean_phi"])
            for t, b in bounds.items()}
    print(f"{'model':20s} {'drag abs':>10s} {'drag %':>7s} {'lift abs':>10s} {'lift %':>7s}")
    for d, l in zip(rows["cd"], rows["cl"]):
        print(f"{NAMES[d.family]:20s} {d.total_abs:10.3e} {d.total_rel_pct:7.2f} {l.total_abs:10.3e} {l.total_rel_pct:7.2f}")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else Path(__file__).parents[1] / "configs" / "reference_bounds.json")
