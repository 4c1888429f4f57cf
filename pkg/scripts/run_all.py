"""Run every shipped experiment config and print a summary of each.

Sweeps go to ``out/<config name>/metrics.csv``, Monte Carlo configs to
``out/<config name>/montecarlo.csv``.
"""

import argparse
import sys
from pathlib import Path

from rollgov.cli import main as cli

ROOT = Path(__file__).resolve().parents[1]


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("names", nargs="*", help="config names (default: all in configs/)")
    p.add_argument("--out", default="out")
    args = p.parse_args()
    configs = sorted((ROOT / "configs").glob("*.json"))
    if args.names:
        configs = [c for c in configs if c.stem in args.names]
    status = 0
    for path in configs:
        out = Path(args.out) / path.stem
        print(f"== {path.stem}")
        if path.stem.startswith("montecarlo"):
            status |= cli(["montecarlo", "--config", str(path), "--out", str(out)])
        else:
            status |= cli(["sweep", "--config", str(path), "--out", str(out)])
            cli(["report", str(out / "metrics.csv"), "--baseline", "NRG4"])
    return status


if __name__ == "__main__":
    sys.exit(main())
