"""Continuous-time poles of the linearized lateral/roll model across steering operating points."""

import argparse
import math

import numpy as np

from rollgov.harness import ExperimentConfig, Toolkit
from rollgov.linear import linearize


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--config", help="experiment config (JSON)")
    p.add_argument("--points", nargs="+", type=float, default=[0, 20, 40, 60, 80, 100, 120, 130, 140, 150])
    args = p.parse_args()
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    tk = Toolkit(cfg)
    for deg in args.points:
        m = linearize(tk.params, tk.tire, cfg.speed, math.radians(deg))
        poles = np.sort_complex(np.linalg.eigvals(m.A))
        print(f"{deg:6.1f} deg  " + "  ".join(f"{z.real:8.3f}{z.imag:+8.3f}j" for z in poles))


if __name__ == "__main__":
    main()
