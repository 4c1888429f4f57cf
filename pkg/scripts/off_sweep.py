"""Ungoverned sine-with-dwell sweep: peak roll, LTR and wheel lift per amplitude."""

import argparse
import math
from pathlib import Path

import numpy as np

from rollgov.harness import ExperimentConfig, Toolkit, run_closed_loop, write_csv


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--config", help="experiment config (JSON)")
    p.add_argument("--out", default="out/off_sweep.csv")
    args = p.parse_args()
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    tk = Toolkit(cfg)
    rows = []
    for a in cfg.amplitudes_deg:
        rec = run_closed_loop(tk, tk.governor("off"), cfg.maneuver(a), noise={})
        tr = rec.traces
        rows.append({"amplitude_deg": a, "max_roll_deg": math.degrees(np.max(np.abs(tr["phi"] + tr["phi_uc"]))),
                     "max_abs_ltr": float(np.max(np.abs(tr["LTR"]))), "max_lift_mm": 1000 * rec.max_lift})
        r = rows[-1]
        print(f"{a:6.1f} deg  roll {r['max_roll_deg']:6.2f} deg  |LTR| {r['max_abs_ltr']:.3f}  "
              f"lift {r['max_lift_mm']:7.1f} mm")
    write_csv(Path(args.out), rows)


if __name__ == "__main__":
    main()
