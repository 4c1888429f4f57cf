"""Command-line front end.

Subcommands: ``run``, ``sweep``, ``montecarlo``, ``baselines``, ``report``.
The exit status is 0 only when every simulated run completed.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from rollgov.harness import (
    PRESETS,
    ExperimentConfig,
    Toolkit,
    compute_baselines,
    run_monte_carlo,
    run_single,
    run_sweep,
    write_csv,
    write_manifest,
    write_run,
)


def _config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    changes = {}
    if getattr(args, "governors", None):
        changes["governors"] = tuple(args.governors)
    if getattr(args, "amplitudes", None):
        changes["amplitudes_deg"] = tuple(args.amplitudes)
    if getattr(args, "seeds", None):
        changes["seeds"] = tuple(args.seeds)
    if getattr(args, "out", None):
        changes["output_dir"] = args.out
    if getattr(args, "workers", None):
        changes["workers"] = args.workers
    sigma = {k: getattr(args, f"sigma_{k}", None) for k in ("v", "r", "p", "phi")}
    if any(s is not None for s in sigma.values()):
        changes["noise"] = {k: float(s or 0.0) for k, s in sigma.items()}
    return replace(cfg, **changes) if changes else cfg


def cmd_run(args) -> int:
    cfg = _config(args)
    rec = run_single(cfg, args.governor, args.amplitude, args.seed, with_baselines=args.baselines)
    out = Path(cfg.output_dir)
    write_run(rec, out)
    write_manifest(cfg, out, {"governor": args.governor, "amplitude_deg": args.amplitude, "seed": args.seed,
                              "completed": rec.completed})
    m = rec.metrics
    print(f"{args.governor} {args.amplitude:g} deg: lift {rec.max_lift * 1000:.2f} mm"
          + (f", effectiveness {m.eta_lift:.4f}, active {m.active_fraction:.3f}" if m else ""))
    return 0 if rec.completed else 1


def cmd_sweep(args) -> int:
    cfg = _config(args)
    rows = run_sweep(cfg, with_baselines=not args.no_baselines)
    out = Path(cfg.output_dir)
    write_csv(out / "metrics.csv", rows)
    write_manifest(cfg, out, {"command": "sweep"})
    print(f"wrote {len(rows)} rows to {out / 'metrics.csv'}")
    return 0 if all(r["completed"] for r in rows) else 1


def cmd_montecarlo(args) -> int:
    cfg = _config(args)
    stats = run_monte_carlo(cfg)
    out = Path(cfg.output_dir)
    write_csv(out / "montecarlo.csv", stats)
    write_manifest(cfg, out, {"command": "montecarlo"})
    for s in stats:
        print(f"{s['governor']:>10} {s['amplitude_deg']:6.1f} deg  mean eff {s['eta_mean']:.4f}  "
              f"min {s['eta_min']:.4f}  failures {s['failures']}")
    return 0 if all(s["failures"] == 0 for s in stats) else 1


def cmd_baselines(args) -> int:
    cfg = _config(args)
    tk = Toolkit(cfg)
    rows = []
    for a in cfg.amplitudes_deg:
        b = compute_baselines(tk, a)
        rows.append({"amplitude_deg": a, "nolift_scale": b.nolift_scale, "limlift_scale": b.limlift_scale})
        print(f"{a:6.1f} deg  NoLift {b.nolift_scale:.3f}  LimLift {b.limlift_scale:.3f}")
    out = Path(cfg.output_dir)
    write_csv(out / "baselines.csv", rows)
    write_manifest(cfg, out, {"command": "baselines"})
    return 0


def cmd_report(args) -> int:
    path = Path(args.metrics)
    with path.open() as fh:
        rows = list(csv.DictReader(fh))
    cells: dict = {}
    for r in rows:
        if r.get("baseline") != args.baseline:
            continue
        cells.setdefault(r["governor"], []).append(r)
    print(f"{'governor':>12} {'runs':>5} {'min eff':>8} {'mean chi':>9} {'mean eta_psi':>12} {'max lift mm':>11}")
    summary = []
    for gov, rs in sorted(cells.items()):
        eta = np.array([float(r["eta_lift"]) for r in rs])
        chi = np.array([float(r["chi"]) for r in rs])
        psi = np.array([float(r["eta_psi"]) for r in rs])
        lift = np.array([float(r["max_wheel_lift"]) for r in rs])
        summary.append({"governor": gov, "runs": len(rs), "eta_min": eta.min(), "chi_mean": np.nanmean(chi),
                        "eta_psi_mean": np.nanmean(psi) if np.any(np.isfinite(psi)) else float("nan"),
                        "max_lift": lift.max()})
        s = summary[-1]
        print(f"{gov:>12} {len(rs):5d} {s['eta_min']:8.4f} {s['chi_mean']:9.4f} {s['eta_psi_mean']:12.4f} "
              f"{1000 * s['max_lift']:11.2f}")
    if args.out:
        write_csv(args.out, summary)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rollgov", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="experiment config (JSON)")
        sp.add_argument("--out", help="output directory")

    def noise(sp):
        for k in ("v", "r", "p", "phi"):
            sp.add_argument(f"--sigma-{k}", type=float, dest=f"sigma_{k}",
                            help=f"relative estimation noise on {k}")

    sp = sub.add_parser("run", help="one governed maneuver")
    common(sp)
    noise(sp)
    sp.add_argument("--governor", default="LRG", choices=sorted(PRESETS))
    sp.add_argument("--amplitude", type=float, default=150.0, help="steering amplitude [deg]")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--baselines", action="store_true", help="also compute NoLift/LimLift/NRG4 metrics")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep", help="governors x amplitudes with baseline metrics")
    common(sp)
    noise(sp)
    sp.add_argument("--governors", nargs="+", choices=sorted(PRESETS))
    sp.add_argument("--amplitudes", nargs="+", type=float)
    sp.add_argument("--seeds", nargs="+", type=int)
    sp.add_argument("--workers", type=int)
    sp.add_argument("--no-baselines", action="store_true")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("montecarlo", help="noisy-estimate effectiveness statistics")
    common(sp)
    noise(sp)
    sp.add_argument("--governors", nargs="+", choices=sorted(PRESETS))
    sp.add_argument("--amplitudes", nargs="+", type=float)
    sp.add_argument("--seeds", nargs="+", type=int)
    sp.add_argument("--workers", type=int)
    sp.set_defaults(func=cmd_montecarlo)

    sp = sub.add_parser("baselines", help="NoLift / LimLift amplitude scales")
    common(sp)
    sp.add_argument("--amplitudes", nargs="+", type=float)
    sp.set_defaults(func=cmd_baselines)

    sp = sub.add_parser("report", help="summarise a metrics.csv")
    sp.add_argument("metrics")
    sp.add_argument("--baseline", default="NRG4")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
