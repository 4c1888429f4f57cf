"""Evaluation metrics for governed maneuvers.

* effectiveness: ``1 - max_lift / lift_limit`` (1 means no wheel lift),
* conservatism: how much more the governor cut the reference than a safe
  baseline did, normalised by the reference size,
* turning response: how much closer the governed yaw rate stays to the
  desired yaw rate than the baseline's, normalised the same way.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid

DEFAULT_LIFT_LIMIT = 0.05


def effectiveness(max_lift: float, lift_limit: float = DEFAULT_LIFT_LIMIT) -> float:
    return 1.0 - max_lift / lift_limit


def conservatism(ref, applied, safe, dt: float) -> float:
    ref, applied, safe = (np.asarray(a, dtype=float) for a in (ref, applied, safe))
    if not (ref.shape == applied.shape == safe.shape):
        raise ValueError("traces must be aligned")
    denom = trapezoid(np.abs(ref), dx=dt)
    if denom <= 0:
        raise ValueError("reference is identically zero")
    return float(trapezoid(np.abs(ref - applied) - np.abs(ref - safe), dx=dt) / denom)


def turning_response(ref, r_applied, r_safe, yaw_gain0: float, dt: float) -> float:
    ref, r_applied, r_safe = (np.asarray(a, dtype=float) for a in (ref, r_applied, r_safe))
    if not (ref.shape == r_applied.shape == r_safe.shape):
        raise ValueError("traces must be aligned")
    desired = yaw_gain0 * ref
    denom = trapezoid(np.abs(desired), dx=dt)
    if denom <= 0:
        raise ValueError("reference is identically zero")
    return float(trapezoid(np.abs(desired - r_safe) - np.abs(desired - r_applied), dx=dt) / denom)


@dataclass(frozen=True)
class Baseline:
    """A safe comparison trajectory: its command and yaw-rate traces."""

    name: str
    command: np.ndarray
    yaw_rate: np.ndarray
    scale: float = float("nan")


@dataclass
class MetricsReport:
    eta_lift: float
    max_wheel_lift: float
    active_fraction: float
    chi_by_baseline: dict = field(default_factory=dict)
    eta_psi_by_baseline: dict = field(default_factory=dict)
    solve_time_mean: float = 0.0
    solve_time_max: float = 0.0
    max_abs_ltr: float = 0.0
    max_roll: float = 0.0

    def rows(self) -> list[dict]:
        base = {
            "eta_lift": self.eta_lift, "max_wheel_lift": self.max_wheel_lift,
            "active_fraction": self.active_fraction, "max_abs_ltr": self.max_abs_ltr,
            "max_roll": self.max_roll, "solve_time_mean": self.solve_time_mean,
            "solve_time_max": self.solve_time_max,
        }
        names = sorted(set(self.chi_by_baseline) | {"reference"}) if self.chi_by_baseline else ["reference"]
        out = []
        for name in names:
            out.append({**base, "baseline": name, "chi": self.chi_by_baseline.get(name, float("nan")),
                        "eta_psi": self.eta_psi_by_baseline.get(name, float("nan"))})
        return out


def evaluate_run(ref, applied, yaw_rate, max_lift: float, active, solve_times, dt: float,
                 yaw_gain0: float, baselines=(), lift_limit: float = DEFAULT_LIFT_LIMIT,
                 ltr=None, roll=None) -> MetricsReport:
    """Metrics of one run against the reference itself and each baseline."""
    ref = np.asarray(ref, dtype=float)
    applied = np.asarray(applied, dtype=float)
    yaw_rate = np.asarray(yaw_rate, dtype=float)
    active = np.asarray(active, dtype=bool)
    times = np.asarray(solve_times, dtype=float)
    report = MetricsReport(
        eta_lift=effectiveness(max_lift, lift_limit),
        max_wheel_lift=float(max_lift),
        active_fraction=float(active.mean()) if active.size else 0.0,
        solve_time_mean=float(times.mean()) if times.size else 0.0,
        solve_time_max=float(times.max()) if times.size else 0.0,
        max_abs_ltr=float(np.max(np.abs(ltr))) if ltr is not None else float("nan"),
        max_roll=float(np.max(np.abs(roll))) if roll is not None else float("nan"),
    )
    if np.any(ref != 0):
        report.chi_by_baseline["reference"] = conservatism(ref, applied, ref, dt)
        for b in baselines:
            report.chi_by_baseline[b.name] = conservatism(ref, applied, b.command, dt)
            report.eta_psi_by_baseline[b.name] = turning_response(ref, yaw_rate, b.yaw_rate, yaw_gain0, dt)
    return report
