"""Steering test maneuvers."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from rollgov.vehicle import DivergenceError, VehicleState, simulate_open_loop


class ManeuverKind(str, Enum):
    SINE_WITH_DWELL = "SineWithDwell"
    J_TURN = "JTurn"
    FISHHOOK = "FishHook"


@dataclass(frozen=True)
class ManeuverSpec:
    """Steering-wheel maneuver description.

    Attributes:
        amplitude: peak steering-wheel angle [rad].
        frequency: sinusoid frequency [Hz].
        dwell: hold time at the second peak [s].
        speed: forward speed [m/s].
        settle: time appended after the waveform ends [s].
        amplitude_scale: multiplier applied to the whole waveform.
    """

    kind: ManeuverKind = ManeuverKind.SINE_WITH_DWELL
    amplitude: float = math.radians(150.0)
    frequency: float = 0.5
    dwell: float = 0.5
    speed: float = 21.5
    settle: float = 2.0
    amplitude_scale: float = 1.0

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError("amplitude must be non-negative")
        if not self.frequency > 0 or self.dwell < 0 or self.settle < 0:
            raise ValueError("frequency must be positive, dwell and settle non-negative")
        if self.kind is not ManeuverKind.SINE_WITH_DWELL:
            raise NotImplementedError(f"{self.kind.value} maneuvers are not implemented")

    @property
    def waveform_end(self) -> float:
        return 1.0 / self.frequency + self.dwell

    @property
    def duration(self) -> float:
        return self.waveform_end + self.settle

    def scaled(self, scale: float) -> ManeuverSpec:
        return replace(self, amplitude_scale=float(scale))

    def reference(self, dt: float = 0.01) -> tuple[np.ndarray, np.ndarray]:
        """Sampled reference on ``t = 0, dt, ..., duration``."""
        n = int(round(self.duration / dt))
        t = np.arange(n + 1) * dt
        return t, np.array([sine_with_dwell(self, ti) for ti in t])


def sine_with_dwell(spec: ManeuverSpec, t: float) -> float:
    """Steering reference at time ``t``.

    One sine period whose second (negative) peak is held for ``spec.dwell``.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    amp = spec.amplitude * spec.amplitude_scale
    w = 2.0 * math.pi * spec.frequency
    t_peak = 0.75 / spec.frequency
    if t < t_peak:
        return amp * math.sin(w * t)
    if t < t_peak + spec.dwell:
        return -amp
    if t < spec.waveform_end:
        return amp * math.sin(w * (t - spec.dwell))
    return 0.0


def max_lift_of(spec: ManeuverSpec, params, tire, dt: float = 0.01) -> float:
    """Largest wheel lift of the open-loop maneuver."""
    _, ref = spec.reference(dt)
    _, lifts, done = simulate_open_loop(params, tire, VehicleState(u=spec.speed), ref[:-1], dt)
    if done < ref.size - 1:
        raise DivergenceError(f"open-loop maneuver diverged at scale {spec.amplitude_scale:g}")
    return float(lifts.max())


def find_safe_reference(spec: ManeuverSpec, params, tire, lift_limit: float = 0.0,
                        tol: float = 1e-3, dt: float = 0.01) -> float:
    """Largest amplitude scale in [0, 1] whose open-loop lift stays within ``lift_limit``.

    ``lift_limit = 0`` gives the no-lift baseline; a positive limit the
    limited-lift baseline. Bisection to ``tol`` in scale.
    """
    if max_lift_of(spec.scaled(1.0), params, tire, dt) <= lift_limit:
        return 1.0
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if max_lift_of(spec.scaled(mid), params, tire, dt) <= lift_limit:
            lo = mid
        else:
            hi = mid
    return lo
