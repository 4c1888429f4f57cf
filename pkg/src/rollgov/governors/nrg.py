"""Nonlinear reference governor: bisection on forward simulations of the plant."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from rollgov import _core
from rollgov.admissible import OutputConstraints
from rollgov.governors.base import Governor, GovernorDecision, Measurement, Recovery
from rollgov.vehicle import TireParams, VehicleParams


@dataclass
class NrgConfig:
    iterations: int = 4
    horizon: float = 1.0  # prediction length [s]
    dt: float = 0.01  # constraint-check sample time [s]
    dt_inner: float = 1e-3
    recovery_iterations: int = 8  # bisections toward straight ahead when holding is unsafe

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("need at least one iteration")


class NonlinearReferenceGovernor(Governor):
    def __init__(self, params: VehicleParams, tire: TireParams, yc: OutputConstraints,
                 config: NrgConfig | None = None):
        self.config = config or NrgConfig()
        self.yc = yc
        self._pv = params.vector()
        self._tv = tire.vector()
        self._n = int(round(self.config.horizon / self.config.dt))
        self.prev_v = 0.0
        self.simulations = 0
        self.name = f"NRG{self.config.iterations}"

    def reset(self) -> None:
        self.prev_v = 0.0
        self.simulations = 0

    def is_safe(self, full_state, side: int, cmd: float) -> bool:
        """Hold ``cmd`` over the horizon from ``full_state``; True if outputs stay admissible."""
        self.simulations += 1
        c = self.config
        return bool(_core.predict_safe(np.asarray(full_state, dtype=float), int(side), float(cmd),
                                       self._n, c.dt, c.dt_inner, self._pv, self._tv,
                                       self.yc.ltr_lim, self.yc.steer_lim))

    def step(self, ref: float, meas: Measurement) -> GovernorDecision:
        t0 = time.perf_counter()
        prev = self.prev_v
        if self.is_safe(meas.full, meas.side, ref):
            self.prev_v = ref
            return GovernorDecision.passthrough(ref, time.perf_counter() - t0)
        safe_end, unsafe_end = prev, ref
        best = None
        for _ in range(self.config.iterations - 1):
            mid = 0.5 * (safe_end + unsafe_end)
            if self.is_safe(meas.full, meas.side, mid):
                best = safe_end = mid
            else:
                unsafe_end = mid
        if best is None:
            v, rec, level = self._fallback(meas, prev)
        else:
            v, rec, level = best, Recovery.NONE, 1
        self.prev_v = v
        gain = (v - prev) / (ref - prev) if ref != prev else 0.0
        return GovernorDecision(v=v, active=v != ref, level=level, recovery=rec,
                                solve_time=time.perf_counter() - t0, gain=gain)

    def _fallback(self, meas: Measurement, prev: float):
        """Nothing between ``prev`` and the reference is safe.

        A finite horizon is not recursively feasible, so ``prev`` may have
        become unsafe too. In that case bisect between straight ahead and
        ``prev``, keeping the safe end. If even straight ahead fails, hold
        ``prev``.
        """
        if prev == 0.0 or self.is_safe(meas.full, meas.side, prev):
            return prev, Recovery.LAST_COMMAND, 0
        if not self.is_safe(meas.full, meas.side, 0.0):
            return prev, Recovery.LAST_COMMAND, 0
        safe_end, unsafe_end = 0.0, prev
        for _ in range(self.config.recovery_iterations):
            mid = 0.5 * (safe_end + unsafe_end)
            if self.is_safe(meas.full, meas.side, mid):
                safe_end = mid
            else:
                unsafe_end = mid
        return safe_end, Recovery.CONTRACTION, 0
