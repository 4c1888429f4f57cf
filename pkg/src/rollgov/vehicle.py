"""Nonlinear roll-augmented single-track vehicle with Magic Formula tires.

The lateral/yaw/roll plant runs at constant forward speed by default. When
the load transfer ratio reaches one, the undercarriage starts pivoting about
the loaded contact line and the lifted wheels leave the road; the lift
height is ``track * sin|phi_uc|``.

The heavy lifting is done by compiled kernels in :mod:`rollgov._core`;
this module wraps them in dataclasses.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from enum import Enum
from pathlib import Path

import numpy as np

from rollgov import _core


class DivergenceError(RuntimeError):
    """Raised when the integrated state leaves the configured bounds."""


class Surface(str, Enum):
    DRY = "Dry"
    WET = "Wet"
    SNOW = "Snow"
    ICE = "Ice"


_SURFACE_COEFFS = {
    Surface.DRY: (7.15, 2.30, 0.87, 1.00, 1.54),
    Surface.WET: (9.00, 2.50, 0.72, 1.00, 1.54),
    Surface.SNOW: (5.00, 2.00, 0.30, 1.00, 1.54),
    Surface.ICE: (4.00, 2.00, 0.10, 1.00, 1.54),
}


@dataclass(frozen=True)
class VehicleParams:
    """Physical constants of the plant (SI units, angles in rad).

    Defaults describe a 2000 kg passenger car.
    """

    lf: float = 1.16  # CM to front axle
    lr: float = 1.75  # CM to rear axle
    track: float = 1.26
    h_sprung: float = 0.78  # sprung CM above roll axis
    h_unsprung: float = 0.0
    mass: float = 2000.0
    mass_sprung: float = 1700.0
    mass_unsprung: float = 300.0
    ixx_sprung: float = 1280.0
    ixx_unsprung: float = 202.0
    iyy_sprung: float = 2800.0
    izz: float = 2800.0
    ixz_sprung: float = 0.0
    steering_ratio: float = 17.5
    roll_stiffness: float = 73991.0
    roll_damping: float = 5993.0
    stiffness_split: float = 0.0
    damping_split: float = 0.0
    gravity: float = 9.81
    free_speed: bool = False
    blowup_roll: float = 1.2  # |roll| bound [rad] treated as divergence

    def __post_init__(self):
        positive = ("lf", "lr", "track", "h_sprung", "mass", "mass_sprung", "mass_unsprung",
                    "ixx_sprung", "ixx_unsprung", "iyy_sprung", "izz", "roll_stiffness",
                    "roll_damping", "gravity", "blowup_roll")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.h_unsprung < 0:
            raise ValueError("h_unsprung must be non-negative")
        if abs(self.mass_sprung + self.mass_unsprung - self.mass) > 1e-9 * self.mass:
            raise ValueError("mass must equal mass_sprung + mass_unsprung")
        if not self.steering_ratio > 1:
            raise ValueError("steering_ratio must exceed 1")
        for name in ("stiffness_split", "damping_split"):
            if not 0 <= getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in [0, 1)")

    @property
    def wheelbase(self) -> float:
        return self.lf + self.lr

    def vector(self) -> np.ndarray:
        pv = np.zeros(_core.N_PARAMS)
        pv[_core.LF] = self.lf
        pv[_core.LR] = self.lr
        pv[_core.TRACK] = self.track
        pv[_core.H_SM] = self.h_sprung
        pv[_core.H_UC] = self.h_unsprung
        pv[_core.M] = self.mass
        pv[_core.M_SM] = self.mass_sprung
        pv[_core.M_UC] = self.mass_unsprung
        pv[_core.IXX_SM] = self.ixx_sprung
        pv[_core.IXX_UC] = self.ixx_unsprung
        pv[_core.IYY_SM] = self.iyy_sprung
        pv[_core.IZZ] = self.izz
        pv[_core.IXZ_SM] = self.ixz_sprung
        pv[_core.K_SW] = self.steering_ratio
        pv[_core.K_S] = self.roll_stiffness
        pv[_core.D_S] = self.roll_damping
        pv[_core.DK_SS] = self.stiffness_split
        pv[_core.DD_SS] = self.damping_split
        pv[_core.GRAV] = self.gravity
        pv[_core.FREE_SPEED] = float(self.free_speed)
        pv[_core.BLOWUP] = self.blowup_roll
        return pv


@dataclass(frozen=True)
class TireParams:
    """Magic Formula coefficients (Pacejka B, C, D, E plus load factor c2)."""

    stiffness: float = 7.15
    shape: float = 2.30
    peak: float = 0.87
    curvature: float = 1.00
    load_factor: float = 1.54
    surface: Surface = Surface.DRY

    def __post_init__(self):
        if not (self.stiffness > 0 and self.shape > 0 and self.peak > 0 and self.load_factor > 0):
            raise ValueError("stiffness, shape, peak and load_factor must be positive")
        if self.curvature > 1:
            raise ValueError("curvature must not exceed 1")

    @classmethod
    def from_surface(cls, surface: Surface | str) -> TireParams:
        s = Surface(surface)
        b, c, d, e, c2 = _SURFACE_COEFFS[s]
        return cls(b, c, d, e, c2, s)

    def vector(self) -> np.ndarray:
        return np.array([self.stiffness, self.shape, self.peak, self.curvature, self.load_factor])


@dataclass(frozen=True)
class VehicleState:
    """Full plant state.

    ``liftoff_side`` is 0 with all wheels down, +1 when the left wheels are
    lifted (pivoting about the right contact line) and -1 for the mirror case.
    """

    u: float = 22.22
    v: float = 0.0
    p: float = 0.0
    r: float = 0.0
    phi: float = 0.0
    psi: float = 0.0
    X: float = 0.0
    Y: float = 0.0
    phi_uc: float = 0.0
    p_uc: float = 0.0
    liftoff_side: int = 0

    @property
    def liftoff(self) -> bool:
        return self.liftoff_side != 0

    def to_array(self) -> np.ndarray:
        return np.array([self.u, self.v, self.p, self.r, self.phi, self.psi,
                         self.X, self.Y, self.phi_uc, self.p_uc], dtype=float)

    @classmethod
    def from_array(cls, x, liftoff_side: int = 0) -> VehicleState:
        x = np.asarray(x, dtype=float)
        return cls(*map(float, x[:_core.N_STATES]), liftoff_side=int(liftoff_side))

    def lateral(self) -> np.ndarray:
        """Lateral states in linear-model order (v, r, p, phi)."""
        return np.array([self.v, self.r, self.p, self.phi])


@dataclass(frozen=True)
class PlantOutput:
    ltr: float
    delta_sw: float
    wheel_lift: float
    a_y: float
    beta: float


def tire_forces(tire: TireParams, fz: float, slip_angle: float, slip_ratio: float,
                params: VehicleParams) -> tuple[float, float]:
    """Combined-slip tire force ``(Fx, Fy)`` in tire axes.

    Zero load or zero slip returns ``(0, 0)``.
    """
    if fz < 0:
        raise ValueError("vertical load must be non-negative")
    mg = params.mass * params.gravity
    return _core.magic_formula(tire.vector(), mg, float(fz), float(slip_ratio), float(slip_angle))


def slip_ratio(wheel_speed: float, radius: float, u_wheel: float) -> float:
    """Longitudinal slip; normalised by the faster of wheel and road speed."""
    rw = radius * wheel_speed
    if rw < u_wheel:
        return (rw - u_wheel) / u_wheel
    if rw == 0.0:
        return 0.0
    return (rw - u_wheel) / rw


def slip_angles(state: VehicleState, delta_f: float, params: VehicleParams) -> tuple[float, float]:
    if not state.u > 0:
        raise ValueError("slip angles need positive forward speed")
    a_f = delta_f - math.atan((state.v + params.lf * state.r) / state.u)
    a_r = math.atan((-state.v + params.lr * state.r) / state.u)
    return a_f, a_r


def compute_ltr(state: VehicleState, params: VehicleParams) -> float:
    """Load transfer ratio from suspension roll angle and rate (positive: right loaded)."""
    return _core.load_transfer_ratio(params.vector(), state.phi, state.p)


def derivatives(state: VehicleState, delta_sw: float, params: VehicleParams,
                tire: TireParams) -> np.ndarray:
    """Time derivative of ``state.to_array()``."""
    x = state.to_array()
    if not np.all(np.isfinite(x)) or not math.isfinite(delta_sw):
        raise ValueError("non-finite state or input")
    out = np.empty(_core.N_STATES)
    _core.derivatives(x, state.liftoff_side, float(delta_sw), 0.0, 0.0,
                      params.vector(), tire.vector(), out)
    return out


def plant_output(state: VehicleState, delta_sw: float, params: VehicleParams,
                 tire: TireParams) -> PlantOutput:
    out = np.empty(_core.N_STATES)
    a_y = _core.derivatives(state.to_array(), state.liftoff_side, float(delta_sw), 0.0, 0.0,
                            params.vector(), tire.vector(), out)
    return PlantOutput(
        ltr=compute_ltr(state, params),
        delta_sw=float(delta_sw),
        wheel_lift=params.track * abs(math.sin(state.phi_uc)),
        a_y=float(a_y),
        beta=math.atan2(state.v, state.u),
    )


def step(state: VehicleState, delta_sw: float, dt: float, params: VehicleParams,
         tire: TireParams, dt_inner: float = 1e-3) -> tuple[VehicleState, float]:
    """Advance ``dt`` seconds with RK4 sub-steps of at most ``dt_inner``.

    Returns the new state and the largest wheel lift seen during the interval.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    x = state.to_array()
    side, lift, ok = _core.advance(x, state.liftoff_side, float(delta_sw), float(dt),
                                   float(dt_inner), params.vector(), tire.vector())
    if not ok:
        raise DivergenceError(f"plant diverged at steer {delta_sw:.4f} rad")
    return VehicleState.from_array(x, side), lift


class Plant:
    """Mutable simulation plant owned by one run."""

    def __init__(self, params: VehicleParams, tire: TireParams, state: VehicleState,
                 dt_inner: float = 1e-3):
        self.params = params
        self.tire = tire
        self.dt_inner = dt_inner
        self._pv = params.vector()
        self._tv = tire.vector()
        self.x = state.to_array()
        self.side = state.liftoff_side
        self.max_lift = 0.0

    @property
    def state(self) -> VehicleState:
        return VehicleState.from_array(self.x, self.side)

    def ltr(self) -> float:
        return _core.load_transfer_ratio(self._pv, self.x[_core.PHI], self.x[_core.P])

    def step(self, delta_sw: float, dt: float) -> float:
        self.side, lift, ok = _core.advance(self.x, self.side, float(delta_sw), float(dt),
                                            self.dt_inner, self._pv, self._tv)
        if not ok:
            raise DivergenceError(f"plant diverged at steer {delta_sw:.4f} rad")
        self.max_lift = max(self.max_lift, lift)
        return lift

    def output(self, delta_sw: float) -> PlantOutput:
        return plant_output(self.state, delta_sw, self.params, self.tire)


def simulate_open_loop(params: VehicleParams, tire: TireParams, state: VehicleState,
                       commands, dt: float = 0.01, dt_inner: float = 1e-3):
    """Apply a command sequence; returns (states[n+1, 10], lift[n+1], completed steps)."""
    cmds = np.ascontiguousarray(commands, dtype=float)
    traces = np.full((cmds.size + 1, _core.N_STATES), np.nan)
    lifts = np.zeros(cmds.size + 1)
    done = _core.open_loop(state.to_array(), state.liftoff_side, cmds, float(dt), float(dt_inner),
                           params.vector(), tire.vector(), traces, lifts)
    return traces, lifts, int(done)


def load_vehicle_config(path) -> tuple[VehicleParams, TireParams]:
    """Read ``{"vehicle": {...}, "tire": {"surface": ..., ...}}`` from JSON."""
    raw = json.loads(Path(path).read_text())
    return vehicle_from_dict(raw)


def vehicle_from_dict(raw: dict) -> tuple[VehicleParams, TireParams]:
    vehicle = VehicleParams(**raw.get("vehicle", {}))
    tire_raw = dict(raw.get("tire", {}))
    surface = tire_raw.pop("surface", "Dry")
    tire = replace(TireParams.from_surface(surface), **tire_raw)
    return vehicle, tire


def vehicle_to_dict(vehicle: VehicleParams, tire: TireParams) -> dict:
    t = asdict(tire)
    t["surface"] = tire.surface.value
    return {"vehicle": asdict(vehicle), "tire": t}


__all__ = [
    "DivergenceError", "Surface", "VehicleParams", "TireParams", "VehicleState", "PlantOutput",
    "tire_forces", "slip_ratio", "slip_angles", "compute_ltr", "derivatives", "plant_output",
    "step", "Plant", "simulate_open_loop", "load_vehicle_config", "vehicle_from_dict",
    "vehicle_to_dict",
]
