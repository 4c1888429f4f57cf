"""Linearised lateral/roll models and the multi-point bank.

State order is ``(v, r, p, phi)``; outputs are ``(LTR, delta_SW)``; the
input is the steering-wheel angle. Models are deviations about a steady
turn: ``y = y0 + C dx + D du``.
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.linalg import expm
from scipy.optimize import fsolve

from rollgov import _core
from rollgov.vehicle import TireParams, VehicleParams, VehicleState, compute_ltr

log = logging.getLogger(__name__)

STATE_NAMES = ("v", "r", "p", "phi")
OUTPUT_NAMES = ("ltr", "delta_sw")


class TrimError(RuntimeError):
    """No steady turn found at the requested steering angle."""


@dataclass(frozen=True)
class LinearModel:
    """Continuous or discrete state-space model with its operating point."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    x0: np.ndarray  # trim lateral state (v, r, p, phi)
    delta0: float  # trim steering-wheel angle [rad]
    y0: np.ndarray  # trim output (LTR, delta_SW)
    speed: float
    dt: float | None = None

    @property
    def discrete(self) -> bool:
        return self.dt is not None

    @property
    def label(self) -> str:
        kind = f"d{self.dt:g}" if self.discrete else "c"
        return f"lin@{math.degrees(self.delta0):.1f}deg/{self.speed:g}mps/{kind}"

    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.A))))

    def is_schur(self) -> bool:
        return self.discrete and self.spectral_radius() < 1.0

    def mirrored(self) -> LinearModel:
        """Linearisation about the mirror-image turn (negative steering)."""
        return replace(self, x0=-self.x0, delta0=-self.delta0, y0=-self.y0)

    def steady_gain(self) -> np.ndarray:
        """State change per unit input at steady state."""
        n = self.A.shape[0]
        if self.discrete:
            return np.linalg.solve(np.eye(n) - self.A, self.B).ravel()
        return -np.linalg.solve(self.A, self.B).ravel()

    def to_dict(self) -> dict:
        return {
            "A": self.A.tolist(), "B": self.B.tolist(), "C": self.C.tolist(),
            "D": self.D.tolist(), "x0": self.x0.tolist(), "delta0": self.delta0,
            "y0": self.y0.tolist(), "speed": self.speed, "dt": self.dt,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> LinearModel:
        arr = {k: np.array(raw[k], dtype=float) for k in ("A", "B", "C", "D", "x0", "y0")}
        return cls(delta0=float(raw["delta0"]), speed=float(raw["speed"]), dt=raw["dt"], **arr)


# ------------------------------------------------------------------ trim

def _lateral_residual(z, delta_sw, speed, pv, tv):
    v, r, phi = z
    x = np.zeros(_core.N_STATES)
    x[_core.U], x[_core.V], x[_core.R], x[_core.PHI] = speed, v, r, phi
    out = np.empty(_core.N_STATES)
    _core.derivatives(x, 0, delta_sw, 0.0, 0.0, pv, tv, out)
    return np.array([out[_core.V], out[_core.R], out[_core.P]])


def trim(params: VehicleParams, tire: TireParams, speed: float, delta_sw: float,
         guess=None, tol: float = 1e-10) -> np.ndarray:
    """Steady turn ``(v, r, p=0, phi)`` at constant steering-wheel angle."""
    pv, tv = params.vector(), tire.vector()
    if guess is None:
        z0 = np.zeros(3)
    else:
        g = np.asarray(guess, dtype=float)
        z0 = np.array([g[0], g[1], g[3]])
    z, info, ier, msg = fsolve(_lateral_residual, z0, args=(delta_sw, speed, pv, tv),
                               full_output=True, xtol=1e-13)
    res = np.max(np.abs(_lateral_residual(z, delta_sw, speed, pv, tv)))
    if ier != 1 and res > tol or res > 1e-6 or abs(z[2]) >= math.pi / 2:
        raise TrimError(f"no steady turn at {math.degrees(delta_sw):.1f} deg: {msg}")
    return np.array([z[0], z[1], 0.0, z[2]])


def trim_path(params, tire, speed, targets, step_deg: float = 5.0) -> list[np.ndarray]:
    """Trim at increasing ``targets`` [rad] by warm-started continuation from straight running."""
    out = []
    guess = np.zeros(4)
    current = 0.0
    for target in targets:
        n = max(1, int(math.ceil(abs(target - current) / math.radians(step_deg))))
        for a in np.linspace(current, target, n + 1)[1:]:
            guess = trim(params, tire, speed, float(a), guess)
        if n == 0 or target == current:
            guess = trim(params, tire, speed, float(target), guess)
        current = target
        out.append(guess.copy())
    return out


# ------------------------------------------------------------------ linearisation

def _axle_slope(tv, mg, load, alpha, lifted, h=1e-6):
    hi = _core.axle_force(tv, mg, load, 0.0, alpha + h, lifted)[1]
    lo = _core.axle_force(tv, mg, load, 0.0, alpha - h, lifted)[1]
    return (hi - lo) / (2 * h)


def force_partials(params: VehicleParams, tire: TireParams, x0, delta_f: float, speed: float):
    """Partials of total lateral force and yaw moment w.r.t. (v, r, delta_f).

    Tire cornering slopes come from central differences; the slip-angle
    kinematics are differentiated analytically.
    """
    tv = tire.vector()
    mg = params.mass * params.gravity
    v, r = x0[0], x0[1]
    lf, lr = params.lf, params.lr
    load_f = mg * lr / params.wheelbase
    load_r = mg * lf / params.wheelbase
    xf = (v + lf * r) / speed
    xr = (-v + lr * r) / speed
    alpha_f = delta_f - math.atan(xf)
    alpha_r = math.atan(xr)
    wf = 1.0 / (1.0 + xf * xf) / speed
    wr = 1.0 / (1.0 + xr * xr) / speed
    fyf = _core.axle_force(tv, mg, load_f, 0.0, alpha_f, False)[1]
    cf = _axle_slope(tv, mg, load_f, alpha_f, False)
    cr = _axle_slope(tv, mg, load_r, alpha_r, False)
    cd, sd = math.cos(delta_f), math.sin(delta_f)

    dfront = np.array([-wf * cf * cd, -lf * wf * cf * cd, cf * cd - fyf * sd])  # d(Fyf cos)/d(v,r,delta)
    drear = np.array([-wr * cr, lr * wr * cr, 0.0])
    force = dfront + drear
    moment = lf * dfront - lr * drear
    return force, moment


def linearize(params: VehicleParams, tire: TireParams, speed: float, delta0: float,
              x0=None) -> LinearModel:
    """Continuous-time model about the steady turn at ``delta0`` (steering-wheel rad)."""
    if x0 is None:
        x0 = trim_path(params, tire, speed, [abs(delta0)])[0]
        if delta0 < 0:
            x0 = -x0
    x0 = np.asarray(x0, dtype=float)
    p0, phi0 = x0[2], x0[3]
    m, msm, muc, h = params.mass, params.mass_sprung, params.mass_unsprung, params.h_sprung
    g = params.gravity
    k_eff = params.roll_stiffness * (1 - params.stiffness_split ** 2)
    d_eff = params.roll_damping * (1 - params.damping_split ** 2)
    cphi, sphi = math.cos(phi0), math.sin(phi0)
    i_eff = params.ixx_sprung + h * h * msm * muc / m * cphi

    delta_f = delta0 / params.steering_ratio
    dF, dN = force_partials(params, tire, x0, delta_f, speed)

    # roll acceleration partials; the numerator vanishes at trim so the
    # phi-dependence of the effective inertia drops out
    pd_force = h * msm / (m * i_eff) * dF
    pd_p = (2 * h * h * msm * muc / m * p0 * sphi - d_eff * cphi) / i_eff
    pd_phi = (h * msm * cphi * (g + h * muc / m * p0 * p0)
              - k_eff / cphi ** 2 + d_eff * p0 * sphi) / i_eff

    h_eff = h * msm / m
    vd_force = dF / m + h_eff * cphi * pd_force
    vd_p = h_eff * (cphi * pd_p - 2 * p0 * sphi)
    vd_phi = h_eff * (cphi * pd_phi - p0 * p0 * cphi)

    A = np.array([
        [vd_force[0], vd_force[1] - speed, vd_p, vd_phi],
        [dN[0] / params.izz, dN[1] / params.izz, 0.0, 0.0],
        [pd_force[0], pd_force[1], pd_p, pd_phi],
        [0.0, 0.0, 1.0, 0.0],
    ])
    # input is the steering-wheel angle, so the road-wheel partials are divided by the ratio
    B = np.array([[vd_force[2]], [dN[2] / params.izz], [pd_force[2]], [0.0]]) / params.steering_ratio

    mgT = m * g * params.track
    C = np.array([
        [0.0, 0.0, 2 * d_eff * cphi / mgT, 2 * (k_eff / cphi ** 2 - d_eff * p0 * sphi) / mgT],
        [0.0, 0.0, 0.0, 0.0],
    ])
    D = np.array([[0.0], [1.0]])
    ltr0 = compute_ltr(VehicleState(u=speed, p=p0, phi=phi0), params)
    return LinearModel(A, B, C, D, x0.copy(), float(delta0), np.array([ltr0, delta0]), float(speed))


def finite_difference_jacobian(params: VehicleParams, tire: TireParams, speed: float, x0,
                               delta0: float, h: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
    """Central-difference (A, B) of the nonlinear lateral dynamics."""
    pv, tv = params.vector(), tire.vector()
    idx = [_core.V, _core.R, _core.P, _core.PHI]

    def f(z, d):
        x = np.zeros(_core.N_STATES)
        x[_core.U] = speed
        x[idx] = z
        out = np.empty(_core.N_STATES)
        _core.derivatives(x, 0, d, 0.0, 0.0, pv, tv, out)
        return out[idx]

    x0 = np.asarray(x0, dtype=float)
    A = np.zeros((4, 4))
    for j in range(4):
        e = np.zeros(4)
        e[j] = h
        A[:, j] = (f(x0 + e, delta0) - f(x0 - e, delta0)) / (2 * h)
    B = ((f(x0, delta0 + h) - f(x0, delta0 - h)) / (2 * h)).reshape(4, 1)
    return A, B


def discretize(model: LinearModel, dt: float) -> LinearModel:
    """Zero-order-hold discretisation via the exponential of the augmented block."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    if model.discrete:
        raise ValueError("model is already discrete")
    n, m = model.B.shape
    blk = np.zeros((n + m, n + m))
    blk[:n, :n] = model.A
    blk[:n, n:] = model.B
    E = expm(blk * dt)
    return replace(model, A=E[:n, :n], B=E[:n, n:], dt=float(dt))


# ------------------------------------------------------------------ bank

RGMPL1_DEG = (0.0, 20.0, 40.0, 100.0)
RGMPL2_DEG = (0.0, 80.0, 110.0, 150.0)
RGMPL3_DEG = (0.0, 20.0, 40.0, 60.0, 80.0, 100.0, 120.0, 130.0, 140.0, 150.0)
SINGLE_DEG = (0.0,)

BANKS = {"RGMPL1": RGMPL1_DEG, "RGMPL2": RGMPL2_DEG, "RGMPL3": RGMPL3_DEG, "single": SINGLE_DEG}


@dataclass(frozen=True)
class MplBank:
    """Discrete models at increasing non-negative steering operating points."""

    models: tuple[LinearModel, ...]
    name: str = "custom"

    def __post_init__(self):
        if not self.models:
            raise ValueError("bank needs at least one model")
        d = [mdl.delta0 for mdl in self.models]
        if d[0] != 0.0 or any(b <= a for a, b in zip(d, d[1:])):
            raise ValueError("operating points must start at 0 and increase strictly")
        for mdl in self.models:
            if not mdl.is_schur():
                raise ValueError(f"{mdl.label} is not a stable discrete model")

    @property
    def points(self) -> np.ndarray:
        return np.array([mdl.delta0 for mdl in self.models])

    def to_dict(self) -> dict:
        return {"name": self.name, "models": [mdl.to_dict() for mdl in self.models]}

    @classmethod
    def from_dict(cls, raw: dict) -> MplBank:
        return cls(tuple(LinearModel.from_dict(m) for m in raw["models"]), raw.get("name", "custom"))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> MplBank:
        return cls.from_dict(json.loads(Path(path).read_text()))


def build_bank(params: VehicleParams, tire: TireParams, speed: float, points_deg,
               dt: float = 0.01, name: str = "custom") -> MplBank:
    """Trim, linearise and discretise at each point; unreachable points are skipped."""
    pts = sorted(float(p) for p in points_deg)
    models = []
    guess = np.zeros(4)
    current = 0.0
    for deg in pts:
        target = math.radians(deg)
        try:
            n = max(1, int(math.ceil((target - current) / math.radians(5.0))))
            g = guess
            for a in np.linspace(current, target, n + 1)[1:]:
                g = trim(params, tire, speed, float(a), g)
            if target == current:
                g = trim(params, tire, speed, target, g)
        except TrimError as exc:
            warnings.warn(f"skipping bank point {deg:g} deg: {exc}")
            continue
        guess, current = g, target
        models.append(discretize(linearize(params, tire, speed, target, g), dt))
    return MplBank(tuple(models), name)


def select_index(bank: MplBank, delta_now: float) -> int:
    """Index of the nearest operating point to ``|delta_now|`` (ties go to the smaller point)."""
    dist = np.abs(abs(delta_now) - bank.points)
    best = float(np.min(dist))
    # tolerate rounding from degree/radian conversions when detecting ties
    return int(np.flatnonzero(dist <= best + 1e-12)[0])


def select_model(bank: MplBank, delta_now: float) -> LinearModel:
    """Nearest model, mirrored when steering is negative."""
    mdl = bank.models[select_index(bank, delta_now)]
    return mdl.mirrored() if delta_now < 0 and mdl.delta0 > 0 else mdl


def yaw_rate_gain(model: LinearModel) -> float:
    """Steady yaw rate per steering-wheel radian."""
    return float(model.steady_gain()[1])
