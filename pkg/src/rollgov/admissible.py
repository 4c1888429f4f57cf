"""Polyhedral inner approximations of the maximal output admissible set.

A set is stored as stacked inequalities ``A_O z <= b_O`` with decision
columns ordered ``(u, x, d)``:

* ``u``: constant command deviation (for the extended-command variant this
  is the constant part of the command),
* ``x``: model state deviation (plant state, followed by the virtual
  command state for the extended-command variant),
* ``d``: optional constant output offset persisting over the horizon.

Rows come in blocks of ``rows(A_y)``: one per prediction step k = 0..N, and
a final steady-state block tightened by ``1 - epsilon``.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.optimize import linprog

from rollgov.linear import LinearModel


class SetVariant(str, Enum):
    PLAIN = "Plain"
    DISTURBANCE = "DisturbanceAugmented"
    ECG = "EcgAugmented"
    ECG_DISTURBANCE = "EcgDisturbanceAugmented"


@dataclass(frozen=True)
class OutputConstraints:
    """Symmetric box ``|LTR| <= ltr_lim`` and ``|delta_SW| <= steer_lim``."""

    ltr_lim: float = 0.99
    steer_lim: float = math.radians(180.0)

    def __post_init__(self):
        if not (self.ltr_lim > 0 and self.steer_lim > 0):
            raise ValueError("limits must be positive")

    @property
    def A_y(self) -> np.ndarray:
        return np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])

    @property
    def b_y(self) -> np.ndarray:
        return np.array([self.ltr_lim, self.ltr_lim, self.steer_lim, self.steer_lim])

    def contains(self, y, tol: float = 0.0) -> bool:
        return bool(np.all(self.A_y @ np.asarray(y) <= self.b_y + tol))


@dataclass(frozen=True, eq=False)
class AdmissibleSet:
    A: np.ndarray
    b: np.ndarray
    horizon: int
    epsilon: float
    variant: SetVariant
    n_input: int
    n_state: int
    n_dist: int
    block_rows: int
    source: str = ""

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    @property
    def n_cols(self) -> int:
        return self.A.shape[1]

    @property
    def u_cols(self) -> slice:
        return slice(0, self.n_input)

    @property
    def x_cols(self) -> slice:
        return slice(self.n_input, self.n_input + self.n_state)

    @property
    def d_cols(self) -> slice:
        return slice(self.n_input + self.n_state, self.n_cols)

    def point(self, u, x, d=None) -> np.ndarray:
        parts = [np.atleast_1d(np.asarray(u, dtype=float)), np.asarray(x, dtype=float).ravel()]
        if self.n_dist:
            parts.append(np.zeros(self.n_dist) if d is None else np.asarray(d, dtype=float).ravel())
        elif d is not None and np.any(np.asarray(d) != 0):
            raise ValueError("set has no disturbance columns")
        return np.concatenate(parts)

    def row_margins(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if z.shape[-1] != self.n_cols:
            raise ValueError(f"point has {z.shape[-1]} entries, set has {self.n_cols} columns")
        return self.b - z @ self.A.T

    def contains(self, z, tol: float = 0.0) -> bool:
        return bool(np.all(self.row_margins(z) >= -tol))

    def block(self, k: int) -> slice:
        """Rows for prediction step ``k``; ``k = horizon + 1`` is the steady-state block."""
        return slice(k * self.block_rows, (k + 1) * self.block_rows)

    def scaled(self, factor: float) -> AdmissibleSet:
        return replace(self, b=self.b * factor)

    def drop_leading_blocks(self, count: int) -> AdmissibleSet:
        return replace(self, A=self.A[count * self.block_rows:], b=self.b[count * self.block_rows:])

    def to_dict(self) -> dict:
        return {
            "variant": self.variant.value, "horizon": self.horizon, "epsilon": self.epsilon,
            "n_input": self.n_input, "n_state": self.n_state, "n_dist": self.n_dist,
            "block_rows": self.block_rows, "source": self.source,
            "A": self.A.tolist(), "b": self.b.tolist(),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> AdmissibleSet:
        return cls(np.array(raw["A"], dtype=float), np.array(raw["b"], dtype=float),
                   int(raw["horizon"]), float(raw["epsilon"]), SetVariant(raw["variant"]),
                   int(raw["n_input"]), int(raw["n_state"]), int(raw["n_dist"]),
                   int(raw["block_rows"]), raw.get("source", ""))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> AdmissibleSet:
        return cls.from_dict(json.loads(Path(path).read_text()))


def membership(aset: AdmissibleSet, z) -> bool:
    return aset.contains(z)


def row_margins(aset: AdmissibleSet, z) -> np.ndarray:
    return aset.row_margins(z)


def _stack(A, B, C, D, yc: OutputConstraints, N: int, epsilon: float):
    n = A.shape[0]
    Ay, by = yc.A_y, yc.b_y
    rows_u, rows_x = [], []
    S = np.zeros_like(B)  # sum_{j<k} A^j B
    Ak = np.eye(n)
    for _ in range(N + 1):
        rows_u.append(Ay @ (C @ S + D))
        rows_x.append(Ay @ (C @ Ak))
        S = A @ S + B
        Ak = A @ Ak
    H = C @ np.linalg.solve(np.eye(n) - A, B) + D
    rows_u.append(Ay @ H)
    rows_x.append(np.zeros((Ay.shape[0], n)))
    A_O = np.hstack([np.vstack(rows_u), np.vstack(rows_x)])
    b_O = np.concatenate([np.tile(by, N + 1), (1.0 - epsilon) * by])
    return A_O, b_O


def _check_stable(A, what):
    rho = np.max(np.abs(np.linalg.eigvals(A)))
    if not rho < 1:
        raise ValueError(f"{what} is not Schur (spectral radius {rho:.6f})")


def build_oinf(model: LinearModel, yc: OutputConstraints, N: int = 100,
               epsilon: float = 1e-3) -> AdmissibleSet:
    """Constant-command admissible set of a stable discrete model."""
    if not model.discrete:
        raise ValueError("model must be discrete")
    _check_stable(model.A, "model")
    if not epsilon > 0 or N < 0:
        raise ValueError("need epsilon > 0 and N >= 0")
    A_O, b_O = _stack(model.A, model.B, model.C, model.D, yc, N, epsilon)
    return AdmissibleSet(A_O, b_O, N, epsilon, SetVariant.PLAIN, model.B.shape[1],
                         model.A.shape[0], 0, yc.A_y.shape[0], model.label)


def augment_disturbance(aset: AdmissibleSet, yc: OutputConstraints | None = None) -> AdmissibleSet:
    """Append output-offset columns (the offset enters every block like ``A_y d``)."""
    if aset.n_dist:
        raise ValueError("set already has disturbance columns")
    Ay = (yc or OutputConstraints()).A_y
    if Ay.shape[0] != aset.block_rows:
        raise ValueError("constraint rows do not match set blocks")
    extra = np.tile(Ay, (aset.n_rows // aset.block_rows, 1))
    variant = SetVariant.ECG_DISTURBANCE if aset.variant is SetVariant.ECG else SetVariant.DISTURBANCE
    return replace(aset, A=np.hstack([aset.A, extra]), n_dist=Ay.shape[1], variant=variant)


def ecg_augmented_system(model: LinearModel, basis_A: np.ndarray, basis_C: np.ndarray):
    """Plant driven by ``u = basis_C xbar + rho`` with ``xbar+ = basis_A xbar``."""
    n = model.A.shape[0]
    nb = basis_A.shape[0]
    A_aug = np.block([[model.A, model.B @ basis_C], [np.zeros((nb, n)), basis_A]])
    B_aug = np.vstack([model.B, np.zeros((nb, model.B.shape[1]))])
    C_aug = np.hstack([model.C, model.D @ basis_C])
    return A_aug, B_aug, C_aug, model.D


def build_ecg_oinf(model: LinearModel, yc: OutputConstraints, basis_A, basis_C, N: int = 100,
                   epsilon: float = 1e-3) -> AdmissibleSet:
    """Admissible set over ``(rho, x, xbar)`` for the virtual-command augmented plant."""
    if not model.discrete:
        raise ValueError("model must be discrete")
    basis_A = np.atleast_2d(np.asarray(basis_A, dtype=float))
    basis_C = np.atleast_2d(np.asarray(basis_C, dtype=float))
    _check_stable(basis_A, "virtual command dynamics")
    _check_stable(model.A, "model")
    A_aug, B_aug, C_aug, D_aug = ecg_augmented_system(model, basis_A, basis_C)
    A_O, b_O = _stack(A_aug, B_aug, C_aug, D_aug, yc, N, epsilon)
    return AdmissibleSet(A_O, b_O, N, epsilon, SetVariant.ECG, model.B.shape[1],
                         A_aug.shape[0], 0, yc.A_y.shape[0], model.label + "/ecg")


def _prediction_block(A, B, C, D, yc: OutputConstraints, k: int):
    n = A.shape[0]
    Ak = np.linalg.matrix_power(A, k)
    S = np.linalg.solve(np.eye(n) - A, (np.eye(n) - Ak) @ B)
    return np.hstack([yc.A_y @ (C @ S + D), yc.A_y @ (C @ Ak)]), yc.b_y


def _max_excess(aset: AdmissibleSet, rows, rhs) -> float:
    worst = -np.inf
    n = rows.shape[1]
    A_ub, b_ub = aset.A[:, :n], aset.b
    for a_row, b_row in zip(rows, rhs):
        res = linprog(-a_row, A_ub=A_ub, b_ub=b_ub, bounds=[(None, None)] * n, method="highs")
        if res.status != 0:
            return math.inf
        worst = max(worst, -res.fun - b_row)
    return float(worst)


def finite_determination_gap(aset: AdmissibleSet, system, yc: OutputConstraints,
                             extra_steps: int = 1) -> float:
    """Largest violation of the step ``N + extra_steps`` rows over the stored set.

    ``system`` is the ``(A, B, C, D)`` tuple the set was stacked from. Each
    row of the next block is maximised with a linear program; a
    non-positive result means the block is redundant, which for
    ``extra_steps = 1`` makes the set exactly positively invariant.
    """
    rows, rhs = _prediction_block(*system, yc, aset.horizon + extra_steps)
    return _max_excess(aset, rows, rhs)


def model_system(model: LinearModel):
    return model.A, model.B, model.C, model.D


def check_finite_determination(aset: AdmissibleSet, system, yc: OutputConstraints,
                               tol: float = 1e-9) -> bool:
    gap = finite_determination_gap(aset, system, yc)
    ok = gap <= tol
    if not ok:
        warnings.warn(f"horizon {aset.horizon} is too short for {aset.source}: "
                      f"next-step rows exceed the set by {gap:.3g}")
    return ok


def shortest_determined(build, system, yc: OutputConstraints, n_min: int = 100, n_step: int = 10,
                        n_max: int = 2000, tol: float = 1e-9) -> AdmissibleSet:
    """Call ``build(N)`` from ``n_min`` upward until the set is finitely determined."""
    N = n_min
    while True:
        aset = build(N)
        if finite_determination_gap(aset, system, yc) <= tol:
            return aset
        if N >= n_max:
            warnings.warn(f"{aset.source}: no finitely determined horizon up to {n_max}")
            return aset
        N += n_step


def build_determined_oinf(model: LinearModel, yc: OutputConstraints, epsilon: float = 1e-3,
                          n_min: int = 100, n_step: int = 10, n_max: int = 2000) -> AdmissibleSet:
    """Plain set at the shortest horizon >= ``n_min`` that is finitely determined."""
    return shortest_determined(lambda N: build_oinf(model, yc, N, epsilon), model_system(model),
                               yc, n_min, n_step, n_max)


def build_determined_ecg_oinf(model: LinearModel, yc: OutputConstraints, basis_A, basis_C,
                              epsilon: float = 1e-3, n_min: int = 100, n_step: int = 10,
                              n_max: int = 2000) -> AdmissibleSet:
    system = ecg_augmented_system(model, np.atleast_2d(basis_A), np.atleast_2d(basis_C))
    return shortest_determined(lambda N: build_ecg_oinf(model, yc, basis_A, basis_C, N, epsilon),
                               system, yc, n_min, n_step, n_max)
