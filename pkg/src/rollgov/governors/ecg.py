"""Extended command governor with a Laguerre virtual command sequence.

The applied command is ``v = C_bar xbar + rho`` where ``xbar`` evolves by
``xbar+ = A_bar xbar`` and ``rho`` is the constant the sequence settles to.
The QP picks ``(xbar, rho)`` closest to the reference in a Lyapunov-weighted
sense. It only runs when the reference itself fails the plain set test.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_discrete_lyapunov

from rollgov.admissible import AdmissibleSet, OutputConstraints
from rollgov.governors.base import Governor, GovernorDecision, Measurement, Recovery
from rollgov.governors.lrg import build_rows, output_offset
from rollgov.governors.qp import solve_qp
from rollgov.linear import LinearModel, MplBank, select_index


@dataclass(frozen=True)
class LaguerreBasis:
    alpha: float
    depth: int = 4

    def __post_init__(self):
        if not 0 <= self.alpha <= 1:
            raise ValueError("alpha must lie in [0, 1]")
        if self.depth < 1:
            raise ValueError("depth must be positive")

    @property
    def mu(self) -> float:
        return 1.0 - self.alpha

    @property
    def A(self) -> np.ndarray:
        a, n = self.alpha, self.depth
        out = np.diag(np.full(n, a))
        for i in range(n):
            for j in range(i + 1, n):
                out[i, j] = (-a) ** (j - i - 1) * self.mu
        return out

    @property
    def C(self) -> np.ndarray:
        return np.array([[(-self.alpha) ** i for i in range(self.depth)]])

    @classmethod
    def matched(cls, dt: float, tau: float, depth: int = 4) -> LaguerreBasis:
        """Basis whose pole matches a time constant ``tau``."""
        return cls(max(0.0, 1.0 - dt / tau), depth)


def slowest_time_constant(model: LinearModel) -> float:
    """Reciprocal magnitude of the slowest pole of a continuous model."""
    if model.discrete:
        raise ValueError("needs the continuous model")
    return 1.0 / float(np.min(np.abs(np.linalg.eigvals(model.A))))


@dataclass(frozen=True)
class EcgWeights:
    P: np.ndarray
    Q: np.ndarray
    gain: float

    @classmethod
    def for_basis(cls, basis: LaguerreBasis, gain: float = 1.0) -> EcgWeights:
        Abar = basis.A
        Q = gain * np.eye(basis.depth)
        # scipy solves a X a' - X + q = 0, so pass the transpose
        P = solve_discrete_lyapunov(Abar.T, Q)
        P = 0.5 * (P + P.T)
        return cls(P, Q, gain)

    def residual(self, Abar) -> float:
        return float(np.max(np.abs(Abar.T @ self.P @ Abar - self.P + self.Q)))


@dataclass
class EcgConfig:
    compensate: bool = True
    qp_tol: float = 1e-10


class ExtendedCommandGovernor(Governor):
    name = "ECG"

    def __init__(self, bank: MplBank, plain_sets: list[AdmissibleSet], ecg_sets: list[AdmissibleSet],
                 basis: LaguerreBasis, weights: EcgWeights, yc: OutputConstraints,
                 config: EcgConfig | None = None):
        if not (len(bank.models) == len(plain_sets) == len(ecg_sets)):
            raise ValueError("one plain and one extended set per bank model required")
        self.bank = bank
        self.plain_sets = plain_sets
        self.ecg_sets = ecg_sets
        self.basis = basis
        self.weights = weights
        self.yc = yc
        self.config = config or EcgConfig()
        self._Abar = basis.A
        self._Cbar = basis.C.ravel()
        self._H = np.zeros((basis.depth + 1, basis.depth + 1))
        self._H[: basis.depth, : basis.depth] = weights.P
        self._H[basis.depth, basis.depth] = weights.gain
        self.qp_calls = 0
        self.reset()

    def reset(self) -> None:
        self.prev_v = 0.0
        self.xbar = np.zeros(self.basis.depth)  # virtual state for the current step
        self.rho = 0.0
        self.qp_calls = 0

    def step(self, ref: float, meas: Measurement) -> GovernorDecision:
        t0 = time.perf_counter()
        idx = select_index(self.bank, self.prev_v)
        model = self.bank.models[idx]
        sign = -1.0 if (self.prev_v < 0 and model.delta0 > 0) else 1.0
        comp = self.config.compensate
        plain = build_rows(self.plain_sets[idx], model, sign, meas.lateral, meas.ltr, comp)
        if plain.feasible(ref):
            self.xbar = np.zeros(self.basis.depth)
            self.rho = ref
            self.prev_v = ref
            return GovernorDecision.passthrough(ref, time.perf_counter() - t0)

        self.qp_calls += 1
        aset = self.ecg_sets[idx]
        dx, d = output_offset(model, sign, meas.lateral, meas.ltr, comp)
        u0 = sign * model.delta0
        nb = self.basis.depth
        # decision z = (xbar, rho - u0); set columns are (rho, x, xbar, d)
        A_rho = aset.A[:, :1]
        A_x = aset.A[:, 1:1 + model.A.shape[0]]
        A_bar = aset.A[:, 1 + model.A.shape[0]:1 + model.A.shape[0] + nb]
        A_d = aset.A[:, aset.d_cols]
        G = np.hstack([A_bar, A_rho])
        rhs = aset.b - A_x @ dx - A_d @ d
        f = np.zeros(nb + 1)
        f[nb] = -self.weights.gain * (ref - u0)
        res = solve_qp(self._H, f, G, rhs, tol=self.config.qp_tol)
        if res.ok:
            xbar = res.x[:nb]
            rho = u0 + res.x[nb]
            v = float(self._Cbar @ xbar + rho)
            self.xbar = self._Abar @ xbar
            self.rho = rho
            rec, level = Recovery.NONE, 1
        else:
            # keep following the last feasible virtual sequence
            v = float(self._Cbar @ self.xbar + self.rho)
            self.xbar = self._Abar @ self.xbar
            rec, level = Recovery.LAST_COMMAND, 0
        self.prev_v = v
        return GovernorDecision(v=v, active=v != ref, level=level, recovery=rec,
                                solve_time=time.perf_counter() - t0, gain=math.nan, qp_solved=res.ok)
