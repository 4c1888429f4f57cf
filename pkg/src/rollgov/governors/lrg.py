"""Linear reference governor over a bank of admissible sets.

Each step scales the move from the previous command toward the reference,
``v = prev + k (ref - prev)``, with the largest ``k`` in [0, 1] that keeps the
constant-command prediction inside the admissible set. Every set row is
affine in ``k``, so the feasible gains form an interval computed exactly.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from rollgov.admissible import AdmissibleSet, OutputConstraints
from rollgov.governors.base import Governor, GovernorDecision, Measurement, Recovery
from rollgov.linear import LinearModel, MplBank, select_index

# a command coefficient this small is treated as zero
_ZERO_COEF = 1e-14


@dataclass(frozen=True)
class RowProblem:
    """Set rows written as ``coef * v <= rhs`` for an absolute command ``v``."""

    coef: np.ndarray
    rhs: np.ndarray

    def margins(self, v: float) -> np.ndarray:
        return self.rhs - self.coef * v

    def feasible(self, v: float, tol: float = 0.0) -> bool:
        return bool(np.all(self.margins(v) >= -tol))

    def subset(self, rows) -> RowProblem:
        return RowProblem(self.coef[rows], self.rhs[rows])


def gain_interval(g: np.ndarray, h: np.ndarray):
    """Rows ``g k <= h``; returns (lo, hi, level-0 flag, lower bounds, upper bounds)."""
    zero = np.abs(g) <= _ZERO_COEF * (1.0 + np.abs(h))
    pos = (g > 0) & ~zero
    neg = (g < 0) & ~zero
    ub = h[pos] / g[pos]
    lb = h[neg] / g[neg]
    hi = float(np.min(ub)) if ub.size else math.inf
    lo = float(np.max(lb)) if lb.size else -math.inf
    flag = bool(np.any(h[zero] < 0))
    return lo, hi, flag, lb, ub


def classify_feasibility(lo: float, hi: float, level0: bool, lb=None, ub=None) -> int:
    """Feasibility level from the gain interval ``[lo, hi]``."""
    if lo <= hi:
        if hi < 0:
            base = -2
        elif lo > 1:
            base = -1
        else:
            base = 1
    else:
        above = lb is not None and np.any(lb > 1)
        below = ub is not None and np.any(ub < 0)
        if above and not below:
            base = -1
        elif below and not above:
            base = -2
        else:
            base = -3
    if not level0:
        return base
    return {1: 0, -1: -4, -2: -5, -3: -6}[base]


def feasible_command_interval(rows: RowProblem, skip_zero: bool = True):
    """Interval of absolute commands satisfying every row (rows with no command
    dependence are ignored when ``skip_zero``)."""
    zero = np.abs(rows.coef) <= _ZERO_COEF * (1.0 + np.abs(rows.rhs))
    if not skip_zero and np.any(rows.rhs[zero] < 0):
        return math.inf, -math.inf
    pos = (rows.coef > 0) & ~zero
    neg = (rows.coef < 0) & ~zero
    hi = float(np.min(rows.rhs[pos] / rows.coef[pos])) if np.any(pos) else math.inf
    lo = float(np.max(rows.rhs[neg] / rows.coef[neg])) if np.any(neg) else -math.inf
    return lo, hi


def scan_step(rows: RowProblem, ref: float, prev: float):
    """Largest gain, level and command for one row problem."""
    g = rows.coef * (ref - prev)
    h = rows.rhs - rows.coef * prev
    lo, hi, flag, lb, ub = gain_interval(g, h)
    level = classify_feasibility(lo, hi, flag, lb, ub)
    if level != 1:
        return None, level
    k = min(hi, 1.0)
    return k, level


def recover_last_command(prev: float) -> float:
    return prev


def recover_contraction(rows: RowProblem, ref: float, prev: float):
    """Feasible command closest to ``ref`` inside the contraction domain, or None."""
    if prev >= 0 and ref >= 0:
        s_lo, s_hi = 0.0, max(prev, ref)
    elif prev <= 0 and ref <= 0:
        s_lo, s_hi = min(prev, ref), 0.0
    else:
        s_lo, s_hi = min(prev, ref), max(prev, ref)
    lo, hi = feasible_command_interval(rows)
    lo, hi = max(lo, s_lo), min(hi, s_hi)
    if lo > hi:
        return None
    return float(min(max(ref, lo), hi))


def recover_row_removal(rows: RowProblem, ref: float, prev: float, block_rows: int):
    """Drop leading prediction blocks until the gain interval is non-empty.

    Returns (v or None, rows removed, gain).
    """
    n_blocks = rows.coef.size // block_rows
    for i in range(1, n_blocks):
        sub = rows.subset(slice(i * block_rows, None))
        k, level = scan_step(sub, ref, prev)
        if k is not None:
            return prev + k * (ref - prev), i * block_rows, k
    return None, (n_blocks - 1) * block_rows, 0.0


def recover_relaxation(rows: RowProblem, ref: float, prev: float, nominal_rhs_scale: np.ndarray,
                       eps0: float = 1e-3, rounds: int = 20, eps_max: float = 1e6):
    """Inflate the set bounds by ``(1 + eps)`` until a gain is found.

    ``nominal_rhs_scale`` holds the original bounds ``b``; inflating by eps
    adds ``eps * b`` to each right-hand side. Returns (v or None, eps, gain).
    """

    def attempt(eps):
        return scan_step(RowProblem(rows.coef, rows.rhs + eps * nominal_rhs_scale), ref, prev)[0]

    eps = eps0
    k = attempt(eps)
    bad = 0.0
    while k is None:
        bad = eps
        eps *= 2.0
        if eps > eps_max:
            return None, eps, 0.0
        k = attempt(eps)
    good = eps
    for _ in range(rounds):
        mid = 0.5 * (bad + good)
        km = attempt(mid)
        if km is None:
            bad = mid
        else:
            good, k = mid, km
    return prev + k * (ref - prev), good, k


@dataclass
class LrgConfig:
    recovery: Recovery = Recovery.CONTRACTION
    compensate: bool = True  # feed the nonlinear output difference


class LinearReferenceGovernor(Governor):
    """Reference governor over the nearest-point linear model of a bank."""

    name = "LRG"

    def __init__(self, bank: MplBank, sets: list[AdmissibleSet], yc: OutputConstraints,
                 config: LrgConfig | None = None):
        if len(sets) != len(bank.models):
            raise ValueError("one set per bank model required")
        for s in sets:
            if s.n_dist != 2:
                raise ValueError("sets need output-offset columns")
        self.bank = bank
        self.sets = sets
        self.yc = yc
        self.config = config or LrgConfig()
        self.prev_v = 0.0

    def reset(self) -> None:
        self.prev_v = 0.0

    def row_problem(self, meas: Measurement, anchor: float) -> tuple[RowProblem, AdmissibleSet]:
        """Rows in absolute-command form for the model nearest to ``anchor``."""
        idx = select_index(self.bank, anchor)
        model = self.bank.models[idx]
        aset = self.sets[idx]
        sign = -1.0 if (anchor < 0 and model.delta0 > 0) else 1.0
        return build_rows(aset, model, sign, meas.lateral, meas.ltr, self.config.compensate), aset

    def step(self, ref: float, meas: Measurement) -> GovernorDecision:
        t0 = time.perf_counter()
        prev = self.prev_v
        rows, aset = self.row_problem(meas, prev)
        if rows.feasible(ref):
            self.prev_v = ref
            return GovernorDecision.passthrough(ref, time.perf_counter() - t0)
        k, level = scan_step(rows, ref, prev)
        rec, removed, eps = Recovery.NONE, 0, 0.0
        if k is not None:
            v = prev + k * (ref - prev)
        else:
            v, k, rec, removed, eps = self._recover(rows, aset, ref, prev)
        self.prev_v = v
        return GovernorDecision(v=v, active=v != ref, level=level, recovery=rec, rows_removed=removed,
                                relax_epsilon=eps, solve_time=time.perf_counter() - t0, gain=k)

    def _recover(self, rows, aset, ref, prev):
        mode = self.config.recovery
        if mode is Recovery.CONTRACTION:
            v = recover_contraction(rows, ref, prev)
            if v is not None:
                k = (v - prev) / (ref - prev) if ref != prev else 0.0
                return v, k, Recovery.CONTRACTION, 0, 0.0
        elif mode is Recovery.ROW_REMOVAL:
            v, removed, k = recover_row_removal(rows, ref, prev, aset.block_rows)
            if v is not None:
                return v, k, Recovery.ROW_REMOVAL, removed, 0.0
            return prev, 0.0, Recovery.LAST_COMMAND, removed, 0.0
        elif mode is Recovery.RELAXATION:
            v, eps, k = recover_relaxation(rows, ref, prev, aset.b)
            if v is not None:
                return v, k, Recovery.RELAXATION, 0, eps
        return recover_last_command(prev), 0.0, Recovery.LAST_COMMAND, 0, 0.0


def output_offset(model: LinearModel, sign: float, lateral, ltr_meas: float, compensate: bool):
    """Constant output offset fed to the disturbance columns and the state deviation.

    With compensation the LTR offset absorbs the gap between the measured
    LTR and the linear prediction at the current state.
    """
    dx = np.asarray(lateral, dtype=float) - sign * model.x0
    if compensate:
        d = np.array([ltr_meas - model.C[0] @ dx, sign * model.delta0])
    else:
        d = sign * model.y0
    return dx, d


def build_rows(aset: AdmissibleSet, model: LinearModel, sign: float, lateral, ltr_meas: float,
               compensate: bool, extra_state=None) -> RowProblem:
    dx, d = output_offset(model, sign, lateral, ltr_meas, compensate)
    xs = dx if extra_state is None else np.concatenate([dx, extra_state])
    a_u = aset.A[:, 0]
    rhs = aset.b - aset.A[:, aset.x_cols] @ xs - aset.A[:, aset.d_cols] @ d + a_u * (sign * model.delta0)
    return RowProblem(a_u.copy(), rhs)
