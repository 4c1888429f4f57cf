"""Dense strictly convex QP by the Goldfarb-Idnani dual active-set method.

Solves ``min 0.5 x'Hx + f'x  s.t.  A x <= b``. The method starts from the
unconstrained minimiser and adds violated constraints one at a time while
keeping the dual iterate feasible, so an empty step direction with no
droppable constraint certifies primal infeasibility.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular


@dataclass
class QPResult:
    x: np.ndarray
    multipliers: np.ndarray  # one per inequality row, zero when inactive
    active: list
    iterations: int
    status: str  # "optimal", "infeasible" or "max_iter"

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


def solve_qp(H, f, A=None, b=None, tol: float = 1e-10, max_iter: int | None = None) -> QPResult:
    H = np.asarray(H, dtype=float)
    f = np.asarray(f, dtype=float).ravel()
    n = f.size
    if A is None or len(A) == 0:
        A = np.zeros((0, n))
        b = np.zeros(0)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    m = A.shape[0]
    if max_iter is None:
        max_iter = 10 * (m + n) + 50

    # internally the rows are n'x >= c with n = -A_i, c = -b_i
    Nn = -A
    c = -b
    cho = cho_factor(H, lower=True)
    Lw = np.tril(cho[0])
    Linv = solve_triangular(Lw, np.eye(n), lower=True)
    x = -cho_solve(cho, f)
    active: list[int] = []
    u = np.zeros(0)
    scale = 1.0 + np.abs(b)

    def factor(act):
        # J = L^-T Q with Q from the QR of L^-1 N_active; R is its triangle
        if not act:
            return Linv.T, np.zeros((0, 0))
        Q, R = np.linalg.qr(Linv @ Nn[act].T, mode="complete")
        return Linv.T @ Q, R[: len(act), :]

    def result(status, mult):
        lam = np.zeros(m)
        lam[active] = mult
        return QPResult(x, lam, list(active), it, status)

    J, R = factor(active)
    it = 0
    while True:
        viol = (c - Nn @ x) / scale
        if m == 0 or np.max(viol) <= tol:
            return result("optimal", u)
        p = int(np.argmax(viol))
        npl = Nn[p]
        u_plus = np.append(u, 0.0)
        while True:
            it += 1
            if it > max_iter:
                return result("max_iter", u_plus[:-1])
            q = len(active)
            d = J.T @ npl
            z = J[:, q:] @ d[q:]
            r = solve_triangular(R, d[:q], lower=False) if q else np.zeros(0)
            # partial step: largest dual move keeping multipliers non-negative
            t1, k_drop = np.inf, -1
            for j in range(q):
                if r[j] > 0:
                    ratio = u_plus[j] / r[j]
                    if ratio < t1:
                        t1, k_drop = ratio, j
            zn = float(z @ npl)
            s_p = float(npl @ x - c[p])
            t2 = np.inf if abs(zn) <= 1e-14 * max(1.0, float(npl @ npl)) else -s_p / zn
            t = min(t1, t2)
            if not np.isfinite(t):
                return result("infeasible", u_plus[:q])
            if np.isfinite(t2):
                x = x + t * z
            u_plus[:q] -= t * r
            u_plus[q] += t
            if t == t2:
                active.append(p)
                u = u_plus
                J, R = factor(active)
                break
            # drop the blocking constraint and retry the same row
            del active[k_drop]
            u_plus = np.delete(u_plus, k_drop)
            J, R = factor(active)


def kkt_residuals(H, f, A, b, x, lam) -> dict:
    """Primal feasibility, stationarity, dual sign and complementarity residuals."""
    H, A = np.asarray(H), np.atleast_2d(A)
    slack = b - A @ x
    return {
        "primal": float(max(0.0, np.max(-slack))) if slack.size else 0.0,
        "stationarity": float(np.max(np.abs(H @ x + f + A.T @ lam))),
        "dual": float(max(0.0, np.max(-lam))) if lam.size else 0.0,
        "complementarity": float(np.max(np.abs(lam * slack))) if lam.size else 0.0,
    }
