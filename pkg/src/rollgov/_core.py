"""Compiled kernels for the roll-augmented single-track plant.

Everything here works on flat float64 arrays so numba can compile it; the
dataclass-level API lives in :mod:`rollgov.vehicle`.
"""

import math

import numpy as np
from numba import njit

# parameter vector layout
LF, LR, TRACK, H_SM, H_UC, M, M_SM, M_UC = 0, 1, 2, 3, 4, 5, 6, 7
IXX_SM, IXX_UC, IYY_SM, IZZ, IXZ_SM = 8, 9, 10, 11, 12
K_SW, K_S, D_S, DK_SS, DD_SS, GRAV, FREE_SPEED, BLOWUP = 13, 14, 15, 16, 17, 18, 19, 20
N_PARAMS = 21

# tire vector layout
TB, TC, TD, TE, TC2 = 0, 1, 2, 3, 4

# state vector layout
U, V, P, R, PHI, PSI, XPOS, YPOS, PHI_UC, P_UC = range(10)
N_STATES = 10


@njit(cache=True)
def magic_formula(tv, mg, fz, slip_ratio, slip_angle):
    """Combined-slip force of one tire, in tire axes."""
    if fz <= 0.0:
        return 0.0, 0.0
    sx = slip_ratio
    sy = math.tan(slip_angle)
    ns = math.sqrt(sx * sx + sy * sy)
    if ns < 1e-12:
        return 0.0, 0.0
    b, c, d, e, c2 = tv[TB], tv[TC], tv[TD], tv[TE], tv[TC2]
    c1 = b * c * d / (4.0 * (1.0 - math.exp(-c2 / 4.0)))
    c_alpha = c1 * mg * (1.0 - math.exp(-c2 * fz / mg))
    f_peak = fz * 1.0527 * d / (1.0 + (1.5 * fz / mg) ** 3)
    sc = c_alpha * ns / f_peak
    shape = math.sin(c * math.atan(sc / c * (1.0 - e) + e * math.atan(sc / c)))
    f = f_peak * shape
    return f * sx / ns, f * sy / ns


@njit(cache=True)
def axle_force(tv, mg, axle_load, slip_ratio, slip_angle, lifted):
    # two wheels share the static axle load; with one side lifted the loaded
    # wheel carries all of it
    if lifted:
        return magic_formula(tv, mg, axle_load, slip_ratio, slip_angle)
    fx, fy = magic_formula(tv, mg, 0.5 * axle_load, slip_ratio, slip_angle)
    return 2.0 * fx, 2.0 * fy


@njit(cache=True)
def load_transfer_ratio(pv, phi, p):
    num = (pv[K_S] * (1.0 - pv[DK_SS] ** 2) * math.tan(phi)
           + pv[D_S] * (1.0 - pv[DD_SS] ** 2) * p * math.cos(phi))
    return 2.0 * num / (pv[M] * pv[GRAV] * pv[TRACK])


@njit(cache=True)
def derivatives(x, side, dsw, lam_f, lam_r, pv, tv, out):
    """Fill ``out`` with dx/dt and return the lateral acceleration v' + u r."""
    u, v, p, r, phi = x[U], x[V], x[P], x[R], x[PHI]
    phi_uc, p_uc = x[PHI_UC], x[P_UC]
    m, m_sm, m_uc, h = pv[M], pv[M_SM], pv[M_UC], pv[H_SM]
    lf, lr, g = pv[LF], pv[LR], pv[GRAV]
    mg = m * g

    delta_f = dsw / pv[K_SW]
    alpha_f = delta_f - math.atan((v + lf * r) / u)
    alpha_r = math.atan((-v + lr * r) / u)
    wheelbase = lf + lr
    lifted = side != 0
    fxf, fyf = axle_force(tv, mg, mg * lr / wheelbase, lam_f, alpha_f, lifted)
    fxr, fyr = axle_force(tv, mg, mg * lf / wheelbase, lam_r, alpha_r, lifted)

    cd, sd = math.cos(delta_f), math.sin(delta_f)
    fx_t = fxf * cd - fyf * sd + fxr
    fy_t = fxf * sd + fyf * cd + fyr
    n_t = lf * (fxf * sd + fyf * cd) - lr * fyr

    dk, dd = pv[DK_SS], pv[DD_SS]
    l_t = (-pv[K_S] * (1.0 - dk * dk) * math.tan(phi)
           - pv[D_S] * (1.0 - dd * dd) * p * math.cos(phi)
           - mg * (dk + dd))

    theta = phi + phi_uc
    ixx_eff = pv[IXX_SM] + h * h * m_sm * m_uc / m * math.cos(phi)
    pdot_abs = (h * m_sm * (fy_t / m + math.sin(theta) * (g + h * m_uc / m * p * p))
                + l_t) / ixx_eff

    uc_acc = 0.0
    if lifted:
        half = 0.5 * pv[TRACK]
        q = side * phi_uc
        i_pivot = pv[IXX_UC] + m * half * half
        q_acc = (-side * l_t - mg * half * math.cos(q)
                 + side * fy_t * half * math.sin(q)) / i_pivot
        uc_acc = side * q_acc

    vdot = (fy_t + m_sm * h * (pdot_abs * math.cos(theta) - p * p * math.sin(theta))) / m - u * r
    if pv[FREE_SPEED] != 0.0:
        udot = (fx_t - m_sm * h * p * math.cos(phi)) / m + v * r
    else:
        udot = 0.0
    psi = x[PSI]
    out[U] = udot
    out[V] = vdot
    out[P] = pdot_abs - uc_acc
    out[R] = n_t / pv[IZZ]
    out[PHI] = p
    out[PSI] = r
    out[XPOS] = u * math.cos(psi) - v * math.sin(psi)
    out[YPOS] = u * math.sin(psi) + v * math.cos(psi)
    out[PHI_UC] = p_uc
    out[P_UC] = uc_acc
    return vdot + u * r


@njit(cache=True)
def rk4(x, side, dsw, h, pv, tv):
    k1 = np.empty(N_STATES)
    k2 = np.empty(N_STATES)
    k3 = np.empty(N_STATES)
    k4 = np.empty(N_STATES)
    tmp = np.empty(N_STATES)
    derivatives(x, side, dsw, 0.0, 0.0, pv, tv, k1)
    for i in range(N_STATES):
        tmp[i] = x[i] + 0.5 * h * k1[i]
    derivatives(tmp, side, dsw, 0.0, 0.0, pv, tv, k2)
    for i in range(N_STATES):
        tmp[i] = x[i] + 0.5 * h * k2[i]
    derivatives(tmp, side, dsw, 0.0, 0.0, pv, tv, k3)
    for i in range(N_STATES):
        tmp[i] = x[i] + h * k3[i]
    derivatives(tmp, side, dsw, 0.0, 0.0, pv, tv, k4)
    for i in range(N_STATES):
        x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])


@njit(cache=True)
def switch_mode(x, side, pv):
    if side == 0:
        ltr = load_transfer_ratio(pv, x[PHI], x[P])
        if ltr >= 1.0:
            return 1
        if ltr <= -1.0:
            return -1
        return 0
    if side * x[PHI_UC] <= 0.0 and side * x[P_UC] <= 0.0:
        # touchdown: undercarriage stops, sprung-mass absolute roll rate kept
        x[P] += x[P_UC]
        x[PHI_UC] = 0.0
        x[P_UC] = 0.0
        return 0
    return side


@njit(cache=True)
def healthy(x, pv):
    for i in range(N_STATES):
        if not math.isfinite(x[i]):
            return False
    bound = pv[BLOWUP]
    return abs(x[PHI]) < bound and abs(x[PHI_UC]) < bound and x[U] > 0.0


@njit(cache=True)
def advance(x, side, dsw, dt, dt_inner, pv, tv):
    """Integrate one control interval in place.

    Returns (side, max wheel lift over the interval, ok).
    """
    n = int(math.ceil(dt / dt_inner - 1e-9))
    if n < 1:
        n = 1
    h = dt / n
    max_lift = 0.0
    for _ in range(n):
        rk4(x, side, dsw, h, pv, tv)
        side = switch_mode(x, side, pv)
        if not healthy(x, pv):
            return side, max_lift, False
        lift = pv[TRACK] * math.sin(abs(x[PHI_UC]))
        if lift > max_lift:
            max_lift = lift
    return side, max_lift, True


@njit(cache=True)
def predict_safe(x0, side, cmd, n_samples, dt, dt_inner, pv, tv, ltr_lim, dsw_lim):
    """Hold ``cmd`` for ``n_samples`` control intervals; True if outputs stay in Y."""
    if abs(cmd) > dsw_lim:
        return False
    x = x0.copy()
    for _ in range(n_samples):
        side, _lift, ok = advance(x, side, cmd, dt, dt_inner, pv, tv)
        if not ok:
            return False
        if abs(load_transfer_ratio(pv, x[PHI], x[P])) > ltr_lim:
            return False
    return True


@njit(cache=True)
def open_loop(x0, side, cmds, dt, dt_inner, pv, tv, traces, lifts):
    """Run a whole command sequence; traces[k] is the state after k intervals.

    Returns the number of intervals completed before any blow-up.
    """
    x = x0.copy()
    traces[0, :] = x
    lifts[0] = pv[TRACK] * math.sin(abs(x[PHI_UC]))
    for k in range(cmds.shape[0]):
        side, lift, ok = advance(x, side, cmds[k], dt, dt_inner, pv, tv)
        traces[k + 1, :] = x
        lifts[k + 1] = lift
        if not ok:
            return k
    return cmds.shape[0]
