import math
from dataclasses import dataclass

import numpy as np
import pytest
from conftest import hit_and_run
from hypothesis import given, settings
from hypothesis import strategies as st

from rollgov.admissible import (
    AdmissibleSet,
    OutputConstraints,
    SetVariant,
    augment_disturbance,
    build_determined_oinf,
    build_ecg_oinf,
    build_oinf,
    check_finite_determination,
    ecg_augmented_system,
    finite_determination_gap,
    membership,
    model_system,
    row_margins,
)
from rollgov.governors.ecg import LaguerreBasis
from rollgov.linear import LinearModel


@dataclass(frozen=True)
class ScalarBox:
    """|y| <= 1 for a single output."""

    @property
    def A_y(self):
        return np.array([[1.0], [-1.0]])

    @property
    def b_y(self):
        return np.array([1.0, 1.0])


def scalar_model(a=0.5, b=1.0, c=1.0, d=0.0):
    return LinearModel(np.array([[a]]), np.array([[b]]), np.array([[c]]), np.array([[d]]),
                       np.zeros(1), 0.0, np.zeros(1), 20.0, 0.01)


def simulate_outputs(model_or_sys, u, x, steps):
    A, B, C, D = model_or_sys
    ys = []
    x = np.array(x, dtype=float)
    u = np.atleast_1d(u)
    for _ in range(steps + 1):
        ys.append(C @ x + D @ u)
        x = A @ x + B @ u
    return np.array(ys)


# ------------------------------------------------------------------ hand-stacked toys

def test_scalar_toy_explicit_rows():
    s = build_oinf(scalar_model(), ScalarBox(), N=2, epsilon=0.01)
    expected_A = np.array([
        [0.0, 1.0], [0.0, -1.0],
        [1.0, 0.5], [-1.0, -0.5],
        [1.5, 0.25], [-1.5, -0.25],
        [2.0, 0.0], [-2.0, 0.0],
    ])
    expected_b = np.array([1, 1, 1, 1, 1, 1, 0.99, 0.99])
    np.testing.assert_allclose(s.A, expected_A, atol=1e-15)
    np.testing.assert_allclose(s.b, expected_b, atol=1e-15)
    assert s.n_rows == 2 * (2 + 2)
    assert s.variant is SetVariant.PLAIN


def test_first_block_is_direct_feedthrough():
    m = scalar_model(a=0.3, b=2.0, c=-1.5, d=0.7)
    s = build_oinf(m, ScalarBox(), N=5)
    np.testing.assert_allclose(s.A[s.block(0)], np.hstack([ScalarBox().A_y @ m.D, ScalarBox().A_y @ m.C]))


def test_general_block_formula():
    rng = np.random.default_rng(3)
    A = rng.standard_normal((3, 3))
    A *= 0.9 / np.max(np.abs(np.linalg.eigvals(A)))
    m = LinearModel(A, rng.standard_normal((3, 1)), rng.standard_normal((2, 3)),
                    rng.standard_normal((2, 1)), np.zeros(3), 0.0, np.zeros(2), 20.0, 0.01)
    yc = OutputConstraints()
    s = build_oinf(m, yc, N=12, epsilon=0.05)
    I = np.eye(3)
    for k in range(13):
        Ak = np.linalg.matrix_power(A, k)
        cu = m.C @ np.linalg.inv(I - A) @ (I - Ak) @ m.B + m.D
        np.testing.assert_allclose(s.A[s.block(k), 0:1], yc.A_y @ cu, atol=1e-12)
        np.testing.assert_allclose(s.A[s.block(k), 1:], yc.A_y @ m.C @ Ak, atol=1e-12)
    H = m.C @ np.linalg.inv(I - A) @ m.B + m.D
    np.testing.assert_allclose(s.A[s.block(13), 0:1], yc.A_y @ H, atol=1e-12)
    np.testing.assert_allclose(s.b[s.block(13)], 0.95 * yc.b_y)


def test_rejects_unstable_or_continuous():
    with pytest.raises(ValueError):
        build_oinf(scalar_model(a=1.0), ScalarBox(), 5)
    cont = LinearModel(np.array([[-1.0]]), np.ones((1, 1)), np.ones((1, 1)), np.zeros((1, 1)),
                       np.zeros(1), 0.0, np.zeros(1), 20.0)
    with pytest.raises(ValueError):
        build_oinf(cont, ScalarBox(), 5)
    with pytest.raises(ValueError):
        build_oinf(scalar_model(), ScalarBox(), 5, epsilon=0.0)


def test_disturbance_shift_on_toy():
    plain = build_oinf(scalar_model(), ScalarBox(), N=2, epsilon=0.01)
    aug = augment_disturbance(plain, ScalarBox())
    assert aug.n_cols == plain.n_cols + 1
    assert aug.variant is SetVariant.DISTURBANCE
    u, x = 0.1, 0.2
    diff = plain.row_margins(plain.point(u, [x])) - aug.row_margins(aug.point(u, [x], [0.2]))
    np.testing.assert_allclose(diff, np.tile([0.2, -0.2], 4), atol=1e-15)
    # feasible constant-command interval at x=0: each bound moves by 0.2 / (steady gain 2)
    def interval(aset, d):
        us = np.linspace(-1, 1, 200001)
        ok = [aset.contains(aset.point(v, [0.0], d)) for v in us[::100]]
        return us[::100][np.flatnonzero(ok)[[0, -1]]]
    lo0, hi0 = interval(aug, [0.0])
    lo1, hi1 = interval(aug, [0.2])
    assert hi0 - hi1 == pytest.approx(0.1, abs=2e-3)
    assert lo0 - lo1 == pytest.approx(0.1, abs=2e-3)


def test_double_augmentation_rejected():
    aug = augment_disturbance(build_oinf(scalar_model(), ScalarBox(), 3), ScalarBox())
    with pytest.raises(ValueError):
        augment_disturbance(aug, ScalarBox())


def test_two_output_augmentation_adds_two_columns(toolkit):
    m = toolkit.bank("RGMPL3").models[3]
    s = build_oinf(m, toolkit.config.constraints, 20)
    aug = augment_disturbance(s, toolkit.config.constraints)
    assert aug.n_cols == s.n_cols + 2 and aug.n_dist == 2
    rng = np.random.default_rng(0)
    for _ in range(200):
        z = rng.standard_normal(s.n_cols) * [0.5, 0.2, 0.1, 0.1, 0.02]
        assert s.contains(z) == aug.contains(np.concatenate([z, [0.0, 0.0]]))


def test_ecg_toy_stack_by_hand():
    basis = LaguerreBasis(0.4, depth=2)
    m = scalar_model(a=0.6, b=0.5, c=2.0, d=0.1)
    s = build_ecg_oinf(m, ScalarBox(), basis.A, basis.C, N=3, epsilon=0.02)
    Ab = np.array([[0.4, 0.6], [0.0, 0.4]])
    Cb = np.array([[1.0, -0.4]])
    Aa = np.array([[0.6, 0.5 * 1.0, 0.5 * -0.4], [0, 0.4, 0.6], [0, 0, 0.4]])
    Ba = np.array([[0.5], [0], [0]])
    Ca = np.array([[2.0, 0.1, -0.04]])
    np.testing.assert_allclose(basis.A, Ab)
    np.testing.assert_allclose(basis.C, Cb)
    A_aug, B_aug, C_aug, D_aug = ecg_augmented_system(m, basis.A, basis.C)
    np.testing.assert_allclose(A_aug, Aa)
    np.testing.assert_allclose(C_aug, Ca)
    rows = []
    for k in range(4):
        acc = sum((np.linalg.matrix_power(Aa, j) @ Ba for j in range(k)), np.zeros((3, 1)))
        rows.append(np.hstack([Ca @ acc + 0.1, Ca @ np.linalg.matrix_power(Aa, k)]))
    H = Ca @ np.linalg.solve(np.eye(3) - Aa, Ba) + 0.1
    rows.append(np.hstack([H, np.zeros((1, 3))]))
    expected = np.vstack([np.vstack([r, -r]) for r in rows])
    np.testing.assert_allclose(s.A, expected, atol=1e-14)
    np.testing.assert_allclose(s.b, [1] * 8 + [0.98, 0.98])
    assert s.variant is SetVariant.ECG and s.n_state == 3


def test_ecg_zero_virtual_state_matches_plain(toolkit):
    m = toolkit.bank("RGMPL3").models[5]
    b = toolkit.basis
    yc = toolkit.config.constraints
    plain = build_oinf(m, yc, 40)
    ecg = build_ecg_oinf(m, yc, b.A, b.C, 40)
    rng = np.random.default_rng(1)
    for _ in range(300):
        u = rng.uniform(-1.5, 1.5)
        x = rng.standard_normal(4) * [0.3, 0.1, 0.1, 0.03]
        assert plain.contains(plain.point(u, x)) == ecg.contains(ecg.point(u, np.concatenate([x, np.zeros(4)])))


def test_ecg_rejects_unstable_basis():
    with pytest.raises(ValueError):
        build_ecg_oinf(scalar_model(), ScalarBox(), np.array([[1.0]]), np.array([[1.0]]), 3)


def test_shift_register_basis():
    b = LaguerreBasis(0.0, depth=4)
    np.testing.assert_array_equal(b.A, np.eye(4, k=1))
    np.testing.assert_array_equal(b.C, [[1.0, 0.0, 0.0, 0.0]])
    xbar = np.array([0.3, -0.1, 0.7, 0.2])
    seq = []
    for _ in range(6):
        seq.append((b.C @ xbar).item())
        xbar = b.A @ xbar
    assert seq == [0.3, -0.1, 0.7, 0.2, 0.0, 0.0]


# ------------------------------------------------------------------ membership API

def test_margins_and_dimension_checks():
    s = build_oinf(scalar_model(), ScalarBox(), N=2, epsilon=0.01)
    z = s.point(0.0, [0.0])
    assert membership(s, z)
    np.testing.assert_array_equal(row_margins(s, z), s.b)
    assert np.all(row_margins(s, z) > 0)
    with pytest.raises(ValueError):
        s.row_margins(np.zeros(3))
    with pytest.raises(ValueError):
        s.point(0.0, [0.0], [1.0])


def test_trim_point_strictly_inside(toolkit):
    for aset in toolkit.sets("RGMPL3"):
        z = aset.point(0.0, np.zeros(aset.n_state), np.zeros(aset.n_dist))
        assert np.all(aset.row_margins(z) > 0)


def test_boundary_by_line_search(toolkit):
    aset = toolkit.sets("RGMPL3")[4]
    rng = np.random.default_rng(7)
    for _ in range(20):
        d = rng.standard_normal(aset.n_cols - aset.n_dist)
        d = np.concatenate([d, np.zeros(aset.n_dist)])
        ad = aset.A @ d
        t = np.min(aset.b[ad > 0] / ad[ad > 0])
        # bisection oracle on membership alone
        lo, hi = 0.0, 10 * t
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if aset.contains(mid * d) else (lo, mid)
        assert lo == pytest.approx(t, rel=1e-12)
        assert np.min(aset.row_margins(t * d)) == pytest.approx(0.0, abs=1e-12)
        assert aset.contains(0.999 * t * d) and not aset.contains(1.001 * t * d)


def test_violated_row_matches_forward_simulation(toolkit):
    m = toolkit.bank("RGMPL3").models[0]
    yc = toolkit.config.constraints
    aset = build_oinf(m, yc, 100)
    # a constant command that is fine at first but tips LTR over later
    u = 0.9 * yc.steer_lim
    ys = simulate_outputs(model_system(m), u, np.zeros(4), 100)
    first_sim = int(np.flatnonzero(np.any(ys @ yc.A_y.T > yc.b_y, axis=1))[0])
    margins = aset.row_margins(aset.point(u, np.zeros(4)))
    first_row = int(np.flatnonzero(margins < 0)[0])
    assert first_row // aset.block_rows == first_sim
    assert first_sim > 0


def test_serialisation_round_trip(toolkit, tmp_path):
    aset = toolkit.sets("RGMPL3", "ecg")[2]
    path = tmp_path / "set.json"
    aset.save(path)
    back = AdmissibleSet.load(path)
    np.testing.assert_array_equal(back.A, aset.A)
    np.testing.assert_array_equal(back.b, aset.b)
    assert (back.horizon, back.epsilon, back.variant, back.source) == \
        (aset.horizon, aset.epsilon, aset.variant, aset.source)


def test_scaled_and_dropped_blocks():
    s = build_oinf(scalar_model(), ScalarBox(), N=2, epsilon=0.01)
    np.testing.assert_allclose(s.scaled(1.5).b, 1.5 * s.b)
    dropped = s.drop_leading_blocks(1)
    assert dropped.n_rows == s.n_rows - 2
    np.testing.assert_array_equal(dropped.A, s.A[2:])


# ------------------------------------------------------------------ properties

@settings(max_examples=60, deadline=None)
@given(e1=st.floats(1e-4, 0.3), e2=st.floats(1e-4, 0.3), u=st.floats(-0.6, 0.6), x=st.floats(-1.5, 1.5))
def test_epsilon_monotone_scalar(e1, e2, u, x):
    big, small = max(e1, e2), min(e1, e2)
    tight = build_oinf(scalar_model(), ScalarBox(), 6, big)
    loose = build_oinf(scalar_model(), ScalarBox(), 6, small)
    z = np.array([u, x])
    if tight.contains(z):
        assert loose.contains(z)


@settings(max_examples=40, deadline=None)
@given(a=st.floats(-0.95, 0.95), b=st.floats(-2, 2), c=st.floats(-2, 2), d=st.floats(-1, 1),
       u=st.floats(-2, 2), x=st.floats(-2, 2))
def test_scalar_soundness_and_invariance(a, b, c, d, u, x):
    m = scalar_model(a, b, c, d)
    s = build_oinf(m, ScalarBox(), 150, 0.01)
    if not s.contains(np.array([u, x])):
        return
    ys = simulate_outputs(model_system(m), u, [x], 450)
    assert np.all(np.abs(ys) <= 1 + 1e-9)
    assert s.contains(np.array([u, a * x + b * u]), tol=1e-9)


def test_real_set_members_are_sound(toolkit):
    """Sampled members of every bank set satisfy the output box for 3N steps."""
    yc = toolkit.config.constraints
    rng = np.random.default_rng(11)
    for m, aset in zip(toolkit.bank("RGMPL3").models, toolkit.sets("RGMPL3")):
        cols = slice(0, aset.n_cols - aset.n_dist)
        pts = hit_and_run(aset.A[:, cols], aset.b, np.zeros(5), 100, rng)
        A, B, C, D = model_system(m)
        for z in pts:
            ys = simulate_outputs((A, B, C, D), z[:1], z[1:], 3 * aset.horizon)
            assert np.max(ys @ yc.A_y.T - yc.b_y) <= 1e-9
            assert aset.contains(np.concatenate([z[:1], A @ z[1:] + B @ z[:1], np.zeros(2)]), tol=1e-9)


def test_disturbance_members_keep_offset_outputs_inside(toolkit):
    yc = toolkit.config.constraints
    rng = np.random.default_rng(5)
    m, aset = toolkit.bank("RGMPL3").models[6], toolkit.sets("RGMPL3")[6]
    pts = hit_and_run(aset.A, aset.b, np.zeros(aset.n_cols), 200, rng)
    for z in pts:
        u, x, d = z[:1], z[1:5], z[5:]
        ys = simulate_outputs(model_system(m), u, x, aset.horizon) + d
        assert np.max(ys @ yc.A_y.T - yc.b_y) <= 1e-9


def test_auto_horizon_is_finitely_determined(toolkit):
    yc = toolkit.config.constraints
    for m, aset in zip(toolkit.bank("RGMPL3").models, toolkit.sets("RGMPL3")):
        assert aset.horizon >= 100
        gap = finite_determination_gap(aset, model_system(m), yc)
        assert gap <= 1e-9


def oscillator(r=0.95, theta=0.3):
    A = r * np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    return LinearModel(A, np.array([[0.1], [0.0]]), np.array([[1.0, 0.0]]), np.zeros((1, 1)),
                       np.zeros(2), 0.0, np.zeros(1), 20.0, 0.01)


def test_short_horizon_is_flagged():
    # underdamped response overshoots after the first few steps
    m = oscillator()
    s = build_oinf(m, ScalarBox(), 3, 1e-3)
    with pytest.warns(UserWarning, match="too short"):
        assert not check_finite_determination(s, model_system(m), ScalarBox())
    d = build_determined_oinf(m, ScalarBox(), 1e-3, n_min=3, n_step=5)
    assert finite_determination_gap(d, model_system(m), ScalarBox()) <= 1e-9
    assert d.horizon > 3


def test_invariant_points_stay_feasible_under_positive_invariance():
    """An exactly determined set keeps its members inside under the dynamics."""
    m = scalar_model(a=0.8, b=0.3, c=1.0, d=0.2)
    s = build_determined_oinf(m, ScalarBox(), 1e-2, n_min=5, n_step=1)
    rng = np.random.default_rng(2)
    pts = hit_and_run(s.A, s.b, np.zeros(2), 500, rng)
    for u, x in pts:
        for _ in range(50):
            x = 0.8 * x + 0.3 * u
            assert s.contains(np.array([u, x]), tol=1e-12)


def test_output_constraints_validation():
    with pytest.raises(ValueError):
        OutputConstraints(0.0, 1.0)
    yc = OutputConstraints(0.99, math.radians(180))
    assert yc.contains([0.5, 1.0]) and not yc.contains([1.0, 0.0])
