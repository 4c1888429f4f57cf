import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import trapezoid

import rollgov.maneuvers as man
from rollgov.maneuvers import ManeuverKind, ManeuverSpec, find_safe_reference, max_lift_of, sine_with_dwell
from rollgov.metrics import Baseline, conservatism, effectiveness, evaluate_run, turning_response
from rollgov.vehicle import TireParams, VehicleParams

VP, DRY = VehicleParams(), TireParams()


# ------------------------------------------------------------------ waveform

def test_waveform_landmarks():
    spec = ManeuverSpec(amplitude=1.0, frequency=0.7, dwell=0.5)
    T = 1 / 0.7
    assert sine_with_dwell(spec, 0.0) == 0.0
    assert sine_with_dwell(spec, T / 4) == pytest.approx(1.0, abs=1e-15)
    assert sine_with_dwell(spec, 0.75 * T + 0.25) == -1.0
    assert sine_with_dwell(spec, T + 0.5 + 1e-9) == 0.0
    assert sine_with_dwell(spec, 100.0) == 0.0
    # continuous at both ends of the dwell
    assert sine_with_dwell(spec, 0.75 * T - 1e-9) == pytest.approx(-1.0, abs=1e-8)
    assert sine_with_dwell(spec, 0.75 * T + 0.5 + 1e-9) == pytest.approx(-1.0, abs=1e-8)
    with pytest.raises(ValueError):
        sine_with_dwell(spec, -0.1)


@pytest.mark.parametrize("freq, dwell", [(0.7, 0.5), (0.5, 0.5), (0.5, 0.0)])
def test_waveform_integrals_closed_form(freq, dwell):
    amp = math.radians(150)
    spec = ManeuverSpec(amplitude=amp, frequency=freq, dwell=dwell, settle=0.0)
    t = np.linspace(0, spec.waveform_end, 400001)
    y = np.array([sine_with_dwell(spec, ti) for ti in t])
    w = 2 * math.pi * freq
    assert trapezoid(y, t) == pytest.approx(-amp * dwell, abs=1e-6)
    assert trapezoid(np.abs(y), t) == pytest.approx(4 * amp / w + amp * dwell, rel=1e-7)


def test_reference_sampling_and_duration():
    spec = ManeuverSpec(frequency=0.5, dwell=0.5, settle=2.0)
    t, ref = spec.reference(0.01)
    assert spec.duration == pytest.approx(4.5)
    assert t[0] == 0.0 and t[-1] == pytest.approx(4.5)
    assert ref.size == 451
    assert np.all(ref[t > spec.waveform_end + 1e-9] == 0.0)
    np.testing.assert_allclose(spec.scaled(0.5).reference(0.01)[1], 0.5 * ref, rtol=0, atol=0)


def test_spec_validation():
    with pytest.raises(ValueError):
        ManeuverSpec(amplitude=-1.0)
    with pytest.raises(ValueError):
        ManeuverSpec(frequency=0.0)
    with pytest.raises(NotImplementedError):
        ManeuverSpec(kind=ManeuverKind.J_TURN)
    with pytest.raises(NotImplementedError):
        ManeuverSpec(kind=ManeuverKind.FISHHOOK)


# ------------------------------------------------------------------ metrics

def test_effectiveness_values():
    assert effectiveness(0.0, 0.05) == 1.0
    assert effectiveness(0.05, 0.05) == 0.0
    assert effectiveness(0.045, 0.05) == pytest.approx(0.1, abs=1e-15)
    assert effectiveness(0.1, 0.05) == -1.0


def test_conservatism_hand_values():
    dt = 0.1
    ref = np.array([0.0, 1.0, 1.0, 1.0, 0.0])
    applied = np.array([0.0, 0.5, 0.5, 1.0, 0.0])
    safe = np.array([0.0, 0.75, 1.0, 1.0, 0.0])
    # |ref - applied| = [0, .5, .5, 0, 0] -> 0.1 ; |ref - safe| = [0, .25, 0, 0, 0] -> 0.025
    # integral of |ref| = 0.3
    assert conservatism(ref, applied, safe, dt) == pytest.approx((0.1 - 0.025) / 0.3, rel=1e-14)
    assert conservatism(ref, applied, applied, dt) == 0.0
    expected = -trapezoid(np.abs(ref - safe), dx=dt) / trapezoid(np.abs(ref), dx=dt)
    assert conservatism(ref, ref, safe, dt) == pytest.approx(expected, rel=1e-14)


def test_turning_response_hand_values():
    dt = 0.5
    ref = np.array([1.0, 1.0, 1.0])
    gain = 0.4
    desired = gain * ref
    r_safe = np.array([0.2, 0.2, 0.2])
    r_app = np.array([0.4, 0.3, 0.4])
    # |des - safe| -> 0.2 ; |des - app| = [0, .1, 0] -> 0.05 ; |des| -> 0.4
    assert turning_response(ref, r_app, r_safe, gain, dt) == pytest.approx((0.2 - 0.05) / 0.4, rel=1e-14)
    assert turning_response(ref, r_safe, r_safe, gain, dt) == 0.0
    assert turning_response(ref, desired, r_safe, gain, dt) > 0


def test_metrics_reject_zero_reference_and_misaligned():
    z = np.zeros(5)
    with pytest.raises(ValueError):
        conservatism(z, z, z, 0.01)
    with pytest.raises(ValueError):
        turning_response(z, z, z, 0.4, 0.01)
    with pytest.raises(ValueError):
        conservatism(np.ones(3), np.ones(4), np.ones(3), 0.01)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=3, max_size=40), st.floats(0.001, 0.1))
def test_metric_identities(trace, dt):
    ref = np.asarray(trace)
    if not np.any(np.abs(ref) > 1e-6):
        return
    applied = 0.7 * ref
    r = 0.3 * ref
    assert abs(conservatism(ref, applied, applied, dt)) <= 1e-12
    assert abs(turning_response(ref, r, r, 0.38, dt)) <= 1e-12


def test_evaluate_run_against_itself():
    t = np.arange(0, 2.01, 0.01)
    ref = np.sin(2 * np.pi * 0.5 * t)
    r = 0.3 * ref
    base = [Baseline("NoLift", ref.copy(), r.copy(), 1.0), Baseline("LimLift", 0.5 * ref, 0.5 * r, 0.5)]
    rep = evaluate_run(ref, ref, r, 0.0, np.zeros(t.size - 1, bool), [1e-4] * (t.size - 1), 0.01, 0.38, base)
    assert rep.eta_lift == 1.0 and rep.active_fraction == 0.0
    assert rep.chi_by_baseline["NoLift"] == 0.0 and rep.eta_psi_by_baseline["NoLift"] == 0.0
    assert rep.chi_by_baseline["reference"] == 0.0
    assert rep.chi_by_baseline["LimLift"] < 0
    rows = rep.rows()
    assert {row["baseline"] for row in rows} == {"NoLift", "LimLift", "reference"}


def test_evaluate_run_zero_reference_has_no_chi():
    z = np.zeros(10)
    rep = evaluate_run(z, z, z, 0.0, np.zeros(9, bool), [], 0.01, 0.38)
    assert rep.chi_by_baseline == {} and rep.eta_lift == 1.0


# ------------------------------------------------------------------ safe reference search

def test_safe_reference_below_threshold_is_unscaled():
    spec = ManeuverSpec(amplitude=math.radians(40))
    assert max_lift_of(spec, VP, DRY) == 0.0
    assert find_safe_reference(spec, VP, DRY) == 1.0


def test_bisection_matches_fine_grid_on_constructed_lift(monkeypatch):
    threshold = 0.43217

    def fake_lift(spec, params, tire, dt=0.01):
        return max(0.0, spec.amplitude_scale - threshold) * 0.3

    monkeypatch.setattr(man, "max_lift_of", fake_lift)
    spec = ManeuverSpec()
    grid = np.arange(0, 1 + 5e-5, 1e-4)
    for limit in (0.0, 0.05):
        s = find_safe_reference(spec, VP, DRY, limit)
        best = grid[[fake_lift(spec.scaled(g), VP, DRY) <= limit for g in grid]].max()
        assert abs(s - best) <= 1e-3
        assert fake_lift(spec.scaled(s), VP, DRY) <= limit


def test_limlift_ordering_and_accuracy():
    spec = ManeuverSpec(amplitude=math.radians(160))
    s_no = find_safe_reference(spec, VP, DRY, 0.0)
    s_lim = find_safe_reference(spec, VP, DRY, 0.05)
    assert 0 < s_no < s_lim < 1
    assert max_lift_of(spec.scaled(s_no), VP, DRY) == 0.0
    assert 0.049 <= max_lift_of(spec.scaled(s_lim), VP, DRY) <= 0.05
