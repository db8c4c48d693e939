import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from platoon_safety.braking import (
    AbsParams, BrakeState, abs_modulate, accel_from_slip, axle_slip, axle_slips, saturation_slip,
    slip_from_accel, wheel_speed,
)
from platoon_safety.dynamics import VehicleParams

CAR = VehicleParams()
ABS = AbsParams()
TS = 0.01


def test_slip_from_accel_examples():
    assert slip_from_accel(0.0, CAR) == 0.0
    assert abs(slip_from_accel(-5.0, CAR)) == pytest.approx(0.09875, abs=1e-12)


@given(st.floats(-50, 50))
def test_slip_round_trip(u):
    assert accel_from_slip(slip_from_accel(u, CAR), CAR) == pytest.approx(u, abs=1e-12)


def test_tire_limit_is_road_capacity_for_defaults():
    assert ABS.limit(CAR) == 10.0
    assert AbsParams(kappa_sat=0.1).limit(CAR) == pytest.approx(0.1 / 0.01975)


def settled(u_cmd):
    """Braking state after the pressure ramp has finished."""
    state = BrakeState().begin_braking()
    for _ in range(20):
        state = abs_modulate(u_cmd, state, ABS, CAR, TS)
    return state


def test_small_command_is_not_clamped():
    u = -0.09 / CAR.slip_per_accel
    state = settled(u)
    assert not state.abs_active
    assert state.u_real == pytest.approx(u)
    assert state.slip == pytest.approx(-0.09)


def test_large_command_is_clamped_to_capacity():
    state = settled(-15.0)
    assert state.u_real == -10.0
    assert state.abs_active
    assert 0.20 <= -state.slip <= 0.24
    assert state.force == pytest.approx(-10.0 * CAR.mass)


def test_pressure_ramp_is_linear():
    state = BrakeState().begin_braking()
    for k in range(10):
        state = abs_modulate(-6.0, state, ABS, CAR, TS)
        assert -state.u_real == pytest.approx(6.0 * k * TS / ABS.build_up, abs=1e-12)
        assert state.ramping
    state = abs_modulate(-6.0, state, ABS, CAR, TS)
    assert state.u_real == -6.0 and state.ramp_done


def test_ramp_starts_from_existing_deceleration():
    state = BrakeState(u_real=-2.0).begin_braking()
    state = abs_modulate(-8.0, state, ABS, CAR, TS)
    assert state.u_real == -2.0
    state = abs_modulate(-8.0, state, ABS, CAR, TS)
    assert state.u_real == pytest.approx(-2.6)


def test_braking_never_accelerates():
    state = settled(3.0)
    assert state.u_real == 0.0 and str(state.u_real) == "0.0"


def test_outside_episode_passes_command_through():
    state = abs_modulate(1.5, BrakeState(), ABS, CAR, TS)
    assert state.u_real == 1.5 and state.elapsed is None and not state.abs_active
    state = abs_modulate(-12.0, BrakeState(), ABS, CAR, TS)
    assert state.u_real == -10.0 and state.abs_active


@settings(max_examples=300)
@given(st.floats(-40, 10), st.integers(0, 200))
def test_slip_stays_in_band(u, steps):
    state = BrakeState().begin_braking()
    for _ in range(steps + 1):
        state = abs_modulate(u, state, ABS, CAR, TS)
    mag = -state.slip
    if state.abs_active:
        assert ABS.kappa_sat - ABS.mod_amplitude <= mag <= ABS.kappa_sat + ABS.mod_amplitude
    else:
        assert 0 <= mag <= ABS.kappa_sat
    assert -state.u_real <= ABS.limit(CAR)


def test_saturation_slip_oscillates_around_saturation():
    clocks = np.arange(0, ABS.mod_period, 0.001)
    vals = [saturation_slip(c, ABS) for c in clocks]
    assert np.mean(vals) == pytest.approx(ABS.kappa_sat, abs=1e-3)
    assert max(vals) == pytest.approx(0.24, abs=1e-4)


def test_axle_slip_examples():
    assert axle_slip(20.0 / 0.3, 20.0, 0.3) == pytest.approx(0.0)
    assert axle_slip(0.0, 20.0, 0.3) == -1.0
    assert axle_slip(18.0 / 0.3, 20.0, 0.3) == pytest.approx(-0.1)
    assert axle_slip(0.0, 0.0, 0.3) == 0.0


@given(st.floats(-0.99, 0.99), st.floats(0.1, 60))
def test_wheel_speed_inverts_axle_slip(kappa, speed):
    assert axle_slip(wheel_speed(kappa, speed, 0.3), speed, 0.3) == pytest.approx(kappa, abs=1e-12)


@settings(max_examples=300)
@given(st.floats(-40, 0), st.integers(0, 60), st.floats(0.5, 40))
def test_rear_axle_slips_at_least_as_much(u, steps, speed):
    state = BrakeState().begin_braking()
    for _ in range(steps + 1):
        state = abs_modulate(u, state, ABS, CAR, TS)
    front, rear = axle_slips(state, speed, CAR, ABS)
    assert rear <= front <= 1e-12
    assert -rear <= ABS.kappa_sat + ABS.mod_amplitude + 1e-12


def test_axle_slips_at_rest_are_zero():
    assert axle_slips(settled(-5.0), 0.0, CAR, ABS) == (0.0, 0.0)


@pytest.mark.parametrize("kwargs", [dict(kappa_sat=0.0), dict(capacity=-1.0), dict(mod_period=0.0),
                                    dict(kappa_sat=0.99, mod_amplitude=0.02)])
def test_abs_params_validation(kwargs):
    with pytest.raises(ValueError):
        AbsParams(**kwargs)


def test_bad_step():
    with pytest.raises(ValueError):
        abs_modulate(-1.0, BrakeState(), ABS, CAR, 0.0)
