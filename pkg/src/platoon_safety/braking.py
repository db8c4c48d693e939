"""Tire slip, brake pressure build-up and an ABS-style saturation clamp.

Accelerations are signed (braking is negative).  Slip follows the same
sign convention: a braking wheel turns slower than the road, so its slip
is negative.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .dynamics import VehicleParams


@dataclass(frozen=True)
class AbsParams:
    kappa_sat: float = 0.22
    capacity: float = 10.0
    build_up: float = 0.1
    mod_amplitude: float = 0.02
    mod_period: float = 0.08
    load_transfer: float = 0.06

    def __post_init__(self):
        if not 0 < self.kappa_sat < 1:
            raise ValueError("kappa_sat must lie in (0, 1)")
        if not self.capacity > 0:
            raise ValueError("road capacity must be positive")
        for name in ("build_up", "mod_amplitude", "load_transfer"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not self.mod_period > 0:
            raise ValueError("modulation period must be positive")
        if self.kappa_sat + self.mod_amplitude >= 1:
            raise ValueError("saturation band reaches locked-wheel slip")

    def limit(self, vehicle: VehicleParams) -> float:
        """Largest deceleration magnitude the tires can deliver."""
        return min(self.capacity, self.kappa_sat / vehicle.slip_per_accel)


@dataclass(frozen=True)
class BrakeState:
    """Brake/tire status of one vehicle at one step.

    ``elapsed`` is the time since brake onset, or None outside a braking
    episode.  ``base`` is the deceleration magnitude already present at
    onset, from which the pressure ramp starts.
    """

    u_cmd: float = 0.0
    u_real: float = 0.0
    force: float = 0.0
    slip: float = 0.0
    abs_active: bool = False
    elapsed: float | None = None
    base: float = 0.0
    clock: float = 0.0
    ramping: bool = False

    def begin_braking(self) -> "BrakeState":
        return replace(self, elapsed=0.0, base=-self.u_real if self.u_real < 0 else 0.0, ramping=True)

    def release(self) -> "BrakeState":
        return replace(self, elapsed=None, base=0.0, ramping=False)

    @property
    def braking(self) -> bool:
        return self.elapsed is not None

    @property
    def ramp_done(self) -> bool:
        return self.braking and not self.ramping


def slip_from_accel(u: float, vehicle: VehicleParams) -> float:
    return vehicle.slip_per_accel * u


def accel_from_slip(kappa: float, vehicle: VehicleParams) -> float:
    return kappa / vehicle.slip_per_accel


def saturation_slip(clock: float, params: AbsParams) -> float:
    """Slip magnitude reported while the ABS holds the tire at saturation."""
    return params.kappa_sat + params.mod_amplitude * math.sin(2 * math.pi * clock / params.mod_period)


def abs_modulate(u_cmd: float, state: BrakeState, params: AbsParams, vehicle: VehicleParams,
                 dt: float) -> BrakeState:
    """Turn a commanded acceleration into the realized one for the next ``dt``.

    Inside a braking episode the brakes only decelerate; the magnitude
    ramps from ``state.base`` to the target over ``params.build_up`` and
    is clamped at the tire limit.  Outside an episode the command passes
    through, limited by the road capacity.  When the command asks for more
    than the tires can give, the ABS flag is raised and the reported slip
    oscillates around the saturation value.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    limit = params.limit(vehicle)
    ramp_complete = True
    if state.braking:
        target = max(-u_cmd, 0.0)
        want = min(target, limit)
        # tolerance absorbs the rounding of summed step lengths
        if params.build_up > 0 and state.elapsed < params.build_up - 1e-9:
            frac = state.elapsed / params.build_up
            ramp_complete = False
        else:
            frac = 1.0
        mag = state.base + (want - state.base) * frac
        u_real = -mag if mag else 0.0
        clamped = target > limit and ramp_complete
        elapsed = state.elapsed + dt
    else:
        u_real = min(max(u_cmd, -limit), params.capacity)
        clamped = u_cmd < -limit
        elapsed = None
    if clamped:
        slip = -saturation_slip(state.clock, params)
    else:
        slip = slip_from_accel(u_real, vehicle)
    return BrakeState(u_cmd=u_cmd, u_real=u_real, force=vehicle.mass * u_real, slip=slip,
                      abs_active=clamped, elapsed=elapsed, base=state.base,
                      clock=state.clock + dt, ramping=not ramp_complete)


def axle_slip(omega: float, speed: float, wheel_radius: float) -> float:
    """Slip of one axle from its wheel speed (rad/s) and the vehicle speed."""
    rim = wheel_radius * omega
    denom = max(rim, speed)
    if denom <= 0:
        return 0.0
    return (rim - speed) / denom


def wheel_speed(slip: float, speed: float, wheel_radius: float) -> float:
    """Wheel speed producing ``slip`` at vehicle ``speed`` (inverse of :func:`axle_slip`)."""
    if slip <= 0:
        return speed * (1.0 + slip) / wheel_radius
    return speed / (1.0 - slip) / wheel_radius


def axle_slips(state: BrakeState, speed: float, vehicle: VehicleParams,
               params: AbsParams) -> tuple[float, float]:
    """Front and rear slip for the realized deceleration.

    The front tire sees the whole-vehicle slip.  Under braking the rear
    normal load, and with it the rear tire's effective stiffness, drops by
    ``load_transfer`` times the fraction of road capacity in use, so the
    rear slips a little more.  Both are capped at the saturation band and
    pass through the wheel-speed definition.
    """
    front = state.slip
    rear = front
    if front < 0 and params.load_transfer > 0:
        use = min(-state.u_real / params.capacity, 1.0)
        rear = front / (1.0 - params.load_transfer * use)
        cap = params.kappa_sat + params.mod_amplitude if state.abs_active else params.kappa_sat
        rear = max(rear, -cap)
        rear = min(rear, front)
    if speed <= 0:
        return 0.0, 0.0
    r = vehicle.wheel_radius
    return (axle_slip(wheel_speed(front, speed, r), speed, r),
            axle_slip(wheel_speed(rear, speed, r), speed, r))
