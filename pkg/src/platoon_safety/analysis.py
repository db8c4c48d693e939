"""Closed-form braking performance expressions.

All positions and speeds are error coordinates of the follower ``i``
relative to its predecessor ``j``.  Step counts are turned into seconds
before any kinematics is evaluated.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .braking import AbsParams
from .dynamics import GainSet, VehicleParams


@dataclass(frozen=True)
class BrakingEpisode:
    """One follower braking episode.

    Parameters
    ----------
    detect_step : step at which the danger was detected.
    delay_steps : steps until the follower got the warning.
    build_up : brake pressure build-up time in seconds.
    standstill_step : first step at which the follower is at rest.
    ts : sampling time.
    speed : follower error speed once the brakes are fully applied.
    position : follower error position once the brakes are fully applied.
    gap_target : desired final relative position (negative means behind).
    slip_limit : largest slip magnitude allowed.
    """

    detect_step: int
    delay_steps: int
    build_up: float
    standstill_step: int
    ts: float
    speed: float
    position: float
    gap_target: float = -10.0
    slip_limit: float = 0.22

    def __post_init__(self):
        if self.standstill_step <= self.detect_step + self.delay_steps:
            raise ValueError("standstill must come after warning delivery")

    @property
    def braking_time(self) -> float:
        """Seconds of full braking between ramp completion and standstill."""
        return (self.standstill_step - self.detect_step - self.delay_steps) * self.ts - self.build_up


def max_deceleration(rel_pos: float, rel_vel: float, pos: float, vel: float, gains: GainSet) -> float:
    """Magnitude of the latched command for the given relative and own errors."""
    u = (-(gains.rel_pos + gains.addon_pos) * rel_pos - (gains.rel_vel + gains.addon_vel) * rel_vel
         - gains.self_pos * pos - gains.self_vel * vel)
    return abs(u)


def max_slip(u_max: float, vehicle: VehicleParams) -> float:
    return vehicle.slip_per_accel * abs(u_max)


class SlipCheck(NamedTuple):
    satisfied: bool
    margin: float


def slip_constraint_satisfied(u_max: float, vehicle: VehicleParams, slip_limit: float) -> SlipCheck:
    if not slip_limit > 0:
        raise ValueError("slip limit must be positive")
    margin = slip_limit - max_slip(u_max, vehicle)
    return SlipCheck(margin >= 0, margin)


def final_position(position: float, speed: float, u: float, duration: float) -> float:
    """Constant-deceleration kinematics over ``duration`` seconds."""
    if duration < 0:
        raise ValueError("negative braking time")
    return position + speed * duration + 0.5 * u * duration ** 2


def _braking_time(episode: BrakingEpisode) -> float:
    dt = episode.braking_time
    if dt <= 0:
        raise ValueError("episode has no braking time after the pressure ramp")
    return dt


def _latched_pos_gain(gains: GainSet) -> float:
    g = gains.rel_pos + gains.addon_pos
    if g == 0:
        raise ValueError("relative position gain is zero; the bound is undefined")
    return g


def relative_distance_bound(episode: BrakingEpisode, gains: GainSet, vehicle: VehicleParams) -> float:
    """Upper bound on the follower's final relative position when the
    deceleration respects the slip limit.

    The quadratic factor is ``1 + dt**2/2`` with ``dt`` in seconds, taken
    as written even though the two terms carry different units.
    """
    g = _latched_pos_gain(gains)
    dt = _braking_time(episode)
    slip_term = episode.slip_limit / (vehicle.slip_per_accel * g) * (1 + dt ** 2 / 2)
    drift = gains.self_pos * (episode.position + episode.speed * dt) / g
    return slip_term - drift


def final_gap(u: float, episode: BrakingEpisode, gains: GainSet) -> float:
    """Final relative position implied by a final command ``u`` (signed).

    This is the relation that :func:`required_deceleration` solves for
    ``u``; :func:`relative_distance_bound` is its value at the slip-limited
    magnitude.
    """
    g = _latched_pos_gain(gains)
    dt = _braking_time(episode)
    return (u * (1 + dt ** 2 / 2) - gains.self_pos * (episode.position + episode.speed * dt)) / g


class Requirement(NamedTuple):
    accel: float
    feasible: bool


def required_deceleration(episode: BrakingEpisode, gains: GainSet, vehicle: VehicleParams,
                          abs_params: AbsParams | None = None) -> Requirement:
    """Deceleration needed to end at ``episode.gap_target``.

    ``accel`` is the signed lower bound on the final command; ``feasible``
    says whether its magnitude is within what the tires can deliver.
    """
    if episode.gap_target > 0:
        raise ValueError("gap target must not be ahead of the predecessor")
    dt = episode.braking_time
    if dt <= 0:
        raise ValueError("episode has no braking time after the pressure ramp")
    g = gains.rel_pos + gains.addon_pos
    quad = 1 + dt ** 2 / 2
    accel = (-abs(episode.gap_target) * g + gains.self_pos * (episode.position + episode.speed * dt)) / quad
    limit = (abs_params or AbsParams()).limit(vehicle)
    return Requirement(accel, max(-accel, 0.0) <= limit)


def stopping_distance(p_abs, v_abs, onset: int, threshold: float = 0.05) -> float:
    """Distance covered from ``onset`` to the first sample at rest."""
    p_abs = np.asarray(p_abs, dtype=float)
    v_abs = np.asarray(v_abs, dtype=float)
    rest = np.flatnonzero(np.abs(v_abs[onset:]) <= threshold)
    if rest.size == 0:
        raise ValueError("vehicle never reaches standstill")
    return float(p_abs[onset + rest[0]] - p_abs[onset])


def _first(events, label: str, vehicle: int | None = None) -> int | None:
    for step, veh, lbl in events:
        if lbl == label and (vehicle is None or veh == vehicle):
            return step
    return None


def trace_report(trace, gains: GainSet, vehicle: VehicleParams, abs_params: AbsParams | None = None,
                 subject: int | None = None, gap_target: float = -10.0, slip_limit: float = 0.22,
                 ts: float | None = None) -> dict:
    """Braking quantities of one follower recomputed from a recorded trace.

    ``trace`` is anything with ``[step, vehicle]`` arrays ``p_abs``,
    ``v_abs``, ``p_err``, ``v_err``, ``u_cmd``, ``u_real``, ``kappa_front``,
    ``kappa_rear``, ``theta`` plus ``events`` and ``ts``.
    """
    abs_params = abs_params or AbsParams()
    ts = trace.ts if ts is None else ts
    danger = next(((s, v) for s, v, lbl in trace.events if lbl == "danger"), None)
    if danger is None:
        raise ValueError("trace contains no danger event")
    k, detector = danger
    i = detector + 1 if subject is None else subject
    j = i - 1
    if not 0 < i < trace.p_abs.shape[1]:
        raise ValueError(f"vehicle {i} has no predecessor in this trace")
    onset = _first(trace.events, "warning", i)
    if onset is None:
        onset = _first(trace.events, "brake_light", i)
    stop = _first(trace.events, "standstill", i)
    report: dict = {"vehicle": i, "predecessor": j, "detect_step": k, "ts": ts}
    report["delivery_step"] = onset
    report["r_steps"] = None if onset is None else onset - k
    report["standstill_step"] = stop
    report["max_slip_trace"] = float(max(np.max(np.abs(trace.kappa_front[:, i])),
                                         np.max(np.abs(trace.kappa_rear[:, i]))))
    peak = int(np.argmax(np.abs(trace.u_real[:, i])))
    report["max_decel_trace"] = float(abs(trace.u_real[peak, i]))
    report["max_decel_step"] = peak

    def law(step: int) -> float:
        g = gains if trace.theta[step, i] else gains.without_addon()
        return max_deceleration(trace.p_err[step, i] - trace.p_err[step, j],
                                trace.v_err[step, i] - trace.v_err[step, j],
                                trace.p_err[step, i], trace.v_err[step, i], g)

    report["max_decel_law_at_peak"] = law(peak)
    report["max_slip_law"] = max_slip(report["max_decel_trace"], vehicle)
    check = slip_constraint_satisfied(report["max_decel_trace"], vehicle, slip_limit)
    report["slip_ok"], report["slip_margin"] = bool(check.satisfied), float(check.margin)
    report["abs_limit"] = abs_params.limit(vehicle)
    if onset is not None and stop is not None:
        report["stopping_distance"] = float(trace.p_abs[stop, i] - trace.p_abs[onset, i])
        report["law_before_standstill"] = law(max(stop - 1, 0))
        full = min(onset + int(round(abs_params.build_up / ts)), trace.p_abs.shape[0] - 1)
        try:
            ep = BrakingEpisode(k, onset - k, abs_params.build_up, stop, ts,
                                float(trace.v_err[full, i]), float(trace.p_err[full, i]),
                                gap_target, slip_limit)
            report["braking_time"] = ep.braking_time
            report["final_gap_error"] = float(trace.p_err[stop, i] - trace.p_err[stop, j])
            report["gap_bound"] = relative_distance_bound(ep, gains, vehicle)
            req = required_deceleration(ep, gains, vehicle, abs_params)
            report["required_decel"], report["required_feasible"] = req.accel, bool(req.feasible)
        except ValueError as exc:
            report["episode_error"] = str(exc)
    report["final_gap_m"] = float(trace.p_abs[-1, j] - trace.p_abs[-1, i])
    return report
