"""Discrete-time platoon simulation.

Information model
-----------------
Vehicle 0 is at the front.  When vehicle ``j`` detects a danger it brakes
with a scripted deceleration, and the common reference trajectory switches
from cruising to the same stopping profile.  Vehicles behind ``j`` keep
running the consensus law on what they last knew: neighbor states are
extrapolated at constant speed from the detection step and their own error
is measured against the cruise reference.  Once a vehicle is informed (a
warning arrives, or without infrastructure its predecessor's brake lights
have been seen for a reaction time) it switches to true neighbor states,
tracks the stopping reference and enters a braking episode.

Stepping
--------
The closed loop is advanced with the sampled matrices ``A, B``.  Whatever
the linear feedback does not explain (brake ramp, clamp, stale
information, the reference deceleration) enters as an extra input held
over the step, so the recorded realized acceleration is what the vehicle
actually gets at the start of each step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import channels as ch
from .braking import BrakeState, abs_modulate, axle_slips
from .dynamics import GainSet, PlatoonTopology, assemble_closed_loop, discretize_zoh, vehicle_input
from .scenario import Scenario
from .trigger import DangerLog, TriggerState, evaluate_trigger, poisson_dangers
from .analysis import BrakingEpisode


class _Models:
    """Sampled closed-loop matrices, rebuilt only for new trigger patterns."""

    def __init__(self, topology: PlatoonTopology, gains: GainSet, ts: float):
        self.topology, self.gains, self.ts = topology, gains, ts
        self._cache: dict[tuple[int, ...], tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
        self.builds = 0

    def get(self, theta) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        key = tuple(int(t) for t in theta)
        if key not in self._cache:
            model = assemble_closed_loop(self.topology, self.gains, key)
            A, B = discretize_zoh(model.A_bar, model.B_bar, self.ts)
            self._cache[key] = (A, B, model.feedback)
            self.builds += 1
        return self._cache[key]


def propagate(x0, topology: PlatoonTopology, gains: GainSet, ts: float, thetas, inputs) -> np.ndarray:
    """Run the sampled closed loop from ``x0`` with one trigger pattern and
    one input vector per step; returns the state after every step."""
    models = _Models(topology, gains, ts)
    x = np.asarray(x0, dtype=float)
    out = []
    for theta, u in zip(thetas, inputs):
        A, B, _ = models.get(theta)
        x = A @ x + B @ np.asarray(u, dtype=float)
        out.append(x)
    return np.array(out)


@dataclass
class RunSummary:
    scenario: str
    channel: str
    seed: int
    r_steps: float
    delay_s: float
    max_slip: float
    stop_dist_m: float
    final_gap_m: float
    collided: bool
    collision_t: float

    FIELDS = ("scenario", "channel", "seed", "r_steps", "delay_s", "max_slip", "stop_dist_m",
              "final_gap_m", "collided", "collision_t")


@dataclass
class SimTrace:
    scenario: str
    channel: str
    seed: int
    ts: float
    standstill_speed: float
    p_abs: np.ndarray
    v_abs: np.ndarray
    p_err: np.ndarray
    v_err: np.ndarray
    u_cmd: np.ndarray
    u_real: np.ndarray
    kappa_front: np.ndarray
    kappa_rear: np.ndarray
    theta: np.ndarray
    abs_active: np.ndarray
    queue_len: np.ndarray
    ref_pos: np.ndarray | None = None
    ref_vel: np.ndarray | None = None
    spacings: tuple[float, ...] = ()
    events: list[tuple[int, int, str]] = field(default_factory=list)
    detect_step: int | None = None
    detector: int | None = None
    delivery_step: dict[int, int] = field(default_factory=dict)
    delay_s: dict[int, float] = field(default_factory=dict)
    onset_step: dict[int, int] = field(default_factory=dict)
    ramp_done_step: dict[int, int] = field(default_factory=dict)
    standstill_step: dict[int, int] = field(default_factory=dict)
    subject: int = 1
    vehicle_length: float = 4.5
    summary: RunSummary | None = None

    @property
    def steps(self) -> int:
        return self.p_abs.shape[0]

    @property
    def n(self) -> int:
        return self.p_abs.shape[1]

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.steps) * self.ts

    def event_labels(self, step: int, vehicle: int) -> str:
        return ";".join(lbl for s, v, lbl in self.events if s == step and v == vehicle)


def detect_collision(p_abs, vehicle_length: float, pair: tuple[int, int] | None = None) -> tuple[bool, int | None]:
    """First step at which two lane neighbors are within ``vehicle_length``.

    ``p_abs`` has one row per step and one column per vehicle, front first.
    ``pair`` restricts the test to one ``(front, back)`` pair.
    """
    p = np.asarray(p_abs, dtype=float)
    if p.ndim != 2 or p.shape[1] < 2:
        raise ValueError("need positions of at least two vehicles")
    gaps = p[:, :-1] - p[:, 1:]
    if pair is not None:
        gaps = gaps[:, [pair[1] - 1]] if pair[1] == pair[0] + 1 else (p[:, [pair[0]]] - p[:, [pair[1]]])
    hit = np.flatnonzero(np.any(gaps <= vehicle_length, axis=1))
    return (True, int(hit[0])) if hit.size else (False, None)


def _danger_schedule(sc: Scenario, rng: np.random.Generator) -> dict[int, int]:
    d = sc.dangers
    if d.mode == "none":
        return {}
    if d.mode == "poisson":
        log = poisson_dangers(d.rate, sc.steps, sc.ts, sc.n, rng, d.target)
        return dict(zip(log.steps, log.vehicles))
    return {int(round(t / sc.ts)): v for t, v in d.events}


def run(scenario: Scenario, channel=None, seed: int | None = None) -> SimTrace:
    """Simulate one scenario; ``channel`` and ``seed`` override the file values."""
    sc = scenario if channel is None else scenario.with_channel(channel)
    seed = sc.seed if seed is None else int(seed)
    kind = sc.channel.kind
    n, ts, steps = sc.n, sc.ts, sc.steps
    topo = sc.topology
    spacing = np.asarray(topo.spacings)
    still = sc.standstill_speed
    noise_sd = math.sqrt(sc.noise_var)

    noise_rng, chan_rng, danger_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3))
    dangers = _danger_schedule(sc, danger_rng)
    channel = ch.WarningChannel(kind, sc.channel.latency, ts, chan_rng, sc.channel.queue_mode,
                                sc.channel.rounding, sc.channel.warmup)
    warn_latches = kind is not ch.ChannelKind.NC or sc.channel.nc_addon
    gains = sc.gains
    models = _Models(topo, gains, ts)

    ref_pos, ref_vel = 0.0, topo.desired_speed
    plan_start: int | None = None
    decel = sc.dangers.brake_decel
    build_up = sc.abs.build_up
    p_abs = np.asarray(sc.initial_positions, dtype=float).copy()
    v_abs = np.asarray(sc.initial_speeds, dtype=float).copy()
    x = np.concatenate([p_abs - ref_pos - spacing, v_abs - ref_vel])

    informed = [True] * n      # uses true states and the current reference
    blind = [False] * n        # waiting for news of a danger
    scripted = [False] * n
    parked = [False] * n
    anchor = (0.0, 0.0, ref_vel)  # (time, ref position, ref speed) when the plan changed
    belief_p = p_abs.copy()
    belief_v = v_abs.copy()
    brakes = [BrakeState() for _ in range(n)]
    trig = TriggerState.idle(n)
    log = DangerLog()
    pending: dict[int, list[tuple[int, float, str]]] = {}
    scheduled = set()

    rec = {k: np.zeros((steps, n)) for k in ("p_abs", "v_abs", "p_err", "v_err", "u_cmd", "u_real",
                                             "kappa_front", "kappa_rear")}
    rec_theta = np.zeros((steps, n), dtype=int)
    rec_abs = np.zeros((steps, n), dtype=bool)
    rec_queue = np.zeros(steps, dtype=int)
    rec_ref = np.zeros((steps, 2))
    trace = SimTrace(sc.name, kind.value, seed, ts, still, *(rec[k] for k in ("p_abs", "v_abs", "p_err", "v_err")),
                     rec["u_cmd"], rec["u_real"], rec["kappa_front"], rec["kappa_rear"], rec_theta, rec_abs,
                     rec_queue, spacings=topo.spacings, subject=sc.subject, vehicle_length=sc.vehicle_length)
    events = trace.events

    def schedule(step_now: int, vehicle: int, delay: float, label: str, origin: int):
        if vehicle in scheduled:
            return
        scheduled.add(vehicle)
        at = origin + channel.steps(delay)
        pending.setdefault(max(at, step_now), []).append((vehicle, delay, label))

    last = steps - 1
    for k in range(steps):
        t = k * ts
        # dangers and warnings
        if k in dangers:
            j = dangers[k]
            log.record(k, j)
            events.append((k, j, "danger"))
            if trace.detect_step is None:
                trace.detect_step, trace.detector = k, j
                plan_start = k
                anchor = (t, ref_pos, ref_vel)
                belief_p, belief_v = p_abs.copy(), v_abs.copy()
                for i in range(j + 1, n):
                    informed[i], blind[i] = False, True
                for i in range(j):
                    informed[i] = False
            if not scripted[j] and not parked[j]:
                scripted[j], informed[j], blind[j] = True, True, False
                scheduled.add(j)
                brakes[j] = brakes[j].begin_braking()
                trace.onset_step[j] = k
                trace.delivery_step.setdefault(j, k)
                trace.delay_s.setdefault(j, 0.0)
            behind = [i for i in range(j + 1, n) if i not in scheduled]
            if kind is ch.ChannelKind.NC:
                if j + 1 < n:
                    schedule(k, j + 1, channel.hop_delay(), "brake_light", k)
            elif behind:
                for i, delay in channel.broadcast(k, behind).items():
                    schedule(k, i, delay, "warning", k)
                if channel.queue is not None:
                    scheduled.update(behind)
        for origin, i, delay in channel.advance():
            scheduled.discard(i)
            schedule(k, i, delay, "warning", origin)

        delivered = []
        for i, delay, label in pending.pop(k, []):
            events.append((k, i, label))
            trace.delivery_step[i] = k
            # without infrastructure the news travels one reaction time per vehicle
            trace.delay_s[i] = delay * (i - trace.detector) if label == "brake_light" else delay
            if parked[i]:
                continue
            informed[i], blind[i] = True, False
            brakes[i] = brakes[i].begin_braking()
            trace.onset_step[i] = k
            if label == "warning" or warn_latches:
                delivered.append(i)
            if label == "brake_light" and i + 1 < n:
                schedule(k, i + 1, channel.hop_delay(), "brake_light", k)

        # standstill and latch
        for i in range(n):
            if brakes[i].braking and not parked[i] and v_abs[i] <= still:
                parked[i] = True
                brakes[i] = brakes[i].release()
                trace.standstill_step[i] = k
                events.append((k, i, "standstill"))
        trig = evaluate_trigger(log, k, delivered, trig, v_abs, still)
        theta = trig.theta
        A, B, K = models.get(theta)

        # commands
        u_cmd = [0.0] * n
        cruise_pos = anchor[1] + anchor[2] * (t - anchor[0])
        for i in range(n):
            if parked[i]:
                continue
            if scripted[i]:
                u_cmd[i] = -decel
            elif informed[i]:
                u_cmd[i] = vehicle_input(i, x[:n], x[n:], topo, gains, theta[i])
            else:
                if blind[i]:
                    pv = belief_p + belief_v * (t - anchor[0])
                    vv = belief_v.copy()
                    pv[i], vv[i] = p_abs[i], v_abs[i]
                else:
                    pv, vv = p_abs, v_abs
                u_cmd[i] = vehicle_input(i, pv - cruise_pos - spacing, vv - anchor[2], topo, gains, theta[i])

        u_real = np.zeros(n)
        for i in range(n):
            brakes[i] = abs_modulate(u_cmd[i], brakes[i], sc.abs, sc.vehicle, ts)
            u_real[i] = brakes[i].u_real
            if brakes[i].ramp_done and i not in trace.ramp_done_step:
                trace.ramp_done_step[i] = k
            kf, kr = axle_slips(brakes[i], v_abs[i], sc.vehicle, sc.abs)
            rec["kappa_front"][k, i], rec["kappa_rear"][k, i] = kf, kr
            rec_abs[k, i] = brakes[i].abs_active

        rec["p_abs"][k], rec["v_abs"][k] = p_abs, v_abs
        rec["p_err"][k], rec["v_err"][k] = x[:n], x[n:]
        rec["u_cmd"][k], rec["u_real"][k] = u_cmd, u_real
        rec_theta[k] = theta
        rec_queue[k] = channel.queue_len
        rec_ref[k] = ref_pos, ref_vel

        if k == last or (all(parked) and not pending):
            last = k
            break

        # advance
        noise = noise_rng.normal(0.0, noise_sd, n) if noise_sd > 0 else np.zeros(n)
        if plan_start is None:
            a_ref = 0.0
        else:
            a_ref = -decel * (min((k - plan_start) * ts / build_up, 1.0) if build_up > 0 else 1.0)
            if ref_vel + a_ref * ts < 0:
                a_ref = -ref_vel / ts
        hold = u_real + K @ x - a_ref
        x = A @ x + B @ (noise + hold)
        if not np.all(np.isfinite(x)):
            raise FloatingPointError(f"state became non-finite at step {k}")
        ref_pos += ref_vel * ts + 0.5 * a_ref * ts * ts
        ref_vel += a_ref * ts
        new_p = x[:n] + ref_pos + spacing
        new_v = x[n:] + ref_vel
        for i in range(n):
            if parked[i]:
                new_p[i], new_v[i] = p_abs[i], 0.0
            elif brakes[i].braking:
                if brakes[i].ramp_done:
                    new_v[i] = min(new_v[i], v_abs[i])
                new_v[i] = max(new_v[i], 0.0)
        p_abs, v_abs = new_p, new_v
        x = np.concatenate([p_abs - ref_pos - spacing, v_abs - ref_vel])

    size = last + 1
    for key in rec:
        rec[key] = rec[key][:size]
    trace.p_abs, trace.v_abs = rec["p_abs"], rec["v_abs"]
    trace.p_err, trace.v_err = rec["p_err"], rec["v_err"]
    trace.u_cmd, trace.u_real = rec["u_cmd"], rec["u_real"]
    trace.kappa_front, trace.kappa_rear = rec["kappa_front"], rec["kappa_rear"]
    trace.theta, trace.abs_active, trace.queue_len = rec_theta[:size], rec_abs[:size], rec_queue[:size]
    trace.ref_pos, trace.ref_vel = rec_ref[:size, 0], rec_ref[:size, 1]
    trace.summary = summarize(trace)
    return trace


def summarize(trace: SimTrace) -> RunSummary:
    """Episode summary of the subject vehicle, recomputed from the records."""
    s = trace.subject
    nan = float("nan")
    r_steps = delay = stop = nan
    if trace.detect_step is not None and s in trace.delivery_step:
        r_steps = float(trace.delivery_step[s] - trace.detect_step)
        delay = float(trace.delay_s[s])
    if s in trace.onset_step and s in trace.standstill_step:
        stop = float(trace.p_abs[trace.standstill_step[s], s] - trace.p_abs[trace.onset_step[s], s])
    slip = float(max(np.max(np.abs(trace.kappa_front[:, s])), np.max(np.abs(trace.kappa_rear[:, s]))))
    gap = nan
    collided, when = False, nan
    if s > 0:
        gap = float(trace.p_abs[-1, s - 1] - trace.p_abs[-1, s])
        hit, step = detect_collision(trace.p_abs, trace.vehicle_length, (s - 1, s))
        if hit:
            collided, when = True, step * trace.ts
            if not any(lbl == "collision" for _, _, lbl in trace.events):
                trace.events.append((step, s, "collision"))
    return RunSummary(trace.scenario, trace.channel, trace.seed, r_steps, delay, slip, stop, gap, collided, when)


def braking_episode(trace: SimTrace, vehicle: int | None = None, gap_target: float = -10.0,
                    slip_limit: float = 0.22, build_up: float = 0.1) -> BrakingEpisode:
    """Episode record of ``vehicle`` (default: the subject) read off a trace."""
    i = trace.subject if vehicle is None else vehicle
    if trace.detect_step is None or i not in trace.delivery_step or i not in trace.standstill_step:
        raise ValueError(f"vehicle {i} has no complete braking episode in this trace")
    k, kd = trace.detect_step, trace.delivery_step[i]
    full = min(kd + int(round(build_up / trace.ts)), trace.steps - 1)
    return BrakingEpisode(detect_step=k, delay_steps=kd - k, build_up=build_up,
                          standstill_step=trace.standstill_step[i], ts=trace.ts,
                          speed=float(trace.v_err[full, i]), position=float(trace.p_err[full, i]),
                          gap_target=gap_target, slip_limit=slip_limit)
