"""Scenario files: JSON with sections ``platoon``, ``vehicles``, ``gains``,
``channel``, ``dangers``, ``abs`` and ``sim``."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .braking import AbsParams
from .channels import ChannelKind, LatencyParams
from .dynamics import GainSet, PlatoonTopology, VehicleParams

KPH = 1 / 3.6
BUNDLED = ("case1", "case2")


class ScenarioError(ValueError):
    """Invalid scenario; ``problems`` lists every issue found."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("invalid scenario:\n  " + "\n  ".join(self.problems))


@dataclass(frozen=True)
class ChannelConfig:
    kind: ChannelKind
    latency: LatencyParams = LatencyParams()
    queue_mode: str = "sampled"
    rounding: str = "ceil"
    warmup: float = 5.0
    nc_addon: bool = False


@dataclass(frozen=True)
class DangerConfig:
    """``events`` holds ``(time_s, vehicle)`` pairs; ``rate`` is used in
    ``poisson`` mode.  ``brake_decel`` is the scripted deceleration of the
    vehicle that faces a danger."""

    mode: str = "scripted"
    events: tuple[tuple[float, int], ...] = ((0.0, 0),)
    rate: float = 0.0
    target: int | None = 0
    brake_decel: float = 4.0


@dataclass(frozen=True)
class Scenario:
    name: str
    topology: PlatoonTopology
    vehicle: VehicleParams
    initial_positions: tuple[float, ...]
    initial_speeds: tuple[float, ...]
    gains: GainSet
    channel: ChannelConfig
    dangers: DangerConfig
    abs: AbsParams
    ts: float = 0.01
    horizon: float = 20.0
    seed: int = 0
    noise_var: float = 0.2
    standstill_speed: float = 0.05
    vehicle_length: float = 4.5
    subject: int = 1

    @property
    def n(self) -> int:
        return self.topology.n

    @property
    def steps(self) -> int:
        return int(round(self.horizon / self.ts))

    def with_channel(self, kind) -> "Scenario":
        return dataclasses.replace(self, channel=dataclasses.replace(self.channel, kind=ChannelKind.parse(kind)))

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)


_SECTIONS = ("platoon", "vehicles", "gains", "channel", "dangers", "abs", "sim")
_PLATOON_KEYS = {"vehicles", "gap", "spacings", "neighbors", "desired_speed", "desired_speed_kph"}
_VEHICLE_KEYS = {f.name for f in dataclasses.fields(VehicleParams)} | {
    "length", "initial_speeds", "initial_speeds_kph", "initial_positions"}
_GAIN_KEYS = {f.name for f in dataclasses.fields(GainSet)}
_CHANNEL_KEYS = {f.name for f in dataclasses.fields(LatencyParams)} | {
    "kind", "queue_mode", "rounding", "warmup", "nc_addon"}
_DANGER_KEYS = {"mode", "events", "rate", "target", "brake_decel"}
_ABS_KEYS = {f.name for f in dataclasses.fields(AbsParams)}
_SIM_KEYS = {"ts", "horizon", "seed", "noise_var", "standstill_speed", "subject"}


def _unknown(section: str, data: dict, allowed: set[str], problems: list[str]) -> None:
    for key in sorted(set(data) - allowed):
        problems.append(f"{section}.{key}: unknown key")


def _build(section: str, factory, kwargs: dict, problems: list[str]):
    try:
        return factory(**kwargs)
    except (TypeError, ValueError) as exc:
        problems.append(f"{section}: {exc}")
        return None


def _speeds(section: str, data: dict, key: str, problems: list[str]):
    has_ms, has_kph = key in data, f"{key}_kph" in data
    if has_ms and has_kph:
        problems.append(f"{section}.{key}: give either {key} or {key}_kph, not both")
        return None
    if has_kph:
        val = data[f"{key}_kph"]
        return [x * KPH for x in val] if isinstance(val, list) else val * KPH
    return data.get(key)


def parse_scenario(raw: dict, name: str = "scenario") -> Scenario:
    """Validate a decoded scenario document."""
    problems: list[str] = []
    if not isinstance(raw, dict):
        raise ScenarioError(["top level must be a JSON object"])
    for key in sorted(set(raw) - set(_SECTIONS) - {"name"}):
        problems.append(f"{key}: unknown section")
    sec = {}
    for s in _SECTIONS:
        val = raw.get(s, {})
        if not isinstance(val, dict):
            problems.append(f"{s}: must be an object")
            val = {}
        sec[s] = val
    name = raw.get("name", name)

    plat, veh, gains_raw, chan = sec["platoon"], sec["vehicles"], sec["gains"], sec["channel"]
    dang, abs_raw, sim = sec["dangers"], sec["abs"], sec["sim"]
    _unknown("platoon", plat, _PLATOON_KEYS, problems)
    _unknown("vehicles", veh, _VEHICLE_KEYS, problems)
    _unknown("gains", gains_raw, _GAIN_KEYS, problems)
    _unknown("channel", chan, _CHANNEL_KEYS, problems)
    _unknown("dangers", dang, _DANGER_KEYS, problems)
    _unknown("abs", abs_raw, _ABS_KEYS, problems)
    _unknown("sim", sim, _SIM_KEYS, problems)

    # platoon
    n = plat.get("vehicles", 2)
    if not isinstance(n, int) or n < 1:
        problems.append("platoon.vehicles: must be a positive integer")
        n = 2
    desired = _speeds("platoon", plat, "desired_speed", problems)
    spacings = plat.get("spacings")
    if spacings is None:
        spacings = [-plat.get("gap", 10.0) * i for i in range(n)]
    neighbors = plat.get("neighbors")
    if neighbors is None:
        neighbors = [[] if i == 0 else [i - 1] for i in range(n)]
    init_speeds = _speeds("vehicles", veh, "initial_speeds", problems)
    if desired is None:
        desired = init_speeds[0] if isinstance(init_speeds, list) and init_speeds else None
    if desired is None:
        problems.append("platoon.desired_speed: missing (or give vehicles.initial_speeds)")
        desired = 0.0
    topology = None
    if len(spacings) != n or len(neighbors) != n:
        problems.append(f"platoon: spacings and neighbors need {n} entries")
    else:
        topology = _build("platoon", PlatoonTopology,
                          dict(neighbors=tuple(tuple(x) for x in neighbors),
                               spacings=tuple(float(x) for x in spacings),
                               desired_speed=float(desired)), problems)

    # vehicles
    vp_kwargs = {k: veh[k] for k in veh if k in {f.name for f in dataclasses.fields(VehicleParams)}}
    vehicle = _build("vehicles", VehicleParams, vp_kwargs, problems)
    length = veh.get("length", 4.5)
    if not (isinstance(length, (int, float)) and length > 0):
        problems.append("vehicles.length: must be positive")
    if init_speeds is None:
        init_speeds = [desired] * n
    init_pos = veh.get("initial_positions", list(spacings))
    if len(init_speeds) != n:
        problems.append(f"vehicles.initial_speeds: need {n} entries")
    if any(v < 0 for v in init_speeds):
        problems.append("vehicles.initial_speeds: speeds must be non-negative")
    if len(init_pos) != n:
        problems.append(f"vehicles.initial_positions: need {n} entries")
    elif any(b >= a for a, b in zip(init_pos, init_pos[1:])):
        problems.append("vehicles.initial_positions: must strictly decrease front to back")

    # gains
    gkw = dict(gains_raw)
    overrides = gkw.pop("edge_overrides", [])
    try:
        gkw["edge_overrides"] = {(int(e["from"]), int(e["to"])): (float(e["rel_pos"]), float(e["rel_vel"]))
                                 for e in overrides}
    except (KeyError, TypeError, ValueError):
        problems.append("gains.edge_overrides: entries need from, to, rel_pos, rel_vel")
        gkw["edge_overrides"] = {}
    gains = _build("gains", GainSet, gkw, problems)

    # channel
    kind = None
    if "kind" not in chan:
        problems.append("channel.kind: missing (one of nc, v2i, sv2i)")
    else:
        try:
            kind = ChannelKind.parse(chan["kind"])
        except ValueError as exc:
            problems.append(f"channel.kind: {exc}")
    lat_kwargs = {k: chan[k] for k in chan if k in {f.name for f in dataclasses.fields(LatencyParams)}}
    latency = _build("channel", LatencyParams, lat_kwargs, problems)
    if chan.get("queue_mode", "sampled") not in ("sampled", "mechanistic"):
        problems.append("channel.queue_mode: must be 'sampled' or 'mechanistic'")
    if chan.get("rounding", "ceil") not in ("ceil", "floor"):
        problems.append("channel.rounding: must be 'ceil' or 'floor'")
    if chan.get("warmup", 5.0) < 0:
        problems.append("channel.warmup: must be non-negative")

    # dangers
    mode = dang.get("mode", "scripted")
    if mode not in ("scripted", "poisson", "none"):
        problems.append("dangers.mode: must be 'scripted', 'poisson' or 'none'")
    events = []
    for ev in dang.get("events", [{"t": 0.0, "vehicle": 0}]):
        try:
            t, v = float(ev["t"]), int(ev["vehicle"])
        except (KeyError, TypeError, ValueError):
            problems.append("dangers.events: each event needs numeric t and vehicle")
            continue
        if t < 0 or not 0 <= v < n:
            problems.append(f"dangers.events: event at t={t} for vehicle {v} is out of range")
        events.append((t, v))
    if any(b[0] <= a[0] for a, b in zip(events, events[1:])):
        problems.append("dangers.events: times must strictly increase")
    brake_decel = dang.get("brake_decel", 4.0)
    if not brake_decel > 0:
        problems.append("dangers.brake_decel: must be positive")
    target = dang.get("target", 0)
    if target is not None and not 0 <= target < n:
        problems.append("dangers.target: unknown vehicle")
    if dang.get("rate", 0.0) < 0:
        problems.append("dangers.rate: must be non-negative")

    abs_params = _build("abs", AbsParams, dict(abs_raw), problems)

    # sim
    ts = sim.get("ts", 0.01)
    horizon = sim.get("horizon", 20.0)
    if not ts > 0:
        problems.append("sim.ts: must be positive")
    if not horizon > 0:
        problems.append("sim.horizon: must be positive")
    seed = sim.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        problems.append("sim.seed: must be a non-negative integer")
    if sim.get("noise_var", 0.2) < 0:
        problems.append("sim.noise_var: must be non-negative")
    subject = sim.get("subject", 1 if n > 1 else 0)
    if not 0 <= subject < n:
        problems.append("sim.subject: unknown vehicle")

    if problems:
        raise ScenarioError(problems)
    return Scenario(
        name=str(name), topology=topology, vehicle=vehicle,
        initial_positions=tuple(float(x) for x in init_pos),
        initial_speeds=tuple(float(x) for x in init_speeds), gains=gains,
        channel=ChannelConfig(kind, latency, chan.get("queue_mode", "sampled"), chan.get("rounding", "ceil"),
                              float(chan.get("warmup", 5.0)), bool(chan.get("nc_addon", False))),
        dangers=DangerConfig(mode, tuple(events), float(dang.get("rate", 0.0)), target, float(brake_decel)),
        abs=abs_params, ts=float(ts), horizon=float(horizon), seed=int(seed),
        noise_var=float(sim.get("noise_var", 0.2)),
        standstill_speed=float(sim.get("standstill_speed", 0.05)),
        vehicle_length=float(length), subject=int(subject))


def load_scenario(source: str | Path) -> Scenario:
    """Load a scenario from a path, a bundled name (``case1``/``case2``) or JSON text."""
    text = None
    name = "scenario"
    if isinstance(source, str) and source.lstrip().startswith("{"):
        text = source
    elif isinstance(source, str) and source in BUNDLED:
        text = resources.files(__package__).joinpath("scenarios", f"{source}.json").read_text()
        name = source
    else:
        path = Path(source)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ScenarioError([f"{path}: {exc.strerror or exc}"]) from exc
        name = path.stem
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError([f"line {exc.lineno}, column {exc.colno}: {exc.msg}"]) from exc
    return parse_scenario(raw, name)
