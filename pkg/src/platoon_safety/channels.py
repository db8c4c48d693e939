"""Warning delivery delays for the three channel types.

* ``nc``: no infrastructure; the follower only notices its predecessor's
  brake lights, one driver reaction time after the predecessor brakes.
* ``v2i``: uplink to a base station, a FIFO queue shared with regular
  traffic, then downlink.
* ``sv2i``: same radio hops but on a dedicated low-latency slice with no
  queue.
"""
from __future__ import annotations

import enum
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

log = logging.getLogger(__name__)


class ChannelKind(str, enum.Enum):
    NC = "nc"
    V2I = "v2i"
    SV2I = "sv2i"

    @classmethod
    def parse(cls, value) -> "ChannelKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown channel {value!r}; expected one of nc, v2i, sv2i") from None


@dataclass(frozen=True)
class LatencyParams:
    """Latency budget in seconds; traffic rates per second."""

    uplink: float = 0.0075
    downlink: float = 0.0075
    queue_mean: float = 0.05
    arrival_rate: float = 10.0
    service_rate: float = 20.0
    fast_min: float = 0.005
    fast_max: float = 0.015
    reaction_time: float = 0.7

    def __post_init__(self):
        if self.uplink < 0 or self.downlink < 0:
            raise ValueError("radio delays must be non-negative")
        if not 0 <= self.fast_min <= self.fast_max < 1:
            raise ValueError("fast-slice latency range must satisfy 0 <= min <= max < 1")
        if self.reaction_time < 0:
            raise ValueError("reaction time must be non-negative")
        if self.queue_mean < 0 or self.arrival_rate < 0 or self.service_rate <= 0:
            raise ValueError("queue parameters out of range")


def delivery_delay_nc(params: LatencyParams) -> float:
    return params.reaction_time


def delivery_delay_5g(params: LatencyParams, rng: np.random.Generator) -> float:
    return params.uplink + rng.uniform(params.fast_min, params.fast_max) + params.downlink


def sample_queue_delay(params: LatencyParams, rng: np.random.Generator) -> float:
    """Queueing delay drawn straight from an exponential of mean ``queue_mean``."""
    return rng.exponential(params.queue_mean) if params.queue_mean > 0 else 0.0


def delivery_delay_lte(params: LatencyParams, queue_delay: float) -> float:
    if queue_delay < 0:
        raise ValueError("queueing delay cannot be negative")
    return params.uplink + queue_delay + params.downlink


def delay_to_steps(delay: float, ts: float, rounding: str = "ceil") -> int:
    """Whole steps until a message sent ``delay`` seconds ago is usable.

    ``ceil`` delivers at the first step not earlier than the arrival;
    ``floor`` picks the step whose interval contains it.  Quotients within
    1e-9 of an integer are snapped to it first.
    """
    if delay < 0 or not ts > 0:
        raise ValueError("need delay >= 0 and ts > 0")
    if rounding not in ("ceil", "floor"):
        raise ValueError(f"rounding must be 'ceil' or 'floor', not {rounding!r}")
    q = delay / ts
    if abs(q - round(q)) < 1e-9:
        return int(round(q))
    return math.ceil(q) if rounding == "ceil" else math.floor(q)


class StabilityReport(NamedTuple):
    stable: bool
    average: float


def rate_stability_check(arrivals, departures, tol: float = 1e-12) -> StabilityReport:
    """Time average of ``a_k - d_k``; stable when it does not exceed ``tol``."""
    a = np.asarray(arrivals, dtype=float)
    d = np.asarray(departures, dtype=float)
    if a.shape != d.shape:
        raise ValueError("arrival and departure traces differ in length")
    if a.size == 0:
        raise ValueError("empty traces")
    avg = float(np.mean(a - d))
    return StabilityReport(avg <= tol, avg)


# ---------------------------------------------------------------- FIFO queue

@dataclass
class Packet:
    arrival: float
    service: float
    warning: bool = False
    tag: int = -1
    remaining: float = field(init=False)
    start: float | None = None
    departure: float | None = None

    def __post_init__(self):
        self.remaining = self.service

    @property
    def sojourn(self) -> float | None:
        return None if self.departure is None else self.departure - self.arrival


@dataclass
class QueueState:
    """Slotted FIFO buffer.

    Packets arriving during slot ``k`` join the buffer at its end.  During
    a slot the server works through the packets present at the slot start,
    each needing its own service time; unfinished work carries over.  The
    capacity ``d_k`` is the number of completions plus, if the buffer ran
    dry, the extra completions the idle remainder would have allowed.  With
    these conventions ``l_{k+1} = a_k + max(l_k - d_k, 0)``.

    ``service_time`` switches from exponential to fixed service.
    """

    slot: float
    arrival_rate: float
    service_rate: float
    service_time: float | None = None
    k: int = 0
    origin: float = 0.0
    packets: deque = field(default_factory=deque)
    pending: list = field(default_factory=list)
    record: bool = True
    arrivals: list = field(default_factory=list)
    capacity: list = field(default_factory=list)
    lengths: list = field(default_factory=list)

    @property
    def length(self) -> int:
        return len(self.packets)

    @property
    def now(self) -> float:
        return self.origin + self.k * self.slot

    def draw_service(self, rng: np.random.Generator) -> float:
        if self.service_time is not None:
            return self.service_time
        return rng.exponential(1.0 / self.service_rate)

    def offer(self, packet: Packet) -> None:
        """Schedule a packet (e.g. a warning) to join at its arrival time."""
        if packet.arrival < self.now:
            raise ValueError("packet arrives before the current slot")
        self.pending.append(packet)
        self.pending.sort(key=lambda pk: pk.arrival)

    def preload(self, packets: Iterable[Packet]) -> None:
        self.packets.extend(packets)


def advance_queue_slot(state: QueueState, rng: np.random.Generator) -> tuple[QueueState, list[Packet]]:
    """Serve and fill one slot in place; returns the state and the departed packets."""
    t0 = state.now
    t1 = t0 + state.slot
    length0 = state.length
    budget = state.slot
    clock = t0
    departed: list[Packet] = []
    while budget > 0 and state.packets:
        head = state.packets[0]
        if head.start is None:
            head.start = clock
        if head.remaining <= budget:
            budget -= head.remaining
            clock += head.remaining
            head.remaining = 0.0
            head.departure = clock
            departed.append(state.packets.popleft())
        else:
            head.remaining -= budget
            budget = 0.0
    capacity = len(departed)
    if budget > 0:
        spare = state.draw_service(rng)
        while spare <= budget:
            capacity += 1
            budget -= spare
            spare = state.draw_service(rng)

    n_bg = rng.poisson(state.arrival_rate * state.slot) if state.arrival_rate > 0 else 0
    times = np.sort(rng.uniform(t0, t1, n_bg))
    incoming = [Packet(float(t), state.draw_service(rng)) for t in times]
    while state.pending and state.pending[0].arrival < t1:
        incoming.append(state.pending.pop(0))
    incoming.sort(key=lambda pk: pk.arrival)
    state.packets.extend(incoming)

    if state.length != len(incoming) + max(length0 - capacity, 0):
        raise AssertionError("queue recursion violated")
    if state.record:
        state.arrivals.append(len(incoming))
        state.capacity.append(capacity)
        state.lengths.append(length0)
    state.k += 1
    return state, departed


def fifo_schedule(arrival_times, service_times, slot: float) -> tuple[np.ndarray, np.ndarray]:
    """Service start and departure times for the slotted FIFO queue, vectorized.

    A packet becomes eligible at the end of its arrival slot and starts as
    soon as the previous packet leaves, so
    ``c_n = max(e_n, c_{n-1}) + S_n``.  Unrolled, ``c_n`` is the running sum
    of services plus the running maximum of ``e_m - sum_{i<m} S_i``.
    """
    t = np.asarray(arrival_times, dtype=float)
    s = np.asarray(service_times, dtype=float)
    if t.shape != s.shape:
        raise ValueError("arrival and service arrays differ in length")
    if np.any(np.diff(t) < 0):
        raise ValueError("arrival times must be sorted")
    eligible = (np.floor(t / slot) + 1.0) * slot
    before = np.concatenate([[0.0], np.cumsum(s)[:-1]]) if t.size else t
    departure = before + s + np.maximum.accumulate(eligible - before) if t.size else t
    return departure - s, departure


class MM1Sample(NamedTuple):
    waiting: np.ndarray
    sojourn: np.ndarray


def simulate_mm1(arrival_rate: float, service_rate: float, n_packets: int, slot: float,
                 rng: np.random.Generator) -> MM1Sample:
    """Per-packet waiting and sojourn times of the slotted queue under Poisson
    arrivals and exponential service."""
    arrivals = np.cumsum(rng.exponential(1.0 / arrival_rate, n_packets))
    services = rng.exponential(1.0 / service_rate, n_packets)
    start, departure = fifo_schedule(arrivals, services, slot)
    return MM1Sample(start - arrivals, departure - arrivals)


def mm1_waiting_time(arrival_rate: float, service_rate: float) -> float:
    """Mean time in queue before service for a stable M/M/1 system."""
    if arrival_rate >= service_rate:
        raise ValueError("M/M/1 queue is unstable")
    return arrival_rate / (service_rate * (service_rate - arrival_rate))


# ---------------------------------------------------------- per-run channel

class WarningChannel:
    """Delay source used by the simulator.

    For ``nc`` the delay is one reaction time per hop; the engine chains the
    hops.  For ``sv2i`` and, in ``sampled`` mode, ``v2i`` every recipient
    gets its own draw.  In ``mechanistic`` mode a single warning packet goes
    through a live FIFO queue (pre-filled for ``warmup`` seconds) and all
    recipients share its queueing delay.
    """

    def __init__(self, kind, params: LatencyParams, ts: float, rng: np.random.Generator,
                 queue_mode: str = "sampled", rounding: str = "ceil", warmup: float = 5.0):
        self.kind = ChannelKind.parse(kind)
        self.params = params
        self.ts = ts
        self.rng = rng
        self.rounding = rounding
        if queue_mode not in ("sampled", "mechanistic"):
            raise ValueError(f"queue mode must be 'sampled' or 'mechanistic', not {queue_mode!r}")
        self.queue_mode = queue_mode
        self.queue: QueueState | None = None
        self.unstable = False
        self._waiting: dict[int, tuple[int, list[int], Packet]] = {}
        if self.kind is ChannelKind.V2I and queue_mode == "mechanistic":
            self.unstable = params.arrival_rate >= params.service_rate
            if self.unstable:
                log.warning("background traffic %.3g/s saturates service %.3g/s",
                            params.arrival_rate, params.service_rate)
            n_warm = int(round(warmup / ts))
            self.queue = QueueState(ts, params.arrival_rate, params.service_rate,
                                    origin=-n_warm * ts, record=False)
            for _ in range(n_warm):
                advance_queue_slot(self.queue, rng)

    @property
    def queue_len(self) -> int:
        return self.queue.length if self.queue is not None else 0

    def steps(self, delay: float) -> int:
        return delay_to_steps(delay, self.ts, self.rounding)

    def hop_delay(self) -> float:
        """Delay of one brake-light hop (``nc`` only)."""
        return delivery_delay_nc(self.params)

    def broadcast(self, step: int, recipients: list[int]) -> dict[int, float]:
        """Warn ``recipients`` of a danger detected at ``step``.

        Returns the delays known right away.  Mechanistic deliveries are
        reported later by :meth:`advance`.
        """
        if self.kind is ChannelKind.NC:
            raise ValueError("no warning channel without infrastructure")
        if self.kind is ChannelKind.SV2I:
            return {i: delivery_delay_5g(self.params, self.rng) for i in recipients}
        if self.queue is None:
            return {i: delivery_delay_lte(self.params, sample_queue_delay(self.params, self.rng))
                    for i in recipients}
        pkt = Packet(step * self.ts + self.params.uplink, self.queue.draw_service(self.rng),
                     warning=True, tag=step)
        self.queue.offer(pkt)
        self._waiting[id(pkt)] = (step, list(recipients), pkt)
        return {}

    def advance(self) -> list[tuple[int, int, float]]:
        """Run the queue for one step; returns ``(detect_step, recipient, delay)``
        for warnings that left the queue."""
        if self.queue is None:
            return []
        _, departed = advance_queue_slot(self.queue, self.rng)
        out = []
        for pkt in departed:
            if pkt.warning:
                step, recipients, _ = self._waiting.pop(id(pkt))
                delay = delivery_delay_lte(self.params, pkt.sojourn)
                out.extend((step, i, delay) for i in recipients)
        return out
