"""Danger log and the per-vehicle safety latch."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

from .dynamics import GainSet

STANDSTILL_SPEED = 0.05


@dataclass
class DangerLog:
    """Ordered danger detections as ``(step, vehicle)`` pairs."""

    steps: list[int] = field(default_factory=list)
    vehicles: list[int] = field(default_factory=list)

    def record(self, step: int, vehicle: int) -> None:
        if self.steps and step <= self.steps[-1]:
            raise ValueError(f"danger steps must strictly increase ({step} after {self.steps[-1]})")
        self.steps.append(int(step))
        self.vehicles.append(int(vehicle))

    def detections_at(self, step: int) -> list[int]:
        return [veh for s, veh in zip(self.steps, self.vehicles) if s == step]

    def up_to(self, step: int) -> "DangerLog":
        keep = [i for i, s in enumerate(self.steps) if s <= step]
        return DangerLog([self.steps[i] for i in keep], [self.vehicles[i] for i in keep])

    def __len__(self):
        return len(self.steps)


@dataclass(frozen=True)
class TriggerState:
    """Latch flags; ``activated_at[i]`` is -1 while vehicle ``i`` is unlatched."""

    theta: tuple[int, ...]
    activated_at: tuple[int, ...]

    @classmethod
    def idle(cls, n: int) -> "TriggerState":
        return cls((0,) * n, (-1,) * n)

    @property
    def latched(self) -> tuple[bool, ...]:
        return tuple(t == 1 for t in self.theta)


def evaluate_trigger(log: DangerLog, step: int, delivered: Iterable[int], state: TriggerState,
                     speeds, threshold: float = STANDSTILL_SPEED) -> TriggerState:
    """Latch update for one step.

    A latched vehicle whose speed has dropped to ``threshold`` is released
    first; then the vehicles detecting a danger at ``step`` and those
    receiving a warning now are latched, unless they are already at rest.
    """
    n = len(state.theta)
    speeds = np.asarray(speeds, dtype=float)
    theta = list(state.theta)
    since = list(state.activated_at)
    for i in range(n):
        if theta[i] and abs(speeds[i]) <= threshold:
            theta[i], since[i] = 0, -1
    for i in list(log.detections_at(step)) + list(delivered):
        if not 0 <= i < n:
            raise ValueError(f"warning addressed to unknown vehicle {i}")
        if not theta[i] and abs(speeds[i]) > threshold:
            theta[i], since[i] = 1, step
    return replace(state, theta=tuple(theta), activated_at=tuple(since))


def effective_gains(gains: GainSet, theta: int) -> tuple[float, float]:
    if theta not in (0, 1):
        raise ValueError("trigger flag must be 0 or 1")
    return gains.rel_pos + theta * gains.addon_pos, gains.rel_vel + theta * gains.addon_vel


def poisson_dangers(rate: float, horizon_steps: int, ts: float, n_vehicles: int,
                    rng: np.random.Generator, vehicle: int | None = None) -> DangerLog:
    """Dangers arriving as a Poisson process of ``rate`` per second.

    Inter-arrival gaps are drawn up front, so they cannot depend on the
    platoon state.  Each danger hits ``vehicle`` or, if None, a uniformly
    chosen one.  Arrivals that round onto an already used step are merged.
    """
    log = DangerLog()
    if rate <= 0:
        return log
    t = 0.0
    horizon = horizon_steps * ts
    while True:
        t += rng.exponential(1.0 / rate)
        if t >= horizon:
            return log
        step = int(t / ts)
        target = vehicle if vehicle is not None else int(rng.integers(n_vehicles))
        if not log.steps or step > log.steps[-1]:
            log.record(step, target)
