"""Closed-loop consensus model of a vehicle platoon.

Error coordinates are used throughout: ``p[i]`` is the position of vehicle
``i`` minus its desired position and ``v[i]`` its speed minus the desired
speed.  The stacked state is ``x = [p, v]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.linalg import expm


@dataclass(frozen=True)
class VehicleParams:
    """Longitudinal vehicle and tire parameters."""

    mass: float = 1580.0
    tire_stiffness: float = 80_000.0
    wheel_radius: float = 0.30
    wheelbase: float = 2.34
    front_load_fraction: float = 0.55

    def __post_init__(self):
        for name in ("mass", "tire_stiffness", "wheel_radius", "wheelbase"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")
        if not 0.0 < self.front_load_fraction < 1.0:
            raise ValueError("front_load_fraction must lie strictly between 0 and 1")

    @property
    def slip_per_accel(self) -> float:
        """Mass over tire stiffness: slip produced by 1 m/s^2 in the linear region."""
        return self.mass / self.tire_stiffness


@dataclass(frozen=True)
class GainSet:
    """Consensus gains.

    ``rel_pos``/``rel_vel`` weight the differences to each neighbor,
    ``self_pos``/``self_vel`` weight the vehicle's own tracking error and
    ``addon_pos``/``addon_vel`` are added to the relative gains while the
    safety trigger is latched.  ``edge_overrides`` maps a directed edge
    ``(i, j)`` to its own ``(rel_pos, rel_vel)`` pair.
    """

    rel_pos: float = 0.1
    rel_vel: float = 0.23
    self_pos: float = 0.08
    self_vel: float = 0.05
    addon_pos: float = 0.04
    addon_vel: float = 0.11
    edge_overrides: Mapping[tuple[int, int], tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("rel_pos", "rel_vel", "self_pos", "self_vel", "addon_pos", "addon_vel"):
            if getattr(self, name) < 0:
                raise ValueError(f"gain {name} must be non-negative")
        for edge, pair in self.edge_overrides.items():
            if len(edge) != 2 or len(pair) != 2 or min(pair) < 0:
                raise ValueError(f"bad edge override {edge!r}: {pair!r}")

    def edge(self, i: int, j: int) -> tuple[float, float]:
        return tuple(self.edge_overrides.get((i, j), (self.rel_pos, self.rel_vel)))

    def without_addon(self) -> "GainSet":
        return GainSet(self.rel_pos, self.rel_vel, self.self_pos, self.self_vel, 0.0, 0.0,
                       dict(self.edge_overrides))


@dataclass(frozen=True)
class PlatoonTopology:
    """Information graph and formation.

    ``neighbors[i]`` lists the vehicles whose state vehicle ``i`` uses.
    ``spacings[i]`` is the offset of vehicle ``i`` from the platoon
    reference point; vehicle 0 is at the front, so offsets decrease.
    """

    neighbors: tuple[tuple[int, ...], ...]
    spacings: tuple[float, ...]
    desired_speed: float

    def __post_init__(self):
        n = len(self.neighbors)
        if n == 0:
            raise ValueError("a platoon needs at least one vehicle")
        if len(self.spacings) != n:
            raise ValueError(f"{len(self.spacings)} spacings for {n} vehicles")
        for i, nbrs in enumerate(self.neighbors):
            for j in nbrs:
                if j == i:
                    raise ValueError(f"vehicle {i} lists itself as a neighbor")
                if not 0 <= j < n:
                    raise ValueError(f"vehicle {i} has unknown neighbor {j}")
        if any(b >= a for a, b in zip(self.spacings, self.spacings[1:])):
            raise ValueError("spacings must strictly decrease from front to back")

    @property
    def n(self) -> int:
        return len(self.neighbors)

    @classmethod
    def chain(cls, n: int, gap: float, desired_speed: float) -> "PlatoonTopology":
        """Predecessor-following platoon with uniform ``gap`` between vehicles."""
        nbrs = tuple(() if i == 0 else (i - 1,) for i in range(n))
        return cls(nbrs, tuple(-gap * i for i in range(n)), desired_speed)


@dataclass
class ClosedLoopModel:
    A_bar: np.ndarray
    B_bar: np.ndarray
    L_pos: np.ndarray
    L_vel: np.ndarray
    feedback: np.ndarray  # K with u_lin = -K x
    A: np.ndarray | None = None
    B: np.ndarray | None = None
    ts: float | None = None


def assemble_laplacian(topology: PlatoonTopology, weights) -> np.ndarray:
    """Weighted Laplacian of the neighbor graph.

    ``weights`` is an N x N array; only entries on edges are read.
    """
    w = np.asarray(weights, dtype=float)
    n = topology.n
    if w.shape != (n, n):
        raise ValueError(f"weight table has shape {w.shape}, topology needs {(n, n)}")
    lap = np.zeros((n, n))
    for i, nbrs in enumerate(topology.neighbors):
        for j in nbrs:
            lap[i, j] -= w[i, j]
            lap[i, i] += w[i, j]
    return lap


def edge_weights(topology: PlatoonTopology, gains: GainSet, theta) -> tuple[np.ndarray, np.ndarray]:
    """Effective position and velocity edge weights for trigger flags ``theta``."""
    n = topology.n
    th = np.asarray(theta, dtype=float).reshape(n)
    wp = np.zeros((n, n))
    wv = np.zeros((n, n))
    for i, nbrs in enumerate(topology.neighbors):
        for j in nbrs:
            cp, cv = gains.edge(i, j)
            wp[i, j] = cp + th[i] * gains.addon_pos
            wv[i, j] = cv + th[i] * gains.addon_vel
    return wp, wv


def assemble_closed_loop(topology: PlatoonTopology, gains: GainSet, theta) -> ClosedLoopModel:
    n = topology.n
    wp, wv = edge_weights(topology, gains, theta)
    lp = assemble_laplacian(topology, wp)
    lv = assemble_laplacian(topology, wv)
    eye = np.eye(n)
    K = np.hstack([gains.self_pos * eye + lp, gains.self_vel * eye + lv])
    A_bar = np.block([[np.zeros((n, n)), eye], [-K]])
    B_bar = np.vstack([np.zeros((n, n)), eye])
    return ClosedLoopModel(A_bar, B_bar, lp, lv, K)


def discretize_zoh(A_bar, B_bar, ts: float) -> tuple[np.ndarray, np.ndarray]:
    """Zero-order-hold discretization through one exponential of the block
    matrix ``[[A_bar, B_bar], [0, 0]] * ts``."""
    if not ts > 0:
        raise ValueError("sampling time must be positive")
    A_bar = np.atleast_2d(np.asarray(A_bar, dtype=float))
    B_bar = np.asarray(B_bar, dtype=float)
    if B_bar.ndim == 1:
        B_bar = B_bar.reshape(-1, 1)
    if not (np.all(np.isfinite(A_bar)) and np.all(np.isfinite(B_bar))):
        raise ValueError("non-finite entries in continuous-time matrices")
    n, m = B_bar.shape
    block = np.zeros((n + m, n + m))
    block[:n, :n] = A_bar
    block[:n, n:] = B_bar
    phi = expm(block * ts)
    A, B = phi[:n, :n], phi[:n, n:]
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
        raise ValueError("matrix exponential overflowed")
    return A, B


def discretize(model: ClosedLoopModel, ts: float) -> ClosedLoopModel:
    model.A, model.B = discretize_zoh(model.A_bar, model.B_bar, ts)
    model.ts = ts
    return model


def vehicle_input(i: int, p: Sequence[float], v: Sequence[float], topology: PlatoonTopology,
                  gains: GainSet, theta_i: float) -> float:
    """Acceleration command of vehicle ``i``, neighbor by neighbor."""
    u = -gains.self_pos * p[i] - gains.self_vel * v[i]
    for j in topology.neighbors[i]:
        cp, cv = gains.edge(i, j)
        u -= (cp + theta_i * gains.addon_pos) * (p[i] - p[j])
        u -= (cv + theta_i * gains.addon_vel) * (v[i] - v[j])
    return u


def control_input(p, v, topology: PlatoonTopology, gains: GainSet, theta) -> np.ndarray:
    """Commands for every vehicle, summed edge by edge."""
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    n = topology.n
    if p.shape != (n,) or v.shape != (n,):
        raise ValueError(f"state must have {n} positions and {n} speeds")
    th = np.asarray(theta, dtype=float).reshape(n)
    return np.array([vehicle_input(i, p, v, topology, gains, th[i]) for i in range(n)])


def control_input_matrix(x, model: ClosedLoopModel) -> np.ndarray:
    """Same commands through the Laplacian form ``u = -K x``."""
    return -model.feedback @ np.asarray(x, dtype=float)


def step_dynamics(x, A, B, noise) -> np.ndarray:
    """One sampled step ``A x + B noise`` of the stacked error state."""
    x = np.asarray(x, dtype=float)
    noise = np.asarray(noise, dtype=float)
    if noise.shape != (B.shape[1],):
        raise ValueError(f"input vector must have length {B.shape[1]}")
    nxt = A @ x + B @ noise
    if not np.all(np.isfinite(nxt)):
        raise FloatingPointError("state became non-finite")
    return nxt


@dataclass
class StateVector:
    """Error state with the matching absolute positions and speeds."""

    p: np.ndarray
    v: np.ndarray
    p_abs: np.ndarray
    v_abs: np.ndarray

    @property
    def x(self) -> np.ndarray:
        return np.concatenate([self.p, self.v])

    @classmethod
    def from_absolute(cls, p_abs, v_abs, ref_pos: float, ref_vel: float, spacings) -> "StateVector":
        p_abs = np.asarray(p_abs, dtype=float).copy()
        v_abs = np.asarray(v_abs, dtype=float).copy()
        s = np.asarray(spacings, dtype=float)
        return cls(p_abs - ref_pos - s, v_abs - ref_vel, p_abs, v_abs)

    @classmethod
    def from_errors(cls, x, ref_pos: float, ref_vel: float, spacings) -> "StateVector":
        x = np.asarray(x, dtype=float)
        n = x.size // 2
        if x.size != 2 * n:
            raise ValueError("stacked state must have even length")
        p, v = x[:n].copy(), x[n:].copy()
        return cls(p, v, p + ref_pos + np.asarray(spacings, dtype=float), v + ref_vel)
