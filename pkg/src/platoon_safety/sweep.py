"""Seed sweeps over channel types."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .channels import ChannelKind
from .engine import RunSummary, run
from .scenario import Scenario

log = logging.getLogger(__name__)

AGGREGATE_COLUMNS = ("channel", "runs", "failed", "collision_rate",
                     "r_steps_mean", "r_steps_p95", "max_slip_mean", "max_slip_p95",
                     "stop_dist_m_mean", "stop_dist_m_p95", "final_gap_m_mean", "final_gap_m_p95")


def derive_seeds(master: int, count: int) -> list[int]:
    """``count`` run seeds, each fixed by ``(master, run index)``."""
    return [int(np.random.SeedSequence([master, i]).generate_state(1, np.uint64)[0]) for i in range(count)]


@dataclass
class SweepResult:
    rows: list[RunSummary]
    errors: dict[int, str] = field(default_factory=dict)

    def for_channel(self, kind) -> list[RunSummary]:
        name = ChannelKind.parse(kind).value
        return [r for r in self.rows if r.channel == name]

    def aggregates(self) -> list[tuple]:
        out = []
        for name in dict.fromkeys(r.channel for r in self.rows):
            rows = self.for_channel(name)
            ok = [r for r in rows if not (isinstance(r.max_slip, float) and math.isnan(r.max_slip))]
            line = [name, len(rows), len(rows) - len(ok),
                    float(np.mean([r.collided for r in ok])) if ok else float("nan")]
            for attr in ("r_steps", "max_slip", "stop_dist_m", "final_gap_m"):
                vals = np.array([getattr(r, attr) for r in ok], dtype=float)
                vals = vals[~np.isnan(vals)]
                line += [float(vals.mean()), float(np.percentile(vals, 95))] if vals.size else [float("nan")] * 2
            out.append(tuple(line))
        return out


def _one(task) -> tuple[RunSummary, str | None]:
    scenario, kind, seed = task
    try:
        return run(scenario, kind, seed).summary, None
    except Exception as exc:  # a failed run must not stop the sweep
        nan = float("nan")
        return RunSummary(scenario.name, ChannelKind.parse(kind).value, seed, nan, nan, nan, nan, nan,
                          False, nan), f"{type(exc).__name__}: {exc}"


def sweep(scenario: Scenario, channels, seeds, workers: int = 1) -> SweepResult:
    """Every channel crossed with every seed, seed-major within each channel.

    With ``workers > 1`` runs go to a process pool; the rows come back in
    the same order, so the table does not depend on ``workers``.
    """
    channels = [ChannelKind.parse(c) for c in channels]
    seeds = [int(s) for s in seeds]
    if not channels or not seeds:
        raise ValueError("need at least one channel and one seed")
    tasks = [(scenario, c, s) for c in channels for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_one, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        results = [_one(t) for t in tasks]
    errors = {}
    for idx, (_, err) in enumerate(results):
        if err is not None:
            log.warning("run %d (%s, seed %d) failed: %s", idx, tasks[idx][1].value, tasks[idx][2], err)
            errors[idx] = err
    return SweepResult([r for r, _ in results], errors)
