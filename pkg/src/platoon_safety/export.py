"""CSV output for traces and run summaries.

Floats are written with ``repr`` so files round-trip exactly and identical
runs give identical bytes.
"""
from __future__ import annotations

import csv
import math
from dataclasses import astuple, dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .engine import RunSummary, SimTrace

TRACE_COLUMNS = ("step", "t", "vehicle", "p_abs", "v_abs", "p_err", "v_err", "u_cmd", "u_real",
                 "kappa_front", "kappa_rear", "theta", "queue_len", "event")
SUMMARY_COLUMNS = RunSummary.FIELDS
_ARRAY_COLUMNS = ("p_abs", "v_abs", "p_err", "v_err", "u_cmd", "u_real", "kappa_front", "kappa_rear")


def _cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        return repr(value)
    return str(value)


def _open(path: Path):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        return path.open("w", newline="")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def export_trace(trace: SimTrace, path) -> Path:
    labels: dict[tuple[int, int], list[str]] = {}
    for step, veh, lbl in trace.events:
        labels.setdefault((step, veh), []).append(lbl)
    with _open(path) as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(TRACE_COLUMNS)
        for k in range(trace.steps):
            t = k * trace.ts
            for i in range(trace.n):
                out.writerow([_cell(k), _cell(t), _cell(i)]
                             + [_cell(getattr(trace, col)[k, i]) for col in _ARRAY_COLUMNS]
                             + [_cell(int(trace.theta[k, i])), _cell(int(trace.queue_len[k])),
                                ";".join(labels.get((k, i), []))])
    return Path(path)


def export_summary(rows: Iterable[RunSummary], path) -> Path:
    with _open(path) as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(SUMMARY_COLUMNS)
        for row in rows:
            out.writerow([_cell(v) for v in astuple(row)])
    return Path(path)


def export_table(header: Iterable[str], rows: Iterable[Iterable], path) -> Path:
    with _open(path) as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(list(header))
        for row in rows:
            out.writerow([_cell(v) for v in row])
    return Path(path)


@dataclass
class TraceTable:
    """A trace read back from CSV: arrays are indexed ``[step, vehicle]``."""

    ts: float
    columns: dict[str, np.ndarray]
    theta: np.ndarray
    queue_len: np.ndarray
    events: list[tuple[int, int, str]] = field(default_factory=list)

    @property
    def steps(self) -> int:
        return self.theta.shape[0]

    @property
    def n(self) -> int:
        return self.theta.shape[1]

    def __getattr__(self, name):
        cols = self.__dict__.get("columns", {})
        if name in cols:
            return cols[name]
        raise AttributeError(name)

    def first_event(self, label: str, vehicle: int | None = None) -> tuple[int, int] | None:
        for step, veh, lbl in self.events:
            if lbl == label and (vehicle is None or veh == vehicle):
                return step, veh
        return None


def read_trace(path) -> TraceTable:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(TRACE_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing trace columns {sorted(missing)}")
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path}: trace has no rows")
    steps = max(int(r["step"]) for r in rows) + 1
    n = max(int(r["vehicle"]) for r in rows) + 1
    cols = {c: np.full((steps, n), np.nan) for c in _ARRAY_COLUMNS}
    theta = np.zeros((steps, n), dtype=int)
    queue = np.zeros(steps, dtype=int)
    events = []
    ts = None
    for r in rows:
        k, i = int(r["step"]), int(r["vehicle"])
        for c in _ARRAY_COLUMNS:
            cols[c][k, i] = float(r[c])
        theta[k, i] = int(r["theta"])
        queue[k] = int(r["queue_len"])
        if k == 1 and ts is None:
            ts = float(r["t"])
        for lbl in filter(None, r["event"].split(";")):
            events.append((k, i, lbl))
    return TraceTable(ts if ts is not None else float("nan"), cols, theta, queue, events)
