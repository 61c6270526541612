"""Success, reach and safe rates computed from rollouts."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .core import ModelParams, parse_agent_id
from .simulator import Rollout

CSV_COLUMNS = ("n_vehicles", "n_obstacles", "cases", "success", "reach", "safe", "position_only", "wall_time_s")


@dataclass
class MetricsReport:
    success_rate: float
    reach_rate: float
    safe_rate: float
    position_only_success: float
    per_vehicle_outcomes: list[tuple[bool, bool]] = field(default_factory=list)
    success_time_series: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["per_vehicle_outcomes"] = [list(o) for o in self.per_vehicle_outcomes]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _wrap(a: np.ndarray) -> np.ndarray:
    # elementwise twin of wrap_angle, same operations so both agree to the last bit
    r = np.fmod(a + math.pi, 2.0 * math.pi)
    r = np.where(r <= 0.0, r + 2.0 * math.pi, r) - math.pi
    return np.where((a > -math.pi) & (a <= math.pi), a, r)


def _dist(dx: np.ndarray, dy: np.ndarray) -> np.ndarray:
    return np.sqrt(dx * dx + dy * dy)


def _parked_mask(states: np.ndarray, p: ModelParams) -> np.ndarray:
    """Pose tolerance test for every (frame, vehicle); ``states`` has shape (T, N, 7)."""
    d = _dist(states[..., 4] - states[..., 0], states[..., 5] - states[..., 1])
    return (d <= p.eps_p) & (np.abs(_wrap(states[..., 2] - states[..., 6])) <= p.eps_o)


def _first_collision(r: Rollout) -> np.ndarray:
    """Step of each vehicle's first collision, or a value past the last frame."""
    first = np.full(r.n_vehicles, r.terminated_at + 1, dtype=np.int64)
    for t, a, b in r.collision_events:
        for agent in (a, b):
            kind, idx = parse_agent_id(agent)
            if kind == "vehicle" and t < first[idx]:
                first[idx] = t
    return first


def success_time_series(r: Rollout, p: ModelParams | None = None) -> list[float]:
    """Fraction of vehicles parked at step t and collision free on [0, t]."""
    p = p or r.params
    n = r.n_vehicles
    frames = r.terminated_at + 1
    if n == 0:
        return [1.0] * frames
    parked = _parked_mask(r.states[:frames], p)
    clean = np.arange(frames)[:, None] < _first_collision(r)[None, :]
    return [float(x) for x in (parked & clean).mean(axis=1)]


def evaluate(r: Rollout, p: ModelParams | None = None) -> MetricsReport:
    p = p or r.params
    if r.states.shape[0] == 0:
        raise ValueError("empty rollout")
    n = r.n_vehicles
    series = success_time_series(r, p)
    if n == 0:
        return MetricsReport(1.0, 1.0, 1.0, 1.0, [], series)
    final = r.states[r.terminated_at]
    reached = _parked_mask(final[None], p)[0]
    safe = _first_collision(r) > r.terminated_at
    pos_ok = _dist(final[:, 4] - final[:, 0], final[:, 5] - final[:, 1]) <= p.eps_p
    return MetricsReport(
        success_rate=float(np.mean(reached & safe)),
        reach_rate=float(np.mean(reached)),
        safe_rate=float(np.mean(safe)),
        position_only_success=float(np.mean(pos_ok)),
        per_vehicle_outcomes=[(bool(a), bool(b)) for a, b in zip(reached, safe)],
        success_time_series=series,
    )


@dataclass
class BatchSummary:
    """Per-vehicle rates pooled over a batch of cases."""

    n_vehicles: int
    n_obstacles: int
    cases: int
    success: float
    reach: float
    safe: float
    position_only: float
    wall_time_s: float = 0.0
    r_c: float | None = None

    def row(self) -> dict:
        d = {k: getattr(self, k) for k in CSV_COLUMNS}
        if self.r_c is not None:
            d["r_c"] = self.r_c
        return d


def summarize(
    reports: Sequence[MetricsReport],
    n_vehicles: int,
    n_obstacles: int,
    wall_time_s: float = 0.0,
    r_c: float | None = None,
) -> BatchSummary:
    """Rates are averaged over all vehicles of all cases, so every vehicle counts once."""
    outcomes = [o for rep in reports for o in rep.per_vehicle_outcomes]
    if outcomes:
        reached = np.array([o[0] for o in outcomes])
        safe = np.array([o[1] for o in outcomes])
        total = sum(len(rep.per_vehicle_outcomes) for rep in reports)
        pos = sum(rep.position_only_success * len(rep.per_vehicle_outcomes) for rep in reports) / total
        success, reach, safe_rate = float(np.mean(reached & safe)), float(np.mean(reached)), float(np.mean(safe))
    else:
        success = reach = safe_rate = pos = 1.0
    return BatchSummary(
        n_vehicles=n_vehicles,
        n_obstacles=n_obstacles,
        cases=len(reports),
        success=success,
        reach=reach,
        safe=safe_rate,
        position_only=float(pos),
        wall_time_s=wall_time_s,
        r_c=r_c,
    )


def summaries_to_csv(rows: Iterable[BatchSummary]) -> str:
    rows = list(rows)
    cols = list(CSV_COLUMNS)
    if any(r.r_c is not None for r in rows):
        cols.append("r_c")
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r.row())
    return buf.getvalue()


__all__ = [
    "BatchSummary",
    "CSV_COLUMNS",
    "MetricsReport",
    "evaluate",
    "success_time_series",
    "summaries_to_csv",
    "summarize",
]
