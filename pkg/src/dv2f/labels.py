"""Training signals for a learned controller: reference-control labels, state cost and loss terms.

No learner lives here. A downstream trainer is expected to use the Adam
optimizer (initial learning rate 0.01, weight decay 1e-6, learning rate cut by
0.2 after 15 epochs without validation improvement, at most 500 epochs with
early stopping after 50).
"""

from __future__ import annotations

import gzip
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import IO, Iterator, Sequence

import numpy as np

from .controller import all_neighbors, neighbor_filter
from .core import ControlCommand, ModelParams, Scene, VehicleState, wrap_angle
from .field import predicted_next_position
from .kinematics import step
from .simulator import Rollout

DEFAULT_SIGMA0 = (0.25, 0.25, 0.1, 0.1)
DEFAULT_PERTURB_HORIZON = 200
SPEED_MATCH_TOL = 1e-9


@dataclass(frozen=True)
class LabelRecord:
    scenario_id: str
    t: int
    vehicle_id: int
    state: VehicleState
    neighbor_ids: tuple[str, ...]
    ref_pedal: float
    ref_steer: float
    ref_v_next: float
    ref_theta_next: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["neighbor_ids"] = list(self.neighbor_ids)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LabelRecord":
        return cls(
            scenario_id=str(d["scenario_id"]),
            t=int(d["t"]),
            vehicle_id=int(d["vehicle_id"]),
            state=VehicleState(**d["state"]),
            neighbor_ids=tuple(d["neighbor_ids"]),
            ref_pedal=float(d["ref_pedal"]),
            ref_steer=float(d["ref_steer"]),
            ref_v_next=float(d["ref_v_next"]),
            ref_theta_next=float(d["ref_theta_next"]),
        )


# -- cost ----------------------------------------------------------------------


def lookahead(s: VehicleState, cmd: ControlCommand, p: ModelParams) -> VehicleState:
    """State holding (x_{t+2}, y_{t+2}, theta_{t+1}, v_{t+1}) after applying ``cmd`` once.

    The second position update only needs theta_{t+1} and v_{t+1}, so no
    second command is involved.
    """
    s1 = step(s, cmd, p)
    return s1.replace(
        x=s1.x + s1.v * math.cos(s1.theta) * p.dt,
        y=s1.y + s1.v * math.sin(s1.theta) * p.dt,
    )


def _penalty(alpha: float) -> float:
    a = max(-alpha, 0.0)
    return a * a + a


def state_cost(s: VehicleState, scene: Scene, p: ModelParams, ego: int | None = None) -> float:
    """Distance to target plus quadratic-and-linear penalties on margin violations.

    ``s`` is the lookahead state. Other agents are taken from ``scene`` as they
    are; ``ego`` is the index of ``s`` in ``scene`` and is skipped.
    The margin uses the ego speed only.
    """
    margin = p.r_c + abs(s.v)
    c = math.hypot(s.x_tar - s.x, s.y_tar - s.y)
    for o in scene.obstacles:
        c += _penalty(math.hypot(o.x - s.x, o.y - s.y) - o.r - p.r_veh - margin)
    for j, other in enumerate(scene.vehicles):
        if j == ego:
            continue
        c += _penalty(math.hypot(other.x - s.x, other.y - s.y) - 2.0 * p.r_veh - margin)
    return c


def control_cost(s: VehicleState, cmd: ControlCommand, scene: Scene, i: int, p: ModelParams) -> float:
    return state_cost(lookahead(s, cmd, p), scene, p, ego=i)


def cost_delta(
    s: VehicleState, ref: ControlCommand, pred: ControlCommand, scene: Scene, i: int, p: ModelParams
) -> float:
    """C(ref steer, predicted pedal) - C(ref steer, ref pedal)."""
    mixed = ControlCommand(pred.pedal, ref.steer)
    return control_cost(s, mixed, scene, i, p) - control_cost(s, ref, scene, i, p)


# -- loss ----------------------------------------------------------------------


def speed_gate(x_tar_norm: float, ref_v_next: float, pred_v_next: float, p: ModelParams) -> bool:
    """True when the vehicle is far from its target and only v_d holds the prediction back."""
    far = x_tar_norm - abs(pred_v_next) - p.r_p > 0.0
    limited = (
        abs(pred_v_next) > p.v_d
        and abs(abs(ref_v_next) - p.v_d) <= SPEED_MATCH_TOL
        and pred_v_next * ref_v_next > 0.0
    )
    return far and limited


def pedal_loss(delta_c: float, gate: bool, ref_pedal: float, pred_pedal: float) -> float:
    if gate:
        return delta_c + (delta_c * delta_c if delta_c > 0.0 else 0.0)
    return (ref_pedal - pred_pedal) ** 2


def training_loss(
    pred: ControlCommand, ref: ControlCommand, scene: Scene, i: int, p: ModelParams
) -> tuple[float, float]:
    """(steering loss, pedal loss) for vehicle ``i`` of ``scene``.

    The pedal loss may be negative when the gate is open and the prediction
    lowers the cost.
    """
    s = scene.vehicles[i]
    l_steer = (ref.steer - pred.steer) ** 2
    ref_v_next = step(s, ref, p).v
    pred_v_next = step(s, pred, p).v
    nx, ny = predicted_next_position(s, p)
    gate = speed_gate(math.hypot(s.x_tar - nx, s.y_tar - ny), ref_v_next, pred_v_next, p)
    delta = cost_delta(s, ref, pred, scene, i, p) if gate else 0.0
    return l_steer, pedal_loss(delta, gate, ref.pedal, pred.pedal)


# -- augmentation --------------------------------------------------------------


def perturb(
    s: VehicleState,
    t: int,
    horizon: int = DEFAULT_PERTURB_HORIZON,
    sigma0: Sequence[float] = DEFAULT_SIGMA0,
    rng: np.random.Generator | None = None,
) -> VehicleState:
    """Add zero-mean Gaussian noise to (x, y, theta, v); the std shrinks linearly to zero at ``horizon``."""
    if not 0 <= t <= horizon:
        raise ValueError(f"t must lie in [0, {horizon}], got {t}")
    rng = rng if rng is not None else np.random.default_rng()
    scale = (horizon - t) / horizon
    n = rng.normal(0.0, 1.0, 4) * np.asarray(sigma0, dtype=np.float64) * scale
    return s.replace(
        x=s.x + float(n[0]),
        y=s.y + float(n[1]),
        theta=wrap_angle(s.theta + float(n[2])),
        v=s.v + float(n[3]),
    )


# -- export --------------------------------------------------------------------


def label_records(r: Rollout, scenario_id: str = "0") -> Iterator[LabelRecord]:
    """One record per (step, vehicle) that has a command."""
    for t in range(r.terminated_at):
        scene = r.scene(t)
        for i, s in enumerate(scene.vehicles):
            nbrs = all_neighbors(scene, i) if r.full_sum else neighbor_filter(scene, i, r.params)
            yield LabelRecord(
                scenario_id=scenario_id,
                t=t,
                vehicle_id=i,
                state=s,
                neighbor_ids=tuple(nbrs),
                ref_pedal=float(r.commands[t, i, 0]),
                ref_steer=float(r.commands[t, i, 1]),
                ref_v_next=float(r.states[t + 1, i, 3]),
                ref_theta_next=float(r.states[t + 1, i, 2]),
            )


def write_labels(records: Iterator[LabelRecord], fh: IO[str]) -> int:
    n = 0
    for rec in records:
        fh.write(json.dumps(rec.to_dict(), separators=(",", ":")))
        fh.write("\n")
        n += 1
    return n


def export_labels(r: Rollout, path: "str | Path", scenario_id: str = "0", compress: bool = False) -> int:
    """Write JSON-lines labels (gzip when ``compress``); returns the record count."""
    opener = gzip.open if compress else open
    with opener(path, "wt", encoding="utf-8") as fh:
        return write_labels(label_records(r, scenario_id), fh)


def read_labels(path: "str | Path") -> list[LabelRecord]:
    path = Path(path)
    with open(path, "rb") as raw:
        compressed = raw.read(2) == b"\x1f\x8b"
    opener = gzip.open if compressed else open
    with opener(path, "rt", encoding="utf-8") as fh:
        return [LabelRecord.from_dict(json.loads(ln)) for ln in fh if ln.strip()]


__all__ = [
    "DEFAULT_SIGMA0",
    "LabelRecord",
    "control_cost",
    "cost_delta",
    "export_labels",
    "label_records",
    "lookahead",
    "pedal_loss",
    "perturb",
    "read_labels",
    "speed_gate",
    "state_cost",
    "training_loss",
    "write_labels",
]
