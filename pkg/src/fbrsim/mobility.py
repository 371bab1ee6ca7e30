"""Highway traffic: random lane assignment, square-law spacing, IDM motion.

The road is a straight periodic segment: vehicles leaving one end re-enter at
the other, so the density of a scenario stays fixed for its whole duration.
Lanes ``0 .. m-1`` carry direction +1 and lanes ``m .. 2m-1`` carry
direction -1 (``m = lanes // 2``); lane 0 and lane ``2m-1`` are the outer
lanes, lanes ``m-1`` and ``m`` the inner ones.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .domain import MobilityParams, ScenarioConfig

KMH = 1.0 / 3.6


class InfeasibleDensity(ValueError):
    pass


def square_law_speed_kmh(gap_m):
    """Speed (km/h) whose driving-school spacing rule gives ``gap_m`` metres."""
    return np.sqrt(np.asarray(gap_m, dtype=float) * 100.0)


def square_law_gap_m(speed_kmh):
    return np.asarray(speed_kmh, dtype=float) ** 2 / 100.0


@dataclass(frozen=True)
class MobilityState:
    x: np.ndarray          # position along the road, [0, road_length)
    lane: np.ndarray
    speed: np.ndarray      # m/s, always >= 0
    direction: np.ndarray  # +1 / -1
    target_speed: np.ndarray  # m/s, per vehicle (from its lane)
    road_length: float
    params: MobilityParams

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def y(self) -> np.ndarray:
        return self.lane * self.params.lane_width

    def lane_speed_profile(self, lanes: int) -> np.ndarray:
        return lane_target_speeds(lanes, self.params)

    def directed_position(self) -> np.ndarray:
        """Coordinate increasing in each vehicle's direction of travel."""
        return np.where(self.direction > 0, self.x, (self.road_length - self.x) % self.road_length)


def _wrap(x: np.ndarray, L: float) -> np.ndarray:
    x = np.mod(x, L)
    x[x >= L] = 0.0
    return x


def lane_rank(lane: np.ndarray, lanes: int) -> np.ndarray:
    """0 for the innermost lane of a direction, m-1 for the outermost."""
    m = lanes // 2
    lane = np.asarray(lane)
    return np.where(lane < m, m - 1 - lane, lane - m)


def lane_target_speeds(lanes: int, params: MobilityParams) -> np.ndarray:
    ranks = lane_rank(np.arange(lanes), lanes)
    return np.asarray(params.lane_speeds_kmh, dtype=float)[ranks] * KMH


def init_traffic(cfg: ScenarioConfig, rng) -> MobilityState:
    """Place ``cfg.vehicle_count`` vehicles; ``rng`` is a Generator or a seed."""
    rng = np.random.default_rng(rng)
    p = cfg.mobility
    L = float(cfg.road_length)
    n = cfg.vehicle_count

    ranks = lane_rank(np.arange(cfg.lanes), cfg.lanes)
    w = np.asarray(p.lane_weights, dtype=float)[ranks]
    lane = rng.choice(cfg.lanes, size=n, p=w / w.sum())
    lane_counts = np.bincount(lane, minlength=cfg.lanes)
    busiest = lane_counts.max()
    min_spacing = p.vehicle_length + p.min_gap
    if busiest * min_spacing >= L:
        raise InfeasibleDensity(
            f"{busiest} vehicles in one lane do not fit on {L:g} m "
            f"at {min_spacing:g} m minimum spacing"
        )

    # random gaps: uniform order statistics on the slack, plus the minimum spacing
    x = np.empty(n)
    for ln in range(cfg.lanes):
        members = np.flatnonzero(lane == ln)
        k = members.shape[0]
        if k == 0:
            continue
        slack = np.sort(rng.uniform(0.0, L - k * min_spacing, size=k))
        pos = rng.uniform(0.0, L) + slack + min_spacing * np.arange(k)
        x[members] = _wrap(pos, L)

    direction = np.where(lane < cfg.lanes // 2, 1, -1)
    target = lane_target_speeds(cfg.lanes, p)[lane]
    state = MobilityState(
        x=x, lane=lane.astype(np.int64), speed=np.zeros(n), direction=direction.astype(np.int64),
        target_speed=target, road_length=L, params=p,
    )
    spacing, _ = _leaders(state)
    v_law = square_law_speed_kmh(spacing) * KMH
    return replace(state, speed=np.minimum(v_law, target))


def _leaders(state: MobilityState):
    """Centre-to-centre spacing to the leader in lane, and the leader's index."""
    s = state.directed_position()
    order = np.lexsort((s, state.lane))
    lane_sorted = state.lane[order]
    nxt = np.roll(order, -1)
    # wrap each lane group onto its own first vehicle
    starts = np.flatnonzero(np.r_[True, lane_sorted[1:] != lane_sorted[:-1]])
    ends = np.r_[starts[1:], order.shape[0]] - 1
    nxt[ends] = order[starts]
    leader = np.empty_like(order)
    leader[order] = nxt
    spacing = (s[leader] - s) % state.road_length
    spacing[leader == np.arange(state.n)] = state.road_length
    return spacing, leader


def gaps(state: MobilityState) -> np.ndarray:
    """Bumper-to-bumper gap to the leader in lane."""
    spacing, _ = _leaders(state)
    return spacing - state.params.vehicle_length


def step(state: MobilityState, dt: float) -> MobilityState:
    """Advance every vehicle by ``dt`` seconds of IDM car-following."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    p = state.params
    h = dt / p.substeps
    for _ in range(p.substeps):
        state = _substep(state, h)
    return state


def _substep(state: MobilityState, h: float) -> MobilityState:
    p = state.params
    L = state.road_length
    spacing, leader = _leaders(state)
    gap = spacing - p.vehicle_length
    dv = state.speed - state.speed[leader]
    acc = _kernels.idm_accel(
        state.speed, state.target_speed, gap, dv,
        p.max_accel, p.comfort_decel, p.min_gap, p.time_headway, p.exponent,
    )
    v_new = np.clip(state.speed + acc * h, 0.0, 1.05 * state.target_speed)
    adv = 0.5 * (state.speed + v_new) * h

    # a follower never closes the gap to its leader's new position
    for _ in range(state.n):
        limit = spacing + adv[leader] - p.vehicle_length - 0.01
        over = adv > limit
        over &= leader != np.arange(state.n)
        if not over.any():
            break
        adv = np.where(over, np.maximum(limit, 0.0), adv)
        v_new = np.where(over, np.minimum(v_new, state.speed[leader]), v_new)

    x = _wrap(state.x + state.direction * adv, L)
    new = replace(state, x=x, speed=v_new)
    assert (gaps(new) > 0).all(), "vehicles overlap after an IDM step"
    return new


def write_trace(fh, t: float, state: MobilityState, first: bool = False) -> None:
    """Append one CSV row per vehicle: time,vehicle_id,x,y,lane,speed."""
    if first:
        fh.write("time,vehicle_id,x,y,lane,speed\n")
    y = state.y
    for i in range(state.n):
        fh.write(f"{t:.3f},{i},{state.x[i]:.3f},{y[i]:.3f},{state.lane[i]},{state.speed[i]:.4f}\n")
