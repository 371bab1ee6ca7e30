"""Beacon propagation and the per-window reception queues.

Path loss follows the three-segment log-distance model. Reception compares
the received power against a sensitivity threshold; with zero shadowing it is
a hard cutoff that the default calibration places at ``comm_range``.
Channel load is measured purely as beacon counts per window (no MAC).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from . import _kernels
from .domain import SPEED_OF_LIGHT, Beacon, RadioParams, Vehicle

# slack for the deterministic cutoff so a node exactly at range still hears
_CUTOFF_EPS_DB = 1e-9


def reference_loss_db(params: RadioParams) -> float:
    """Free-space loss at the first reference distance."""
    d0 = params.ref_distances[0]
    return 20.0 * math.log10(4.0 * math.pi * d0 * params.frequency_hz / SPEED_OF_LIGHT)


def path_loss_db(distance, params: RadioParams):
    """Three-log-distance loss in dB; accepts scalars or arrays."""
    d0, da, db = params.ref_distances
    n0, na, nb = params.exponents
    l0 = reference_loss_db(params)
    d = np.maximum(np.asarray(distance, dtype=float), d0)
    seg0 = 10.0 * n0 * np.log10(np.minimum(d, da) / d0)
    seg1 = 10.0 * na * np.log10(np.clip(d, da, db) / da)
    seg2 = 10.0 * nb * np.log10(np.maximum(d, db) / db)
    loss = l0 + seg0 + seg1 + seg2
    return float(loss) if np.ndim(loss) == 0 else loss


def inverse_path_loss(loss_db: float, params: RadioParams) -> float:
    """Distance at which the loss reaches ``loss_db`` (d0 if below the reference)."""
    d0, da, db = params.ref_distances
    n0, na, nb = params.exponents
    excess = loss_db - reference_loss_db(params)
    if excess <= 0:
        return d0
    cap0 = 10.0 * n0 * math.log10(da / d0)
    if excess <= cap0:
        return d0 * 10.0 ** (excess / (10.0 * n0))
    excess -= cap0
    cap1 = 10.0 * na * math.log10(db / da)
    if excess <= cap1:
        return da * 10.0 ** (excess / (10.0 * na))
    return db * 10.0 ** ((excess - cap1) / (10.0 * nb))


def rx_sensitivity_dbm(params: RadioParams) -> float:
    if params.rx_sensitivity_dbm is not None:
        return params.rx_sensitivity_dbm
    return params.tx_power_dbm - path_loss_db(params.comm_range, params)


def link_budget_db(params: RadioParams) -> float:
    return params.tx_power_dbm - rx_sensitivity_dbm(params)


def reception_probability(distance, params: RadioParams):
    """P(received) for one beacon at ``distance`` under Gaussian shadowing."""
    margin = link_budget_db(params) - np.asarray(path_loss_db(distance, params))
    if params.shadowing_sigma_db == 0:
        out = (margin >= -_CUTOFF_EPS_DB).astype(float)
    else:
        out = ndtr(margin / params.shadowing_sigma_db)
    return float(out) if np.ndim(out) == 0 else out


def max_reach(params: RadioParams, tail_sigmas: float = 7.0) -> float:
    """Distance beyond which reception is treated as impossible."""
    extra = tail_sigmas * params.shadowing_sigma_db
    return inverse_path_loss(link_budget_db(params) + extra, params) * (1 + 1e-9)


def road_distance(a, b, road_length: float | None = None):
    """Euclidean distance; the x axis wraps when ``road_length`` is given."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    dx = np.abs(a[..., 0] - b[..., 0])
    if road_length is not None:
        dx = np.minimum(dx, road_length - dx)
    d = np.hypot(dx, a[..., 1] - b[..., 1])
    return float(d) if np.ndim(d) == 0 else d


def try_receive(sender: Vehicle, receiver: Vehicle, params: RadioParams, rng,
                road_length: float | None = None) -> bool:
    if sender.id == receiver.id:
        raise ValueError("a node does not receive its own beacons")
    d = road_distance(sender.position, receiver.position, road_length)
    margin = link_budget_db(params) - path_loss_db(d, params)
    if params.shadowing_sigma_db > 0:
        margin -= rng.normal(0.0, params.shadowing_sigma_db)
        return bool(margin >= 0)
    return bool(margin >= -_CUTOFF_EPS_DB)


# --------------------------------------------------------------------------
# per-node queue view

@dataclass
class WindowQueue:
    owner: int
    position: tuple[float, float]
    own_pending: int = 0
    entries: list[Beacon] = field(default_factory=list)

    def overflow(self, max_q: int) -> bool:
        return len(self.entries) + self.own_pending > max_q

    def clear(self) -> None:
        self.entries.clear()
        self.own_pending = 0


def broadcast_window(vehicles: list[Vehicle], params: RadioParams, rng,
                     window: float = 1.0, t0: float = 0.0,
                     road_length: float | None = None) -> list[WindowQueue]:
    """Reference per-beacon broadcast; one queue per vehicle, same order.

    Emission times are spread evenly over the window. Positions are frozen
    for the window, so timing only labels the beacons.
    """
    queues = [WindowQueue(v.id, v.position, own_pending=v.current_br) for v in vehicles]
    for s, sender in enumerate(vehicles):
        for b in range(sender.current_br):
            beacon = sender.beacon(t0 + (b + 0.5) * window / sender.current_br)
            for r, receiver in enumerate(vehicles):
                if r != s and try_receive(sender, receiver, params, rng, road_length):
                    queues[r].entries.append(beacon)
    return queues


# --------------------------------------------------------------------------
# batched form used by the engine

@dataclass(frozen=True)
class QueueBatch:
    """All window queues at once, one row per (receiver, sender) link.

    Rows are sorted by receiver then sender and only links that delivered at
    least one beacon are kept. ``count`` is how many of the sender's beacons
    arrived; ``dbr`` is the rate the sender stamped into them.
    """

    n_nodes: int
    recv: np.ndarray
    send: np.ndarray
    count: np.ndarray
    dist: np.ndarray
    dbr: np.ndarray
    own_pending: np.ndarray

    def received_total(self) -> np.ndarray:
        return np.bincount(self.recv, weights=self.count, minlength=self.n_nodes).astype(np.int64)

    def nn_size(self) -> np.ndarray:
        return np.bincount(self.recv, minlength=self.n_nodes).astype(np.int64)

    def queue_for(self, node: int, positions, x_send=None) -> WindowQueue:
        """Expand one node's rows back into a per-beacon :class:`WindowQueue`."""
        pos = np.asarray(positions, dtype=float)
        q = WindowQueue(node, tuple(pos[node]), own_pending=int(self.own_pending[node]))
        for i in np.flatnonzero(self.recv == node):
            j = int(self.send[i])
            for _ in range(int(self.count[i])):
                q.entries.append(Beacon(j, tuple(pos[j]), 0.0, 0, int(self.dbr[i]), 0.0))
        return q


def link_pairs(x, y, road_length: float, reach: float):
    """All unordered node pairs within ``reach`` (periodic along x)."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if 2.0 * reach >= road_length:
        a, b = np.triu_indices(n, k=1)
        a = a.astype(np.int64)
        b = b.astype(np.int64)
    else:
        order = np.argsort(x, kind="stable")
        sa, sb = _kernels.forward_pairs(np.ascontiguousarray(x[order]), float(road_length), float(reach))
        a, b = order[sa], order[sb]
    dx = np.abs(x[a] - x[b])
    dx = np.minimum(dx, road_length - dx)
    d = np.hypot(dx, np.asarray(y, dtype=float)[a] - np.asarray(y, dtype=float)[b])
    keep = d <= reach
    return a[keep], b[keep], d[keep]


def broadcast_batch(x, y, br, dbr, road_length: float, params: RadioParams, rng) -> QueueBatch:
    br = np.asarray(br, dtype=np.int64)
    dbr = np.asarray(dbr, dtype=np.int64)
    n = br.shape[0]
    a, b, d = link_pairs(x, y, road_length, max_reach(params))
    recv = np.concatenate((a, b))
    send = np.concatenate((b, a))
    dist = np.concatenate((d, d))
    order = np.lexsort((send, recv))
    recv, send, dist = recv[order], send[order], dist[order]

    if params.shadowing_sigma_db == 0:
        ok = reception_probability(dist, params) > 0
        recv, send, dist = recv[ok], send[ok], dist[ok]
        count = br[send].copy()
    else:
        count = rng.binomial(br[send], reception_probability(dist, params)).astype(np.int64)
        ok = count > 0
        recv, send, dist, count = recv[ok], send[ok], dist[ok], count[ok]
    return QueueBatch(n, recv, send, count, dist, dbr[send], br.copy())
