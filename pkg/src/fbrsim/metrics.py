"""Evaluation metrics: channel occupancy, network balance, rate, stability.

Metrics are taken by an omniscient observer: the balance statistic uses the
true rates of a node's neighbours, while the strategies only ever see their
own queues.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .domain import ChannelParams
from .radio import QueueBatch, WindowQueue


class UndefinedBalance(ValueError):
    """Balance needs at least one neighbour."""


@dataclass(frozen=True)
class MetricsRecord:
    node_id: int
    window_index: int
    eta: float
    sigma: float | None
    br: int
    adapted: bool
    overflow: bool


def channel_occupancy(queue: WindowQueue, channel: ChannelParams) -> float:
    """Queue fill in percent; above 100 under overload, never clamped."""
    return (len(queue.entries) + queue.own_pending) / channel.max_q * 100.0


def network_balance(own_br: float, neighbor_brs, textbook: bool = False) -> float:
    """Spread of rates over a node and its neighbours.

    The default is the variance-to-mean form: squared deviations of the node
    and its ``n`` neighbours, divided by ``n`` and by the neighbourhood mean.
    ``textbook=True`` gives population standard deviation over mean instead.
    """
    nb = [float(r) for r in neighbor_brs]
    if not nb:
        raise UndefinedBalance("node has no neighbours")
    n = len(nb)
    mean = (sum(nb) + own_br) / (n + 1)
    dev = sum((r - mean) ** 2 for r in nb) + (own_br - mean) ** 2
    if textbook:
        return math.sqrt(dev / (n + 1)) / mean
    return dev / n / mean


def neighbor_rates_view(queue: WindowQueue) -> list[int]:
    """Observed rate of each sender: how many of its beacons arrived."""
    counts: dict[int, int] = {}
    for b in queue.entries:
        counts[b.sender_id] = counts.get(b.sender_id, 0) + 1
    return [counts[s] for s in sorted(counts)]


# --------------------------------------------------------------------------
# batched per-window metrics

def window_metrics(batch: QueueBatch, true_br: np.ndarray, channel: ChannelParams,
                   textbook: bool = False):
    """``(eta, sigma, overflow)`` for every node; sigma is NaN without neighbours."""
    n = batch.n_nodes
    br = np.asarray(true_br, dtype=np.int64)
    load = batch.received_total() + batch.own_pending
    eta = load / channel.max_q * 100.0
    overflow = load > channel.max_q

    nn = batch.nn_size()
    nb = br[batch.send]
    s1 = np.bincount(batch.recv, weights=nb, minlength=n).astype(np.int64) + br
    s2 = np.bincount(batch.recv, weights=nb * nb, minlength=n).astype(np.int64) + br * br
    m = nn + 1
    # exact integer numerator: m * sum(x^2) - (sum x)^2 = m^2 * (sum of squared deviations)
    num = m * s2 - s1 * s1
    with np.errstate(divide="ignore", invalid="ignore"):
        dev = num / m
        mean = s1 / m
        if textbook:
            sigma = np.sqrt(dev / m) / mean
        else:
            sigma = dev / nn / mean
    sigma = np.where(nn > 0, sigma, np.nan)
    return eta, sigma, overflow


# --------------------------------------------------------------------------
# per-replication records and aggregation

RECORD_FIELDS = ("node", "window", "eta", "sigma", "br", "adapted", "overflow")


@dataclass
class RecordTable:
    """Column store of :class:`MetricsRecord` rows."""

    node: np.ndarray
    window: np.ndarray
    eta: np.ndarray
    sigma: np.ndarray
    br: np.ndarray
    adapted: np.ndarray
    overflow: np.ndarray

    @classmethod
    def from_records(cls, records) -> "RecordTable":
        recs = list(records)
        return cls(
            node=np.array([r.node_id for r in recs], dtype=np.int64),
            window=np.array([r.window_index for r in recs], dtype=np.int64),
            eta=np.array([r.eta for r in recs], dtype=float),
            sigma=np.array([np.nan if r.sigma is None else r.sigma for r in recs], dtype=float),
            br=np.array([r.br for r in recs], dtype=np.int64),
            adapted=np.array([r.adapted for r in recs], dtype=bool),
            overflow=np.array([r.overflow for r in recs], dtype=bool),
        )

    @classmethod
    def concat(cls, tables) -> "RecordTable":
        tables = list(tables)
        return cls(*(np.concatenate([getattr(t, f) for t in tables]) for f in RECORD_FIELDS))

    def __len__(self) -> int:
        return self.node.shape[0]


def count_adaptations(br_series) -> int:
    br = np.asarray(br_series)
    return int(np.count_nonzero(br[1:] != br[:-1]))


def _per_node_mean(node: np.ndarray, values: np.ndarray) -> np.ndarray:
    ok = ~np.isnan(values)
    nodes, inv = np.unique(node[ok], return_inverse=True)
    sums = np.bincount(inv, weights=values[ok])
    cnt = np.bincount(inv)
    return sums / cnt


@dataclass(frozen=True)
class ReplicationSummary:
    median_br: float
    median_eta: float
    median_sigma: float
    mean_br: float
    mean_eta: float
    mean_sigma: float
    q1_br: float
    q3_br: float
    adaptations: int
    overflow_events: int
    node_windows: int


def aggregate_replication(records) -> ReplicationSummary:
    """Per-node time means first, then median/mean/quartiles across nodes.

    Adaptations are counted from the rate series itself: one per window
    boundary where a node's rate differs from the previous window.
    """
    t = records if isinstance(records, RecordTable) else RecordTable.from_records(records)
    if len(t) == 0:
        raise ValueError("need at least one record")
    order = np.lexsort((t.window, t.node))
    node, br = t.node[order], t.br[order]
    same_node = node[1:] == node[:-1]
    adaptations = int(np.count_nonzero(same_node & (br[1:] != br[:-1])))

    br_means = _per_node_mean(t.node, t.br.astype(float))
    eta_means = _per_node_mean(t.node, t.eta)
    sig_means = _per_node_mean(t.node, t.sigma)

    def med(a):
        return float(np.median(a)) if a.size else math.nan

    def mean(a):
        return float(np.mean(a)) if a.size else math.nan

    return ReplicationSummary(
        median_br=med(br_means),
        median_eta=med(eta_means),
        median_sigma=med(sig_means),
        mean_br=mean(br_means),
        mean_eta=mean(eta_means),
        mean_sigma=mean(sig_means),
        q1_br=float(np.percentile(br_means, 25)),
        q3_br=float(np.percentile(br_means, 75)),
        adaptations=adaptations,
        overflow_events=int(np.count_nonzero(t.overflow)),
        node_windows=len(t),
    )
