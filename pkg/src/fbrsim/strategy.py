"""Beacon-rate congestion control strategies.

Swarm FREDY runs three cooperating parts on every node:

* SQMC counts distinct senders in the window queue, derives the node's own
  desired rate (DBR) from the usable capacity ``omega`` and casts one vote
  for it;
* SIEC reads the DBRs stamped into received beacons and votes for them,
  filtered by the distance discriminant (authorities always count, voters
  count with a probability falling linearly to zero at ``d2``, exiles never);
* BRAC adopts the most voted rate when the window closes.

Swarm DIFRA here is a reconstruction of the deterministic baseline: the
same fair-share computation as SQMC over all senders, adopted directly.

The scalar functions operate on one node's :class:`~fbrsim.radio.WindowQueue`
and are the reference; the ``*Policy`` classes apply the same rules to a
whole :class:`~fbrsim.radio.QueueBatch` at once.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .domain import (
    BeaconRateSet, BRBuffer, ChannelParams, Difra, Fixed, Fredy, SdidiParams, StrategyKind,
)
from .radio import QueueBatch, WindowQueue, road_distance

# guards floor() against alpha * max_q landing a hair below an integer
_FLOOR_EPS = 1e-9


class Category(enum.Enum):
    AUTHORITY = "authority"
    VOTER = "voter"
    EXILE = "exile"


@dataclass(frozen=True)
class NeighborObservation:
    sender_id: int
    distance: float
    dbr: int


def estimate_neighborhood(queue: WindowQueue, road_length: float | None = None):
    """Distinct senders in the queue, plus one observation per beacon."""
    senders = {b.sender_id for b in queue.entries}
    obs = [
        NeighborObservation(b.sender_id, road_distance(b.position, queue.position, road_length), b.dbr)
        for b in queue.entries
    ]
    return len(senders), obs


def compute_tdbr(omega: float, nn_size: int) -> int:
    return int(math.floor(omega / (nn_size + 1) + _FLOOR_EPS))


def clamp_dbr(tdbr: int, rates: BeaconRateSet) -> int:
    if tdbr < rates.br_min:
        return rates.br_min
    if tdbr > rates.br_max:
        return rates.br_max
    # largest member not above tdbr (identity for contiguous rate sets)
    return max(r for r in rates.rates if r <= tdbr)


def sdidi_classify(distance: float, params: SdidiParams) -> Category:
    if distance < params.d1:
        return Category.AUTHORITY
    if distance > params.d2:
        return Category.EXILE
    return Category.VOTER


def voter_probability(distance, params: SdidiParams):
    return (params.d2 - np.asarray(distance, dtype=float)) / (params.d2 - params.d1)


def sdidi_accept(category: Category, distance: float, params: SdidiParams, rng) -> bool:
    if category is Category.AUTHORITY:
        return True
    if category is Category.EXILE:
        return False
    return bool(rng.random() < voter_probability(distance, params))


def siec_process(buffer: BRBuffer, obs: NeighborObservation, params: SdidiParams, rng) -> BRBuffer:
    cat = sdidi_classify(obs.distance, params)
    if sdidi_accept(cat, obs.distance, params, rng):
        buffer.add(obs.dbr)
    return buffer


def sqmc_process(buffer: BRBuffer, queue: WindowQueue, channel: ChannelParams,
                 rates: BeaconRateSet):
    nn_size, _ = estimate_neighborhood(queue)
    own_dbr = clamp_dbr(compute_tdbr(channel.omega, nn_size), rates)
    buffer.add(own_dbr)
    return buffer, own_dbr


def brac_decide(buffer: BRBuffer, current_br: int, rates: BeaconRateSet) -> int:
    """Most requested rate; ties go to the largest rate, no votes hold."""
    counts = buffer.counts
    if counts.sum() == 0:
        nxt = current_br
    else:
        best = counts.max()
        nxt = max(r for r, c in zip(rates.rates, counts) if c == best)
    buffer.clear()
    return nxt


def difra_decide(queue: WindowQueue, channel: ChannelParams, rates: BeaconRateSet) -> int:
    nn_size, _ = estimate_neighborhood(queue)
    return clamp_dbr(compute_tdbr(channel.omega, nn_size), rates)


def fredy_node_window(buffer: BRBuffer, queue: WindowQueue, current_br: int,
                      params: SdidiParams, channel: ChannelParams, rates: BeaconRateSet,
                      rng, road_length: float | None = None, dedup_senders: bool = False):
    """One full window of Swarm FREDY on a single node: ``(next_br, own_dbr)``."""
    buffer, own_dbr = sqmc_process(buffer, queue, channel, rates)
    _, obs = estimate_neighborhood(queue, road_length)
    seen = set()
    for o in obs:
        if dedup_senders:
            if o.sender_id in seen:
                continue
            seen.add(o.sender_id)
        siec_process(buffer, o, params, rng)
    return brac_decide(buffer, current_br, rates), own_dbr


# --------------------------------------------------------------------------
# batched policies

def clamp_dbr_array(tdbr: np.ndarray, rates: BeaconRateSet) -> np.ndarray:
    arr = rates.as_array()
    t = np.clip(tdbr, arr[0], arr[-1])
    return arr[np.searchsorted(arr, t, side="right") - 1]


def own_dbr_array(nn_size: np.ndarray, channel: ChannelParams, rates: BeaconRateSet) -> np.ndarray:
    tdbr = np.floor(channel.omega / (nn_size + 1) + _FLOOR_EPS).astype(np.int64)
    return clamp_dbr_array(tdbr, rates)


def brac_array(votes: np.ndarray, current_br: np.ndarray, rates: BeaconRateSet) -> np.ndarray:
    k = votes.shape[1]
    idx = k - 1 - np.argmax(votes[:, ::-1], axis=1)
    nxt = rates.as_array()[idx]
    return np.where(votes.sum(axis=1) > 0, nxt, current_br)


class FredyPolicy:
    def __init__(self, params: SdidiParams, channel: ChannelParams, rates: BeaconRateSet,
                 dedup_senders: bool = False):
        self.params = params
        self.channel = channel
        self.rates = rates
        self.dedup_senders = dedup_senders

    def votes(self, batch: QueueBatch, rng) -> tuple[np.ndarray, np.ndarray]:
        """BRBuffer of every node at the end of the window, and the SQMC DBRs."""
        rates = self.rates
        n, k = batch.n_nodes, rates.k
        own = own_dbr_array(batch.nn_size(), self.channel, rates)

        count = np.minimum(batch.count, 1) if self.dedup_senders else batch.count
        d1, d2 = self.params.d1, self.params.d2
        accepted = np.where(batch.dist < d1, count, 0)
        voter = (batch.dist >= d1) & (batch.dist <= d2)
        if voter.any():
            p = np.clip(voter_probability(batch.dist[voter], self.params), 0.0, 1.0)
            accepted[voter] = rng.binomial(count[voter], p)

        cols = np.searchsorted(rates.as_array(), batch.dbr)
        votes = _kernels.tally(batch.recv, cols, accepted, n, k)
        votes[np.arange(n), np.searchsorted(rates.as_array(), own)] += 1
        return votes, own

    def decide(self, batch: QueueBatch, current_br: np.ndarray, rng):
        votes, own = self.votes(batch, rng)
        return brac_array(votes, current_br, self.rates), own


class DifraPolicy:
    def __init__(self, channel: ChannelParams, rates: BeaconRateSet):
        self.channel = channel
        self.rates = rates

    def decide(self, batch: QueueBatch, current_br: np.ndarray, rng):
        own = own_dbr_array(batch.nn_size(), self.channel, self.rates)
        return own, own


class FixedPolicy:
    def __init__(self, rate: int):
        self.rate = rate

    def decide(self, batch: QueueBatch, current_br: np.ndarray, rng):
        out = np.full(batch.n_nodes, self.rate, dtype=np.int64)
        return out, out.copy()


def make_policy(kind: StrategyKind, channel: ChannelParams, rates: BeaconRateSet,
                dedup_senders: bool = False):
    if isinstance(kind, Fredy):
        return FredyPolicy(kind.sdidi, channel, rates, dedup_senders)
    if isinstance(kind, Difra):
        return DifraPolicy(channel, rates)
    if isinstance(kind, Fixed):
        return FixedPolicy(kind.rate)
    raise TypeError(f"unknown strategy {kind!r}")
