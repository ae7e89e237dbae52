"""Chronological event store for user-item interactions.

Nodes are addressed globally: users occupy ids ``[0, n_users)`` and items
``[n_users, n_users + n_items)``. The graph is immutable after
construction and safe for concurrent read-only queries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError


@dataclass
class Interaction:
    """One timestamped user->item event."""

    user_id: int
    item_id: int
    timestamp: float
    edge_features: np.ndarray
    seq_no: int = -1


@dataclass
class NeighborSet:
    """Up to ``epsilon`` past counterparts of a node, most recent first.

    Slots with ``mask == False`` are zero padding.
    """

    node_ids: np.ndarray   # (epsilon,) global node ids
    times: np.ndarray      # (epsilon,)
    features: np.ndarray   # (epsilon, d_e)
    seq_nos: np.ndarray    # (epsilon,)
    mask: np.ndarray       # (epsilon,) bool


@dataclass
class TemporalGraph:
    n_users: int
    n_items: int
    d_e: int
    events: list[Interaction]
    # per global node: neighbor arrays sorted ascending by (timestamp, seq_no)
    adj_ids: list[np.ndarray] = field(repr=False, default_factory=list)
    adj_times: list[np.ndarray] = field(repr=False, default_factory=list)
    adj_seqs: list[np.ndarray] = field(repr=False, default_factory=list)
    adj_feat_rows: list[np.ndarray] = field(repr=False, default_factory=list)
    features: np.ndarray = field(repr=False, default=None)  # (N, d_e), row per event

    @property
    def n_nodes(self) -> int:
        return self.n_users + self.n_items

    def item_node(self, item_id: int) -> int:
        return self.n_users + item_id

    def items_interacted_before(self, user: int, t: float) -> np.ndarray:
        """Distinct item ids the user touched strictly before ``t``."""
        hi = np.searchsorted(self.adj_times[user], t, side="left")
        return np.unique(self.adj_ids[user][:hi] - self.n_users)


def sort_events(events: list[Interaction]) -> list[Interaction]:
    """Stable sort by timestamp (input order breaks ties); reassigns seq_no."""
    ordered = sorted(enumerate(events), key=lambda pair: (pair[1].timestamp, pair[0]))
    out = []
    for seq, (_, ev) in enumerate(ordered):
        ev.seq_no = seq
        out.append(ev)
    return out


def build_graph(events: list[Interaction], n_users: int, n_items: int, d_e: int) -> TemporalGraph:
    """Index a chronological event list into per-node adjacency.

    Every (user, item, t) occurrence is kept, including repeats of the
    same pair at different timestamps.
    """
    if not events:
        raise DataError("cannot build a graph from an empty event list")
    events = sort_events(list(events))
    n_nodes = n_users + n_items
    per_node: list[list[tuple]] = [[] for _ in range(n_nodes)]
    features = np.zeros((len(events), d_e), dtype=np.float64)
    for row, ev in enumerate(events):
        if not (0 <= ev.user_id < n_users):
            raise DataError(f"user id {ev.user_id} out of range [0, {n_users})")
        if not (0 <= ev.item_id < n_items):
            raise DataError(f"item id {ev.item_id} out of range [0, {n_items})")
        if ev.timestamp < 0:
            raise DataError(f"negative timestamp {ev.timestamp} at seq {ev.seq_no}")
        if len(ev.edge_features) != d_e:
            raise DataError(
                f"event at seq {ev.seq_no} has {len(ev.edge_features)} features, expected {d_e}"
            )
        features[row] = ev.edge_features
        item_node = n_users + ev.item_id
        per_node[ev.user_id].append((item_node, ev.timestamp, ev.seq_no, row))
        per_node[item_node].append((ev.user_id, ev.timestamp, ev.seq_no, row))

    graph = TemporalGraph(n_users=n_users, n_items=n_items, d_e=d_e, events=events,
                          features=features)
    for entries in per_node:
        entries.sort(key=lambda e: (e[1], e[2]))
        graph.adj_ids.append(np.array([e[0] for e in entries], dtype=np.int64))
        graph.adj_times.append(np.array([e[1] for e in entries], dtype=np.float64))
        graph.adj_seqs.append(np.array([e[2] for e in entries], dtype=np.int64))
        graph.adj_feat_rows.append(np.array([e[3] for e in entries], dtype=np.int64))
    return graph


def neighbors_before(graph: TemporalGraph, node: int, t: float, epsilon: int,
                     strategy: str = "most_recent",
                     rng: np.random.Generator | None = None) -> NeighborSet:
    """Sample up to ``epsilon`` neighbors with timestamp strictly < ``t``.

    ``most_recent`` takes the latest predecessors (deterministic);
    ``uniform`` samples without replacement using ``rng``. Unknown or
    cold nodes yield an all-masked set.
    """
    ids, times, feats, seqs, mask = neighbors_before_batch(
        graph, np.array([node]), np.array([t]), epsilon, strategy, rng)
    return NeighborSet(node_ids=ids[0], times=times[0], features=feats[0],
                       seq_nos=seqs[0], mask=mask[0])


def neighbors_before_batch(graph: TemporalGraph, nodes: np.ndarray, times: np.ndarray,
                           epsilon: int, strategy: str = "most_recent",
                           rng: np.random.Generator | None = None):
    """Vectorized container variant of :func:`neighbors_before`.

    Returns (ids, times, features, seq_nos, mask) arrays of leading shape
    (len(nodes), epsilon), most recent neighbor first, zero padding on
    masked slots.
    """
    if epsilon < 1:
        raise DataError(f"epsilon must be >= 1, got {epsilon}")
    if strategy not in ("most_recent", "uniform"):
        raise DataError(f"unknown neighbor strategy {strategy!r}")
    if strategy == "uniform" and rng is None:
        raise DataError("uniform neighbor sampling requires an rng")
    b = len(nodes)
    out_ids = np.zeros((b, epsilon), dtype=np.int64)
    out_t = np.zeros((b, epsilon), dtype=np.float64)
    out_f = np.zeros((b, epsilon, graph.d_e), dtype=np.float64)
    out_s = np.zeros((b, epsilon), dtype=np.int64)
    out_m = np.zeros((b, epsilon), dtype=bool)
    for i, (node, t) in enumerate(zip(nodes, times)):
        node = int(node)
        if not (0 <= node < graph.n_nodes):
            continue  # unknown node: cold, all-masked
        hi = int(np.searchsorted(graph.adj_times[node], t, side="left"))
        if hi == 0:
            continue
        if strategy == "most_recent" or hi <= epsilon:
            take = np.arange(max(hi - epsilon, 0), hi)[::-1]
        else:
            take = rng.choice(hi, size=epsilon, replace=False)
            take = np.sort(take)[::-1]
        k = len(take)
        out_ids[i, :k] = graph.adj_ids[node][take]
        out_t[i, :k] = graph.adj_times[node][take]
        out_f[i, :k] = graph.features[graph.adj_feat_rows[node][take]]
        out_s[i, :k] = graph.adj_seqs[node][take]
        out_m[i, :k] = True
    return out_ids, out_t, out_f, out_s, out_m


def chronological_split(events: list[Interaction],
                        ratios: tuple[float, float, float]) -> tuple[list, list, list]:
    """Contiguous prefix/middle/suffix split by seq_no.

    Sizes are floor(N*train), floor(N*val), remainder. A part whose ratio
    is positive must come out non-empty.
    """
    r_train, r_val, r_test = ratios
    if r_train <= 0 or r_val < 0 or r_test < 0:
        raise DataError(f"invalid split ratios {ratios}")
    if abs(r_train + r_val + r_test - 1.0) > 1e-9:
        raise DataError(f"split ratios {ratios} do not sum to 1")
    n = len(events)
    n_train = math.floor(n * r_train)
    n_val = math.floor(n * r_val)
    n_test = n - n_train - n_val
    for size, ratio, name in ((n_train, r_train, "train"), (n_val, r_val, "val"),
                              (n_test, r_test, "test")):
        if ratio > 0 and size == 0:
            raise DataError(f"{name} part is empty for {n} events at ratios {ratios}")
    return (events[:n_train], events[n_train : n_train + n_val], events[n_train + n_val :])


def truncate_latest(events: list[Interaction], proportion: float) -> list[Interaction]:
    """Keep the latest ceil(p*N) events by seq_no."""
    if not (0.0 < proportion <= 1.0):
        raise DataError(f"proportion must be in (0, 1], got {proportion}")
    keep = math.ceil(proportion * len(events))
    return events[len(events) - keep :]
