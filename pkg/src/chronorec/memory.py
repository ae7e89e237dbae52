"""Per-node short-term state maintained over the event stream.

Each node carries a compressed summary of its interaction history,
updated in three stages whenever it interacts: build a raw message per
event (own state, counterpart state, edge features, elapsed-time
encoding), aggregate the node's messages within the batch (last-event or
mean), and fold the aggregate into the state with a GRU cell.

States are zero-initialized and, because every update is a convex
combination of the previous state and a tanh candidate, stay strictly
inside (-1, 1) forever.

Gradient discipline: states entering an advance are treated as
constants; the message/aggregate/GRU computation of the advance itself
is recorded on the tape, so a subsequent loss differentiates exactly one
update step back (single-writer, chronological order required).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .errors import DataError
from .graph import Interaction
from .initializers import xavier_uniform


@dataclass
class Message:
    """Raw update payload for one recipient node from one event."""

    payload: np.ndarray   # length 2d + d_e + d_t
    source_time: float
    seq_no: int


@dataclass
class GruParams:
    """Gate weights; matrices stored input-major so x @ W applies them."""

    wz: Tensor
    uz: Tensor
    bz: Tensor
    wr: Tensor
    ur: Tensor
    br: Tensor
    wh: Tensor
    uh: Tensor
    bh: Tensor

    @classmethod
    def create(cls, input_dim: int, d: int, rng: np.random.Generator) -> "GruParams":
        def w(name, rows, cols):
            return ag.parameter(xavier_uniform(rng, rows, cols), name=f"gru.{name}")

        def b(name):
            return ag.parameter(np.zeros(d), name=f"gru.{name}")

        return cls(wz=w("wz", input_dim, d), uz=w("uz", d, d), bz=b("bz"),
                   wr=w("wr", input_dim, d), ur=w("ur", d, d), br=b("br"),
                   wh=w("wh", input_dim, d), uh=w("uh", d, d), bh=b("bh"))

    def params(self) -> dict[str, Tensor]:
        return {t.name: t for t in (self.wz, self.uz, self.bz, self.wr, self.ur,
                                    self.br, self.wh, self.uh, self.bh)}


def gru_cell(p: GruParams, x, h) -> Tensor:
    """z = sig(Wz x + Uz h + bz); r likewise; cand = tanh(Wh x + Uh (r*h) + bh);
    out = (1 - z) * h + z * cand."""
    x, h = ag.as_tensor(x), ag.as_tensor(h)
    if x.shape[-1] != p.wz.shape[0] or h.shape[-1] != p.uz.shape[0]:
        raise DataError(f"gru shapes mismatch: x {x.shape}, h {h.shape}, "
                        f"Wz {p.wz.shape}, Uz {p.uz.shape}")
    z = ag.sigmoid(ag.matmul(x, p.wz) + ag.matmul(h, p.uz) + p.bz)
    r = ag.sigmoid(ag.matmul(x, p.wr) + ag.matmul(h, p.ur) + p.br)
    cand = ag.tanh(ag.matmul(x, p.wh) + ag.matmul(ag.mul(r, h), p.uh) + p.bh)
    return ag.add(ag.mul(1.0 - z, h), ag.mul(z, cand))


def gru_update(p: GruParams, message: Message, prev: np.ndarray) -> np.ndarray:
    """Single-node update of the contract: message payload in, new state out."""
    return gru_cell(p, message.payload[None, :], np.asarray(prev)[None, :]).data[0]


def aggregate_messages(messages: list[Message], mode: str = "last") -> Message:
    """Collapse one node's batch messages: keep the latest, or average payloads."""
    if not messages:
        raise DataError("cannot aggregate an empty message list")
    latest = max(messages, key=lambda m: (m.source_time, m.seq_no))
    if mode == "last":
        return latest
    if mode == "mean":
        payload = np.mean([m.payload for m in messages], axis=0)
        return Message(payload=payload, source_time=latest.source_time, seq_no=latest.seq_no)
    raise DataError(f"unknown aggregation mode {mode!r}")


def long_term(table: Tensor, node: int) -> np.ndarray:
    """Row lookup in the long-term embedding table."""
    n = table.shape[0]
    if not (0 <= node < n):
        raise DataError(f"node {node} out of range [0, {n})")
    return table.data[node]


class Memory:
    """Short-term states plus per-node last-update bookkeeping.

    Single-writer: :meth:`advance` must be called from one logical thread
    in chronological (timestamp, seq_no) order. Snapshots may be read
    concurrently between updates.
    """

    def __init__(self, n_nodes: int, d: int):
        self.n_nodes = n_nodes
        self.d = d
        self.states = Tensor(np.zeros((n_nodes, d)))
        self.last_update = np.full(n_nodes, -np.inf)
        self.last_seq = np.full(n_nodes, -1, dtype=np.int64)

    def reset(self) -> None:
        self.states = Tensor(np.zeros((self.n_nodes, self.d)))
        self.last_update.fill(-np.inf)
        self.last_seq.fill(-1)

    def state_values(self) -> np.ndarray:
        return self.states.data

    def message_delta(self, node: int, t: float) -> float:
        """Elapsed time since the node's last update; 0 for fresh nodes."""
        last = self.last_update[node]
        return 0.0 if np.isneginf(last) else t - last

    def build_message(self, encoder, recipient: int, counterpart: int, t_event: float,
                      edge_features: np.ndarray) -> Message:
        """Raw payload [s_recipient || s_counterpart || features || time enc]."""
        for node in (recipient, counterpart):
            if not (0 <= node < self.n_nodes):
                raise DataError(f"node {node} out of range [0, {self.n_nodes})")
        if encoder.variant == "position":
            enc = encoder.encode_rank(np.zeros(1, dtype=np.int64)).data[0]
        else:
            enc = encoder.encode_delta(self.message_delta(recipient, t_event)).data
        payload = np.concatenate([
            self.states.data[recipient],
            self.states.data[counterpart],
            np.asarray(edge_features, dtype=np.float64),
            enc,
        ])
        return Message(payload=payload, source_time=t_event, seq_no=-1)

    def advance(self, batch: list[Interaction], gru: GruParams, encoder,
                n_users: int, aggregation: str = "last") -> None:
        """Consume a chronological batch: one GRU application per touched node.

        Both endpoints of every event receive a message. Requires every
        event to be strictly later (in (t, seq_no) order) than the
        recipient's previous update and the batch itself to be sorted.
        """
        if not batch:
            return
        times = np.array([e.timestamp for e in batch])
        seqs = np.array([e.seq_no for e in batch], dtype=np.int64)
        order = np.lexsort((seqs, times))
        if not np.array_equal(order, np.arange(len(batch))):
            raise DataError("advance requires a chronologically sorted batch")

        users = np.array([e.user_id for e in batch], dtype=np.int64)
        item_nodes = np.array([n_users + e.item_id for e in batch], dtype=np.int64)
        feats = np.stack([e.edge_features for e in batch]) if len(batch[0].edge_features) \
            else np.zeros((len(batch), 0))

        recipients = np.concatenate([users, item_nodes])
        counterparts = np.concatenate([item_nodes, users])
        msg_times = np.concatenate([times, times])
        msg_seqs = np.concatenate([seqs, seqs])
        msg_feats = np.concatenate([feats, feats], axis=0)

        prev_t = self.last_update[recipients]
        prev_s = self.last_seq[recipients]
        stale = (msg_times < prev_t) | ((msg_times == prev_t) & (msg_seqs <= prev_s))
        if np.any(stale):
            bad = recipients[stale][0]
            raise DataError(f"batch event at t={msg_times[stale][0]} is not strictly later "
                            f"than node {bad}'s last update at t={prev_t[stale][0]}")

        deltas = np.where(np.isneginf(prev_t), 0.0, msg_times - prev_t)
        if encoder.variant == "position":
            enc = encoder.encode_rank(np.zeros(len(recipients), dtype=np.int64))
        else:
            enc = encoder.encode_delta(deltas)
        # states entering the batch are constants (.data); the advance itself is taped
        payload = ag.concat([
            Tensor(self.states.data[recipients]),
            Tensor(self.states.data[counterparts]),
            Tensor(msg_feats),
            enc,
        ], axis=-1)

        touched, inv = np.unique(recipients, return_inverse=True)
        by_group = np.lexsort((msg_seqs, inv))
        last_pos = np.searchsorted(inv[by_group], np.arange(len(touched)), side="right") - 1
        last_idx = by_group[last_pos]
        if aggregation == "last":
            agg = ag.gather_rows(payload, last_idx)
        elif aggregation == "mean":
            weights = np.zeros((len(touched), len(recipients)))
            counts = np.bincount(inv, minlength=len(touched))
            weights[inv, np.arange(len(recipients))] = 1.0 / counts[inv]
            agg = ag.matmul(Tensor(weights), payload)
        else:
            raise DataError(f"unknown aggregation mode {aggregation!r}")

        new_states = gru_cell(gru, agg, Tensor(self.states.data[touched]))
        self.states = ag.scatter_rows(Tensor(self.states.data), touched, new_states)
        self.last_update[touched] = msg_times[last_idx]
        self.last_seq[touched] = msg_seqs[last_idx]

    def dump_csv(self, path) -> None:
        """Snapshot rows: node_id, last_update, then d state floats."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            for node in range(self.n_nodes):
                writer.writerow([node, repr(float(self.last_update[node]))]
                                + [repr(float(x)) for x in self.states.data[node]])

    def load_csv(self, path) -> None:
        with open(path, "r") as fh:
            for row in csv.reader(fh):
                node = int(row[0])
                self.last_update[node] = float(row[1])
                self.states.data[node] = [float(x) for x in row[2 : 2 + self.d]]
