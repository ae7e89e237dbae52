"""Scoring, pairwise ranking loss, and the chronological training loop.

Training protocol per batch: sample one negative item per positive,
score positives and negatives against the pre-batch memory (never the
batch's own events), take one optimizer step on the pairwise loss, then
advance the memory with the batch's positive events. Memory is reset and
replayed from zero at the start of every epoch.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .attention import AttentionLayerParams, embed_nodes
from .config import TrainConfig, config_hash, substream
from .errors import CausalityError, CheckpointError, DataError, NumericError
from .graph import Interaction, TemporalGraph
from .initializers import xavier_uniform
from .memory import GruParams, Memory, gru_cell
from .optim import Adam
from .time_enc import make_time_encoder

CHECKPOINT_VERSION = 1
CHECKPOINT_MAGIC = "chronorec-checkpoint"


@dataclass
class PredictorParams:
    """Two-layer FFN mapping a concatenated (user, item) pair to a scalar."""

    w1: Tensor  # (2d, d)
    b1: Tensor  # (d,)
    w2: Tensor  # (d, 1)
    b2: Tensor  # (1,)

    @classmethod
    def create(cls, d: int, rng: np.random.Generator) -> "PredictorParams":
        return cls(w1=ag.parameter(xavier_uniform(rng, 2 * d, d), name="predictor.w1"),
                   b1=ag.parameter(np.zeros(d), name="predictor.b1"),
                   w2=ag.parameter(xavier_uniform(rng, d, 1), name="predictor.w2"),
                   b2=ag.parameter(np.zeros(1), name="predictor.b2"))

    def params(self) -> dict[str, Tensor]:
        return {t.name: t for t in (self.w1, self.b1, self.w2, self.b2)}


def bpr_loss(pos_scores, neg_scores, long_table: Tensor, l2: float) -> Tensor:
    """sum of -ln sigmoid(pos - neg) plus l2 * squared Frobenius norm of the
    long-term table. Strictly positive unless l2 == 0 and every pair is
    infinitely separated."""
    pos_scores, neg_scores = ag.as_tensor(pos_scores), ag.as_tensor(neg_scores)
    if pos_scores.shape != neg_scores.shape:
        raise DataError(f"score lists differ in length: {pos_scores.shape} vs {neg_scores.shape}")
    pair_losses = ag.softplus(ag.mul(pos_scores - neg_scores, -1.0))
    loss = ag.tsum(pair_losses)
    if l2:
        loss = ag.add(loss, ag.mul(ag.tsum(ag.mul(long_table, long_table)), l2))
    return loss


def sample_negative(graph: TemporalGraph, user: int, t: float, pos_item: int,
                    rng: np.random.Generator) -> int:
    """Uniform draw over items the user has not touched strictly before ``t``
    and that differ from the positive."""
    seen = set(graph.items_interacted_before(user, t).tolist())
    seen.add(pos_item)
    n_items = graph.n_items
    free = n_items - len(seen)
    if free <= 0:
        raise DataError(f"user {user} has no eligible negative item before t={t}")
    if free > n_items // 4:
        while True:  # rejection sampling stays cheap while >25% of items are eligible
            cand = int(rng.integers(n_items))
            if cand not in seen:
                return cand
    eligible = np.setdiff1d(np.arange(n_items), np.fromiter(seen, dtype=np.int64))
    return int(eligible[rng.integers(len(eligible))])


class Recommender:
    """All trainable state plus the scoring entry points."""

    def __init__(self, n_users: int, n_items: int, d_e: int, config: TrainConfig):
        config.validate()
        self.config = config
        self.n_users = n_users
        self.n_items = n_items
        self.d_e = d_e
        rng = substream(config.seed, "init")
        n_nodes = n_users + n_items
        d, d_t = config.d, config.d_t
        self.long_table = ag.parameter(xavier_uniform(rng, n_nodes, d), name="long_table")
        self.encoder = make_time_encoder(config.time_variant, d_t, config.epsilon, rng)
        self.gru = GruParams.create(2 * d + d_e + d_t, d, rng)
        self.layers = [AttentionLayerParams.create(d, d_t, d_e, i, rng)
                       for i in range(config.layers)]
        self.predictor = PredictorParams.create(d, rng)
        self.memory = Memory(n_nodes, d)

    def parameters(self) -> dict[str, Tensor]:
        out = {"long_table": self.long_table}
        out.update(self.encoder.params())
        out.update(self.gru.params())
        for layer in self.layers:
            out.update(layer.params())
        out.update(self.predictor.params())
        return out

    def reset_memory(self) -> None:
        self.memory.reset()

    def advance_memory(self, batch: list[Interaction]) -> None:
        """Feed a chronological batch of real events into the memory."""
        if self.config.use_short_term:
            self.memory.advance(batch, self.gru, self.encoder, self.n_users,
                                self.config.aggregation)

    # -- scoring ---------------------------------------------------------

    def _embed(self, graph, nodes, times, rng=None) -> Tensor:
        return embed_nodes(graph, self.memory, self.long_table, self.layers,
                           self.encoder, nodes, times, self.config.epsilon,
                           self.config.heads,
                           use_short_term=self.config.use_short_term,
                           attention_mode=self.config.attention,
                           activation=self.config.activation,
                           neighbor_strategy=self.config.neighbor_strategy,
                           rng=rng)

    def _predict(self, h_users: Tensor, h_items: Tensor) -> Tensor:
        x = ag.concat([h_users, h_items], axis=-1)
        p = self.predictor
        hidden = ag.softplus(ag.add(ag.matmul(x, p.w1), p.b1))
        return ag.reshape(ag.add(ag.matmul(hidden, p.w2), p.b2), (x.shape[0],))

    def score_pairs(self, graph, users, items, times, rng=None) -> Tensor:
        """Affinity scores for aligned (user, item, t) triples; shape (B,)."""
        users = np.asarray(users, dtype=np.int64)
        item_nodes = np.asarray(items, dtype=np.int64) + self.n_users
        times = np.asarray(times, dtype=np.float64)
        h_u = self._embed(graph, users, times, rng)
        h_i = self._embed(graph, item_nodes, times, rng)
        return self._predict(h_u, h_i)

    def score(self, graph, user: int, item: int, t: float, rng=None) -> float:
        return float(self.score_pairs(graph, [user], [item], [t], rng).data[0])

    def score_candidates(self, graph, user: int, items, t: float, rng=None) -> np.ndarray:
        """Scores of one user against many candidate items at one time."""
        items = np.asarray(items, dtype=np.int64)
        h_u = self._embed(graph, np.array([user]), np.array([t]), rng)
        h_i = self._embed(graph, items + self.n_users, np.full(len(items), t), rng)
        h_u_rep = ag.gather_rows(h_u, np.zeros(len(items), dtype=np.int64))
        return self._predict(h_u_rep, h_i).data

    # -- training ---------------------------------------------------------

    def fit(self, graph: TemporalGraph, train_events: list[Interaction],
            progress=None) -> list[dict]:
        """Run the chronological loop; returns per-epoch stats dicts."""
        cfg = self.config
        if not train_events:
            raise DataError("empty training set")
        optimizer = Adam(self.parameters(), lr=cfg.lr)
        self._optimizer = optimizer
        neg_rng = substream(cfg.seed, "train.negatives")
        sample_rng = substream(cfg.seed, "train.sampling")
        batches = [train_events[i : i + cfg.batch_size]
                   for i in range(0, len(train_events), cfg.batch_size)]
        stats = []
        for epoch in range(cfg.epochs):
            tic = time.perf_counter()
            self.reset_memory()
            total, n_pairs = 0.0, 0
            for batch in batches:
                loss_val, pairs = self._train_batch(graph, batch, optimizer,
                                                    neg_rng, sample_rng)
                total += loss_val
                n_pairs += pairs
            row = {"epoch": epoch, "mean_loss": total / len(batches),
                   "pairs": n_pairs, "seconds": time.perf_counter() - tic}
            stats.append(row)
            if progress:
                progress(row)
        return stats

    def _train_batch(self, graph, batch, optimizer, neg_rng, sample_rng):
        cfg = self.config
        users = np.array([e.user_id for e in batch], dtype=np.int64)
        pos_items = np.array([e.item_id for e in batch], dtype=np.int64)
        times = np.array([e.timestamp for e in batch])
        if cfg.use_short_term:
            self._assert_causal(batch, users, pos_items, times)
        neg_items = np.array([
            sample_negative(graph, int(u), float(t), int(i), neg_rng)
            for u, i, t in zip(users, pos_items, times)
        ], dtype=np.int64)

        pos_scores = self.score_pairs(graph, users, pos_items, times, sample_rng)
        neg_scores = self.score_pairs(graph, users, neg_items, times, sample_rng)
        loss = bpr_loss(pos_scores, neg_scores, self.long_table, cfg.l2)
        loss_val = float(loss.data)
        if not np.isfinite(loss_val):
            raise NumericError(f"non-finite training loss {loss_val}")
        optimizer.zero_grad()
        ag.backward(loss)
        optimizer.step()
        self.advance_memory(batch)
        return loss_val, len(batch)

    def _assert_causal(self, batch, users, pos_items, times):
        """Memory used for scoring must predate the whole batch."""
        touched = np.concatenate([users, pos_items + self.n_users])
        latest = self.memory.last_update[touched]
        batch_min = times.min()
        if np.any(latest >= batch_min):
            node = int(touched[np.argmax(latest >= batch_min)])
            raise CausalityError(
                f"node {node} memory (t={self.memory.last_update[node]}) is not strictly "
                f"older than batch start t={batch_min}")


def save_checkpoint(path, model: Recommender, optimizer: Adam | None = None) -> None:
    """Single-file npz: versioned header, config, parameters, optimizer
    moments, memory snapshot."""
    header = {
        "magic": CHECKPOINT_MAGIC,
        "version": CHECKPOINT_VERSION,
        "config": model.config.to_dict(),
        "config_hash": config_hash(model.config),
        "n_users": model.n_users,
        "n_items": model.n_items,
        "d_e": model.d_e,
    }
    arrays = {f"param.{k}": p.data for k, p in model.parameters().items()}
    arrays["memory.states"] = model.memory.states.data
    arrays["memory.last_update"] = model.memory.last_update
    arrays["memory.last_seq"] = model.memory.last_seq
    if optimizer is not None:
        arrays.update(optimizer.state_arrays())
    arrays["header"] = np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)
    np.savez(path, **arrays)


def load_checkpoint(path) -> Recommender:
    try:
        with np.load(path) as npz:
            arrays = {k: npz[k] for k in npz.files}
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"unreadable checkpoint {path}: {exc}") from None
    if "header" not in arrays:
        raise CheckpointError(f"{path} has no checkpoint header")
    try:
        header = json.loads(bytes(arrays["header"].tobytes()).decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path} has a corrupt header: {exc}") from None
    if header.get("magic") != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint (bad magic)")
    if header.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path} is version {header.get('version')}, expected {CHECKPOINT_VERSION}")

    cfg = TrainConfig.from_dict(header["config"])
    model = Recommender(header["n_users"], header["n_items"], header["d_e"], cfg)
    for name, tensor in model.parameters().items():
        key = f"param.{name}"
        if key not in arrays:
            raise CheckpointError(f"{path} is missing tensor {name}")
        if arrays[key].shape != tensor.data.shape:
            raise CheckpointError(f"{path}: tensor {name} has shape {arrays[key].shape}, "
                                  f"expected {tensor.data.shape}")
        tensor.data = np.array(arrays[key], dtype=np.float64)
    model.memory.states = Tensor(np.array(arrays["memory.states"], dtype=np.float64))
    model.memory.last_update = np.array(arrays["memory.last_update"], dtype=np.float64)
    model.memory.last_seq = np.array(arrays["memory.last_seq"], dtype=np.int64)
    if "adam.t" in arrays:
        optimizer = Adam(model.parameters(), lr=cfg.lr)
        optimizer.load_state_arrays(arrays)
        model._optimizer = optimizer
    return model
