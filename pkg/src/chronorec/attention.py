"""Time-aware attention layers over sampled neighborhoods.

A node's representation at a query time is built recursively: the level-0
input is the sum of its long-term embedding and current short-term state;
each further level concatenates a time encoding (and, for neighbors, edge
features) onto the previous level's output, pools the neighbors with
masked scaled dot-product attention, and feeds [pooled || center] through
a small FFN. Everything is pure with respect to the (graph, memory,
parameter) snapshots, so embeddings for different nodes can be computed
concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .errors import ConfigError, DataError
from .graph import TemporalGraph, neighbors_before_batch
from .initializers import xavier_uniform
from .memory import Memory

ACTIVATIONS = {"softplus": ag.softplus, "relu": ag.relu, "tanh": ag.tanh}


@dataclass
class AttentionLayerParams:
    """One layer's projections plus its combiner FFN.

    Matrices are stored input-major; per-head projections are the column
    blocks of wq/wk/wv (head h owns columns [h*d/heads, (h+1)*d/heads)).
    """

    wq: Tensor       # (d + d_t, d)
    wk: Tensor       # (d + d_t + d_e, d)
    wv: Tensor       # (d + d_t + d_e, d)
    ffn_w1: Tensor   # (2d + d_t, d)
    ffn_b1: Tensor   # (d,)
    ffn_w2: Tensor   # (d, d)
    ffn_b2: Tensor   # (d,)
    identity_ffn: bool = False  # test hook: combiner returns first d entries of its input

    @classmethod
    def create(cls, d: int, d_t: int, d_e: int, index: int,
               rng: np.random.Generator) -> "AttentionLayerParams":
        pre = f"layers.{index}"

        def w(name, rows, cols):
            return ag.parameter(xavier_uniform(rng, rows, cols), name=f"{pre}.{name}")

        return cls(
            wq=w("wq", d + d_t, d),
            wk=w("wk", d + d_t + d_e, d),
            wv=w("wv", d + d_t + d_e, d),
            ffn_w1=w("ffn_w1", 2 * d + d_t, d),
            ffn_b1=ag.parameter(np.zeros(d), name=f"{pre}.ffn_b1"),
            ffn_w2=w("ffn_w2", d, d),
            ffn_b2=ag.parameter(np.zeros(d), name=f"{pre}.ffn_b2"),
        )

    def params(self) -> dict[str, Tensor]:
        return {t.name: t for t in (self.wq, self.wk, self.wv, self.ffn_w1,
                                    self.ffn_b1, self.ffn_w2, self.ffn_b2)}


def center_embedding(h, encoder, t_q) -> Tensor:
    """[h || time encoding of delta 0]; shape (B, d + d_t)."""
    h = ag.as_tensor(h)
    b = h.shape[0]
    if encoder.variant == "position":
        enc = encoder.encode_rank(np.zeros(b, dtype=np.int64))
    else:
        enc = encoder.encode_delta(np.zeros(b))
    return ag.concat([h, enc], axis=-1)


def neighbor_embedding(h, features, encoder, t_q, t_p, mask=None) -> Tensor:
    """[h || edge features || time encoding of t_q - t_p]; shape (B, eps, ...)."""
    h = ag.as_tensor(h)
    if encoder.variant == "position":
        eps = h.shape[1]
        ranks = np.broadcast_to(np.arange(1, eps + 1), h.shape[:2]).copy()
        enc = encoder.encode_rank(ranks)
    else:
        deltas = np.asarray(t_q)[:, None] - np.asarray(t_p)
        if mask is not None:
            deltas = np.where(mask, deltas, 0.0)
        enc = encoder.encode_delta(deltas)
    parts = [h]
    if features.shape[-1]:
        parts.append(Tensor(np.asarray(features, dtype=np.float64)))
    parts.append(enc)
    return ag.concat(parts, axis=-1)


def attention_pool(layer: AttentionLayerParams, z_center, z_neighbors, mask,
                   heads: int, scale: float, mode: str = "dsacf") -> Tensor:
    """Pool neighbor embeddings into one vector per center node.

    ``dsacf`` applies per-head masked softmax attention (weights over the
    unmasked slots form a simplex; masked slots contribute exactly 0);
    ``sum`` replaces the attention weights with an unweighted mean of the
    value projections. Rows with no unmasked neighbor come out zero.
    """
    z_center, z_neighbors = ag.as_tensor(z_center), ag.as_tensor(z_neighbors)
    mask = np.asarray(mask, dtype=bool)
    b, eps = mask.shape
    d = layer.wv.shape[1]
    if d % heads:
        raise ConfigError(f"heads={heads} must divide d={d}")
    d_h = d // heads

    v = ag.reshape(ag.matmul(z_neighbors, layer.wv), (b, eps, heads, d_h))
    v = ag.moveaxis(v, 1, 2)                                   # (b, heads, eps, d_h)
    if mode == "sum":
        counts = mask.sum(axis=1, keepdims=True)
        uniform = np.divide(mask, counts, out=np.zeros((b, eps)), where=counts > 0)
        alpha = Tensor(np.broadcast_to(uniform[:, None, :], (b, heads, eps)).copy())
    elif mode == "dsacf":
        q = ag.reshape(ag.matmul(z_center, layer.wq), (b, 1, heads, d_h))
        k = ag.reshape(ag.matmul(z_neighbors, layer.wk), (b, eps, heads, d_h))
        beta = ag.tsum(ag.mul(k, q), axis=-1)                  # (b, eps, heads)
        beta = ag.mul(ag.moveaxis(beta, 1, 2), scale)          # (b, heads, eps)
        alpha = ag.masked_softmax(beta, np.broadcast_to(mask[:, None, :], (b, heads, eps)))
    else:
        raise ConfigError(f"unknown attention mode {mode!r}")
    pooled = ag.tsum(ag.mul(ag.reshape(alpha, (b, heads, eps, 1)), v), axis=2)
    return ag.reshape(pooled, (b, d))


def combine(layer: AttentionLayerParams, pooled, z_center, activation: str = "softplus") -> Tensor:
    """FFN([pooled || z_center]) -> next-level representation of width d."""
    x = ag.concat([ag.as_tensor(pooled), ag.as_tensor(z_center)], axis=-1)
    d = layer.ffn_w2.shape[1]
    if layer.identity_ffn:
        return ag.narrow(x, 0, d)
    act = ACTIVATIONS.get(activation)
    if act is None:
        raise ConfigError(f"unknown activation {activation!r}")
    hidden = act(ag.add(ag.matmul(x, layer.ffn_w1), layer.ffn_b1))
    return ag.add(ag.matmul(hidden, layer.ffn_w2), layer.ffn_b2)


def embed_nodes(graph: TemporalGraph, mem: Memory, long_table: Tensor,
                layers: list[AttentionLayerParams], encoder, nodes, times,
                epsilon: int, heads: int, *, use_short_term: bool = True,
                attention_mode: str = "dsacf", activation: str = "softplus",
                neighbor_strategy: str = "most_recent",
                rng: np.random.Generator | None = None) -> Tensor:
    """Representations of ``nodes`` at ``times`` after all layers; (B, d)."""
    if not layers:
        raise DataError("at least one attention layer is required")
    nodes = np.asarray(nodes, dtype=np.int64)
    times = np.asarray(times, dtype=np.float64)
    d = long_table.shape[1]
    d_t = encoder.d_t
    scale = 1.0 / np.sqrt(d + d_t)

    def level_input(nds):
        h = ag.gather_rows(long_table, nds)
        if use_short_term:
            h = ag.add(h, ag.gather_rows(mem.states, nds))
        return h

    def rec(nds, tms, level):
        if level == 0:
            return level_input(nds)
        layer = layers[level - 1]
        h_center = rec(nds, tms, level - 1)
        ids, nts, feats, _seqs, mask = neighbors_before_batch(
            graph, nds, tms, epsilon, neighbor_strategy, rng)
        h_nbr = rec(ids.reshape(-1), nts.reshape(-1), level - 1)
        h_nbr = ag.reshape(h_nbr, (len(nds), epsilon, d))
        z_c = center_embedding(h_center, encoder, tms)
        z_n = neighbor_embedding(h_nbr, feats, encoder, tms, nts, mask)
        pooled = attention_pool(layer, z_c, z_n, mask, heads, scale, attention_mode)
        return combine(layer, pooled, z_c, activation)

    return rec(nodes, times, len(layers))
