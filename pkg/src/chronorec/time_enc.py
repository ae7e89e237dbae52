"""Learnable encodings of elapsed time.

Three variants behind one interface:

* ``bochner``     unit-norm cosine/sine features of the time delta with
                  learnable frequencies (translation invariant by
                  construction, since only the delta enters);
* ``projection``  a learnable vector scaled by the delta;
* ``position``    a learned table indexed by recency rank instead of time.
"""

from __future__ import annotations

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .errors import ConfigError, DataError

TIME_VARIANTS = ("bochner", "projection", "position")


def init_frequencies(d_t: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform [0,1) draws divided by geometric timescales 1, 10, 100, ...

    covering several horizons of elapsed time.
    """
    if d_t <= 0 or d_t % 2:
        raise ConfigError(f"time encoding dimension must be even and positive, got {d_t}")
    half = d_t // 2
    scales = 10.0 ** np.arange(half)
    return rng.uniform(0.0, 1.0, size=half) / scales


class BochnerTimeEncoder:
    """cos/sin feature map of a time delta, scaled to unit L2 norm."""

    variant = "bochner"

    def __init__(self, d_t: int, rng: np.random.Generator):
        self.d_t = d_t
        self.w = ag.parameter(init_frequencies(d_t, rng), name="time.w")

    def params(self) -> dict[str, Tensor]:
        return {"time.w": self.w}

    def encode_delta(self, delta) -> Tensor:
        """Encode elapsed time(s); output shape = delta.shape + (d_t,)."""
        delta = np.asarray(delta, dtype=np.float64)
        half = self.d_t // 2
        angles = ag.mul(Tensor(delta[..., None]), self.w)      # (..., half)
        pairs = ag.stack([ag.cos(angles), ag.sin(angles)], axis=-1)
        flat = ag.reshape(pairs, delta.shape + (self.d_t,))
        return ag.mul(flat, np.sqrt(1.0 / half))

    def kernel(self, t_q, t_p) -> Tensor:
        """Encoding of the elapsed time t_q - t_p."""
        return self.encode_delta(np.asarray(t_q, dtype=np.float64) - np.asarray(t_p, dtype=np.float64))


class ProjectionTimeEncoder:
    """Learnable vector times the raw delta, broadcast to d_t dims."""

    variant = "projection"

    def __init__(self, d_t: int, rng: np.random.Generator):
        self.d_t = d_t
        self.w = ag.parameter(rng.uniform(0.0, 1.0, size=d_t), name="time.w")

    def params(self) -> dict[str, Tensor]:
        return {"time.w": self.w}

    def encode_delta(self, delta) -> Tensor:
        delta = np.asarray(delta, dtype=np.float64)
        return ag.mul(Tensor(delta[..., None]), self.w)

    def kernel(self, t_q, t_p) -> Tensor:
        return self.encode_delta(np.asarray(t_q, dtype=np.float64) - np.asarray(t_p, dtype=np.float64))


class PositionEncoder:
    """Recency-rank embedding table of shape (epsilon+1, d_t).

    Row 0 belongs to the query node's own slot; rank k >= 1 is the k-th
    most recent neighbor.
    """

    variant = "position"

    def __init__(self, d_t: int, epsilon: int, rng: np.random.Generator):
        self.d_t = d_t
        self.epsilon = epsilon
        bound = np.sqrt(6.0 / (epsilon + 1 + d_t))
        self.table = ag.parameter(rng.uniform(-bound, bound, size=(epsilon + 1, d_t)),
                                  name="time.table")

    def params(self) -> dict[str, Tensor]:
        return {"time.table": self.table}

    def encode_rank(self, rank) -> Tensor:
        rank = np.asarray(rank, dtype=np.int64)
        if rank.size and (rank.min() < 0 or rank.max() > self.epsilon):
            raise DataError(f"recency rank out of range [0, {self.epsilon}]")
        return ag.gather_rows(self.table, rank)


def make_time_encoder(variant: str, d_t: int, epsilon: int, rng: np.random.Generator):
    if variant == "bochner":
        return BochnerTimeEncoder(d_t, rng)
    if variant == "projection":
        return ProjectionTimeEncoder(d_t, rng)
    if variant == "position":
        return PositionEncoder(d_t, epsilon, rng)
    raise ConfigError(f"unknown time variant {variant!r}; expected one of {TIME_VARIANTS}")
