"""Continuous-time sequential recommendation engine.

A chronological event store over user-item interactions, per-node memory
states updated by a GRU over event messages, time-encoded attention
layers for dynamic node embeddings, pairwise-ranking training, and a
timed top-K evaluation harness.
"""

__version__ = "0.1.0"

from .config import TrainConfig, substream
from .evaluate import EvalConfig, MetricsReport, evaluate
from .graph import (Interaction, NeighborSet, TemporalGraph, build_graph,
                    chronological_split, neighbors_before, truncate_latest)
from .ingest import load_bundle, parse_event_csv, save_bundle
from .model import (Recommender, bpr_loss, load_checkpoint, sample_negative,
                    save_checkpoint)

__all__ = [
    "EvalConfig", "Interaction", "MetricsReport", "NeighborSet", "Recommender",
    "TemporalGraph", "TrainConfig", "bpr_loss", "build_graph", "chronological_split",
    "evaluate", "load_bundle", "load_checkpoint", "neighbors_before",
    "parse_event_csv", "sample_negative", "save_bundle", "save_checkpoint",
    "substream", "truncate_latest", "__version__",
]
