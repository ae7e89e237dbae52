"""Shared test utilities: finite differences and tiny dataset builders."""

from __future__ import annotations

import numpy as np

from chronorec.graph import Interaction


def numeric_grad(f, arr: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of the scalar closure ``f`` w.r.t. ``arr``.

    Entries are perturbed in place and restored, so ``f`` must re-read the
    array on every call.
    """
    grad = np.zeros_like(arr)
    flat, gflat = arr.ravel(), grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def max_rel_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-7) -> float:
    """Worst-case relative disagreement; components below ``floor`` in both
    arrays count as agreeing (their gradient is zero either way)."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    scale = np.maximum(np.abs(a), np.abs(b))
    rel = np.where(scale > floor, np.abs(a - b) / np.where(scale > 0, scale, 1.0), 0.0)
    return float(rel.max()) if rel.size else 0.0


def make_events(rows, d_e: int = 0, rng: np.random.Generator | None = None):
    """Interactions from (user, item, t) triples; random features when d_e > 0."""
    events = []
    for user, item, t in rows:
        feats = rng.normal(size=d_e) if (d_e and rng is not None) else np.zeros(d_e)
        events.append(Interaction(user_id=user, item_id=item, timestamp=float(t),
                                  edge_features=feats))
    return events


def random_event_rows(rng, n_users, n_items, n_events):
    """Unique strictly increasing timestamps; uniform random endpoints."""
    times = np.cumsum(rng.uniform(0.5, 1.5, size=n_events))
    return [(int(rng.integers(n_users)), int(rng.integers(n_items)), float(t))
            for t in times]
