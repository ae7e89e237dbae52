"""Synthetic interaction logs with controllable temporal structure.

``periodic``: every user cycles through a fixed random item sequence at
unit time steps, so the next item is fully determined by phase.

``shift``: every user draws from one item cluster for the first half of
its events and a different cluster for the second half, modeling an
abrupt preference change that a static profile cannot track.

Per-user steps are unit-spaced with a small user-specific phase offset,
which makes all timestamps globally unique and interleaves users evenly.
"""

from __future__ import annotations

import csv

import numpy as np

from .config import substream
from .errors import DataError


def _timestamp(step: int, user: int, n_users: int) -> float:
    return step + user / (n_users + 1.0)


def generate_periodic(n_users: int, n_items: int, events_per_user: int, seed: int,
                      period: int | None = None) -> list[tuple[int, int, float]]:
    """Rows (user, item, t); each user repeats a random length-``period``
    item sequence (default: all items once)."""
    if min(n_users, n_items, events_per_user) < 1:
        raise DataError("users, items and events_per_user must all be >= 1")
    period = n_items if period is None else period
    if not (1 <= period <= n_items):
        raise DataError(f"period must be in [1, {n_items}], got {period}")
    rng = substream(seed, "synth.periodic")
    cycles = [rng.permutation(n_items)[:period] for _ in range(n_users)]
    rows = []
    for step in range(events_per_user):
        for user in range(n_users):
            item = int(cycles[user][step % period])
            rows.append((user, item, _timestamp(step, user, n_users)))
    return rows


def generate_shift(n_users: int, n_items: int, events_per_user: int, seed: int,
                   n_clusters: int = 2) -> list[tuple[int, int, float]]:
    """Rows (user, item, t); first half of each user's events sample one
    cluster, second half another.

    With the default two clusters every user moves from the low-id half of
    the items to the high-id half; more clusters give each user a random
    ordered pair.
    """
    if min(n_users, n_items, events_per_user) < 1:
        raise DataError("users, items and events_per_user must all be >= 1")
    if not (2 <= n_clusters <= n_items):
        raise DataError(f"n_clusters must be in [2, {n_items}], got {n_clusters}")
    rng = substream(seed, "synth.shift")
    clusters = np.array_split(np.arange(n_items), n_clusters)
    half = events_per_user // 2
    rows = []
    pairs = []
    for user in range(n_users):
        if n_clusters == 2:
            first, second = 0, 1
        else:
            first, second = rng.choice(n_clusters, size=2, replace=False)
        pairs.append((first, second))
    for step in range(events_per_user):
        for user in range(n_users):
            cluster = clusters[pairs[user][0] if step < half else pairs[user][1]]
            item = int(cluster[rng.integers(len(cluster))])
            rows.append((user, item, _timestamp(step, user, n_users)))
    return rows


def write_rows_csv(path, rows) -> None:
    """Generic-format event file: user,item,timestamp with full precision."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for user, item, t in rows:
            writer.writerow([user, item, repr(t)])
