"""Event-log ingestion: CSV parsing, dense id remapping, bundle files.

Two input formats:

* ``jodie``    header line, then ``user_id,item_id,timestamp,state_label,f1,...``
               (the state label is parsed and discarded)
* ``generic``  no header, ``user,item,timestamp[,f1,...]``

Raw ids are remapped to dense indices in order of first appearance after
chronological sorting; the mapping is persisted as two-column CSVs
(``original_id,dense_id``) so downstream reports can be joined back.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from pathlib import Path

import numpy as np

from .errors import DataError, ParseError
from .graph import Interaction, sort_events

BUNDLE_META = "meta.json"
BUNDLE_EVENTS = "events.npz"
BUNDLE_USER_MAP = "user_id_map.csv"
BUNDLE_ITEM_MAP = "item_id_map.csv"


def parse_event_csv(source, fmt: str = "generic"):
    """Parse an interaction log into sorted, densely re-indexed events.

    ``source`` is a text stream, a path, or a str/bytes payload. Returns
    ``(events, n_users, n_items, d_e, user_map, item_map)`` where the maps
    go original id -> dense id.
    """
    if fmt not in ("jodie", "generic"):
        raise ParseError(f"unknown input format {fmt!r}")
    if isinstance(source, (str, Path)) and "\n" not in str(source):
        with open(source, "r", encoding="utf-8") as fh:
            return parse_event_csv(fh, fmt)
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    if isinstance(source, str):
        source = io.StringIO(source)

    meta_cols = 4 if fmt == "jodie" else 3
    raw: list[tuple[int, int, float, list[float], int]] = []
    d_e = None
    for lineno, row in enumerate(csv.reader(source), start=1):
        if fmt == "jodie" and lineno == 1:
            continue  # header
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) < meta_cols:
            raise ParseError(f"line {lineno}: expected at least {meta_cols} fields, got {len(row)}")
        try:
            user = int(row[0])
            item = int(row[1])
            ts = float(row[2])
            feats = [float(x) for x in row[meta_cols:]]
        except ValueError as exc:
            raise ParseError(f"line {lineno}: non-numeric field ({exc})") from None
        if ts < 0:
            raise ParseError(f"line {lineno}: negative timestamp {ts}")
        if d_e is None:
            d_e = len(feats)
        elif len(feats) != d_e:
            raise ParseError(f"line {lineno}: expected {d_e} feature values, got {len(feats)}")
        raw.append((user, item, ts, feats, lineno))
    if not raw:
        raise ParseError("no events found in input")

    raw.sort(key=lambda r: (r[2], r[4]))
    user_map: dict[int, int] = {}
    item_map: dict[int, int] = {}
    events = []
    for user, item, ts, feats, _ in raw:
        u = user_map.setdefault(user, len(user_map))
        i = item_map.setdefault(item, len(item_map))
        events.append(Interaction(user_id=u, item_id=i, timestamp=ts,
                                  edge_features=np.asarray(feats, dtype=np.float64)))
    events = sort_events(events)
    return events, len(user_map), len(item_map), d_e, user_map, item_map


def events_to_arrays(events) -> dict[str, np.ndarray]:
    d_e = len(events[0].edge_features) if events else 0
    return {
        "users": np.array([e.user_id for e in events], dtype=np.int64),
        "items": np.array([e.item_id for e in events], dtype=np.int64),
        "timestamps": np.array([e.timestamp for e in events], dtype=np.float64),
        "features": np.stack([e.edge_features for e in events]) if d_e
        else np.zeros((len(events), 0), dtype=np.float64),
    }


def arrays_to_events(arrays) -> list[Interaction]:
    events = [
        Interaction(user_id=int(u), item_id=int(i), timestamp=float(t),
                    edge_features=np.asarray(f, dtype=np.float64), seq_no=k)
        for k, (u, i, t, f) in enumerate(zip(arrays["users"], arrays["items"],
                                             arrays["timestamps"], arrays["features"]))
    ]
    return events


def dataset_fingerprint(events) -> dict:
    h = hashlib.sha256()
    for e in events:
        h.update(f"{e.user_id},{e.item_id},{e.timestamp!r}".encode())
        h.update(e.edge_features.tobytes())
    return {"events": len(events), "sha256": h.hexdigest()}


def save_bundle(out_dir, events, n_users, n_items, d_e, user_map=None, item_map=None) -> Path:
    """Write a canonical dataset bundle: events.npz + meta.json + id maps."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    np.savez(out_dir / BUNDLE_EVENTS, **events_to_arrays(events))
    meta = {
        "n_users": n_users,
        "n_items": n_items,
        "d_e": d_e,
        "fingerprint": dataset_fingerprint(events),
    }
    (out_dir / BUNDLE_META).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    for name, mapping in ((BUNDLE_USER_MAP, user_map), (BUNDLE_ITEM_MAP, item_map)):
        if mapping is None:
            mapping = {}
        with open(out_dir / name, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["original_id", "dense_id"])
            for orig, dense in sorted(mapping.items(), key=lambda kv: kv[1]):
                writer.writerow([orig, dense])
    return out_dir


def load_bundle(bundle_dir):
    """Read a bundle back as ``(events, n_users, n_items, d_e, meta)``."""
    bundle_dir = Path(bundle_dir)
    meta_path = bundle_dir / BUNDLE_META
    if not meta_path.exists():
        raise DataError(f"not a dataset bundle (missing {BUNDLE_META}): {bundle_dir}")
    meta = json.loads(meta_path.read_text())
    with np.load(bundle_dir / BUNDLE_EVENTS) as npz:
        arrays = {k: npz[k] for k in ("users", "items", "timestamps", "features")}
    events = arrays_to_events(arrays)
    return events, int(meta["n_users"]), int(meta["n_items"]), int(meta["d_e"]), meta
