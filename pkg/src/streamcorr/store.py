"""Append-only key-value tables for clusters and correlations.

Four JSON-lines files live under the data directory::

    stream.jsonl       {"stream", "cluster", "window", "timestamp"}
    cluster.jsonl      {"cluster", "stream", "window", "timestamp", "high", "members"}
    nodes.jsonl        {"node", "stream", "cluster", "window", "timestamp"}
    correlation.jsonl  {"pair": [a, b], "value", "exact", "timestamp"}

``members`` is a list of ``[tag, degree]`` sorted by decreasing degree and
``high`` its first five tags. ``exact`` is ``"num/den"`` when the value was
given as a fraction, else null.

A cluster is written as its stream line, then its node lines, then the
cluster line, which acts as the commit record: on open, stream and node
lines whose cluster line is missing are ignored, as is a torn final line.
The index is rebuilt in memory from the files.
"""

from __future__ import annotations

import json
import logging
import os
import threading
from collections import defaultdict
from collections.abc import Iterable
from fractions import Fraction
from pathlib import Path

from streamcorr.clusters import HIGH_DEGREE_COUNT, Cluster
from streamcorr.correlation import canonical_pair

log = logging.getLogger(__name__)

TABLES = ("stream", "cluster", "nodes", "correlation")


def _read_records(path: Path) -> list[dict]:
    if not path.exists():
        return []
    data = path.read_bytes()
    records = []
    lines = data.split(b"\n")
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError:
            if lineno == len(lines):
                log.warning("%s: ignoring torn final record", path)
                continue
            raise
    return records


def _trim_torn_tail(path: Path) -> None:
    if not path.exists() or path.stat().st_size == 0:
        return
    data = path.read_bytes()
    if data.endswith(b"\n"):
        return
    with open(path, "r+b") as fh:
        fh.truncate(data.rfind(b"\n") + 1)


class Store:
    """Single-writer store; reads go through the in-memory index."""

    def __init__(self, data_dir: str | Path, fsync: bool = False):
        self.root = Path(data_dir)
        self.root.mkdir(parents=True, exist_ok=True)
        self.fsync = fsync
        self._lock = threading.Lock()
        self._load()
        for table in TABLES:
            _trim_torn_tail(self._path(table))
        self._files = {table: open(self._path(table), "a", encoding="utf-8") for table in TABLES}

    def _path(self, table: str) -> Path:
        return self.root / f"{table}.jsonl"

    def close(self) -> None:
        for fh in self._files.values():
            fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # ----- index -----

    def _load(self) -> None:
        self.by_key: dict[tuple[str, int, str], Cluster] = {}
        self.stream_table: dict[str, list[tuple[str, float, int]]] = defaultdict(list)
        self.cluster_table: dict[str, list[Cluster]] = defaultdict(list)
        self.node_table: dict[str, list[tuple[str, str, float, int]]] = defaultdict(list)
        self.correlation_table: dict[tuple[str, str], list[tuple[float, float]]] = defaultdict(list)
        self.exact: dict[tuple[str, str], list[Fraction | None]] = defaultdict(list)

        for rec in _read_records(self._path("cluster")):
            cluster = Cluster(
                rec["stream"], int(rec["window"]), float(rec["timestamp"]), rec["cluster"],
                tuple((tag, int(d)) for tag, d in rec["members"]),
            )
            if cluster.key not in self.by_key:
                self._index_cluster(cluster)
        seen = set()
        for rec in _read_records(self._path("stream")):
            key = (rec["stream"], int(rec["window"]), rec["cluster"])
            if key in self.by_key and key not in seen:
                seen.add(key)
                self.stream_table[rec["stream"]].append((rec["cluster"], float(rec["timestamp"]), key[1]))
        seen = set()
        for rec in _read_records(self._path("nodes")):
            key = (rec["stream"], int(rec["window"]), rec["cluster"])
            if key in self.by_key and (rec["node"], key) not in seen:
                seen.add((rec["node"], key))
                self.node_table[rec["node"]].append((rec["stream"], rec["cluster"], float(rec["timestamp"]), key[1]))
        for rec in _read_records(self._path("correlation")):
            pair = tuple(rec["pair"])
            self.correlation_table[pair].append((float(rec["value"]), float(rec["timestamp"])))
            exact = rec.get("exact")
            self.exact[pair].append(Fraction(exact) if exact else None)

    def _index_cluster(self, cluster: Cluster) -> None:
        self.by_key[cluster.key] = cluster
        self.cluster_table[cluster.name].append(cluster)

    # ----- writes -----

    def _append(self, table: str, lines: Iterable[dict]) -> None:
        fh = self._files[table]
        fh.write("".join(json.dumps(rec, separators=(",", ":")) + "\n" for rec in lines))
        fh.flush()
        if self.fsync:
            os.fsync(fh.fileno())

    def put_cluster(self, cluster: Cluster) -> bool:
        """Store ``cluster`` in all three tables; False if it was already stored."""
        if len(cluster.members) < 1 or any(d < 1 for _, d in cluster.members):
            raise ValueError("cluster members need degree >= 1")
        with self._lock:
            if cluster.key in self.by_key:
                return False
            entries = self.stream_table.get(cluster.stream)
            if entries and entries[-1][1] > cluster.timestamp:
                raise ValueError(f"stream {cluster.stream}: timestamp {cluster.timestamp} precedes stored history")
            base = {"stream": cluster.stream, "cluster": cluster.name,
                    "window": cluster.window_index, "timestamp": cluster.timestamp}
            self._append("stream", [base])
            self._append("nodes", ({"node": tag, **base} for tag, _ in cluster.members))
            self._append("cluster", [{
                **base,
                "high": cluster.high_degree(HIGH_DEGREE_COUNT),
                "members": [[tag, d] for tag, d in cluster.members],
            }])
            self._index_cluster(cluster)
            self.stream_table[cluster.stream].append((cluster.name, cluster.timestamp, cluster.window_index))
            for tag, _ in cluster.members:
                self.node_table[tag].append((cluster.stream, cluster.name, cluster.timestamp, cluster.window_index))
            return True

    def append_correlation(self, a: str, b: str, value, t: float) -> None:
        if not 0 <= value <= 1:
            raise ValueError(f"correlation {value} outside [0, 1]")
        pair = canonical_pair(a, b)
        with self._lock:
            history = self.correlation_table[pair]
            if history and history[-1][1] > t:
                raise ValueError(f"pair {pair}: timestamp {t} precedes stored history")
            exact = f"{value.numerator}/{value.denominator}" if isinstance(value, Fraction) else None
            self._append("correlation", [{"pair": list(pair), "value": float(value), "exact": exact, "timestamp": t}])
            history.append((float(value), float(t)))
            self.exact[pair].append(Fraction(value) if exact else None)

    # ----- reads -----

    def streams(self) -> list[str]:
        return sorted(self.stream_table)

    def correlation(self, a: str, b: str) -> list[tuple[float, float]]:
        return list(self.correlation_table.get(canonical_pair(a, b), ()))

    def correlation_at(self, a: str, b: str, t: float | None = None) -> float:
        value = 0.0
        for v, ts in self.correlation(a, b):
            if t is not None and ts > t:
                break
            value = v
        return value

    def correlation_pairs(self) -> list[tuple[str, str]]:
        return sorted(self.correlation_table)

    def kind(self, tag: str) -> str | None:
        """How a tag resolves: 'stream', 'cluster', 'node', or None."""
        if tag in self.stream_table:
            return "stream"
        if tag in self.cluster_table:
            return "cluster"
        if tag in self.node_table:
            return "node"
        return None

    def _candidates(self, tag: str) -> list[Cluster]:
        kind = self.kind(tag)
        if kind == "stream":
            return [self.by_key[(tag, w, name)] for name, _, w in self.stream_table[tag]]
        if kind == "cluster":
            return list(self.cluster_table[tag])
        if kind == "node":
            return [self.by_key[(s, w, name)] for s, name, _, w in self.node_table[tag]]
        return []

    def windows_of(self, tag: str, t: float) -> dict[str, list[tuple[float, list[Cluster]]]]:
        """Per stream, the windows (newest first) holding clusters of ``tag`` at or before ``t``."""
        grouped: dict[str, dict[float, list[Cluster]]] = defaultdict(lambda: defaultdict(list))
        for cluster in self._candidates(tag):
            if cluster.timestamp <= t:
                grouped[cluster.stream][cluster.timestamp].append(cluster)
        out = {}
        for stream in sorted(grouped):
            windows = grouped[stream]
            out[stream] = [(ts, sorted(windows[ts], key=lambda c: c.name)) for ts in sorted(windows, reverse=True)]
        return out

    def recent_clusters(self, tag: str, t: float, limit: int = 1) -> list[Cluster]:
        """Clusters of the ``limit`` most recent windows at or before ``t``.

        ``tag`` is tried as a stream, then a cluster name, then a node. An
        unknown tag gives an empty list.
        """
        found = [c for c in self._candidates(tag) if c.timestamp <= t]
        times = sorted({c.timestamp for c in found}, reverse=True)[:limit]
        keep = set(times)
        found = [c for c in found if c.timestamp in keep]
        found.sort(key=lambda c: (-c.timestamp, c.stream, c.name))
        return found

    def stored_items(self) -> int:
        """Stored nodes plus stored reservoir edges over all clusters."""
        return sum(c.size + c.edge_count for c in self.by_key.values())

    def verify(self) -> None:
        """Raise AssertionError if a Stream or Nodes entry has no Cluster entry."""
        for stream, entries in self.stream_table.items():
            for name, ts, w in entries:
                assert (stream, w, name) in self.by_key, (stream, w, name)
            times = [ts for _, ts, _ in entries]
            assert times == sorted(times), f"stream {stream} timestamps not sorted"
        for node, entries in self.node_table.items():
            for stream, name, ts, w in entries:
                cluster = self.by_key[(stream, w, name)]
                assert node in cluster.nodes
        for pair, history in self.correlation_table.items():
            assert all(0 <= v <= 1 for v, _ in history)
            times = [ts for _, ts in history]
            assert times == sorted(times), f"pair {pair} timestamps not sorted"
