"""Turn tweet and edge files into edge streams and run the full pipeline.

Tweet files hold one JSON object per line::

    {"timestamp": 12.5, "author": "@a", "hashtags": ["#x"], "mentions": ["@b"], "urls": [...]}

A tweet by ``@a`` yields ``(@a, #h)`` for every hashtag and ``(@a, @m)`` for
every mention; URLs are dropped. Edge files hold ``<timestamp>\\t<src>\\t<dst>``
lines. Malformed lines are skipped and counted, never fatal.
"""

from __future__ import annotations

import csv
import heapq
import json
import logging
from collections.abc import Iterable, Iterator
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from streamcorr.clusters import ClusterParams, extract_large, spectrum
from streamcorr.correlation import CorrelationAggregator, format_matrix, rho_averaged
from streamcorr.edges import TimedEdge, parse_edge_line
from streamcorr.store import Store
from streamcorr.windows import WindowConfig, WindowReservoir, windows_for

log = logging.getLogger(__name__)


def _tag(value, prefix: str) -> str:
    text = str(value).strip()
    if not text:
        raise ValueError("empty tag")
    return text if text.startswith(prefix) else prefix + text


def parse_tweet_line(line: str) -> list[TimedEdge]:
    """Edges of one tweet; raises ValueError on a malformed line."""
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ValueError(f"not a JSON object: {exc}") from None
    if not isinstance(obj, dict):
        raise ValueError("tweet line must be a JSON object")
    try:
        ts = float(obj["timestamp"])
        author = _tag(obj["author"], "@")
    except (KeyError, TypeError) as exc:
        raise ValueError(f"missing field {exc}") from None
    if ts < 0 or ts != ts:
        raise ValueError("negative or NaN timestamp")
    hashtags = obj.get("hashtags") or []
    mentions = obj.get("mentions") or []
    if not isinstance(hashtags, list) or not isinstance(mentions, list):
        raise ValueError("hashtags and mentions must be lists")
    edges = [TimedEdge(ts, author, _tag(h, "#")) for h in hashtags]
    edges += [TimedEdge(ts, author, _tag(m, "@")) for m in mentions]
    return edges


@dataclass
class StreamCounts:
    lines: int = 0
    skipped: int = 0
    read: int = 0
    routed: int = 0
    stale: int = 0

    @property
    def balanced(self) -> bool:
        return self.read == self.routed + self.stale


@dataclass
class StreamSource:
    """A named stream read from ``path``, or from ``edges`` when given."""

    name: str
    path: Path | None = None
    format: str = "auto"
    edges: Iterable[TimedEdge] | None = None

    def resolved_format(self) -> str:
        if self.format != "auto":
            return self.format
        if self.path is not None and Path(self.path).suffix in (".jsonl", ".json"):
            return "tweets"
        return "edges"


def read_source(source: StreamSource, counts: StreamCounts) -> Iterator[TimedEdge]:
    if source.edges is not None:
        for edge in source.edges:
            counts.read += 1
            yield edge
        return
    fmt = source.resolved_format()
    if fmt not in ("tweets", "edges"):
        raise ValueError(f"unknown source format {fmt!r}")
    with open(source.path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            counts.lines += 1
            try:
                edges = parse_tweet_line(line) if fmt == "tweets" else [parse_edge_line(line)]
            except ValueError as exc:
                counts.skipped += 1
                if counts.skipped <= 10:
                    log.warning("%s:%d: skipped (%s)", source.path, lineno, exc)
                continue
            counts.read += len(edges)
            yield from edges


@dataclass
class PipelineConfig:
    streams: list[StreamSource]
    data_dir: Path
    window: WindowConfig = field(default_factory=WindowConfig)
    params: ClusterParams = field(default_factory=ClusterParams)
    seed: int = 0
    end_time: float | None = None
    write_report: bool = True

    def __post_init__(self):
        names = [s.name for s in self.streams]
        if len(set(names)) != len(names):
            raise ValueError("stream names must be unique")
        self.data_dir = Path(self.data_dir)


@dataclass
class WindowRow:
    index: int
    t: float
    edges: dict[str, int]
    spectrum: dict[str, list[int]]
    stored: dict[str, int]


@dataclass
class PipelineReport:
    streams: list[str]
    windows: list[WindowRow] = field(default_factory=list)
    counts: dict[str, StreamCounts] = field(default_factory=dict)
    correlations: dict[tuple[str, str], list[tuple[float, Fraction]]] = field(default_factory=dict)
    stored_clusters: int = 0
    stored_items: int = 0
    matrix: tuple[list[str], object] | None = None

    @property
    def edges_read(self) -> int:
        return sum(c.read for c in self.counts.values())

    @property
    def compression(self) -> float:
        """Edges read per stored node-or-edge."""
        return self.edges_read / self.stored_items if self.stored_items else float("inf")

    def rho(self, a: str, b: str) -> list[float]:
        pair = (a, b) if a < b else (b, a)
        return [float(r) for _, r in self.correlations[pair]]

    def rho_averaged(self, a: str, b: str) -> list[float]:
        return rho_averaged(self.rho(a, b))

    def summary(self) -> str:
        lines = [
            f"streams: {', '.join(self.streams)}",
            f"windows closed: {len(self.windows)}",
            f"edges read: {self.edges_read}",
            f"clusters stored: {self.stored_clusters}",
            f"stored nodes+edges: {self.stored_items}",
            f"compression: {self.compression:.1f}x",
        ]
        for name, c in self.counts.items():
            lines.append(f"  {name}: lines={c.lines} skipped={c.skipped} read={c.read} "
                         f"routed={c.routed} stale={c.stale}")
        for (a, b), series in sorted(self.correlations.items()):
            values = [float(r) for _, r in series]
            peak = max(values) if values else 0.0
            last = values[-1] if values else 0.0
            lines.append(f"  rho({a}, {b}): points={len(values)} final={last:.4f} max={peak:.4f}")
        return "\n".join(lines) + "\n"


class _Pipeline:
    def __init__(self, cfg: PipelineConfig, store: Store):
        self.cfg = cfg
        self.store = store
        self.names = [s.name for s in cfg.streams]
        self.open: dict[int, dict[str, WindowReservoir]] = {}
        self.next_close = 1
        self.clock = -1.0
        self.aggregator = CorrelationAggregator(self.names)
        self.report = PipelineReport(self.names)

    def reservoirs(self, i: int) -> dict[str, WindowReservoir]:
        if i not in self.open:
            win = self.cfg.window
            self.open[i] = {
                name: WindowReservoir(i, win, f"{self.cfg.seed}:{name}:{i}") for name in self.names
            }
        return self.open[i]

    def route(self, stream: str, edge: TimedEdge, counts: StreamCounts) -> None:
        if edge.timestamp > self.clock:
            self.clock = edge.timestamp
            while self.cfg.window.end(self.next_close) < self.clock:
                self.close(self.next_close)
        targets = [i for i in windows_for(edge.timestamp, self.cfg.window) if i >= self.next_close]
        if not targets:
            counts.stale += 1
            return
        counts.routed += 1
        for i in targets:
            self.reservoirs(i)[stream].offer(edge)

    def close(self, i: int) -> None:
        cfg = self.cfg
        t_i = cfg.window.end(i)
        reservoirs = self.reservoirs(i)
        row = WindowRow(i, t_i, {}, {}, {})
        new_nodes = {}
        for name in self.names:
            closed = reservoirs[name].close()
            row.edges[name] = closed[1]
            row.spectrum[name] = spectrum(closed, cfg.params.min_store)
            clusters = extract_large(closed, cfg.params, name, i, t_i)
            for cluster in clusters:
                self.store.put_cluster(cluster)
            row.stored[name] = sum(c.size + c.edge_count for c in clusters)
            self.report.stored_clusters += len(clusters)
            new_nodes[name] = set().union(*(c.nodes for c in clusters)) if clusters else set()
        for (a, b), rho in self.aggregator.update(t_i, new_nodes).items():
            self.store.append_correlation(a, b, rho, t_i)
        self.report.windows.append(row)
        del self.open[i]
        self.next_close = i + 1

    def finish(self, last_seen: float | None) -> None:
        # an explicit end_time is an exclusive horizon: a window starting at it is empty
        win = self.cfg.window
        if self.cfg.end_time is not None:
            while win.start(self.next_close) < self.cfg.end_time:
                self.close(self.next_close)
        elif last_seen is not None:
            while win.start(self.next_close) <= last_seen:
                self.close(self.next_close)


def _keyed(n: int, edges: Iterable[TimedEdge]) -> Iterator[tuple[float, int, TimedEdge]]:
    for edge in edges:
        yield edge.timestamp, n, edge


def run_pipeline(cfg: PipelineConfig) -> PipelineReport:
    """Replay every stream on a shared clock, storing clusters and correlations."""
    for source in cfg.streams:
        if source.edges is None:
            if source.path is None:
                raise ValueError(f"stream {source.name} has neither a path nor edges")
            with open(source.path, encoding="utf-8"):
                pass
    store = Store(cfg.data_dir)
    try:
        pipe = _Pipeline(cfg, store)
        counts = {s.name: StreamCounts() for s in cfg.streams}
        feeds = [_keyed(n, read_source(source, counts[source.name])) for n, source in enumerate(cfg.streams)]
        last_seen = None
        for _, n, edge in heapq.merge(*feeds, key=lambda item: (item[0], item[1])):
            pipe.route(pipe.names[n], edge, counts[pipe.names[n]])
            last_seen = edge.timestamp if last_seen is None else max(last_seen, edge.timestamp)
        pipe.finish(last_seen)
        report = pipe.report
        report.counts = counts
        report.correlations = {pair: list(state.history) for pair, state in pipe.aggregator.states.items()}
        report.stored_items = store.stored_items()
        report.matrix = pipe.aggregator.matrix()
        if cfg.write_report:
            write_report(report, cfg.data_dir / "report")
        return report
    finally:
        store.close()


def write_report(report: PipelineReport, out_dir: Path) -> None:
    """Plain-text summary plus one CSV per plotted series."""
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "summary.txt").write_text(report.summary())
    with open(out_dir / "edges_per_window.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["window", "t", *report.streams])
        for row in report.windows:
            writer.writerow([row.index, row.t, *(row.edges[s] for s in report.streams)])
    with open(out_dir / "spectrum.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["window", "t", "stream", "component_sizes"])
        for row in report.windows:
            for s in report.streams:
                writer.writerow([row.index, row.t, s, " ".join(map(str, row.spectrum[s]))])
    with open(out_dir / "correlation.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "stream_a", "stream_b", "rho", "rho_averaged"])
        for (a, b), series in sorted(report.correlations.items()):
            values = [float(r) for _, r in series]
            averaged = [None, *rho_averaged(values), None] if len(values) >= 3 else [None] * len(values)
            for (t, _), value, avg in zip(series, values, averaged):
                writer.writerow([t, a, b, f"{value:.10g}", "" if avg is None else f"{avg:.10g}"])
    if report.matrix is not None:
        tags, matrix = report.matrix
        (out_dir / "matrix.tsv").write_text(format_matrix(tags, matrix))

