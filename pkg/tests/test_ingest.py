import json

import pytest

from streamcorr.clusters import ClusterParams
from streamcorr.edges import TimedEdge, format_edge_line, parse_edge_line
from streamcorr.ingest import PipelineConfig, StreamSource, parse_tweet_line, run_pipeline
from streamcorr.store import Store
from streamcorr.windows import WindowConfig


def test_tweet_line_to_edges():
    line = json.dumps({"timestamp": 5, "author": "alice", "hashtags": ["nra", "#guns"],
                       "mentions": ["bob"], "urls": ["http://x"]})
    assert parse_tweet_line(line) == [
        TimedEdge(5.0, "@alice", "#nra"), TimedEdge(5.0, "@alice", "#guns"), TimedEdge(5.0, "@alice", "@bob"),
    ]
    assert parse_tweet_line('{"timestamp": 1, "author": "a"}') == []


@pytest.mark.parametrize("line", [
    "not json", "[1, 2]", '{"author": "a"}', '{"timestamp": -1, "author": "a"}',
    '{"timestamp": 1, "author": "a", "hashtags": "x"}', '{"timestamp": 1, "author": ""}',
])
def test_malformed_tweets_raise(line):
    with pytest.raises(ValueError):
        parse_tweet_line(line)


def test_edge_line_round_trip():
    edge = TimedEdge(12.5, "@a", "#b")
    assert parse_edge_line(format_edge_line(edge)) == edge
    for bad in ("1\ta", "x\ta\tb", "-1\ta\tb", "1\t\tb"):
        with pytest.raises(ValueError):
            parse_edge_line(bad)


def clique_edges(tags, t0, t1, count):
    n = len(tags)
    pairs = [(tags[i], tags[j]) for i in range(n) for j in range(i + 1, n)]
    step = (t1 - t0) / count
    return [TimedEdge(t0 + k * step, *pairs[k % len(pairs)]) for k in range(count)]


def config(tmp_path, streams, **kw):
    kw.setdefault("window", WindowConfig(60, 30, 50))
    kw.setdefault("params", ClusterParams(alpha=5, min_store=5))
    return PipelineConfig(streams, tmp_path / "data", **kw)


def test_empty_sources(tmp_path):
    (tmp_path / "a.tsv").write_text("")
    report = run_pipeline(config(tmp_path, [StreamSource("a", tmp_path / "a.tsv")]))
    assert report.edges_read == 0 and report.windows == [] and report.stored_clusters == 0


def test_single_clique_stream(tmp_path):
    tags = [f"@c{i}" for i in range(12)]
    edges = clique_edges(tags, 0, 119, 400)
    report = run_pipeline(config(tmp_path, [StreamSource("s", edges=edges)]))
    assert [row.index for row in report.windows] == [1, 2, 3, 4]
    assert report.stored_clusters >= 3
    with Store(tmp_path / "data") as store:
        assert store.streams() == ["s"]
        assert {c.nodes == set(tags) for c in store.recent_clusters("s", 1e9)} == {True}
        store.verify()


def write_edges(path, edges):
    path.write_text("".join(format_edge_line(e) for e in edges))


def four_streams(tmp_path, hours=24):
    sources = []
    minutes = hours * 60
    for s in range(4):
        # a shared core clique plus a private one, so every pair correlates
        shared = [f"@core{i}" for i in range(8)]
        own = [f"@s{s}_{i}" for i in range(10)]
        edges = sorted(clique_edges(shared, 0, minutes, 3000) + clique_edges(own, 0.5, minutes, 3000))
        path = tmp_path / f"s{s}.tsv"
        write_edges(path, edges)
        sources.append(StreamSource(f"s{s}", path))
    return sources


def test_four_streams_give_48_points_per_pair(tmp_path):
    report = run_pipeline(config(tmp_path, four_streams(tmp_path), window=WindowConfig(60, 30, 200),
                                 end_time=1440.0))
    assert len(report.windows) == 48
    assert len(report.correlations) == 6
    assert all(len(series) == 48 for series in report.correlations.values())
    for series in report.correlations.values():
        assert 0 < float(series[-1][1]) < 1
    for counts in report.counts.values():
        assert counts.balanced and counts.read == 6000
    for name in ("summary.txt", "edges_per_window.csv", "spectrum.csv", "correlation.csv", "matrix.tsv"):
        assert (tmp_path / "data" / "report" / name).exists()
    with Store(tmp_path / "data") as store:
        assert len(store.correlation_pairs()) == 6
        assert all(len(store.correlation(*pair)) == 48 for pair in store.correlation_pairs())


def test_malformed_lines_are_counted(tmp_path):
    path = tmp_path / "mixed.jsonl"
    path.write_text("\n".join([
        json.dumps({"timestamp": 1, "author": "a", "hashtags": ["x"], "mentions": ["b"]}),
        "garbage",
        json.dumps({"timestamp": 2, "author": "a"}),
        "",
        json.dumps({"timestamp": "soon", "author": "a"}),
    ]) + "\n")
    report = run_pipeline(config(tmp_path, [StreamSource("t", path)]))
    counts = report.counts["t"]
    assert (counts.lines, counts.skipped, counts.read) == (4, 2, 2)
    assert counts.balanced


def test_late_edges_are_dropped_as_stale(tmp_path):
    edges = [TimedEdge(10.0, "a", "b"), TimedEdge(200.0, "c", "d"), TimedEdge(20.0, "e", "f")]
    report = run_pipeline(config(tmp_path, [StreamSource("s", edges=edges)]))
    counts = report.counts["s"]
    assert (counts.read, counts.routed, counts.stale) == (3, 2, 1)


def test_replay_is_deterministic(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    a.mkdir()
    b.mkdir()
    ra = run_pipeline(config(a, four_streams(a, hours=3), window=WindowConfig(60, 30, 100)))
    rb = run_pipeline(config(b, four_streams(b, hours=3), window=WindowConfig(60, 30, 100)))
    assert ra.correlations == rb.correlations
    for table in ("cluster", "nodes", "correlation"):
        assert (a / "data" / f"{table}.jsonl").read_text() == (b / "data" / f"{table}.jsonl").read_text()


def test_unreadable_source_aborts_before_writing(tmp_path):
    good = tmp_path / "good.tsv"
    write_edges(good, [TimedEdge(1.0, "a", "b")])
    cfg = config(tmp_path, [StreamSource("g", good), StreamSource("m", tmp_path / "missing.tsv")])
    with pytest.raises(OSError):
        run_pipeline(cfg)
    assert not (tmp_path / "data").exists()


def test_duplicate_stream_names_rejected(tmp_path):
    with pytest.raises(ValueError):
        config(tmp_path, [StreamSource("a", edges=[]), StreamSource("a", edges=[])])
