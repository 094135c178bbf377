"""Command-line entry point: generate, run, correlate, tree, treedist, search."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from streamcorr import graphgen
from streamcorr.clusters import ClusterParams
from streamcorr.correlation import correlation_matrix, format_matrix
from streamcorr.edges import format_edge_line
from streamcorr.ingest import PipelineConfig, StreamSource, run_pipeline
from streamcorr.phylo import distance_from_correlation, from_newick, neighbor_joining, tree_move_distance
from streamcorr.search import Searcher
from streamcorr.store import Store
from streamcorr.windows import WindowConfig


def store_matrix(store: Store, t: float | None = None):
    """Correlation matrix of every stored stream at time ``t`` (latest if None)."""
    streams = sorted(set(store.streams()) | {s for pair in store.correlation_pairs() for s in pair})
    values = {}
    for i, a in enumerate(streams):
        for b in streams[i + 1:]:
            values[(a, b)] = store.correlation_at(a, b, t)
    return correlation_matrix(streams, values)


def store_tree(store: Store, t: float | None = None):
    tags, matrix = store_matrix(store, t)
    if not tags:
        return None
    return neighbor_joining(distance_from_correlation(matrix), tags)


def _cmd_generate(args) -> int:
    values = graphgen.read_kv_config(args.config) if args.config else {}
    for key in ("n", "ticks", "seed", "mode", "q", "planted", "p_in", "step_start", "step_length"):
        override = getattr(args, key, None)
        if override is not None:
            values[key] = str(override)
    cfg = graphgen.dynamics_from_mapping(values)
    n = int(values.get("n", 10_000))
    dist = graphgen.DegreeDistribution.zipfian(n)
    tags = graphgen.node_tags(n, values.get("prefix", "u"))
    edges = graphgen.stream_from_dynamics(cfg, dist, int(values.get("ticks", 100)),
                                          int(values.get("seed", 0)), tags=tags)
    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        for edge in edges:
            out.write(format_edge_line(edge))
    finally:
        if args.out:
            out.close()
    return 0


def _pipeline_config(args) -> PipelineConfig:
    values = graphgen.read_kv_config(args.config) if args.config else {}
    streams = {}
    for key, value in values.items():
        if key.startswith("stream."):
            streams[key[len("stream."):]] = Path(value)
    for spec in args.stream or []:
        if "=" not in spec:
            raise SystemExit(f"--stream expects NAME=PATH, got {spec!r}")
        name, path = spec.split("=", 1)
        streams[name] = Path(path)
    if not streams:
        raise SystemExit("no streams given (use --stream NAME=PATH)")

    def pick(flag, key, cast, default):
        value = getattr(args, flag)
        if value is not None:
            return value
        return cast(values[key]) if key in values else default

    window = WindowConfig(pick("tau", "tau", float, 60.0), pick("lam", "lambda", float, 30.0),
                          pick("k", "k", int, 400))
    params = ClusterParams(pick("gamma", "gamma", float, 0.8), pick("alpha", "alpha", int, 10),
                           pick("min_store", "min_store", int, 10))
    data_dir = Path(pick("data_dir", "data_dir", str, "data"))
    end_time = pick("end_time", "end_time", float, None)
    return PipelineConfig(
        [StreamSource(name, path) for name, path in streams.items()],
        data_dir, window, params, pick("seed", "seed", int, 0), end_time,
    )


def _cmd_run(args) -> int:
    report = run_pipeline(_pipeline_config(args))
    sys.stdout.write(report.summary())
    return 0


def _cmd_correlate(args) -> int:
    with Store(args.data_dir) as store:
        tags, matrix = store_matrix(store, args.at)
    sys.stdout.write(format_matrix(tags, matrix))
    return 0


def _cmd_tree(args) -> int:
    with Store(args.data_dir) as store:
        tree = store_tree(store, args.at)
    if tree is None:
        print("no streams stored", file=sys.stderr)
        return 1
    text = tree.to_newick() + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_treedist(args) -> int:
    a = from_newick(Path(args.first).read_text())
    b = from_newick(Path(args.second).read_text())
    print(tree_move_distance(a, b, args.k))
    return 0


def _cmd_search(args) -> int:
    with Store(args.data_dir) as store:
        tree = store_tree(store, args.at)
        result = Searcher(store, tree, args.horizon).search(args.tags, args.at, args.limit)
    if result.status == "unknown_tags":
        print(f"unknown tags: {' '.join(result.unknown)}", file=sys.stderr)
        return 2
    if args.format == "tsv":
        for rank, hit in enumerate(result, 1):
            why = ";".join(f"{name}@{stream}@{ts:g}" for name, stream, ts in hit.explanation)
            print(f"{rank}\t{hit.tag}\t{hit.score:.6f}\t{why}")
        return 0
    print(f"{'rank':>4}  {'tag':<24} {'score':>8}  explanation")
    for rank, hit in enumerate(result, 1):
        names = ", ".join(sorted({name for name, _, _ in hit.explanation}))
        print(f"{rank:>4}  {hit.tag:<24} {hit.score:>8.4f}  {names}")
    if not result.hits:
        print("(no answers)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="streamcorr", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic edge stream")
    p.add_argument("--config", help="key=value dynamics file")
    p.add_argument("--out", help="output edge file (default stdout)")
    p.add_argument("--n", type=int)
    p.add_argument("--ticks", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--mode", choices=graphgen.MODES)
    p.add_argument("--q", type=int)
    p.add_argument("--planted", type=int)
    p.add_argument("--p-in", dest="p_in", type=float)
    p.add_argument("--step-start", dest="step_start", type=int)
    p.add_argument("--step-length", dest="step_length", type=int)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("run", help="replay streams into the store")
    p.add_argument("--config", help="key=value pipeline file")
    p.add_argument("--stream", action="append", metavar="NAME=PATH")
    p.add_argument("--tau", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--k", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--alpha", type=int)
    p.add_argument("--min-store", dest="min_store", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--data-dir", dest="data_dir")
    p.add_argument("--end-time", dest="end_time", type=float)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("correlate", help="print the correlation matrix")
    p.add_argument("--data-dir", dest="data_dir", default="data")
    p.add_argument("--at", type=float)
    p.set_defaults(func=_cmd_correlate)

    p = sub.add_parser("tree", help="Neighbor Joining tree in Newick form")
    p.add_argument("--data-dir", dest="data_dir", default="data")
    p.add_argument("--at", type=float)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_tree)

    p = sub.add_parser("treedist", help="k-gram distance between two Newick trees")
    p.add_argument("first")
    p.add_argument("second")
    p.add_argument("--k", type=int, default=2)
    p.set_defaults(func=_cmd_treedist)

    p = sub.add_parser("search", help="search by correlation")
    p.add_argument("tags", nargs="+")
    p.add_argument("--at", type=float, required=True)
    p.add_argument("--data-dir", dest="data_dir", default="data")
    p.add_argument("--limit", type=int, default=5)
    p.add_argument("--horizon", type=int, default=10)
    p.add_argument("--format", choices=("table", "tsv"), default="table")
    p.set_defaults(func=_cmd_search)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
