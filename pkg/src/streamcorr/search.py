"""Search by correlation over the stored clusters.

Input tags are resolved to their most recent clusters. Nodes shared by the
clusters of two different tags are scored with the time/tree coefficient,
summed over every distinct intersection they belong to. When nothing
intersects, the search widens to clusters of streams near the resolved
streams in the phylogeny tree, then to older windows.
"""

from __future__ import annotations

import itertools
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

from streamcorr.clusters import Cluster
from streamcorr.phylo import PhyloTree, leaf_distance
from streamcorr.store import Store

DEFAULT_LIMIT = 5
DEFAULT_HORIZON = 10


def coefficient(t_i: float, t_j: float, t: float, dist: float) -> float:
    """(1 - (t_i - t_j)/t) * (t_i/t) * (1 - dist), floored at 0."""
    if t <= 0:
        raise ValueError("query time t must be positive")
    if t_j > t_i:
        t_i, t_j = t_j, t_i
    if t_j < 0 or t_i > t:
        raise ValueError("need 0 <= t_j <= t_i <= t")
    if not 0 <= dist <= 1:
        raise ValueError("dist must lie in [0, 1]")
    value = (1 - (t_i - t_j) / t) * (t_i / t) * (1 - dist)
    return max(value, 0.0)


@dataclass(frozen=True)
class SearchHit:
    tag: str
    score: float
    explanation: tuple[tuple[str, str, float], ...]
    degree: int = 0


@dataclass
class SearchResult:
    """Ranked hits plus a status: ``ok``, ``unknown_tags`` or ``no_answer``."""

    hits: list[SearchHit]
    status: str = "ok"
    unknown: list[str] = field(default_factory=list)

    def __iter__(self):
        return iter(self.hits)

    def __len__(self):
        return len(self.hits)

    def __getitem__(self, i):
        return self.hits[i]

    @property
    def tags(self) -> list[str]:
        return [hit.tag for hit in self.hits]


def _witness(cluster: Cluster) -> tuple[str, str, float]:
    return (cluster.name, cluster.stream, cluster.timestamp)


class _Scores:
    def __init__(self, exclude: Iterable[str]):
        self.exclude = set(exclude)
        self.score: dict[str, float] = {}
        self.why: dict[str, set] = {}
        self.degree: dict[str, int] = {}

    def add(self, tag: str, value: float, *clusters: Cluster) -> None:
        if tag in self.exclude:
            return
        self.score[tag] = self.score.get(tag, 0.0) + value
        why = self.why.setdefault(tag, set())
        for cluster in clusters:
            why.add(_witness(cluster))
            self.degree[tag] = max(self.degree.get(tag, 0), cluster.degree(tag))

    def __bool__(self):
        return bool(self.score)

    def ranked(self, limit: int) -> list[SearchHit]:
        hits = [
            SearchHit(tag, self.score[tag], tuple(sorted(self.why[tag], key=lambda w: (-w[2], w[1], w[0]))),
                      self.degree.get(tag, 0))
            for tag in self.score
        ]
        hits.sort(key=lambda h: (-h.score, -h.degree, h.tag))
        return hits[:limit]


class Searcher:
    """Answers queries from a store and an optional phylogeny tree."""

    def __init__(self, store: Store, tree: PhyloTree | None = None, horizon: int = DEFAULT_HORIZON):
        self.store = store
        self.tree = tree
        self.horizon = horizon

    def dist(self, a: str, b: str) -> float:
        """Normalized tree distance between two streams; 0 when the tree cannot tell."""
        if a == b or self.tree is None:
            return 0.0
        if a not in self.tree.leaves or b not in self.tree.leaves:
            return 0.0
        return leaf_distance(self.tree, a, b)

    def _windows(self, tag: str, t: float) -> dict[str, list[tuple[float, list[Cluster]]]]:
        return self.store.windows_of(tag, t)

    @staticmethod
    def _clusters(windows: dict, back: int) -> list[Cluster]:
        """Clusters of the window ``back`` steps before the most recent, per stream."""
        out = []
        for per_stream in windows.values():
            if back < len(per_stream):
                out.extend(per_stream[back][1])
        return out

    def search(self, tags: Sequence[str], t: float, limit: int = DEFAULT_LIMIT) -> SearchResult:
        tags = list(dict.fromkeys(tags))
        if not tags:
            raise ValueError("need at least one tag")
        if t <= 0:
            raise ValueError("query time t must be positive")
        unknown = [tag for tag in tags if self.store.kind(tag) is None]
        if len(unknown) == len(tags):
            return SearchResult([], "unknown_tags", unknown)
        windows = {tag: self._windows(tag, t) for tag in tags if tag not in unknown}
        current = {tag: self._clusters(w, 0) for tag, w in windows.items()}
        scores = _Scores(tags)

        if len(tags) == 1 or len(windows) == 1:
            (tag,) = windows
            for cluster in current[tag]:
                value = coefficient(cluster.timestamp, cluster.timestamp, t, 0.0)
                for node, _ in cluster.members:
                    scores.add(node, value, cluster)
            return self._result(scores, limit, unknown)

        self._containment(current, tags, t, scores)
        if not self._intersections(current, t, scores, set()):
            if not self._tree_fallback(current, t, scores):
                self._older_fallback(windows, t, scores)
        return self._result(scores, limit, unknown)

    def _result(self, scores: _Scores, limit: int, unknown: list[str]) -> SearchResult:
        hits = scores.ranked(limit)
        return SearchResult(hits, "ok" if hits else "no_answer", unknown)

    def _containment(self, current: dict, tags: list[str], t: float, scores: _Scores) -> None:
        # a cluster of one input tag that contains another input tag yields its members
        done = set()
        for a, b in itertools.permutations(current, 2):
            for cluster in current[a]:
                if b in cluster.nodes and cluster.key not in done:
                    done.add(cluster.key)
                    value = coefficient(cluster.timestamp, cluster.timestamp, t, 0.0)
                    for node, _ in cluster.members:
                        scores.add(node, value, cluster)

    def _score_pair(self, ca: Cluster, cb: Cluster, t: float, scores: _Scores, seen: set) -> bool:
        if ca.key == cb.key:
            return False
        key = frozenset((ca.key, cb.key))
        if key in seen:
            return False
        shared = (ca.nodes & cb.nodes) - scores.exclude
        if not shared:
            return False
        seen.add(key)
        value = coefficient(ca.timestamp, cb.timestamp, t, self.dist(ca.stream, cb.stream))
        for node in shared:
            scores.add(node, value, ca, cb)
        return True

    def _intersections(self, current: dict, t: float, scores: _Scores, seen: set, need_older=None) -> bool:
        found = False
        for a, b in itertools.combinations(current, 2):
            for ca in current[a]:
                for cb in current[b]:
                    if need_older is not None and ca.key not in need_older and cb.key not in need_older:
                        continue
                    found |= self._score_pair(ca, cb, t, scores, seen)
        return found

    def _tree_fallback(self, current: dict, t: float, scores: _Scores) -> bool:
        if self.tree is None:
            return False
        base = {c.stream for clusters in current.values() for c in clusters}
        candidates = {}
        for stream in self.tree.leaves:
            if stream in base or self.store.kind(stream) != "stream":
                continue
            near = [leaf_distance(self.tree, stream, s) for s in base if s in self.tree.leaves]
            if near:
                candidates[stream] = min(near)
        seen: set = set()
        for stream in sorted(candidates, key=lambda s: (candidates[s], s)):
            bridges = self._clusters(self.store.windows_of(stream, t), 0)
            found = False
            for bridge in bridges:
                touched = {
                    tag: [c for c in clusters if (c.nodes & bridge.nodes) - scores.exclude]
                    for tag, clusters in current.items()
                }
                touched = {tag: cs for tag, cs in touched.items() if cs}
                if len(touched) < 2:
                    continue
                for clusters in touched.values():
                    for cluster in clusters:
                        found |= self._score_pair(bridge, cluster, t, scores, seen)
            if found:
                return True
        return False

    def _older_fallback(self, windows: dict, t: float, scores: _Scores) -> bool:
        for back in range(1, self.horizon + 1):
            older = {tag: self._clusters(w, back) for tag, w in windows.items()}
            if not any(older.values()):
                return False
            pool = {tag: [c for b in range(back + 1) for c in self._clusters(w, b)] for tag, w in windows.items()}
            fresh = {c.key for clusters in older.values() for c in clusters}
            if self._intersections(pool, t, scores, set(), need_older=fresh):
                return True
        return False


def search(store: Store, tags: Sequence[str], t: float, limit: int = DEFAULT_LIMIT,
           tree: PhyloTree | None = None, horizon: int = DEFAULT_HORIZON) -> SearchResult:
    return Searcher(store, tree, horizon).search(tags, t, limit)


def time_ranked_answers(store: Store, tags: Sequence[str], times: Iterable[float],
                        tree: PhyloTree | None = None, limit: int = DEFAULT_LIMIT) -> dict[float, SearchResult]:
    """The same query evaluated at several times."""
    searcher = Searcher(store, tree)
    return {t: searcher.search(tags, t, limit) for t in times}
