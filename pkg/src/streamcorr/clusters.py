"""Connected components of a reservoir and the large-component witnesses.

A reservoir sample is tiny (``k`` edges), so a plain dict-based union-find
is enough.
"""

from __future__ import annotations

import enum
import math
from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

from streamcorr.edges import TimedEdge

HIGH_DEGREE_COUNT = 5


class Decision(enum.Enum):
    ACCEPT = "accept"
    REJECT = "reject"

    def __bool__(self):
        return self is Decision.ACCEPT


def default_alpha(n: int, c_alpha: float = 1.0, min_store: int = 10) -> int:
    """max(min_store, ceil(c_alpha * ln n))."""
    return max(min_store, math.ceil(c_alpha * math.log(n))) if n > 1 else min_store


@dataclass(frozen=True)
class ClusterParams:
    gamma: float = 0.8
    alpha: int = 10
    min_store: int = 10

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if self.alpha < 2:
            raise ValueError("alpha must be >= 2")
        if self.min_store < 2:
            raise ValueError("min_store must be >= 2")

    def min_cluster_size(self, m: int, k: int) -> float:
        """Smallest planted cluster the reservoir is expected to witness, m / (gamma k)."""
        return m / (self.gamma * k)


@dataclass(frozen=True)
class Cluster:
    """A stored large component; ``members`` is sorted by decreasing degree."""

    stream: str
    window_index: int
    timestamp: float
    name: str
    members: tuple[tuple[str, int], ...]

    @property
    def nodes(self) -> frozenset[str]:
        return frozenset(tag for tag, _ in self.members)

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def edge_count(self) -> int:
        return sum(d for _, d in self.members) // 2

    def degree(self, tag: str) -> int:
        for node, d in self.members:
            if node == tag:
                return d
        return 0

    def high_degree(self, count: int = HIGH_DEGREE_COUNT) -> list[str]:
        return [tag for tag, _ in self.members[:count]]

    @property
    def key(self) -> tuple[str, int, str]:
        return (self.stream, self.window_index, self.name)


def _endpoints(edge) -> tuple[str, str]:
    if isinstance(edge, TimedEdge):
        return edge.src, edge.dst
    u, v = edge
    return u, v


def connected_components(edges: Iterable) -> list[tuple[frozenset, dict]]:
    """Partition the nodes of ``edges`` into components.

    Each entry is ``(nodes, degree)`` where ``degree`` counts parallel edges
    and counts a self-loop twice. Components come largest first, ties broken
    by their smallest node.
    """
    parent: dict = {}
    degree: Counter = Counter()

    def find(x):
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    for edge in edges:
        u, v = _endpoints(edge)
        parent.setdefault(u, u)
        parent.setdefault(v, v)
        degree[u] += 1
        degree[v] += 1
        ru, rv = find(u), find(v)
        if ru != rv:
            parent[rv] = ru

    groups: dict = {}
    for node in parent:
        groups.setdefault(find(node), []).append(node)
    out = [(frozenset(nodes), {u: degree[u] for u in nodes}) for nodes in groups.values()]
    out.sort(key=lambda c: (-len(c[0]), min(map(str, c[0]))))
    return out


def _samples(reservoir) -> Sequence:
    # accept either close() output ``(samples, m)`` or a bare edge list
    if isinstance(reservoir, tuple) and len(reservoir) == 2 and isinstance(reservoir[1], int):
        return reservoir[0]
    return reservoir


def largest_component_size(reservoir) -> int:
    comps = connected_components(_samples(reservoir))
    return len(comps[0][0]) if comps else 0


def detect_static(reservoir, params: ClusterParams) -> Decision:
    """Accept iff the largest component of the sample has at least alpha nodes."""
    return Decision.ACCEPT if largest_component_size(reservoir) >= params.alpha else Decision.REJECT


def detect_dynamic(reservoirs: Iterable, params: ClusterParams) -> Decision:
    """Accept iff some window's sample is accepted by :func:`detect_static`."""
    seen = False
    for res in reservoirs:
        seen = True
        if detect_static(res, params):
            return Decision.ACCEPT
    if not seen:
        raise ValueError("need at least one closed reservoir")
    return Decision.REJECT


def name_of(degree: dict) -> str:
    """Highest-degree node; ties go to the lexicographically smallest tag."""
    return min(degree, key=lambda u: (-degree[u], u))


def extract_large(reservoir, params: ClusterParams, stream: str, window_index: int, t_i: float) -> list[Cluster]:
    clusters = []
    for nodes, degree in connected_components(_samples(reservoir)):
        if len(nodes) < params.min_store:
            break
        members = tuple(sorted(degree.items(), key=lambda kv: (-kv[1], kv[0])))
        clusters.append(Cluster(stream, window_index, float(t_i), name_of(degree), members))
    return clusters


def spectrum(reservoir, min_size: int = 1) -> list[int]:
    """Component sizes of a sample, largest first."""
    return [len(nodes) for nodes, _ in connected_components(_samples(reservoir)) if len(nodes) >= min_size]
