"""Neighbor Joining over stream distances, and a k-gram tree distance.

Trees are unrooted with valued edges, stored as an adjacency map. Leaves
carry stream tags; internal nodes are named ``<0>``, ``<1>``, ...
"""

from __future__ import annotations

import itertools
import math
from collections import Counter, deque
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np


def _internal(i: int) -> str:
    return f"<{i}>"


def _is_internal(name: str) -> bool:
    return name.startswith("<") and name.endswith(">")


@dataclass
class PhyloTree:
    adj: dict[str, dict[str, float]]
    leaves: tuple[str, ...]

    @classmethod
    def from_edges(cls, leaves: Sequence[str], edges: Sequence[tuple[str, str, float]]) -> PhyloTree:
        adj: dict[str, dict[str, float]] = {leaf: {} for leaf in leaves}
        for u, v, length in edges:
            adj.setdefault(u, {})[v] = float(length)
            adj.setdefault(v, {})[u] = float(length)
        tree = cls(adj, tuple(leaves))
        tree.check()
        return tree

    @property
    def nodes(self) -> list[str]:
        return list(self.adj)

    def edges(self) -> list[tuple[str, str, float]]:
        return [(u, v, w) for u, nbrs in self.adj.items() for v, w in nbrs.items() if u < v]

    def check(self) -> None:
        leaves = set(self.leaves)
        if len(leaves) != len(self.leaves):
            raise ValueError("duplicate leaf tag")
        for leaf in leaves:
            if _is_internal(leaf):
                raise ValueError(f"leaf tag {leaf!r} collides with internal node naming")
        if any(w < 0 for _, _, w in self.edges()):
            raise ValueError("negative edge length")
        if len(self.edges()) != len(self.adj) - 1:
            raise ValueError("not a tree: edge count must be node count - 1")
        if self.adj and len(self._distances(next(iter(self.adj)))) != len(self.adj):
            raise ValueError("tree is disconnected")
        for node, nbrs in self.adj.items():
            if node in leaves and len(nbrs) > 1:
                raise ValueError(f"leaf {node!r} has degree {len(nbrs)}")
            if node not in leaves and len(nbrs) < 2:
                raise ValueError(f"internal node {node!r} is a leaf")

    def _distances(self, source: str) -> dict[str, float]:
        dist = {source: 0.0}
        queue = deque([source])
        while queue:
            u = queue.popleft()
            for v, w in self.adj[u].items():
                if v not in dist:
                    dist[v] = dist[u] + w
                    queue.append(v)
        return dist

    def path_length(self, a: str, b: str) -> float:
        for leaf in (a, b):
            if leaf not in self.adj:
                raise KeyError(f"unknown node {leaf!r}")
        # sum from a fixed endpoint so the float result is exactly symmetric
        a, b = sorted((a, b))
        return self._distances(a)[b]

    def leaf_matrix(self) -> np.ndarray:
        out = np.zeros((len(self.leaves), len(self.leaves)))
        for i, a in enumerate(self.leaves):
            dist = self._distances(a)
            for j, b in enumerate(self.leaves):
                out[i, j] = dist[b]
        return out

    def diameter(self) -> float:
        return float(self.leaf_matrix().max()) if self.leaves else 0.0

    def splits(self) -> set[frozenset[str]]:
        """Leaf bipartitions of the internal edges, each given by the side without the smallest leaf."""
        anchor = min(self.leaves)
        out = set()
        for u, v, _ in self.edges():
            if u in self.leaves or v in self.leaves:
                continue
            side = self._side(u, v)
            leaves = frozenset(x for x in side if x in self.leaves)
            if anchor in leaves:
                leaves = frozenset(self.leaves) - leaves
            out.add(leaves)
        return out

    def _side(self, start: str, blocked: str) -> set[str]:
        seen = {start, blocked}
        stack = [start]
        while stack:
            u = stack.pop()
            for v in self.adj[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        seen.discard(blocked)
        return seen

    def neighbors(self, leaf: str) -> list[tuple[str, float]]:
        """Other leaves ordered by normalized tree distance, nearest first."""
        if leaf not in self.leaves:
            raise KeyError(f"unknown leaf {leaf!r}")
        others = [(other, leaf_distance(self, leaf, other)) for other in self.leaves if other != leaf]
        return sorted(others, key=lambda x: (x[1], x[0]))

    def to_newick(self, precision: int = 10) -> str:
        return to_newick(self, precision)


def distance_from_correlation(A) -> np.ndarray:
    """d(i, j) = 1 - A(i, j) with a zero diagonal."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("correlation matrix must be square")
    if not np.allclose(A, A.T, atol=1e-12):
        raise ValueError("correlation matrix is not symmetric")
    if (A < -1e-12).any() or (A > 1 + 1e-12).any():
        raise ValueError("correlations must lie in [0, 1]")
    if not np.allclose(np.diag(A), 1.0):
        raise ValueError("correlation matrix needs a unit diagonal")
    d = 1.0 - A
    np.fill_diagonal(d, 0.0)
    return d


def _clamped(d_ij: float, li: float) -> tuple[float, float]:
    # a negative branch is set to 0 and its deficit moved to the sibling branch
    lj = d_ij - li
    if li < 0:
        li, lj = 0.0, d_ij
    elif lj < 0:
        li, lj = d_ij, 0.0
    return max(li, 0.0), max(lj, 0.0)


def neighbor_joining(d, labels: Sequence[str]) -> PhyloTree:
    """Saitou-Nei Neighbor Joining on a symmetric, zero-diagonal matrix."""
    D = np.array(d, dtype=float)
    labels = list(labels)
    n = len(labels)
    if D.shape != (n, n):
        raise ValueError("distance matrix shape does not match labels")
    if not np.allclose(D, D.T, atol=1e-12):
        raise ValueError("distance matrix is not symmetric")
    if not np.allclose(np.diag(D), 0.0):
        raise ValueError("distance matrix needs a zero diagonal")
    if n == 0:
        raise ValueError("need at least one taxon")
    if n == 1:
        return PhyloTree({labels[0]: {}}, (labels[0],))
    if n == 2:
        return PhyloTree.from_edges(labels, [(labels[0], labels[1], max(D[0, 1], 0.0))])

    active = list(labels)
    edges = []
    counter = itertools.count()
    while len(active) > 3:
        m = len(active)
        r = D.sum(axis=1)
        Q = (m - 2) * D - r[:, None] - r[None, :]
        np.fill_diagonal(Q, np.inf)
        i, j = np.unravel_index(np.argmin(Q), Q.shape)
        i, j = min(i, j), max(i, j)
        li = 0.5 * D[i, j] + (r[i] - r[j]) / (2 * (m - 2))
        li, lj = _clamped(D[i, j], li)
        u = _internal(next(counter))
        edges += [(u, active[i], li), (u, active[j], lj)]
        new_row = 0.5 * (D[i] + D[j] - D[i, j])
        keep = [x for x in range(m) if x not in (i, j)]
        D2 = np.empty((m - 1, m - 1))
        D2[:-1, :-1] = D[np.ix_(keep, keep)]
        D2[-1, :-1] = D2[:-1, -1] = new_row[keep]
        D2[-1, -1] = 0.0
        D = D2
        active = [active[x] for x in keep] + [u]

    center = _internal(next(counter))
    a, b, c = range(3)
    la = 0.5 * (D[a, b] + D[a, c] - D[b, c])
    lb = 0.5 * (D[a, b] + D[b, c] - D[a, c])
    lc = 0.5 * (D[a, c] + D[b, c] - D[a, b])
    edges += [(center, active[x], max(length, 0.0)) for x, length in zip((a, b, c), (la, lb, lc))]
    return PhyloTree.from_edges(labels, edges)


def leaf_distance(tree: PhyloTree, i: str, j: str) -> float:
    """Path length between two leaves divided by the tree diameter."""
    for leaf in (i, j):
        if leaf not in tree.leaves:
            raise KeyError(f"unknown leaf {leaf!r}")
    if i == j:
        return 0.0
    diameter = tree.diameter()
    if diameter <= 0:
        return 0.0
    return min(tree.path_length(i, j) / diameter, 1.0)


# ----- k-gram profiles -----

def _centroids(tree: PhyloTree) -> list[str]:
    nodes = tree.nodes
    if len(nodes) <= 2:
        return sorted(nodes)
    root = nodes[0]
    parent = {root: None}
    order = [root]
    for u in order:
        for v in tree.adj[u]:
            if v not in parent:
                parent[v] = u
                order.append(v)
    size = dict.fromkeys(nodes, 1)
    for u in reversed(order[1:]):
        size[parent[u]] += size[u]
    total = len(nodes)
    worst = {}
    for u in nodes:
        branches = [size[v] for v in tree.adj[u] if parent.get(v) == u]
        branches.append(total - size[u])
        worst[u] = max(branches)
    best = min(worst.values())
    return sorted(u for u in nodes if worst[u] == best)


def _label(tree: PhyloTree, node: str) -> str:
    return node if node in tree.leaves else "*"


def _signatures(tree: PhyloTree, root: str, k: int) -> Counter:
    """Depth-k truncated subtree signature of every node, for one rooting."""
    parent = {root: None}
    order = [root]
    for u in order:
        for v in sorted(tree.adj[u]):
            if v not in parent:
                parent[v] = u
                order.append(v)
    children = {u: [v for v in tree.adj[u] if parent.get(v) == u and v != parent[u]] for u in order}

    # sig[depth][node]; depth 0 is the bare label
    sig = {u: _label(tree, u) for u in order}
    for _ in range(k):
        nxt = {}
        for u in order:
            kids = sorted(sig[v] for v in children[u])
            nxt[u] = f"{_label(tree, u)}({','.join(kids)})" if kids else _label(tree, u)
        sig = nxt
    return Counter(sig.values())


def kgram_profile(tree: PhyloTree, k: int = 2) -> Counter:
    """Multiset of depth-k subtree signatures, rooted canonically at a centroid."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not tree.adj:
        return Counter()
    best = None
    for root in _centroids(tree):
        profile = _signatures(tree, root, k)
        key = sorted(profile.elements())
        if best is None or key < best[0]:
            best = (key, profile)
    return best[1]


def profile_l1(p: Counter, q: Counter) -> int:
    return sum(abs(p[s] - q[s]) for s in set(p) | set(q))


def tree_move_distance(t1: PhyloTree, t2: PhyloTree, k: int = 2) -> int:
    """ceil(L1(profile(t1), profile(t2)) / 2)."""
    return math.ceil(profile_l1(kgram_profile(t1, k), kgram_profile(t2, k)) / 2)


# ----- Newick -----

_SPECIAL = set("()[]:;,' \t\n")


def _quote(name: str) -> str:
    if any(ch in _SPECIAL for ch in name):
        return "'" + name.replace("'", "''") + "'"
    return name


def _fmt(length: float, precision: int) -> str:
    return f"{length:.{precision}g}"


def to_newick(tree: PhyloTree, precision: int = 10) -> str:
    if len(tree.adj) == 1:
        return _quote(tree.leaves[0]) + ";"
    if len(tree.leaves) == 2 and len(tree.adj) == 2:
        a, b = sorted(tree.leaves)
        return f"({_quote(b)}:{_fmt(tree.adj[a][b], precision)}){_quote(a)};"
    anchor = min(tree.leaves)
    root = next(iter(tree.adj[anchor]))

    def write(u: str, parent: str | None) -> str:
        kids = sorted(v for v in tree.adj[u] if v != parent)
        if not kids:
            return _quote(u)
        inner = ",".join(f"{write(v, u)}:{_fmt(tree.adj[u][v], precision)}" for v in kids)
        return f"({inner})"

    return write(root, None) + ";"


class _NewickParser:
    def __init__(self, text: str):
        self.text = text.strip()
        self.pos = 0
        self.counter = itertools.count()
        self.edges: list[tuple[str, str, float]] = []
        self.leaves: list[str] = []

    def peek(self) -> str:
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, ch: str) -> None:
        if self.peek() != ch:
            raise ValueError(f"newick: expected {ch!r} at offset {self.pos}")
        self.pos += 1

    def name(self) -> str:
        if self.peek() == "'":
            self.pos += 1
            out = []
            while True:
                end = self.text.index("'", self.pos)
                out.append(self.text[self.pos:end])
                self.pos = end + 1
                if self.text[self.pos:self.pos + 1] == "'":
                    out.append("'")
                    self.pos += 1
                else:
                    return "".join(out)
        start = self.pos
        while self.pos < len(self.text) and self.text[self.pos] not in _SPECIAL:
            self.pos += 1
        return self.text[start:self.pos]

    def length(self) -> float:
        if self.peek() != ":":
            return 0.0
        self.pos += 1
        self.peek()
        start = self.pos
        while self.pos < len(self.text) and self.text[self.pos] not in _SPECIAL:
            self.pos += 1
        return float(self.text[start:self.pos])

    def subtree(self) -> str:
        children = []
        if self.peek() == "(":
            self.pos += 1
            while True:
                child = self.subtree()
                children.append((child, self.length()))
                if self.peek() == ",":
                    self.pos += 1
                    continue
                self.expect(")")
                break
        label = self.name()
        if not children:
            if not label:
                raise ValueError("newick: unnamed leaf")
            self.leaves.append(label)
            return label
        node = label if label else _internal(next(self.counter))
        if label:
            self.leaves.append(label)
        for child, length in children:
            self.edges.append((node, child, length))
        return node


def from_newick(text: str) -> PhyloTree:
    """Parse a Newick string into an unrooted tree.

    An unlabeled degree-2 root is suppressed by merging its two edges.
    """
    parser = _NewickParser(text)
    root = parser.subtree()
    parser.expect(";")
    edges = parser.edges
    if _is_internal(root):
        incident = [e for e in edges if e[0] == root]
        if len(incident) == 2:
            (_, a, la), (_, b, lb) = incident
            edges = [e for e in edges if e[0] != root] + [(a, b, la + lb)]
    if not edges:
        return PhyloTree({root: {}}, (root,))
    return PhyloTree.from_edges(parser.leaves, edges)
