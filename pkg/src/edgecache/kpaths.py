"""k-shortest loopless paths (Yen) and per-piece path-set computation.

For every data piece d and cache p two path collections are produced:

* consumer side: the k shortest p -> consumer paths, minus any path whose
  worst-case delay hop_count * l_hop exceeds the access threshold l_max;
* source side: the k shortest source -> p paths, unfiltered (caching delay
  is unbounded).

Hop count is the path metric (uniform edge weight); ties between
equal-length paths are broken by lexicographic node-sequence order, so the
whole computation is a pure function of (instance, k).
"""

from __future__ import annotations

import heapq
import json
from collections import deque
from dataclasses import dataclass

from .topology import NetworkInstance


@dataclass(frozen=True)
class Path:
    """Simple path as an ordered node sequence."""

    nodes: tuple

    def __post_init__(self):
        ns = tuple(int(x) for x in self.nodes)
        object.__setattr__(self, "nodes", ns)
        if len(ns) < 2:
            raise ValueError("a path needs at least two nodes")
        if len(set(ns)) != len(ns):
            raise ValueError("path must be loopless")

    @property
    def hop_count(self) -> int:
        return len(self.nodes) - 1

    def worst_case_delay_ms(self, l_hop_ms: float) -> float:
        return self.hop_count * l_hop_ms

    def directed_edges(self):
        return tuple(zip(self.nodes[:-1], self.nodes[1:]))

    @property
    def head(self) -> int:
        return self.nodes[0]

    @property
    def tail(self) -> int:
        return self.nodes[-1]


def validate_path(instance: NetworkInstance, path: Path) -> None:
    for u, v in path.directed_edges():
        if v not in instance.neighbors[u]:
            raise ValueError(f"path uses non-edge ({u}, {v})")


def meets_delay_bound(path: Path, l_hop_ms: float, l_max_ms: float) -> bool:
    """Worst-case access-delay predicate: hops * l_hop <= l_max."""
    return path.worst_case_delay_ms(l_hop_ms) <= l_max_ms


def path_delay_ms(path: Path, l_hop_ms: float,
                  edge_delay_ms: dict | None = None) -> float:
    """Worst-case path delay: per-edge measured delays when available
    (either direction of an edge may carry the measurement), otherwise the
    uniform one-hop bound."""
    if edge_delay_ms is None:
        return path.worst_case_delay_ms(l_hop_ms)
    total = 0.0
    for (u, v) in path.directed_edges():
        if (u, v) in edge_delay_ms:
            total += edge_delay_ms[(u, v)]
        elif (v, u) in edge_delay_ms:
            total += edge_delay_ms[(v, u)]
        else:
            raise KeyError(f"no delay sample for edge ({u}, {v})")
    return total


def estimate_l_hop(delay_samples_ms) -> float:
    """Worst-case one-hop delay from measurement samples: the maximum."""
    samples = list(delay_samples_ms)
    if not samples:
        raise ValueError("need at least one delay sample")
    return max(samples)


# ---------------------------------------------------------------------------
# Yen's algorithm over unit-weight undirected graphs
# ---------------------------------------------------------------------------

def _lex_shortest(neighbors, src, dst, banned_nodes, banned_edges):
    """Lexicographically smallest shortest path src -> dst, or None.

    BFS from dst gives hop distances; walking from src always to the
    smallest neighbor that decreases the distance yields the lex-min
    shortest node sequence.
    """
    n = len(neighbors)
    dist = [-1] * n
    if dst in banned_nodes or src in banned_nodes:
        return None
    dist[dst] = 0
    q = deque([dst])
    while q:
        u = q.popleft()
        for v in neighbors[u]:
            if v in banned_nodes or dist[v] >= 0:
                continue
            if (v, u) in banned_edges:  # traversal direction is v -> u
                continue
            dist[v] = dist[u] + 1
            q.append(v)
    if dist[src] < 0:
        return None
    walk = [src]
    u = src
    while u != dst:
        for v in neighbors[u]:
            if v in banned_nodes or dist[v] != dist[u] - 1:
                continue
            if (u, v) in banned_edges:
                continue
            walk.append(v)
            u = v
            break
        else:  # pragma: no cover - BFS guarantees a predecessor exists
            return None
    return tuple(walk)


def yen_k_shortest(instance: NetworkInstance, src: int, dst: int, k: int):
    """The k shortest loopless src -> dst paths in nondecreasing hop count.

    Deterministic: among equal hop counts, paths come out in lexicographic
    node-sequence order.  Returns fewer than k paths when the graph has
    fewer simple paths, and an empty list when dst is unreachable.
    """
    if src == dst:
        raise ValueError("src and dst must differ")
    if k < 1:
        raise ValueError("k must be >= 1")
    neighbors = instance.neighbors

    first = _lex_shortest(neighbors, src, dst, frozenset(), frozenset())
    if first is None:
        return []
    accepted = [first]
    seen = {first}
    candidates = []  # heap of (hops, nodes)
    in_heap = set()

    while len(accepted) < k:
        prev = accepted[-1]
        for i in range(len(prev) - 1):
            spur = prev[i]
            root = prev[: i + 1]
            banned_edges = set()
            for path in accepted:
                if len(path) > i and path[: i + 1] == root:
                    banned_edges.add((path[i], path[i + 1]))
            banned_nodes = frozenset(root[:-1])
            tail = _lex_shortest(neighbors, spur, dst, banned_nodes,
                                 frozenset(banned_edges))
            if tail is None:
                continue
            total = root[:-1] + tail
            if total not in seen and total not in in_heap:
                heapq.heappush(candidates, (len(total) - 1, total))
                in_heap.add(total)
        if not candidates:
            break
        _, best = heapq.heappop(candidates)
        in_heap.discard(best)
        seen.add(best)
        accepted.append(best)
    return [Path(p) for p in accepted]


# ---------------------------------------------------------------------------
# Path sets per (data piece, cache)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PathPair:
    """Per-(piece, cache) collections: source -> cache and cache -> consumer."""

    source_paths: tuple   # Path, ..., flow direction s_d -> p
    consumer_paths: tuple  # Path, ..., flow direction p -> c_d, delay-filtered


@dataclass(frozen=True)
class PathSets:
    k: int
    entries: dict  # (piece_index, cache_id) -> PathPair

    def pair(self, piece_index: int, cache: int) -> PathPair:
        return self.entries[(piece_index, cache)]

    def caches_for(self, piece_index: int):
        return sorted(c for (d, c) in self.entries if d == piece_index)

    def usable_caches(self, piece_index: int):
        """Caches offering at least one path on each side."""
        out = []
        for c in self.caches_for(piece_index):
            pp = self.entries[(piece_index, c)]
            if pp.source_paths and pp.consumer_paths:
                out.append(c)
        return out

    def to_json(self) -> str:
        doc = {"k": self.k, "entries": []}
        for (d, p) in sorted(self.entries):
            pp = self.entries[(d, p)]
            doc["entries"].append({
                "piece": d,
                "cache": p,
                "source_paths": [list(path.nodes) for path in pp.source_paths],
                "consumer_paths": [list(path.nodes) for path in pp.consumer_paths],
            })
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"

    @staticmethod
    def from_json(text: str) -> "PathSets":
        doc = json.loads(text)
        entries = {}
        for row in doc["entries"]:
            entries[(row["piece"], row["cache"])] = PathPair(
                source_paths=tuple(Path(tuple(p)) for p in row["source_paths"]),
                consumer_paths=tuple(Path(tuple(p)) for p in row["consumer_paths"]),
            )
        return PathSets(k=doc["k"], entries=entries)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @staticmethod
    def load(path) -> "PathSets":
        with open(path, "r", encoding="utf-8") as fh:
            return PathSets.from_json(fh.read())


DEFAULT_K = 4


def compute_path_sets(instance: NetworkInstance, k: int = DEFAULT_K,
                      edge_delay_ms: dict | None = None) -> PathSets:
    """Delay-filtered consumer-side and unfiltered source-side path sets.

    The consumer side takes the k shortest cache -> consumer paths and then
    removes those whose worst-case delay exceeds l_max; the source side
    keeps its k shortest source -> cache paths unconditionally.  Empty
    collections are legal output (schedulers skip such caches).

    By default a path's delay is hops * l_hop; passing per-edge measured
    delays via ``edge_delay_ms`` filters on their per-path sums instead (the
    path ranking metric stays hop count either way).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    cache = {}

    def k_shortest(a, b):
        key = (a, b)
        if key not in cache:
            cache[key] = tuple(yen_k_shortest(instance, a, b, k))
        return cache[key]

    entries = {}
    for d_idx, piece in enumerate(instance.pieces):
        for p in instance.caches:
            consumer = tuple(
                path for path in k_shortest(p, piece.consumer)
                if path_delay_ms(path, instance.l_hop_ms, edge_delay_ms)
                <= instance.l_max_ms
            )
            source = k_shortest(piece.source, p)
            entries[(d_idx, p)] = PathPair(source_paths=source,
                                           consumer_paths=consumer)
    return PathSets(k=k, entries=entries)
