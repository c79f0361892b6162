"""Independent oracles shared by the test modules.

Everything here recomputes results by brute force (exhaustive enumeration,
cycle stepping, direct formula evaluation) so the production code paths are
checked against logic that does not share their implementation.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from edgecache.kpaths import Path
from edgecache.schedule import Assignment, Schedule, network_lifetime
from edgecache.topology import DataPiece, NetworkInstance, build_neighborhoods


class GraphStub:
    """Bare adjacency carrier; yen_k_shortest only reads .neighbors."""

    def __init__(self, neighbors):
        self.neighbors = tuple(tuple(sorted(a)) for a in neighbors)


def random_connected_graph(rng, n, extra_edge_prob=0.3) -> GraphStub:
    """Random spanning tree plus random extra edges; always connected."""
    adj = [set() for _ in range(n)]
    order = rng.permutation(n)
    for i in range(1, n):
        u = int(order[i])
        v = int(order[rng.integers(0, i)])
        adj[u].add(v)
        adj[v].add(u)
    for u in range(n):
        for v in range(u + 1, n):
            if v not in adj[u] and rng.random() < extra_edge_prob:
                adj[u].add(v)
                adj[v].add(u)
    return GraphStub(adj)


def all_simple_paths(neighbors, src, dst, max_hops=None):
    """Every loopless src -> dst node sequence, sorted by (hops, lexicographic)."""
    paths = []
    stack = [(src, (src,))]
    while stack:
        u, walk = stack.pop()
        if u == dst:
            paths.append(walk)
            continue
        if max_hops is not None and len(walk) - 1 >= max_hops:
            continue
        for v in neighbors[u]:
            if v not in walk:
                stack.append((v, walk + (v,)))
    paths.sort(key=lambda p: (len(p), p))
    return paths


def geometric_instance(rng, n, *, radius=0.45, n_caches=1, pieces_spec=None,
                       field_energy=(100.0, 200.0), cache_energy=(1000.0, 2000.0),
                       eps=1.0, l_hop_ms=28.0, l_max_ms=1e9, tau_s=1.0,
                       report_cost_j=0.0, max_tries=200) -> NetworkInstance:
    """Random geometric graph in the unit square as a valid instance.

    pieces_spec: list of (gen_rate, cons_rate); endpoints drawn from non-cache
    nodes.  Retries until the graph is connected.
    """
    if pieces_spec is None:
        pieces_spec = [(1.0, 1.0)]
    for _ in range(max_tries):
        pos = rng.random((n, 2))
        edges = build_neighborhoods(pos, radius, 1.0)
        adj = [set() for _ in range(n)]
        for u, v in edges:
            adj[u].add(v)
            adj[v].add(u)
        seen = {0}
        frontier = [0]
        while frontier:
            u = frontier.pop()
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    frontier.append(v)
        if len(seen) != n:
            continue
        ids = rng.permutation(n)
        caches = tuple(sorted(int(x) for x in ids[:n_caches]))
        field = [int(x) for x in ids[n_caches:]]
        if len(field) <= n_caches or len(field) < 2:
            continue
        energy = np.empty(n)
        for u in range(n):
            lo, hi = cache_energy if u in caches else field_energy
            energy[u] = rng.uniform(lo, hi)
        pieces = []
        ok = True
        for g, c in pieces_spec:
            s, t = rng.choice(field, size=2, replace=False)
            pieces.append(DataPiece(int(s), int(t), float(g), float(c)))
        tx = {}
        for u, v in edges:
            tx[(u, v)] = eps
            tx[(v, u)] = eps
        try:
            return NetworkInstance(
                positions=pos, energy_j=energy, caches=caches, edges=edges,
                tx_cost=tx, pieces=tuple(pieces), tau_s=tau_s,
                l_hop_ms=l_hop_ms, l_max_ms=l_max_ms, gamma=1.0, rho_m=radius,
                report_cost_j=report_cost_j)
        except ValueError:
            continue
    raise RuntimeError("could not sample a usable geometric instance")


def line_instance(n, caches, pieces, energies, eps=2.0, l_max_ms=1e9,
                  l_hop_ms=28.0, tau_s=1.0, report_cost_j=0.0) -> NetworkInstance:
    pos = np.array([[float(i), 0.0] for i in range(n)])
    edges = tuple((i, i + 1) for i in range(n - 1))
    tx = {}
    for u, v in edges:
        if isinstance(eps, dict):
            tx[(u, v)] = eps[(u, v)]
            tx[(v, u)] = eps[(v, u)]
        else:
            tx[(u, v)] = eps
            tx[(v, u)] = eps
    return NetworkInstance(
        positions=pos, energy_j=np.asarray(energies, dtype=np.float64),
        caches=caches, edges=edges, tx_cost=tx, pieces=tuple(pieces),
        tau_s=tau_s, l_hop_ms=l_hop_ms, l_max_ms=l_max_ms, gamma=1.0,
        rho_m=1.1, report_cost_j=report_cost_j)


def instance_from_graph(graph, *, caches, pieces, energies, eps=1.0,
                        l_hop_ms=28.0, l_max_ms=1e9, tau_s=1.0,
                        report_cost_j=0.0) -> NetworkInstance:
    """Realize an arbitrary adjacency as an instance by co-locating all
    nodes (distance 0 satisfies the neighborhood rule for every pair)."""
    n = len(graph.neighbors)
    edges = tuple(sorted((u, v) for u in range(n)
                         for v in graph.neighbors[u] if u < v))
    tx = {}
    for u, v in edges:
        tx[(u, v)] = eps
        tx[(v, u)] = eps
    return NetworkInstance(
        positions=np.zeros((n, 2)), energy_j=np.asarray(energies, np.float64),
        caches=caches, edges=edges, tx_cost=tx, pieces=tuple(pieces),
        tau_s=tau_s, l_hop_ms=l_hop_ms, l_max_ms=l_max_ms, gamma=1.0,
        rho_m=1.0, report_cost_j=report_cost_j)


def sparse_two_piece_instance(rng, max_candidates=400):
    """Small sparse instance with 2 caches and 2 pieces whose full simple-
    path candidate pool stays enumerable; None when the draw is too dense."""
    n = int(rng.integers(8, 13))
    g = random_connected_graph(rng, n, extra_edge_prob=0.06)
    ids = rng.permutation(n)
    caches = tuple(sorted(int(x) for x in ids[:2]))
    field = [int(x) for x in ids[2:]]
    energy = np.array([rng.uniform(1000.0, 2000.0) if u in caches
                       else rng.uniform(100.0, 200.0) for u in range(n)])
    pieces = []
    for _ in range(2):
        s, t = rng.choice(field, size=2, replace=False)
        pieces.append(DataPiece(int(s), int(t),
                                float(rng.integers(1, 5)),
                                float(rng.integers(1, 5))))
    inst = instance_from_graph(g, caches=caches, pieces=pieces, energies=energy)
    for d in range(2):
        if len(piece_candidates(inst, d, use_delay_filter=False)) > max_candidates:
            return None
    return inst


def piece_candidates(instance, d, use_delay_filter=True, max_hops=None):
    """All (cache, source-path, consumer-path) choices for piece d, from a
    full simple-path enumeration."""
    piece = instance.pieces[d]
    cands = []
    limit = instance.max_hops if use_delay_filter else None
    for p in instance.caches:
        for sp in all_simple_paths(instance.neighbors, piece.source, p, max_hops):
            for cp in all_simple_paths(instance.neighbors, p, piece.consumer,
                                       limit if limit is not None else max_hops):
                if use_delay_filter and (len(cp) - 1) * instance.l_hop_ms > \
                        instance.l_max_ms:
                    continue
                cands.append(Assignment(cache=p, source_path=Path(sp),
                                        consumer_path=Path(cp)))
    return cands


def exhaustive_best_lifetime(instance, use_delay_filter=True, max_hops=None):
    """Best network lifetime over every joint integral assignment."""
    per_piece = [piece_candidates(instance, d, use_delay_filter, max_hops)
                 for d in range(len(instance.pieces))]
    best = -math.inf
    for combo in itertools.product(*per_piece):
        life = network_lifetime(instance, Schedule(tuple(combo)))
        if life > best:
            best = life
    return best
