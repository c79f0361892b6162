"""Decision variables, lifetime algebra, and the greedy cache/path scheduler.

A schedule assigns every data piece one cache plus one (source-side,
consumer-side) path pair.  The directed-edge indicators of the chosen paths
induce the aggregate per-edge rate a_uv; a node's lifetime is its energy
divided by the per-cycle energy it spends forwarding, and the network
lifetime is the minimum over nodes that transmit anything.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .kpaths import Path, PathSets, meets_delay_bound, validate_path
from .topology import NetworkInstance


class SchedulingError(RuntimeError):
    """No feasible cache/path combination for some data piece."""

    def __init__(self, piece_index: int, message: str):
        super().__init__(message)
        self.piece_index = piece_index


@dataclass(frozen=True)
class Assignment:
    cache: int
    source_path: Path     # s_d -> cache
    consumer_path: Path   # cache -> c_d


@dataclass(frozen=True)
class Schedule:
    assignments: tuple  # Assignment per data piece, in instance order

    def to_json(self, instance: NetworkInstance | None = None) -> str:
        doc = {
            "pieces": [
                {
                    "cache": a.cache,
                    "source_path": list(a.source_path.nodes),
                    "consumer_path": list(a.consumer_path.nodes),
                }
                for a in self.assignments
            ]
        }
        if instance is not None:
            load = aggregate_load(instance, self)
            doc["edge_loads"] = [
                {"u": u, "v": v, "rate": load[(u, v)]}
                for (u, v) in sorted(load)
            ]
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"

    @staticmethod
    def from_json(text: str) -> "Schedule":
        doc = json.loads(text)
        return Schedule(tuple(
            Assignment(
                cache=row["cache"],
                source_path=Path(tuple(row["source_path"])),
                consumer_path=Path(tuple(row["consumer_path"])),
            )
            for row in doc["pieces"]
        ))


def aggregate_load(instance: NetworkInstance, schedule: Schedule) -> dict:
    """Aggregate rate a_uv (pieces/cycle) per directed edge."""
    load: dict = {}
    for piece, a in zip(instance.pieces, schedule.assignments):
        for e in a.source_path.directed_edges():
            load[e] = load.get(e, 0.0) + piece.gen_rate
        for e in a.consumer_path.directed_edges():
            load[e] = load.get(e, 0.0) + piece.cons_rate
    return load


def node_drain_per_cycle(instance: NetworkInstance, load: dict, u: int) -> float:
    """Energy (J) node u spends per cycle forwarding under the given load."""
    drain = 0.0
    for (a, b), rate in load.items():
        if a == u:
            if b not in instance.neighbors[u]:
                raise ValueError(f"load references non-edge ({a}, {b})")
            drain += instance.tx_cost[(a, b)] * rate
    return drain


def node_lifetime(instance: NetworkInstance, load: dict, u: int) -> float:
    """Lifetime of node u in cycles: E_u over its per-cycle drain (inf if idle)."""
    drain = node_drain_per_cycle(instance, load, u)
    if drain <= 0.0:
        return float("inf")
    return float(instance.energy_j[u]) / drain


def drain_vector(instance: NetworkInstance, schedule: Schedule) -> np.ndarray:
    """Per-node forwarding energy per cycle (J) under the schedule."""
    drain = np.zeros(instance.n_nodes, dtype=np.float64)
    load = aggregate_load(instance, schedule)
    for (a, b), rate in load.items():
        drain[a] += instance.tx_cost[(a, b)] * rate
    return drain


def network_lifetime(instance: NetworkInstance, schedule: Schedule) -> float:
    """Minimum lifetime (cycles) over nodes with an active outgoing edge."""
    if not schedule.assignments:
        return float("inf")
    drain = drain_vector(instance, schedule)
    return float(_kernels.min_lifetime_cycles(instance.energy_j, drain))


def validate_schedule(instance: NetworkInstance, schedule: Schedule) -> None:
    """Check structural feasibility plus the access-delay guarantee."""
    if len(schedule.assignments) != len(instance.pieces):
        raise ValueError("schedule must cover every data piece")
    for d, (piece, a) in enumerate(zip(instance.pieces, schedule.assignments)):
        if a.cache not in instance.cache_set:
            raise ValueError(f"piece {d}: node {a.cache} is not a cache")
        validate_path(instance, a.source_path)
        validate_path(instance, a.consumer_path)
        if a.source_path.head != piece.source or a.source_path.tail != a.cache:
            raise ValueError(f"piece {d}: source path must run source -> cache")
        if a.consumer_path.head != a.cache or a.consumer_path.tail != piece.consumer:
            raise ValueError(f"piece {d}: consumer path must run cache -> consumer")
        if not meets_delay_bound(a.consumer_path, instance.l_hop_ms,
                                 instance.l_max_ms):
            raise ValueError(
                f"piece {d}: consumer path delay "
                f"{a.consumer_path.worst_case_delay_ms(instance.l_hop_ms)} ms "
                f"exceeds {instance.l_max_ms} ms"
            )


# ---------------------------------------------------------------------------
# Packed candidate table shared by the greedy scan and the periodic loop
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PackedCandidates:
    order: tuple          # piece indices in processing order
    piece_ptr: np.ndarray  # [n_pieces + 1] candidate ranges per processed piece
    cand_ptr: np.ndarray   # [n_cand + 1] (node, delta) ranges per candidate
    flat_nodes: np.ndarray
    flat_delta: np.ndarray
    cand_meta: tuple      # per candidate: (cache, i_source, j_consumer)


def processing_order(instance: NetworkInstance) -> tuple:
    """Piece indices by nonincreasing consumption rate, ties by index."""
    return tuple(sorted(range(len(instance.pieces)),
                        key=lambda d: (-instance.pieces[d].cons_rate, d)))


def pack_candidates(instance: NetworkInstance, path_sets: PathSets) -> PackedCandidates:
    order = processing_order(instance)
    piece_ptr = [0]
    cand_ptr = [0]
    flat_nodes: list = []
    flat_delta: list = []
    meta: list = []
    for d in order:
        piece = instance.pieces[d]
        for p in path_sets.caches_for(d):
            pair = path_sets.pair(d, p)
            if not pair.source_paths or not pair.consumer_paths:
                continue
            for i, sp in enumerate(pair.source_paths):
                for j, cp in enumerate(pair.consumer_paths):
                    delta: dict = {}
                    for (u, v) in sp.directed_edges():
                        delta[u] = delta.get(u, 0.0) + \
                            instance.tx_cost[(u, v)] * piece.gen_rate
                    for (u, v) in cp.directed_edges():
                        delta[u] = delta.get(u, 0.0) + \
                            instance.tx_cost[(u, v)] * piece.cons_rate
                    for u in set(sp.nodes) | set(cp.nodes):
                        delta.setdefault(u, 0.0)
                    for u in sorted(delta):
                        flat_nodes.append(u)
                        flat_delta.append(delta[u])
                    cand_ptr.append(len(flat_nodes))
                    meta.append((p, i, j))
        piece_ptr.append(len(cand_ptr) - 1)
    return PackedCandidates(
        order=order,
        piece_ptr=np.asarray(piece_ptr, dtype=np.int64),
        cand_ptr=np.asarray(cand_ptr, dtype=np.int64),
        flat_nodes=np.asarray(flat_nodes, dtype=np.int64),
        flat_delta=np.asarray(flat_delta, dtype=np.float64),
        cand_meta=tuple(meta),
    )


def schedule_from_winners(instance: NetworkInstance, path_sets: PathSets,
                          packed: PackedCandidates, winners) -> Schedule:
    by_piece: dict = {}
    for pos, d in enumerate(packed.order):
        cand = int(winners[pos])
        cache, i, j = packed.cand_meta[cand]
        pair = path_sets.pair(d, cache)
        by_piece[d] = Assignment(cache=cache,
                                 source_path=pair.source_paths[i],
                                 consumer_path=pair.consumer_paths[j])
    return Schedule(tuple(by_piece[d] for d in range(len(instance.pieces))))


def data_cache_access(instance: NetworkInstance, path_sets: PathSets,
                      energy: np.ndarray | None = None) -> Schedule:
    """Greedy schedule: per piece, the cache and path pair whose
    trial-committed load maximizes the minimum lifetime over its own nodes.

    Pieces are processed from the most to the least frequently consumed;
    committed load carries over, so later pieces see updated lifetimes.
    ``energy`` overrides the instance energies (used by periodic
    rescheduling on residual energy maps).
    """
    packed = pack_candidates(instance, path_sets)
    e = instance.energy_j if energy is None else np.asarray(energy, np.float64)
    drain = np.zeros(instance.n_nodes, dtype=np.float64)
    winners, ok = _kernels.dca_greedy_scan(
        e, packed.piece_ptr, packed.cand_ptr,
        packed.flat_nodes, packed.flat_delta, drain)
    if not ok:
        pos = int(np.argmax(winners < 0))
        d = packed.order[pos]
        raise SchedulingError(
            d, f"piece {d}: no cache offers both a source path and a "
               f"delay-feasible consumer path")
    return schedule_from_winners(instance, path_sets, packed, winners)
