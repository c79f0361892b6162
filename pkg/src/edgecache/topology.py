"""Network and data model: grid instances with cache nodes and data pieces.

A network instance is an undirected graph of field nodes plus a small set of
energy-rich cache nodes.  Edges follow the neighborhood rule: (u, v) is a
link iff gamma * rho >= euclidean_distance(u, v).  Data pieces are
(source, consumer, gen_rate, cons_rate) tuples; rates are pieces per time
cycle tau.  All energies are stored in joules internally (1 Wh = 3600 J).
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

WH_TO_J = 3600.0

# Relative slack on the squared neighborhood threshold so that a distance
# that mathematically equals gamma*rho stays inside the neighborhood despite
# floating-point rounding.
_EDGE_REL_SLACK = 1e-9


class ConfigError(ValueError):
    """Invalid generator configuration (CLI exit code 2)."""


class InstanceError(ValueError):
    """Instance violates a model invariant or cannot be generated (exit 3)."""


@dataclass(frozen=True)
class DataPiece:
    """One data flow: source -> cache (gen_rate), cache -> consumer (cons_rate)."""

    source: int
    consumer: int
    gen_rate: float
    cons_rate: float

    def __post_init__(self):
        if self.source == self.consumer:
            raise InstanceError("data piece source and consumer must differ")
        if self.gen_rate <= 0 or self.cons_rate <= 0:
            raise InstanceError("data piece rates must be positive")


def build_neighborhoods(positions, rho: float, gamma: float):
    """Edge set from the neighborhood rule gamma*rho >= distance(u, v).

    Returns a sorted tuple of undirected pairs (u, v) with u < v.  The
    boundary is inclusive; a tiny relative slack absorbs fp rounding so that
    distances mathematically equal to the threshold produce an edge.
    Duplicate positions are allowed (distance 0 always qualifies).
    """
    pos = np.asarray(positions, dtype=np.float64)
    if pos.ndim != 2 or pos.shape[1] != 2:
        raise ValueError("positions must be an (n, 2) array")
    if not np.all(np.isfinite(pos)):
        raise ValueError("positions must be finite")
    if rho <= 0:
        raise ValueError("rho must be positive")
    if not (0.0 < gamma <= 1.0):
        raise ValueError("gamma must satisfy 0 < gamma <= 1")
    d2 = np.sum((pos[:, None, :] - pos[None, :, :]) ** 2, axis=2)
    thr2 = (gamma * rho) ** 2 * (1.0 + _EDGE_REL_SLACK)
    n = len(pos)
    edges = []
    for u in range(n):
        for v in range(u + 1, n):
            if d2[u, v] <= thr2:
                edges.append((u, v))
    return tuple(edges)


@dataclass(frozen=True, eq=False)
class NetworkInstance:
    """Immutable problem instance; safe to share across workers."""

    positions: np.ndarray          # (n, 2) meters
    energy_j: np.ndarray           # (n,) initial energy, joules
    caches: tuple                  # sorted node ids, the cache set P
    edges: tuple                   # sorted undirected pairs (u, v), u < v
    tx_cost: dict                  # directed (u, v) -> joules per piece
    pieces: tuple                  # DataPiece, ...
    tau_s: float                   # time-cycle length (seconds)
    l_hop_ms: float                # worst-case one-hop delay (milliseconds)
    l_max_ms: float                # end-to-end access-delay threshold (ms)
    gamma: float
    rho_m: float
    report_cost_j: float           # per-report energy for periodic status messages

    def __post_init__(self):
        object.__setattr__(self, "positions",
                           np.ascontiguousarray(self.positions, dtype=np.float64))
        object.__setattr__(self, "energy_j",
                           np.ascontiguousarray(self.energy_j, dtype=np.float64))
        object.__setattr__(self, "caches", tuple(sorted(int(c) for c in self.caches)))
        object.__setattr__(self, "edges",
                           tuple(sorted((min(u, v), max(u, v)) for u, v in self.edges)))
        object.__setattr__(self, "pieces", tuple(self.pieces))
        self._validate()

    # -- invariants ---------------------------------------------------------

    def _validate(self):
        n = self.n_nodes
        if n == 0:
            raise InstanceError("instance has no nodes")
        if len(self.energy_j) != n:
            raise InstanceError("energy vector length mismatch")
        if np.any(self.energy_j <= 0):
            raise InstanceError("node energies must be positive")
        cache_set = set(self.caches)
        if not cache_set:
            raise InstanceError("cache set must be nonempty")
        if any(c < 0 or c >= n for c in cache_set):
            raise InstanceError("cache id out of range")
        n_field = n - len(cache_set)
        if len(cache_set) >= n_field:
            raise InstanceError("cache set must be a strict minority: |P| < |V - P|")
        field_ids = [u for u in range(n) if u not in cache_set]
        if field_ids and cache_set:
            if min(self.energy_j[c] for c in cache_set) <= max(
                self.energy_j[u] for u in field_ids
            ):
                raise InstanceError("every cache energy must exceed every field energy")
        if self.tau_s <= 0:
            raise InstanceError("tau must be positive")
        if not (0.0 < self.gamma <= 1.0):
            raise InstanceError("gamma must satisfy 0 < gamma <= 1")
        if self.l_hop_ms <= 0 or self.l_max_ms <= 0:
            raise InstanceError("delay parameters must be positive")
        if self.report_cost_j < 0:
            raise InstanceError("report cost must be nonnegative")
        thr2 = (self.gamma * self.rho_m) ** 2 * (1.0 + _EDGE_REL_SLACK)
        seen = set()
        for u, v in self.edges:
            if u == v or not (0 <= u < n and 0 <= v < n):
                raise InstanceError(f"bad edge ({u}, {v})")
            if (u, v) in seen:
                raise InstanceError(f"duplicate edge ({u}, {v})")
            seen.add((u, v))
            d2 = float(np.sum((self.positions[u] - self.positions[v]) ** 2))
            if d2 > thr2:
                raise InstanceError(f"edge ({u}, {v}) violates the neighborhood rule")
            for e in ((u, v), (v, u)):
                if e not in self.tx_cost:
                    raise InstanceError(f"missing tx cost for directed edge {e}")
                if self.tx_cost[e] <= 0:
                    raise InstanceError(f"tx cost must be positive on {e}")
        for d in self.pieces:
            for endpoint in (d.source, d.consumer):
                if not (0 <= endpoint < n):
                    raise InstanceError("data piece endpoint out of range")
                if endpoint in cache_set:
                    raise InstanceError("data piece endpoints must be field nodes")

    # -- derived views ------------------------------------------------------

    @property
    def n_nodes(self) -> int:
        return len(self.positions)

    @cached_property
    def cache_set(self) -> frozenset:
        return frozenset(self.caches)

    @cached_property
    def is_cache(self) -> np.ndarray:
        mask = np.zeros(self.n_nodes, dtype=bool)
        mask[list(self.caches)] = True
        return mask

    @cached_property
    def neighbors(self) -> tuple:
        """Per-node sorted neighbor tuples."""
        adj = [[] for _ in range(self.n_nodes)]
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        return tuple(tuple(sorted(a)) for a in adj)

    @cached_property
    def max_hops(self) -> int:
        """Largest hop count whose worst-case delay fits under l_max."""
        return int(math.floor(self.l_max_ms / self.l_hop_ms + 1e-9))

    def hop_distances(self, src: int) -> np.ndarray:
        """BFS hop distances from src; unreachable nodes get -1."""
        dist = np.full(self.n_nodes, -1, dtype=np.int64)
        dist[src] = 0
        q = deque([src])
        while q:
            u = q.popleft()
            for v in self.neighbors[u]:
                if dist[v] < 0:
                    dist[v] = dist[u] + 1
                    q.append(v)
        return dist

    # -- serialization ------------------------------------------------------

    def to_json(self) -> str:
        doc = {
            "nodes": [
                {
                    "id": u,
                    "x": float(self.positions[u, 0]),
                    "y": float(self.positions[u, 1]),
                    "energy_j": float(self.energy_j[u]),
                    "is_cache": bool(self.is_cache[u]),
                }
                for u in range(self.n_nodes)
            ],
            "edges": [
                {"u": u, "v": v, "eps_j": float(self.tx_cost[(u, v)])}
                for (u, v) in sorted(self.tx_cost)
            ],
            "data": [
                {
                    "source": d.source,
                    "consumer": d.consumer,
                    "gen_rate": d.gen_rate,
                    "cons_rate": d.cons_rate,
                }
                for d in self.pieces
            ],
            "timing": {
                "tau_s": self.tau_s,
                "l_hop_ms": self.l_hop_ms,
                "l_max_ms": self.l_max_ms,
            },
            "radio": {
                "gamma": self.gamma,
                "rho_m": self.rho_m,
                "report_cost_j": self.report_cost_j,
            },
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"

    @staticmethod
    def from_json(text: str) -> "NetworkInstance":
        doc = json.loads(text)
        nodes = sorted(doc["nodes"], key=lambda r: r["id"])
        if [r["id"] for r in nodes] != list(range(len(nodes))):
            raise InstanceError("node ids must be dense 0..n-1")
        positions = np.array([[r["x"], r["y"]] for r in nodes], dtype=np.float64)
        energy = np.array([r["energy_j"] for r in nodes], dtype=np.float64)
        caches = tuple(r["id"] for r in nodes if r["is_cache"])
        tx = {}
        und = set()
        for r in doc["edges"]:
            tx[(r["u"], r["v"])] = float(r["eps_j"])
            und.add((min(r["u"], r["v"]), max(r["u"], r["v"])))
        for u, v in und:
            if (u, v) not in tx or (v, u) not in tx:
                raise InstanceError(f"edge ({u}, {v}) must appear in both directions")
        pieces = tuple(
            DataPiece(r["source"], r["consumer"], r["gen_rate"], r["cons_rate"])
            for r in doc["data"]
        )
        t, rd = doc["timing"], doc["radio"]
        return NetworkInstance(
            positions=positions,
            energy_j=energy,
            caches=caches,
            edges=tuple(sorted(und)),
            tx_cost=tx,
            pieces=pieces,
            tau_s=t["tau_s"],
            l_hop_ms=t["l_hop_ms"],
            l_max_ms=t["l_max_ms"],
            gamma=rd["gamma"],
            rho_m=rd["rho_m"],
            report_cost_j=rd["report_cost_j"],
        )

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @staticmethod
    def load(path) -> "NetworkInstance":
        with open(path, "r", encoding="utf-8") as fh:
            return NetworkInstance.from_json(fh.read())

    def __eq__(self, other):
        if not isinstance(other, NetworkInstance):
            return NotImplemented
        return self.to_json() == other.to_json()


# ---------------------------------------------------------------------------
# Instance generation
# ---------------------------------------------------------------------------

# CC2420-style low-power field radio: -25 dBm ~ 3.16 uW; a 9-byte piece at
# 250 kbps occupies the air for 288 us.  The 15 dBm local-area radio used for
# status reports is ~31.6 mW.  All three are overridable per config.
FIELD_TX_POWER_W = 3.16e-6
PIECE_AIRTIME_S = 9 * 8 / 250e3
REPORT_POWER_W = 31.6e-3
REPORT_AIRTIME_S = 1e-3


@dataclass(frozen=True)
class GridConfig:
    """Parameters for seeded grid-instance generation."""

    side: int = 5
    n_consumers: int = 5
    rows: int | None = None            # override for non-square grids
    cols: int | None = None
    spacing_m: float = 1.5
    cache_frac: float = 0.2
    node_energy_wh: tuple = (30.0, 50.0)
    cache_energy_wh: tuple = (100.0, 150.0)
    rate_range: tuple = (1, 8)         # inclusive integer pieces/cycle
    tau_s: float = 1.0
    l_hop_ms: float = 28.0
    l_max_ms: float = 120.0
    gamma: float = 0.6
    rho_m: float = 3.0
    tx_power_w: float = FIELD_TX_POWER_W
    piece_airtime_s: float = PIECE_AIRTIME_S
    eps_j: float | None = None         # direct per-piece energy override
    report_power_w: float = REPORT_POWER_W
    report_airtime_s: float = REPORT_AIRTIME_S
    report_cost_j: float | None = None
    max_retries: int = 100

    @property
    def grid_rows(self) -> int:
        return self.rows if self.rows is not None else self.side

    @property
    def grid_cols(self) -> int:
        return self.cols if self.cols is not None else self.side

    @property
    def n_nodes(self) -> int:
        return self.grid_rows * self.grid_cols

    @property
    def n_caches(self) -> int:
        return int(round(self.cache_frac * self.n_nodes))

    @property
    def piece_cost_j(self) -> float:
        if self.eps_j is not None:
            return self.eps_j
        return self.tx_power_w * self.piece_airtime_s

    @property
    def report_energy_j(self) -> float:
        if self.report_cost_j is not None:
            return self.report_cost_j
        return self.report_power_w * self.report_airtime_s

    def validate(self):
        if self.grid_rows < 1 or self.grid_cols < 1:
            raise ConfigError("grid dimensions must be positive")
        n = self.n_nodes
        nc = self.n_caches
        if nc < 1:
            raise ConfigError("cache fraction yields an empty cache set")
        if nc >= n - nc:
            raise ConfigError(
                f"cache fraction {self.cache_frac} yields |P| = {nc} >= |V - P| = {n - nc}"
            )
        if self.n_consumers < 1:
            raise ConfigError("need at least one consumer")
        if self.n_consumers > n - nc:
            raise ConfigError(
                f"{self.n_consumers} consumers exceed {n - nc} non-cache nodes"
            )
        lo, hi = self.node_energy_wh
        clo, chi = self.cache_energy_wh
        if not (0 < lo <= hi) or not (0 < clo <= chi):
            raise ConfigError("energy ranges must be positive and ordered")
        if hi >= clo:
            raise ConfigError("cache energies must strictly exceed node energies")
        if self.rate_range[0] < 1 or self.rate_range[0] > self.rate_range[1]:
            raise ConfigError("rate range must be ordered and >= 1")
        if not (0 < self.gamma <= 1.0):
            raise ConfigError("gamma must satisfy 0 < gamma <= 1")
        if self.rho_m <= 0 or self.spacing_m <= 0:
            raise ConfigError("rho and spacing must be positive")
        if self.piece_cost_j <= 0:
            raise ConfigError("per-piece transmission energy must be positive")
        if self.tau_s <= 0 or self.l_hop_ms <= 0 or self.l_max_ms <= 0:
            raise ConfigError("timing parameters must be positive")


def grid_positions(config: GridConfig) -> np.ndarray:
    r, c, s = config.grid_rows, config.grid_cols, config.spacing_m
    pos = np.empty((r * c, 2), dtype=np.float64)
    for i in range(r):
        for j in range(c):
            pos[i * c + j] = (j * s, i * s)
    return pos


def testbed_config(n_consumers: int = 8, **overrides) -> GridConfig:
    """Replica of the 18-node indoor deployment: 3x6 grid, 1.35 m spacing,
    neighborhood threshold 2 m (gamma*rho), 4 caches, 47 edges, mean degree ~5.
    """
    base = dict(
        side=0,
        rows=3,
        cols=6,
        spacing_m=1.35,
        gamma=2.0 / 3.0,
        rho_m=3.0,
        cache_frac=4.0 / 18.0,
        n_consumers=n_consumers,
    )
    base.update(overrides)
    return GridConfig(**base)


def generate_instance(config: GridConfig, seed: int) -> NetworkInstance:
    """Seeded instance sampling; deterministic for a given (config, seed).

    Caches are drawn uniformly without replacement; consumers are distinct
    non-cache nodes; sources are non-cache nodes (may repeat across pieces)
    distinct from their own consumer.  Degenerate draws (a consumer with no
    cache within the delay-feasible hop radius, or a source disconnected
    from every cache) are resampled up to config.max_retries times.
    """
    config.validate()
    rng = np.random.default_rng(seed)
    positions = grid_positions(config)
    edges = build_neighborhoods(positions, config.rho_m, config.gamma)
    n = config.n_nodes
    eps = config.piece_cost_j
    tx = {}
    for u, v in edges:
        tx[(u, v)] = eps
        tx[(v, u)] = eps

    adj = [[] for _ in range(n)]
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)

    def bfs(src):
        dist = [-1] * n
        dist[src] = 0
        q = deque([src])
        while q:
            x = q.popleft()
            for y in adj[x]:
                if dist[y] < 0:
                    dist[y] = dist[x] + 1
                    q.append(y)
        return dist

    hop_limit = int(math.floor(config.l_max_ms / config.l_hop_ms + 1e-9))

    last_err = "exhausted retries"
    for _ in range(config.max_retries):
        caches = np.sort(rng.choice(n, size=config.n_caches, replace=False))
        cache_set = set(int(c) for c in caches)
        field = np.array([u for u in range(n) if u not in cache_set])
        consumers = rng.choice(field, size=config.n_consumers, replace=False)
        sources = np.empty(config.n_consumers, dtype=np.int64)
        for i, c in enumerate(consumers):
            s = rng.choice(field)
            while s == c:
                s = rng.choice(field)
            sources[i] = s
        energy = np.empty(n, dtype=np.float64)
        for u in range(n):
            lo, hi = (
                config.cache_energy_wh if u in cache_set else config.node_energy_wh
            )
            energy[u] = rng.uniform(lo, hi) * WH_TO_J
        gen = rng.integers(config.rate_range[0], config.rate_range[1] + 1,
                           size=config.n_consumers)
        cons = rng.integers(config.rate_range[0], config.rate_range[1] + 1,
                            size=config.n_consumers)

        cache_dists = {int(p): bfs(int(p)) for p in caches}
        feasible = True
        for i in range(config.n_consumers):
            ok = any(
                0 <= cache_dists[p][int(consumers[i])] <= hop_limit
                and cache_dists[p][int(sources[i])] >= 0
                for p in cache_dists
            )
            if not ok:
                feasible = False
                last_err = (
                    f"consumer {int(consumers[i])} has no delay-feasible cache "
                    f"(hop limit {hop_limit})"
                )
                break
        if not feasible:
            continue

        pieces = tuple(
            DataPiece(int(sources[i]), int(consumers[i]), float(gen[i]), float(cons[i]))
            for i in range(config.n_consumers)
        )
        return NetworkInstance(
            positions=positions,
            energy_j=energy,
            caches=tuple(int(c) for c in caches),
            edges=edges,
            tx_cost=tx,
            pieces=pieces,
            tau_s=config.tau_s,
            l_hop_ms=config.l_hop_ms,
            l_max_ms=config.l_max_ms,
            gamma=config.gamma,
            rho_m=config.rho_m,
            report_cost_j=config.report_energy_j,
        )
    raise InstanceError(f"could not generate a usable instance: {last_err}")
