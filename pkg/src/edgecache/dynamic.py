"""Temporal execution: energy simulation until first node death.

Drains are continuous rates (pieces/cycle * eps / tau, J/s): schedules of
piecewise-constant drains are integrated exactly rather than stepped cycle
by cycle, which keeps multi-year lifetimes tractable.  A tau-granular
stepping mode exists solely as a test oracle for short horizons.

Three runners:

* run_static     - one fixed schedule until the first death;
* run_dca_plus   - rerun the greedy every alpha*tau seconds on the residual
                   energy map, charging every node a status-report cost per
                   period (the centralized improvement);
* run_pfr        - per-piece rotation through the (cache x path) matrix with
                   dwell times proportional to each cell's weakest initial
                   energy (the distributed improvement).

Energy bookkeeping stores cumulative consumption; remaining energy is
always derived as initial - consumed, so the closed-system identity holds
exactly at every event.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .kpaths import PathSets, compute_path_sets, DEFAULT_K
from .schedule import (Schedule, SchedulingError, drain_vector, pack_candidates,
                       schedule_from_winners, validate_schedule)
from .topology import NetworkInstance


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class EnergyState:
    """Clock plus per-node cumulative consumption; remaining is derived."""

    clock_s: float
    consumed: np.ndarray
    initial: np.ndarray

    @property
    def remaining(self) -> np.ndarray:
        return self.initial - self.consumed

    def advanced(self, drain_w: np.ndarray, dt: float) -> "EnergyState":
        return EnergyState(self.clock_s + dt, self.consumed + drain_w * dt,
                           self.initial)


@dataclass(frozen=True)
class Event:
    kind: str          # activate | schedule-switch | report-burst | rotation
    #                  # | node-death | horizon
    t_s: float
    node: int = -1
    info: tuple = ()


@dataclass(frozen=True)
class SimulationTrace:
    algorithm: str
    status: str                      # ok | infeasible-midrun | iteration-limit
    events: tuple
    lifetime_s: float
    final: EnergyState
    tau_s: float
    extras: dict = field(default_factory=dict)

    @property
    def lifetime_cycles(self) -> float:
        return self.lifetime_s / self.tau_s

    @property
    def death_event(self) -> Event:
        deaths = [e for e in self.events if e.kind == "node-death"]
        if len(deaths) != 1:
            raise SimulationError(f"expected one death event, got {len(deaths)}")
        return deaths[0]

    @property
    def total_consumed_j(self) -> float:
        return float(np.sum(self.final.consumed))


def fast_forward(state: EnergyState, drain_w: np.ndarray, horizon_s: float):
    """Advance through a constant-drain stretch: to the horizon, or to the
    earliest node death if that comes first.  Exact integration; returns
    (new_state, event)."""
    drain = np.asarray(drain_w, dtype=np.float64)
    if np.any(drain < 0):
        raise ValueError("drain rates must be nonnegative")
    if not (horizon_s > 0) or not math.isfinite(horizon_s):
        raise ValueError("horizon must be positive and finite")
    remaining = state.remaining
    dt_death = math.inf
    death = -1
    for u in np.flatnonzero(drain > 0):
        dt = remaining[u] / drain[u]
        if dt < dt_death:
            dt_death = dt
            death = int(u)
    if dt_death <= horizon_s:
        nxt = state.advanced(drain, dt_death)
        nxt.consumed[death] = nxt.initial[death]  # pin the dying node exactly
        return nxt, Event("node-death", nxt.clock_s, node=death)
    nxt = state.advanced(drain, horizon_s)
    return nxt, Event("horizon", nxt.clock_s)


def step_cycles(instance: NetworkInstance, drain_per_cycle: np.ndarray,
                max_cycles: int):
    """tau-granular oracle: deduct whole-cycle energies until a node would
    be exhausted.  Returns (death_cycle or None, consumed)."""
    drain = np.asarray(drain_per_cycle, dtype=np.float64)
    consumed = np.zeros_like(drain)
    for cycle in range(1, max_cycles + 1):
        consumed += drain
        if np.any(consumed >= instance.energy_j - 1e-12):
            return cycle, consumed
    return None, consumed


def run_static(instance: NetworkInstance, schedule: Schedule) -> SimulationTrace:
    """Fixed schedule until first death; equals the analytic lifetime."""
    validate_schedule(instance, schedule)
    drain_w = drain_vector(instance, schedule) / instance.tau_s
    if not np.any(drain_w > 0):
        raise SimulationError("schedule drains no node; lifetime undefined")
    state = EnergyState(0.0, np.zeros(instance.n_nodes), instance.energy_j)
    events = [Event("activate", 0.0)]
    life = math.inf
    death = -1
    for u in np.flatnonzero(drain_w > 0):
        dt = instance.energy_j[u] / drain_w[u]
        if dt < life:
            life = dt
            death = int(u)
    final = state.advanced(drain_w, life)
    final.consumed[death] = final.initial[death]
    events.append(Event("node-death", life, node=death))
    return SimulationTrace(
        algorithm="dca", status="ok", events=tuple(events), lifetime_s=life,
        final=final, tau_s=instance.tau_s,
        extras={"drain_w": drain_w},
    )


# ---------------------------------------------------------------------------
# DCA+: periodic centralized rescheduling
# ---------------------------------------------------------------------------

def run_dca_plus(instance: NetworkInstance, path_sets: PathSets | None = None,
                 *, alpha: float, k: int = DEFAULT_K,
                 max_periods: int = 4_000_000,
                 collect_events: bool = True,
                 event_log_cap: int = 65_536) -> SimulationTrace:
    """Rerun the greedy every alpha*tau seconds on residual energies.

    After each period the active schedule is torn down and every node (the
    whole of V, caches included) spends ``report_cost_j`` sending its energy
    status over the local-area radio.  Ends at the first death, which may
    happen mid-period from forwarding or exactly at a period boundary from
    the report itself.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if path_sets is None:
        path_sets = compute_path_sets(instance, k)
    packed = pack_candidates(instance, path_sets)
    period_s = alpha * instance.tau_s
    log_cap = event_log_cap if collect_events else 0
    winner_log = np.full((log_cap, max(1, len(packed.order))), -1, dtype=np.int64)

    status_code, death, death_t, n_periods, remaining = _kernels.dca_plus_loop(
        instance.energy_j, packed.piece_ptr, packed.cand_ptr,
        packed.flat_nodes, packed.flat_delta,
        period_s, instance.tau_s, instance.report_cost_j,
        max_periods, winner_log, log_cap)

    if status_code == _kernels.STATUS_INFEASIBLE and n_periods == 0:
        raise SchedulingError(-1, "initial schedule is infeasible")
    status = {
        _kernels.STATUS_OK: "ok",
        _kernels.STATUS_INFEASIBLE: "infeasible-midrun",
        _kernels.STATUS_ITER_LIMIT: "iteration-limit",
    }[status_code]

    consumed = instance.energy_j - remaining
    if death >= 0:
        consumed[death] = instance.energy_j[death]
    final = EnergyState(death_t, consumed, instance.energy_j)

    events = []
    truncated = False
    if collect_events:
        shown = min(n_periods + 1, log_cap)
        truncated = (n_periods + 1) > log_cap
        prev = None
        for i in range(shown):
            if i * period_s > death_t:
                break
            winners = tuple(int(w) for w in winner_log[i]) if i < log_cap else ()
            changed = prev is not None and winners != prev
            prev = winners
            events.append(Event("schedule-switch", i * period_s,
                                info=("period", i, "changed", changed)))
            burst_t = (i + 1) * period_s
            if burst_t <= death_t and i < n_periods:
                events.append(Event("report-burst", burst_t, info=("period", i)))
        if status == "ok":
            events.append(Event("node-death", death_t, node=death))
    elif status == "ok":
        events.append(Event("node-death", death_t, node=death))

    return SimulationTrace(
        algorithm="dca+", status=status, events=tuple(events),
        lifetime_s=death_t, final=final, tau_s=instance.tau_s,
        extras={
            "n_periods": int(n_periods),
            "n_reports": int(n_periods) * instance.n_nodes,
            "report_cost_j": instance.report_cost_j,
            "period_s": period_s,
            "events_truncated": truncated,
        },
    )


def dca_plus_first_schedule(instance: NetworkInstance,
                            path_sets: PathSets) -> Schedule:
    """The schedule DCA+ activates in its first period (plain greedy)."""
    packed = pack_candidates(instance, path_sets)
    drain = np.zeros(instance.n_nodes)
    winners, ok = _kernels.dca_greedy_scan(
        instance.energy_j, packed.piece_ptr, packed.cand_ptr,
        packed.flat_nodes, packed.flat_delta, drain)
    if not ok:
        raise SchedulingError(-1, "initial schedule is infeasible")
    return schedule_from_winners(instance, path_sets, packed, winners)


# ---------------------------------------------------------------------------
# PFR: proportionally fair path rotation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RotationPlan:
    """Per-piece rotation table: cells in cursor order with fixed dwells."""

    piece: int
    cells: tuple          # (cache, path_index) per valid cell, cursor order
    dwell_s: np.ndarray   # per cell
    cell_min_energy: np.ndarray  # E_d(i, j): weakest initial energy per cell
    ref_energy: float     # eps_d: the largest of the cell minima
    drain_w: np.ndarray   # [n_cells, n_nodes] J/s while a cell is active
    start_index: int      # cursor start within the original (i, j) order

    @property
    def cycle_s(self) -> float:
        return float(np.sum(self.dwell_s))


def build_rotation_plan(instance: NetworkInstance, path_sets: PathSets,
                        piece_index: int, alpha: float,
                        start_index: int = 0) -> RotationPlan:
    """Cells are visited column-first with wraparound: for each cache row
    (ascending node id) the k path columns in order; a column j is a valid
    cell only when both the j-th source and j-th consumer path exist.
    Dwell = cell's minimum initial energy over the combined path, divided
    by the largest such minimum across cells, times alpha*tau."""
    piece = instance.pieces[piece_index]
    period_s = alpha * instance.tau_s
    cells = []
    minima = []
    drains = []
    for p in instance.caches:
        pair = path_sets.pair(piece_index, p)
        depth = min(len(pair.source_paths), len(pair.consumer_paths))
        for j in range(depth):
            sp = pair.source_paths[j]
            cp = pair.consumer_paths[j]
            union = set(sp.nodes) | set(cp.nodes)
            minima.append(float(min(instance.energy_j[u] for u in union)))
            dr = np.zeros(instance.n_nodes)
            for (u, v) in sp.directed_edges():
                dr[u] += instance.tx_cost[(u, v)] * piece.gen_rate / instance.tau_s
            for (u, v) in cp.directed_edges():
                dr[u] += instance.tx_cost[(u, v)] * piece.cons_rate / instance.tau_s
            drains.append(dr)
            cells.append((p, j))
    if not cells:
        raise SchedulingError(
            piece_index,
            f"piece {piece_index}: every rotation cell is empty "
            f"(all consumer paths filtered)")
    minima_arr = np.asarray(minima)
    ref = float(np.max(minima_arr))
    dwell = minima_arr / ref * period_s
    order = list(range(len(cells)))
    s = start_index % len(cells)
    order = order[s:] + order[:s]
    return RotationPlan(
        piece=piece_index,
        cells=tuple(cells[i] for i in order),
        dwell_s=dwell[order],
        cell_min_energy=minima_arr[order],
        ref_energy=ref,
        drain_w=np.asarray([drains[i] for i in order]),
        start_index=s,
    )


class _RotationClock:
    """Exact cumulative consumption for one piece's periodic rotation."""

    def __init__(self, plan: RotationPlan):
        self.plan = plan
        self.bounds = np.concatenate(([0.0], np.cumsum(plan.dwell_s)))
        self.cycle = self.bounds[-1]
        # consumed per node at each cell boundary within one cycle
        self.prefix = np.concatenate(
            [np.zeros((1, plan.drain_w.shape[1])),
             np.cumsum(plan.drain_w * plan.dwell_s[:, None], axis=0)])

    def locate(self, t: float):
        full, rem = divmod(t, self.cycle)
        idx = int(np.searchsorted(self.bounds, rem, side="right")) - 1
        idx = min(max(idx, 0), len(self.plan.cells) - 1)
        return full, rem, idx

    def consumed_at(self, t: float) -> np.ndarray:
        full, rem, idx = self.locate(t)
        return (full * self.prefix[-1]
                + self.prefix[idx]
                + (rem - self.bounds[idx]) * self.plan.drain_w[idx])

    def drain_at(self, t: float) -> np.ndarray:
        _, _, idx = self.locate(t)
        return self.plan.drain_w[idx]

    def next_boundary_after(self, t: float) -> float:
        full, _, idx = self.locate(t)
        j = idx + 1
        b = full * self.cycle + self.bounds[j]
        while b <= t:  # fp landed exactly on (or past) a boundary
            j += 1
            if j >= len(self.bounds):
                full += 1
                j = 1
            b = full * self.cycle + self.bounds[j]
        return b


def run_pfr(instance: NetworkInstance, path_sets: PathSets | None = None,
            *, alpha: float, k: int = DEFAULT_K,
            start: str = "first", seed: int | None = None,
            collect_events: bool = True, max_events: int = 200) -> SimulationTrace:
    """Rotate every piece through its path matrix until the first death.

    Timers run per piece in parallel; dwell fractions are fixed at setup
    from initial energies, so each piece's activation pattern is strictly
    periodic and cumulative consumption can be evaluated exactly at any
    time.  The death instant is found by bisection over the additive
    piecewise-linear consumption functions plus an exact in-segment solve.
    ``start="random"`` draws each piece's first cell from a seeded RNG.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if path_sets is None:
        path_sets = compute_path_sets(instance, k)
    rng = np.random.default_rng(seed) if start == "random" else None
    plans = []
    for d in range(len(instance.pieces)):
        tentative = build_rotation_plan(instance, path_sets, d, alpha, 0)
        if start == "random":
            s = int(rng.integers(len(tentative.cells)))
            plan = build_rotation_plan(instance, path_sets, d, alpha, s)
        else:
            plan = tentative
        plans.append(plan)
    clocks = [_RotationClock(p) for p in plans]
    energy = instance.energy_j

    def consumed_at(t: float) -> np.ndarray:
        total = np.zeros(instance.n_nodes)
        for c in clocks:
            total += c.consumed_at(t)
        return total

    avg_rate = np.zeros(instance.n_nodes)
    for c in clocks:
        avg_rate += c.prefix[-1] / c.cycle
    if not np.any(avg_rate > 0):
        raise SimulationError("rotation drains no node; lifetime undefined")

    # bracket the death time, then bisect
    hi = max(c.cycle for c in clocks)
    for _ in range(400):
        if np.any(consumed_at(hi) >= energy):
            break
        hi *= 2.0
    else:
        raise SimulationError("could not bracket the death time")
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if np.any(consumed_at(mid) >= energy):
            hi = mid
        else:
            lo = mid

    # exact in-segment solve from the last all-alive point
    death_t = hi
    death = int(np.argmax(consumed_at(hi) - energy))
    t = lo
    for _ in range(10 * sum(len(p.cells) for p in plans) + 10):
        base = consumed_at(t)
        slope = np.zeros(instance.n_nodes)
        for c in clocks:
            slope += c.drain_at(t)
        boundary = min(c.next_boundary_after(t) for c in clocks)
        dt_death = math.inf
        cand = -1
        for u in np.flatnonzero(slope > 0):
            dt = (energy[u] - base[u]) / slope[u]
            if dt < dt_death:
                dt_death = dt
                cand = int(u)
        if t + dt_death <= boundary + 1e-9 * max(boundary, 1.0):
            death_t = t + dt_death
            death = cand
            break
        t = boundary
        if t > hi * 1.01:  # safety net; bisection already localized the root
            break

    consumed = consumed_at(death_t)
    consumed[death] = energy[death]
    np.minimum(consumed, energy, out=consumed)
    final = EnergyState(death_t, consumed, instance.energy_j)

    events = []
    truncated = False
    if collect_events:
        heap = [(clocks[i].plan.dwell_s[0], i, 0) for i in range(len(clocks))]
        heapq.heapify(heap)
        while heap and len(events) < max_events:
            t_ev, d, idx = heapq.heappop(heap)
            if t_ev >= death_t:
                break
            nxt = (idx + 1) % len(plans[d].cells)
            cache, j = plans[d].cells[nxt]
            events.append(Event("rotation", t_ev,
                                info=("piece", d, "cache", cache, "path", j)))
            heapq.heappush(heap, (t_ev + plans[d].dwell_s[nxt], d, nxt))
        truncated = bool(heap and heap[0][0] < death_t)
        events.sort(key=lambda e: e.t_s)
        events.append(Event("node-death", death_t, node=death))

    return SimulationTrace(
        algorithm="pfr", status="ok", events=tuple(events),
        lifetime_s=death_t, final=final, tau_s=instance.tau_s,
        extras={
            "plans": tuple(plans),
            "events_truncated": truncated,
            "period_s": alpha * instance.tau_s,
        },
    )
