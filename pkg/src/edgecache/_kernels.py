"""Hot numeric kernels, numba-compiled with a numpy fallback (_backend).

The greedy schedule scan and the periodic-rescheduling loop operate on a
flattened candidate table.  One candidate = one (cache, source-path,
consumer-path) choice for one data piece, stored as parallel arrays of
(node, added-drain) pairs over the union of the two paths; receivers appear
with a zero delta so they still participate in the lifetime minimum.
"""

from __future__ import annotations

import numpy as np

from ._backend import maybe_njit

STATUS_OK = 0
STATUS_INFEASIBLE = 1
STATUS_ITER_LIMIT = 2


@maybe_njit
def dca_greedy_scan(energy, piece_ptr, cand_ptr, flat_nodes, flat_delta, drain):
    """Greedy max-min assignment over packed candidates.

    Pieces are already laid out in processing order (nonincreasing
    consumption rate).  For each piece every candidate is evaluated with its
    deltas trial-committed on top of ``drain`` (J/cycle, mutated in place);
    the first candidate attaining the largest minimum lifetime over its own
    nodes wins and is committed.  Returns (winners, ok).
    """
    n_pieces = len(piece_ptr) - 1
    winners = np.full(n_pieces, -1, dtype=np.int64)
    for pi in range(n_pieces):
        best_val = -1.0
        best = -1
        for c in range(piece_ptr[pi], piece_ptr[pi + 1]):
            val = np.inf
            for idx in range(cand_ptr[c], cand_ptr[c + 1]):
                u = flat_nodes[idx]
                tot = drain[u] + flat_delta[idx]
                if tot > 0.0:
                    life = energy[u] / tot
                    if life < val:
                        val = life
            if val > best_val:
                best_val = val
                best = c
        if best < 0:
            return winners, False
        winners[pi] = best
        for idx in range(cand_ptr[best], cand_ptr[best + 1]):
            drain[flat_nodes[idx]] += flat_delta[idx]
    return winners, True


@maybe_njit
def min_lifetime_cycles(energy, drain):
    """Minimum of energy/drain over nodes with positive drain (inf if none)."""
    best = np.inf
    for u in range(len(energy)):
        if drain[u] > 0.0:
            life = energy[u] / drain[u]
            if life < best:
                best = life
    return best


@maybe_njit
def dca_plus_loop(energy0, piece_ptr, cand_ptr, flat_nodes, flat_delta,
                  period_s, tau_s, report_cost, max_periods,
                  winner_log, log_cap):
    """Periodic rescheduling until first node death.

    Each period: rerun the greedy on the residual energy map, drain the
    chosen schedule for ``period_s`` seconds (or until a node empties), then
    charge every node the status-report cost.  ``winner_log`` (shape
    [log_cap, n_pieces]) records per-period winning candidates when
    log_cap > 0.  Returns (status, death_node, death_time_s, n_periods,
    remaining).
    """
    n = len(energy0)
    remaining = energy0.copy()
    drain = np.zeros(n, dtype=np.float64)
    t = 0.0
    periods = 0
    while True:
        for u in range(n):
            drain[u] = 0.0
        winners, ok = dca_greedy_scan(remaining, piece_ptr, cand_ptr,
                                      flat_nodes, flat_delta, drain)
        if not ok:
            return STATUS_INFEASIBLE, -1, t, periods, remaining
        if periods < log_cap:
            for pi in range(len(winners)):
                winner_log[periods, pi] = winners[pi]
        dt_death = np.inf
        death = -1
        for u in range(n):
            if drain[u] > 0.0:
                dt = remaining[u] * tau_s / drain[u]
                if dt < dt_death:
                    dt_death = dt
                    death = u
        if dt_death <= period_s:
            for u in range(n):
                if drain[u] > 0.0:
                    remaining[u] -= drain[u] / tau_s * dt_death
                    if remaining[u] < 0.0:
                        remaining[u] = 0.0
            remaining[death] = 0.0
            return STATUS_OK, death, t + dt_death, periods, remaining
        for u in range(n):
            remaining[u] -= drain[u] / tau_s * period_s
        t += period_s
        periods += 1
        death = -1
        for u in range(n):
            remaining[u] -= report_cost
            if remaining[u] <= 0.0:
                remaining[u] = 0.0
                if death < 0:
                    death = u
        if death >= 0:
            return STATUS_OK, death, t, periods, remaining
        if periods >= max_periods:
            return STATUS_ITER_LIMIT, -1, t, periods, remaining
