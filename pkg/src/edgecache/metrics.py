"""Run metrics: lifetime, energy consumption rate, total variation distance.

The energy consumption rate is total consumed energy over lifetime; the
total variation distance compares the residual-energy distribution at death
with the uniform distribution over nodes and serves as the energy-balance
indicator (0 = perfectly even residuals).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamic import SimulationTrace
from .topology import NetworkInstance

SECONDS_PER_HOUR = 3600.0


def energy_consumption_rate(trace: SimulationTrace) -> float:
    """Total energy consumed in the network divided by lifetime, J/hour."""
    if trace.lifetime_s <= 0:
        raise ValueError("trace has no positive lifetime")
    return trace.total_consumed_j / (trace.lifetime_s / SECONDS_PER_HOUR)


def total_variation_distance(final_energies) -> float:
    """0.5 * sum |E_u / E(V) - 1/|V|| over all nodes; in [0, 1].

    Equals the one-sided form sum_{R > Q} (R - Q).  Undefined (raises) for
    an all-zero energy vector.
    """
    e = np.asarray(final_energies, dtype=np.float64)
    if e.ndim != 1 or len(e) == 0:
        raise ValueError("need a nonempty 1-d energy vector")
    if np.any(e < 0):
        raise ValueError("energies must be nonnegative")
    total = float(np.sum(e))
    if total <= 0:
        raise ValueError("all-zero energy vector: distribution undefined")
    share = e / total
    return float(0.5 * np.sum(np.abs(share - 1.0 / len(e))))


def residual_tvd(instance: NetworkInstance, trace: SimulationTrace,
                 field_only: bool = False) -> float:
    """TVD of residual energies at death; optionally over field nodes only
    (cache batteries dominate the all-node distribution)."""
    remaining = trace.final.remaining
    if field_only:
        remaining = remaining[~instance.is_cache]
    return total_variation_distance(remaining)


@dataclass(frozen=True)
class RunSummary:
    algorithm: str
    side: int
    n_nodes: int
    n_caches: int
    n_consumers: int
    seed: int
    lifetime_h: float
    energy_rate_j_per_h: float
    tvd_all: float
    tvd_field: float
    status: str

    def __post_init__(self):
        if self.status == "ok":
            if not self.lifetime_h > 0:
                raise ValueError("lifetime must be positive")
            if self.energy_rate_j_per_h < 0:
                raise ValueError("energy rate must be nonnegative")
            for v in (self.tvd_all, self.tvd_field):
                if not (0.0 <= v <= 1.0):
                    raise ValueError("tvd out of [0, 1]")


def summarize(instance: NetworkInstance, trace: SimulationTrace,
              side: int, seed: int) -> RunSummary:
    return RunSummary(
        algorithm=trace.algorithm,
        side=side,
        n_nodes=instance.n_nodes,
        n_caches=len(instance.caches),
        n_consumers=len(instance.pieces),
        seed=seed,
        lifetime_h=trace.lifetime_s / SECONDS_PER_HOUR,
        energy_rate_j_per_h=energy_consumption_rate(trace),
        tvd_all=residual_tvd(instance, trace, field_only=False),
        tvd_field=residual_tvd(instance, trace, field_only=True),
        status=trace.status,
    )
