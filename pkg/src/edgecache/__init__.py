"""Delay-constrained data caching and lifetime simulation for edge networks."""

from ._backend import backend_name
from .topology import (DataPiece, GridConfig, NetworkInstance,
                       build_neighborhoods, generate_instance, testbed_config)
from .kpaths import (Path, PathPair, PathSets, compute_path_sets,
                     estimate_l_hop, yen_k_shortest)
from .schedule import (Assignment, Schedule, SchedulingError, aggregate_load,
                       data_cache_access, network_lifetime, node_lifetime,
                       validate_schedule)
from .lpbench import LpModel, LpSolution, build_lp, lifetime_upper_bound, solve_lp
from .dynamic import (EnergyState, Event, RotationPlan, SimulationTrace,
                      fast_forward, run_dca_plus, run_pfr, run_static)
from .metrics import (RunSummary, energy_consumption_rate, residual_tvd,
                      summarize, total_variation_distance)

__version__ = "0.1.0"
