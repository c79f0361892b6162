import math

import numpy as np
import pytest
from scipy.optimize import linprog

from edgecache.lpbench import build_lp, lifetime_upper_bound, solve_lp
from edgecache.topology import DataPiece, GridConfig, NetworkInstance, \
    generate_instance

from _oracles import (exhaustive_best_lifetime, line_instance,
                      sparse_two_piece_instance)

SWEEP_EPS = 3.2e-4


def test_three_node_line_variable_count():
    # 1 commodity, 2 roles x 4 directed edges + t = 9 variables
    inst = line_instance(3, caches=(1,), pieces=[DataPiece(0, 2, 1.0, 1.0)],
                         energies=[100.0, 1000.0, 100.0])
    model = build_lp(inst)
    assert model.n_vars == 9
    assert model.var_names[model.col_t] == "t"


def test_cache_rows_only_when_requested():
    inst = line_instance(3, caches=(1,), pieces=[DataPiece(0, 2, 1.0, 1.0)],
                         energies=[100.0, 1000.0, 100.0])
    plain = build_lp(inst)
    flagged = build_lp(inst, cache_rows=True)
    assert len(flagged.a_ub) == len(plain.a_ub) + len(inst.pieces)
    assert any(n.startswith("cache_") for n in flagged.ub_names)
    assert not any(n.startswith("cache_") for n in plain.ub_names)


def test_unique_route_line_analytic():
    # s - a - p - a' - c with unit rates and eps, relays at 100 J: each relay
    # forwards one unit flow per cycle, so t = 100 cycles
    inst = line_instance(5, caches=(2,), pieces=[DataPiece(0, 4, 1.0, 1.0)],
                         energies=[100.0, 100.0, 100000.0, 100.0, 100.0],
                         eps=1.0)
    sol = solve_lp(build_lp(inst))
    assert sol.status == "optimal"
    assert sol.t_cycles == pytest.approx(100.0, rel=1e-9)


def diamond_instance(double: bool):
    # 0 (source) - {1, 2} - 3 (consumer); rich endpoints so relays bind
    pos = np.array([[0.0, 0.0], [1.0, 0.6], [1.0, -0.6], [2.0, 0.0],
                    [0.0, 1.2]])
    edges = [(0, 1), (1, 3), (0, 4)]
    if double:
        edges += [(0, 2), (2, 3)]
    tx = {}
    for u, v in edges:
        tx[(u, v)] = tx[(v, u)] = 1.0
    return NetworkInstance(
        positions=pos, energy_j=np.array([1e6, 100.0, 100.0, 1e6, 2e6]),
        caches=(4,), edges=tuple(edges), tx_cost=tx,
        pieces=(DataPiece(0, 3, 1.0, 1.0),), tau_s=1.0, l_hop_ms=28.0,
        l_max_ms=1e9, gamma=1.0, rho_m=1.4, report_cost_j=0.0)


def test_parallel_disjoint_routes_double_lifetime():
    single = solve_lp(build_lp(diamond_instance(False)))
    double = solve_lp(build_lp(diamond_instance(True)))
    assert single.status == double.status == "optimal"
    assert double.t_cycles == pytest.approx(2 * single.t_cycles, rel=1e-9)


@pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
def test_solution_residuals_within_tolerance(seed):
    inst = generate_instance(GridConfig(side=4, n_consumers=3,
                                        eps_j=SWEEP_EPS), seed)
    sol = solve_lp(build_lp(inst))
    assert sol.status == "optimal"
    assert sol.max_eq_residual <= 1e-7
    assert sol.max_ub_violation <= 1e-7


@pytest.mark.parametrize("seed", [0, 1, 2, 3, 4, 5])
def test_matches_scipy_highs(seed):
    inst = generate_instance(GridConfig(side=4, n_consumers=3,
                                        eps_j=SWEEP_EPS), seed)
    model = build_lp(inst)
    sol = solve_lp(model)
    c = np.zeros(model.n_vars)
    c[model.col_t] = -1.0
    ref = linprog(c, A_ub=model.a_ub, b_ub=model.b_ub, A_eq=model.a_eq,
                  b_eq=np.zeros(len(model.a_eq)), bounds=(0, None),
                  method="highs")
    assert ref.status == 0
    assert sol.t_cycles == pytest.approx(-ref.fun, rel=1e-7)


def test_upper_bounds_exhaustive_integral_optimum():
    rng = np.random.default_rng(5)
    checked = 0
    while checked < 6:
        inst = sparse_two_piece_instance(rng)
        if inst is None:
            continue
        best = exhaustive_best_lifetime(inst, use_delay_filter=False)
        if not math.isfinite(best) or best <= 0:
            continue
        sol = lifetime_upper_bound(inst)
        assert sol.status == "optimal"
        assert sol.t_cycles >= best * (1 - 1e-9)
        checked += 1


def test_energy_scaling_covariance():
    inst = generate_instance(GridConfig(side=4, n_consumers=3,
                                        eps_j=SWEEP_EPS), 7)
    base = solve_lp(build_lp(inst))
    scaled_inst = NetworkInstance(
        positions=inst.positions, energy_j=inst.energy_j * 3.0,
        caches=inst.caches, edges=inst.edges, tx_cost=inst.tx_cost,
        pieces=inst.pieces, tau_s=inst.tau_s, l_hop_ms=inst.l_hop_ms,
        l_max_ms=inst.l_max_ms, gamma=inst.gamma, rho_m=inst.rho_m,
        report_cost_j=inst.report_cost_j)
    scaled = solve_lp(build_lp(scaled_inst))
    assert scaled.t_cycles == pytest.approx(3.0 * base.t_cycles, rel=1e-9)


def test_delay_threshold_never_enters_model():
    inst = generate_instance(GridConfig(side=4, n_consumers=3,
                                        eps_j=SWEEP_EPS), 8)
    relaxed = NetworkInstance(
        positions=inst.positions, energy_j=inst.energy_j, caches=inst.caches,
        edges=inst.edges, tx_cost=inst.tx_cost, pieces=inst.pieces,
        tau_s=inst.tau_s, l_hop_ms=inst.l_hop_ms, l_max_ms=inst.l_max_ms * 40,
        gamma=inst.gamma, rho_m=inst.rho_m, report_cost_j=inst.report_cost_j)
    a = solve_lp(build_lp(inst))
    b = solve_lp(build_lp(relaxed))
    assert a.t_cycles == b.t_cycles


def test_zero_pieces_reported_infinite():
    inst = line_instance(3, caches=(1,), pieces=[],
                         energies=[100.0, 1000.0, 100.0])
    sol = solve_lp(build_lp(inst))
    assert sol.status == "infinite"
    assert sol.t_cycles == math.inf


def test_iteration_limit_status():
    inst = generate_instance(GridConfig(side=4, n_consumers=3,
                                        eps_j=SWEEP_EPS), 9)
    sol = solve_lp(build_lp(inst), max_iterations=1)
    assert sol.status == "iteration-limit"


def test_cache_rows_tighten_or_preserve():
    inst = generate_instance(GridConfig(side=4, n_consumers=3,
                                        eps_j=SWEEP_EPS), 10)
    plain = solve_lp(build_lp(inst))
    flagged = solve_lp(build_lp(inst, cache_rows=True))
    assert flagged.status == "optimal"
    assert flagged.t_cycles <= plain.t_cycles * (1 + 1e-9)


def test_lp_dump_plain_text():
    inst = line_instance(3, caches=(1,), pieces=[DataPiece(0, 2, 2.0, 3.0)],
                         energies=[100.0, 1000.0, 100.0])
    text = build_lp(inst).dump()
    assert text.startswith("maximize t")
    assert "inject_d0_s0" in text
    assert "energy_u1" in text
    assert "<=" in text and "= 0" in text
    assert text.rstrip().endswith("all variables >= 0")
