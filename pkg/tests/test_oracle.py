import math

import numpy as np
import pytest

from icsrisk import milp, sim
from icsrisk.model import AttackGraph
from icsrisk.oracle import OracleInfeasible, OracleLimitError, OracleLimits, brute_force, random_instance
from icsrisk.solver import solve_milp

from conftest import chain, study


def test_no_reachable_target_in_time():
    # targets start at h=3; flow may end at a target with h <= T+1 even if it is never
    # activated, so T=1 is the largest horizon that leaves no admissible route
    sc = chain(T=1)
    with pytest.raises(OracleInfeasible):
        brute_force(sc)
    assert solve_milp(milp.build(sc)).status == "infeasible"


def test_chain_matches_milp(tiny):
    oracle = brute_force(tiny)
    res = solve_milp(milp.build(tiny))
    assert res.objective == pytest.approx(oracle.objective_value, rel=1e-6)
    assert oracle.candidates > 0


def test_zero_bounds_reduce_to_cheapest_connection():
    # cheapest route to any target: 0 -> 1 -> 2 -> s, three exploit arcs
    sc = chain(T=4, a=0.0, b=0.0, w=0.7)
    d = sc.degradation
    const = sum((d.lam - d.kappa * t) / (d.sigma_s * math.sqrt(t)) for t in range(1, 5))
    assert brute_force(sc).objective_value == pytest.approx(const + 0.7 * 3, rel=1e-12)


def test_branching_graph_cheapest_connection():
    arcs = [("0", "1", 1.0), ("0", "2", 1.0), ("1", "s", 1.0), ("2", "3", 1.0), ("3", "c", 1.0)]
    g = AttackGraph.build(["0", "1", "2", "3", "s", "c"], arcs, ["0"], ["s"], ["c"])
    sc = chain(T=4, a=0.0, b=0.0).with_(graph=g, K=2)
    d = sc.degradation
    const = sum((d.lam - d.kappa * t) / (d.sigma_s * math.sqrt(t)) for t in range(1, 5))
    plan = brute_force(sc)
    assert plan.objective_value == pytest.approx(const + 2.0, rel=1e-12)
    assert solve_milp(milp.build(sc)).objective == pytest.approx(plan.objective_value, rel=1e-9)


def test_limits_enforced():
    with pytest.raises(OracleLimitError):
        brute_force(study(T=10))
    with pytest.raises(OracleLimitError):
        brute_force(chain(T=20))
    with pytest.raises(OracleLimitError):
        brute_force(chain().with_(mode="damage_norm"))
    with pytest.raises(OracleLimitError):
        brute_force(chain(), OracleLimits(budget=10))


@pytest.mark.parametrize("seed", range(6))
def test_oracle_beats_any_handed_plan(seed):
    sc = random_instance(seed)
    try:
        best = brute_force(sc).objective_value
    except OracleInfeasible:
        return
    for k in range(5):
        try:
            plan = sim.random_attack(sc, k)
        except Exception:
            break
        if milp.audit_plan(sc, plan):
            continue
        assert best <= plan.objective_value + 1e-9


def test_random_instances_respect_limits():
    for seed in range(25):
        sc = random_instance(seed)
        g = sc.graph
        assert len(g.nodes) - len(g.targets) <= 8
        assert len(g.arcs) <= 14 and sc.K <= 2 and sc.T <= 12 and sc.plant.n_states <= 2


def test_oracle_plan_is_consistent(tiny):
    plan = brute_force(tiny)
    assert milp.audit_plan(tiny, plan) == []
    assert plan.exploit_count == len(plan.used_arcs)
    assert np.all(plan.a[:, : plan.compromise_time.get("s") or 0] == 0)
