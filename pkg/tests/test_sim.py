import math

import numpy as np
import pytest

from icsrisk import impact, milp, model, sim
from icsrisk.model import AttackScenario, DegradationModel, PlantModel, ScenarioError, augment
from icsrisk.sim import SimConfig
from icsrisk.solver import solve_external

from conftest import study


def _deterministic(lam=10.0, kappa=0.3):
    g = model.generate_topology("high", 1)
    p = PlantModel.build(np.eye(3) * 0.5, np.eye(3), np.eye(3), 0.0, 0.0)
    d = DegradationModel.build(kappa, [0.2, 0.3, 0.4], 0.0, lam)
    z = np.zeros(3)
    return AttackScenario(g, p, d, 5, 1, delta=np.full(3, math.inf), a_lo=z, a_hi=z, b_lo=z, b_hi=z)


def test_noise_free_drift():
    sc = _deterministic()
    res = sim.simulate(sc, None, SimConfig(horizon=60, replications=3), checkpoints=[1, 17, 40])
    for t in (1, 17, 40):
        assert np.all(res.checkpoints[t] == pytest.approx(0.3 * t, rel=1e-12))
    assert np.all(res.ttf.ttf == math.ceil(10.0 / 0.3))
    assert res.ttf.censored_count == 0


def test_censoring_recorded():
    sc = _deterministic(lam=1e6)
    d = sim.simulate(sc, None, SimConfig(horizon=50, replications=4)).ttf
    assert d.censored_count == 4 and d.empirical_mttf == 50


def _calibrated_study():
    sc = model.numerical_study("high", 1)
    cal = sim.calibrate(sc, SimConfig(replications=50, seed=1))
    return cal.apply(sc), cal


def test_nominal_mttf_matches_analytic_proxy():
    sc, _ = _calibrated_study()
    d = sc.degradation
    dist = sim.simulate(sc, None, SimConfig(horizon=1000, replications=200, seed=2)).ttf
    tau = np.arange(1, 1001)
    proxy = float(np.sum(impact.normal_cdf((d.lam - d.kappa * tau) / (d.sigma_s * np.sqrt(tau)))))
    # E[TTF] = sum_{tau>=0} P(TTF > tau); the proxy sum starts at tau=1, so add the P(TTF>0)=1 term
    assert abs(dist.empirical_mttf - (proxy + 1.0)) <= 3 * dist.standard_error


def test_zero_magnitude_plan_shares_noise_bitwise(study_scenario):
    sc = study_scenario
    T = sc.T
    zero = milp.plan_from_schedule(sc, {"s1": 0}, np.zeros((3, T + 1)), np.zeros((3, T + 1)))
    cfg = SimConfig(horizon=200, replications=7, seed=9)
    a = sim.simulate(sc, None, cfg, checkpoints=[50, 200])
    b = sim.simulate(sc, zero, cfg, checkpoints=[50, 200])
    assert np.array_equal(a.mean_path, b.mean_path)
    assert np.array_equal(a.ttf.ttf, b.ttf.ttf)
    assert np.array_equal(a.checkpoints[200], b.checkpoints[200])


def test_streams_do_not_depend_on_replication_count(study_scenario):
    a = sim.simulate(study_scenario, None, SimConfig(horizon=100, replications=3, seed=4), [100])
    b = sim.simulate(study_scenario, None, SimConfig(horizon=100, replications=300, seed=4), [100])
    assert np.array_equal(a.checkpoints[100], b.checkpoints[100][:3])


def test_calibration_exact_without_noise():
    sc = _deterministic(lam=None, kappa=0.25).with_(
        degradation=DegradationModel.build(0.25, [0.0, 0.0, 0.0], 0.0, None))
    cal = sim.calibrate(sc, SimConfig(replications=2, t_lambda=600))
    assert cal.lam == 0.25 * 600


def test_calibration_levels():
    _, cal = _calibrated_study()
    sw, sv = math.sqrt(0.001), 0.1
    assert cal.bounds["moderate"]["a"] == pytest.approx((-3 * sw, 3 * sw))
    assert cal.bounds["moderate"]["b"] == pytest.approx((-3 * sv, 3 * sv))
    assert cal.bounds["low"]["b"] == pytest.approx((-5 * sv, 5 * sv))
    assert cal.bounds["high"]["a"] == pytest.approx((-sw, sw))
    assert cal.delta == 3 * cal.sigma_z
    for lv in cal.bounds.values():
        assert lv["a"][0] == -lv["a"][1] and lv["b"][0] == -lv["b"][1]


def test_calibrated_threshold_near_drift():
    sc, cal = _calibrated_study()
    rerun = sim.simulate(sc.with_(lam=math.inf), None, SimConfig(horizon=600, replications=50, seed=1),
                         checkpoints=[600])
    S = rerun.checkpoints[600]
    assert cal.lam == pytest.approx(S.mean(), rel=1e-15)
    se = S.std(ddof=1) / math.sqrt(S.size)
    assert abs(cal.lam - sc.degradation.kappa * 600) <= 3 * se


def test_calibration_needs_two_replications(study_scenario):
    with pytest.raises(ValueError):
        sim.calibrate(study_scenario, SimConfig(replications=1))


def test_random_attack_zero_bounds_all_targets():
    sc = study(T=80, K=6, level="moderate")
    z = np.zeros(3)
    sc = sc.with_(a_lo=z, a_hi=z, b_lo=z, b_hi=z)
    plan = sim.random_attack(sc, 3)
    assert not plan.a.any() and not plan.b.any()
    assert len(plan.compromised) == 6


def test_random_attack_is_seeded():
    sc = study(T=50, K=3)
    p1, p2 = sim.random_attack(sc, 11), sim.random_attack(sc, 11)
    assert np.array_equal(p1.a, p2.a) and np.array_equal(p1.b, p2.b)
    assert p1.compromise_time == p2.compromise_time


def test_random_plans_pass_audit():
    sc = study(T=50, K=3)
    arrival = model.earliest_arrival(augment(sc.graph))
    for seed in range(100):
        plan = sim.random_attack(sc, seed)
        assert milp.audit_plan(sc, plan) == []
        assert len(plan.compromised) == 3
        for n in plan.compromised:
            assert plan.compromise_time[n] == math.ceil(arrival[n] - 1e-9)


def test_random_attack_without_enough_targets():
    with pytest.raises(ScenarioError):
        sim.random_attack(study(T=30, K=3), 0)


def test_post_horizon_policies_differ():
    sc = study(T=30, K=1, level="low")
    inst = milp.build(sc)
    plan = milp.decode_solution(inst, solve_external(inst).x)
    hold = sim.simulate(sc, plan, SimConfig(horizon=300, replications=20, seed=3))
    zero = sim.simulate(sc, plan, SimConfig(horizon=300, replications=20, seed=3,
                                            post_horizon_policy="zero"))
    assert not np.array_equal(hold.mean_path, zero.mean_path)
    assert np.array_equal(hold.mean_path[:sc.T + 1], zero.mean_path[:sc.T + 1])


def test_worst_case_plan_not_slower_than_nominal():
    _, cal = _calibrated_study()
    sc = model.numerical_study("high", 6, 50, 3, lam=cal.lam, delta=cal.delta)
    inst = milp.build(sc)
    plan = milp.decode_solution(inst, solve_external(inst).x)
    cfg = SimConfig(horizon=1000, replications=100, seed=5)
    assert (sim.simulate(sc, plan, cfg).ttf.empirical_mttf
            <= sim.simulate(sc, None, cfg).ttf.empirical_mttf)


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(horizon=0)
    with pytest.raises(ValueError):
        SimConfig(post_horizon_policy="decay")


def test_simulation_needs_threshold():
    sc = model.numerical_study("high", 1)
    with pytest.raises(ScenarioError):
        sim.simulate(sc, None, SimConfig(horizon=5, replications=1))
