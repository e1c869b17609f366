import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from icsrisk import model
from icsrisk.model import (AttackGraph, ScenarioError, augment, earliest_arrival, generate_topology,
                           validate)

from conftest import chain, study


def test_study_scenario_validates_clean():
    rep = validate(study())
    assert rep.ok and not rep.errors


def test_rank_deficient_B_reported():
    sc = study()
    B = np.eye(3)
    B[:, 1] = 0.0
    bad = sc.with_(plant=model.PlantModel.build(sc.plant.A, B, sc.plant.C, 0.1, 0.03))
    assert "rank" in validate(bad).codes()


def test_unreachable_target_reported():
    g = AttackGraph.build(["0", "1", "s", "c"], [("0", "1", 2.0), ("1", "c", 1.0)],
                          ["0"], ["s"], ["c"])
    sc = chain().with_(graph=g)
    rep = validate(sc)
    assert "reachability" in rep.codes()
    assert rep.ok  # warning only: infeasibility is the solver's call


def test_bound_sign_and_overlap_errors():
    sc = chain()
    assert "bounds" in validate(sc.with_(a_lo=np.array([0.2]))).codes()
    g = AttackGraph.build(["0", "s"], [("0", "s", 1.0)], ["0"], ["s"], ["s"])
    assert "graph" in validate(sc.with_(graph=g)).codes()


def test_augment_counts_two_initial_states():
    g = AttackGraph.build(["a", "b", "s1", "s2", "c1"],
                          [("a", "s1", 1.0), ("b", "s2", 2.0), ("a", "c1", 3.0)],
                          ["a", "b"], ["s1", "s2"], ["c1"])
    ga = augment(g)
    assert len(ga.nodes) == len(g.nodes) + 2
    kinds = [a.kind for a in ga.arcs]
    assert kinds.count("source") == 2 and kinds.count("sink") == 3
    assert len(ga.arcs) == len(g.arcs) + 2 + 3
    assert tuple(a for a in ga.arcs if a.kind == "exploit") == g.arcs


def test_augment_single_initial_keeps_source():
    g = chain().graph
    ga = augment(g)
    assert ga.source == "0"
    assert len(ga.nodes) == len(g.nodes) + 1
    assert earliest_arrival(ga)["0"] == 0.0


def test_double_augmentation_rejected():
    with pytest.raises(ScenarioError):
        augment(augment(chain().graph))


def test_bwpp_sink_arcs():
    sc, _, _ = model.bwpp_fixture()
    assert len(augment(sc.graph).sink_arcs) == 8


def test_single_arc_arrival():
    g = AttackGraph.build(["0", "s", "c"], [("0", "s", 7.0), ("0", "c", 1.0)], ["0"], ["s"], ["c"])
    assert earliest_arrival(g)["s"] == 7.0


def test_bwpp_tier_arrivals():
    sc, _, _ = model.bwpp_fixture()
    arr = earliest_arrival(augment(sc.graph))
    assert min(arr[n] for n in sc.graph.sensors) == pytest.approx(86.0)
    assert min(arr[n] for n in sc.graph.controllers) == pytest.approx(118.0)


def _enumerated_arrival(g):
    out = {n: math.inf for n in g.nodes}
    adj = {}
    for a in g.arcs:
        adj.setdefault(a.tail, []).append(a)

    def walk(node, seen, total):
        out[node] = min(out[node], total)
        for a in adj.get(node, []):
            if a.head not in seen:
                walk(a.head, seen | {a.head}, total + a.time)

    for s in g.initial:
        walk(s, {s}, 0.0)
    return out


def _random_graph(seed, n=8):
    rng = np.random.default_rng(seed)
    inner = [str(k) for k in range(n - 2)]
    arcs = [(i, j, float(rng.uniform(1, 10))) for i, j in itertools.permutations(inner, 2)
            if j != "0" and rng.random() < 0.3]
    arcs += [(inner[int(rng.integers(len(inner)))], "s", 2.0), (inner[int(rng.integers(len(inner)))], "c", 3.0)]
    return AttackGraph.build(inner + ["s", "c"], arcs, ["0"], ["s"], ["c"])


@pytest.mark.parametrize("seed", range(10))
def test_arrival_matches_path_enumeration(seed):
    g = _random_graph(seed)
    got, want = earliest_arrival(g), _enumerated_arrival(g)
    for n in g.nodes:
        assert got[n] == pytest.approx(want[n]) or (math.isinf(got[n]) and math.isinf(want[n]))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), t=st.floats(0.0, 20.0))
def test_adding_an_arc_never_delays_arrival(seed, t):
    g = _random_graph(seed)
    before = earliest_arrival(g)
    rng = np.random.default_rng(seed + 1)
    i, j = rng.choice([n for n in g.nodes if n not in g.targets], 2, replace=False)
    if j == "0":
        i, j = j, i
    g2 = AttackGraph.build(g.nodes, [(a.tail, a.head, a.time) for a in g.arcs] + [(i, j, t)],
                           g.initial, g.sensors, g.controllers)
    after = earliest_arrival(g2)
    assert all(after[n] <= before[n] + 1e-12 for n in g.nodes)


def test_high_topology_shares_predecessors():
    for seed in range(5):
        g = generate_topology("high", seed)
        preds = {t: {a.tail for a in g.in_arcs(t)} for t in g.targets}
        assert len({frozenset(p) for p in preds.values()}) == 1


def test_topology_is_deterministic():
    assert generate_topology("medium", 3).to_dict() == generate_topology("medium", 3).to_dict()


def test_low_topology_pairs_sensors_with_controllers():
    g = generate_topology("low", 1)
    groups = {}
    for t in g.targets:
        (p,) = {a.tail for a in g.in_arcs(t)}
        groups.setdefault(p, []).append(t)
    assert len(groups) == 3
    for members in groups.values():
        assert sorted(m[0] for m in members) == ["c", "s"]


@pytest.mark.parametrize("kind", ["high", "medium", "low"])
def test_generated_topologies_reachable(kind):
    for seed in range(5):
        g = generate_topology(kind, seed)
        assert len(g.nodes) == 18 and len(g.sensors) == 3 and len(g.controllers) == 3
        arr = earliest_arrival(augment(g))
        assert all(math.isfinite(arr[n]) for n in g.nodes)
        assert all(1.0 <= a.time <= 50.0 for a in g.arcs)


def test_scenario_document_round_trip(tmp_path):
    sc = study()
    doc = model.scenario_to_dict(sc, model.SimSection())
    back, simsec = model.scenario_from_dict(doc)
    assert model.scenario_to_dict(back, simsec) == doc
    assert simsec == model.SimSection()


def test_malformed_document():
    with pytest.raises(ScenarioError):
        model.scenario_from_dict({"plant": {}})


def test_with_level_uses_noise_scales():
    sc = study(level="low")
    assert sc.a_hi == pytest.approx(np.full(3, 5 * math.sqrt(0.001)))
    assert sc.b_lo == pytest.approx(np.full(3, -0.5))
