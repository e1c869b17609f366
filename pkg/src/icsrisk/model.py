"""Cyber and physical domain types.

The cyber layer is an exploitation-time attack graph with OR-type
preconditions; the physical layer is a discrete-time LTI plant with a
state-driven degradation signal. Everything here is immutable once built.
"""
from __future__ import annotations

import heapq
import json
import math
import re
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

RCOND = 1e-10
SOURCE_ID = "0"
SINK_ID = "nu"
MODES = ("worst_case", "damage_norm", "fixed_intrusion")
LEVELS = {"low": 5.0, "moderate": 3.0, "high": 1.0}

_NODE_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9.]*$")


class ScenarioError(ValueError):
    """Raised for malformed scenario input."""


@dataclass(frozen=True)
class Arc:
    tail: str
    head: str
    time: float
    kind: str = "exploit"  # exploit | source | sink

    @property
    def key(self) -> tuple[str, str]:
        return (self.tail, self.head)


@dataclass(frozen=True)
class AttackGraph:
    """Exploitation-time attack graph.

    ``sensors`` and ``controllers`` are ordered: their order fixes the rows
    of C and the columns of B respectively.
    """

    nodes: tuple[str, ...]
    arcs: tuple[Arc, ...]
    initial: tuple[str, ...]
    sensors: tuple[str, ...]
    controllers: tuple[str, ...]
    source: str | None = None
    sink: str | None = None

    @classmethod
    def build(cls, nodes, arcs, initial, sensors, controllers) -> "AttackGraph":
        norm = lambda seq: tuple(str(v) for v in seq)
        arc_objs = tuple(
            a if isinstance(a, Arc) else Arc(str(a[0]), str(a[1]), float(a[2]))
            for a in arcs
        )
        return cls(norm(nodes), arc_objs, norm(initial), norm(sensors), norm(controllers))

    @property
    def targets(self) -> tuple[str, ...]:
        return self.sensors + self.controllers

    @property
    def augmented(self) -> bool:
        return self.sink is not None

    @property
    def exploit_arcs(self) -> tuple[Arc, ...]:
        return tuple(a for a in self.arcs if a.kind != "sink")

    @property
    def sink_arcs(self) -> tuple[Arc, ...]:
        return tuple(a for a in self.arcs if a.kind == "sink")

    def in_arcs(self, node: str) -> list[Arc]:
        return [a for a in self.arcs if a.head == node]

    def out_arcs(self, node: str) -> list[Arc]:
        return [a for a in self.arcs if a.tail == node]

    def to_dict(self) -> dict:
        if self.augmented:
            raise ScenarioError("serialize the graph before augmentation")
        return {
            "nodes": list(self.nodes),
            "arcs": [{"from": a.tail, "to": a.head, "time": a.time} for a in self.arcs],
            "initial": list(self.initial),
            "sensors": list(self.sensors),
            "controllers": list(self.controllers),
        }


@dataclass(frozen=True, eq=False)
class PlantModel:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    sigma_v: float
    sigma_w: float
    x0: np.ndarray

    @classmethod
    def build(cls, A, B, C, sigma_v, sigma_w, x0=None, x_bar=None) -> "PlantModel":
        A = np.atleast_2d(np.asarray(A, dtype=float))
        B = np.atleast_2d(np.asarray(B, dtype=float))
        C = np.atleast_2d(np.asarray(C, dtype=float))
        x0 = np.zeros(A.shape[0]) if x0 is None else np.asarray(x0, dtype=float).ravel()
        if x_bar is not None:
            # raw coordinates in, deviation coordinates stored
            x0 = x0 - np.asarray(x_bar, dtype=float).ravel()
        return cls(A, B, C, float(sigma_v), float(sigma_w), x0)

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    @property
    def n_sensors(self) -> int:
        return self.C.shape[0]

    @property
    def n_controllers(self) -> int:
        return self.B.shape[1]


@dataclass(frozen=True, eq=False)
class DegradationModel:
    kappa: float
    gamma: np.ndarray
    sigma_s: float
    lam: float | None = None

    @classmethod
    def build(cls, kappa, gamma, sigma_s, lam=None) -> "DegradationModel":
        return cls(float(kappa), np.asarray(gamma, dtype=float).ravel(), float(sigma_s),
                   None if lam is None else float(lam))


@dataclass(frozen=True, eq=False)
class AttackScenario:
    graph: AttackGraph
    plant: PlantModel
    degradation: DegradationModel
    T: int
    K: int
    delta: np.ndarray
    a_lo: np.ndarray
    a_hi: np.ndarray
    b_lo: np.ndarray
    b_hi: np.ndarray
    w_cyber: float = 1.0
    mode: str = "worst_case"
    fixed_times: Mapping[str, int] | None = None
    big_m: str = "padded"            # padded: T + t_ij, literal: T
    activation: str = "arrival"      # arrival: h_i <= sum(1 - alpha), literal: h_i - 1 <= ...

    def with_(self, **changes) -> "AttackScenario":
        """Copy with fields replaced; scalar bounds and delta are broadcast."""
        ns, nc = len(self.graph.sensors), len(self.graph.controllers)
        for key, n in (("delta", ns), ("a_lo", ns), ("a_hi", ns), ("b_lo", nc), ("b_hi", nc)):
            if key in changes:
                changes[key] = _broadcast(changes[key], n)
        if "degradation" not in changes and "lam" in changes:
            changes["degradation"] = replace(self.degradation, lam=changes.pop("lam"))
        return replace(self, **changes)

    def with_level(self, level: str) -> "AttackScenario":
        """Stealthiness bounds of a detection sensitivity level (low/moderate/high)."""
        k = LEVELS[level]
        sw, sv = self.plant.sigma_w, self.plant.sigma_v
        return self.with_(a_lo=-k * sw, a_hi=k * sw, b_lo=-k * sv, b_hi=k * sv)


def _broadcast(value, n: int) -> np.ndarray:
    arr = np.asarray(value, dtype=float).ravel()
    if arr.size == 1:
        return np.full(n, float(arr[0]))
    if arr.size != n:
        raise ScenarioError(f"expected scalar or length-{n} vector, got length {arr.size}")
    return arr


# ---------------------------------------------------------------------------
# validation

@dataclass
class ValidationReport:
    errors: list[tuple[str, str]] = field(default_factory=list)
    warnings: list[tuple[str, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def codes(self) -> set[str]:
        return {c for c, _ in self.errors} | {c for c, _ in self.warnings}

    def lines(self) -> list[str]:
        return [f"error[{c}]: {m}" for c, m in self.errors] + [
            f"warning[{c}]: {m}" for c, m in self.warnings]


def full_column_rank(M: np.ndarray, rcond: float = RCOND) -> bool:
    if M.size == 0:
        return False
    s = np.linalg.svd(M, compute_uv=False)
    return M.shape[0] >= M.shape[1] and int(np.sum(s > rcond * s[0])) == M.shape[1]


def validate(scenario: AttackScenario) -> ValidationReport:
    """Collect every invariant violation; never raises."""
    rep = ValidationReport()
    err = lambda code, msg: rep.errors.append((code, msg))
    g, p, d = scenario.graph, scenario.plant, scenario.degradation

    nodes = set(g.nodes)
    if len(nodes) != len(g.nodes):
        err("graph", "duplicate node ids")
    for n in g.nodes:
        if not _NODE_RE.match(n):
            err("graph", f"node id {n!r} must be alphanumeric (dots allowed)")
    for a in g.arcs:
        if a.tail not in nodes or a.head not in nodes:
            err("graph", f"arc {a.tail}->{a.head} references unknown node")
        if not (a.time >= 0 and math.isfinite(a.time)):
            err("graph", f"arc {a.tail}->{a.head} has invalid time {a.time}")
    if not g.initial:
        err("graph", "no initial states")
    for n in g.initial:
        if n not in nodes:
            err("graph", f"initial state {n} is not a node")
    for n in g.targets:
        if n not in nodes:
            err("graph", f"target {n} is not a node")
    if set(g.sensors) & set(g.controllers):
        err("graph", "sensor and controller target sets overlap")
    if not g.augmented:
        for a in g.arcs:
            if a.tail in g.targets:
                err("graph", f"target {a.tail} has an outgoing arc")
    if not rep.errors:
        arrival = earliest_arrival(g)
        for n in g.targets:
            if math.isinf(arrival[n]):
                rep.warnings.append(("reachability", f"target {n} is unreachable from the initial states"))

    M = p.A.shape[0]
    if p.A.shape != (M, M):
        err("dimension", f"A must be square, got {p.A.shape}")
    if p.B.shape != (M, len(g.controllers)):
        err("dimension", f"B must be {M}x{len(g.controllers)}, got {p.B.shape}")
    if p.C.shape != (len(g.sensors), M):
        err("dimension", f"C must be {len(g.sensors)}x{M}, got {p.C.shape}")
    if p.x0.shape != (M,):
        err("dimension", f"x0 must have length {M}")
    if p.B.size and not full_column_rank(p.B):
        err("rank", "B does not have full column rank")
    if p.C.size and not full_column_rank(p.C):
        err("rank", "C does not have full column rank")
    if p.sigma_v < 0 or p.sigma_w < 0:
        err("noise", "noise standard deviations must be nonnegative")

    if d.gamma.shape != (M,):
        err("dimension", f"gamma must have length {M}")
    if not d.sigma_s > 0:
        err("degradation", "sigma_s must be positive")
    if d.lam is None:
        rep.warnings.append(("calibration", "failure threshold lambda not set; calibrate first"))
    elif not (math.isfinite(d.lam) and d.lam > 0):
        err("degradation", "lambda must be finite and positive")

    ns, nc = len(g.sensors), len(g.controllers)
    if not (isinstance(scenario.T, (int, np.integer)) and scenario.T >= 1):
        err("budget", "T must be an integer >= 1")
    if not (1 <= scenario.K <= ns + nc):
        err("budget", f"K must lie in [1, {ns + nc}]")
    for name, arr, n in (("delta", scenario.delta, ns), ("a_lo", scenario.a_lo, ns),
                         ("a_hi", scenario.a_hi, ns), ("b_lo", scenario.b_lo, nc),
                         ("b_hi", scenario.b_hi, nc)):
        if arr.shape != (n,):
            err("dimension", f"{name} must have length {n}")
    if np.any(scenario.delta <= 0):
        err("bounds", "delta must be positive")
    if np.any(scenario.a_lo > 0) or np.any(scenario.a_hi < 0):
        err("bounds", "sensor bounds must satisfy a_lo <= 0 <= a_hi")
    if np.any(scenario.b_lo > 0) or np.any(scenario.b_hi < 0):
        err("bounds", "controller bounds must satisfy b_lo <= 0 <= b_hi")
    if scenario.w_cyber < 0:
        err("bounds", "w_cyber must be nonnegative")
    if scenario.mode not in MODES:
        err("mode", f"unknown mode {scenario.mode!r}")
    if scenario.fixed_times:
        if scenario.mode != "fixed_intrusion":
            err("mode", "fixed_times only applies to fixed_intrusion mode")
        for n, t in scenario.fixed_times.items():
            if n not in g.targets:
                err("fixed_times", f"{n} is not a target")
            elif not 0 <= t <= scenario.T:
                err("fixed_times", f"compromise time {t} of {n} outside [0, {scenario.T}]")
    return rep


# ---------------------------------------------------------------------------
# graph operations

def augment(graph: AttackGraph) -> AttackGraph:
    """Add the single source (if needed) and the super sink with zero-time arcs."""
    if graph.augmented:
        raise ScenarioError("graph is already augmented")
    nodes = list(graph.nodes)
    arcs = list(graph.arcs)
    if len(graph.initial) == 1:
        source = graph.initial[0]
    else:
        source = SOURCE_ID if SOURCE_ID not in graph.nodes else "source"
        if source in graph.nodes:
            raise ScenarioError("cannot name the auxiliary source node")
        nodes.insert(0, source)
        arcs = [Arc(source, n, 0.0, "source") for n in graph.initial] + arcs
    sink = SINK_ID if SINK_ID not in graph.nodes else "supersink"
    nodes.append(sink)
    arcs += [Arc(n, sink, 0.0, "sink") for n in graph.targets]
    return replace(graph, nodes=tuple(nodes), arcs=tuple(arcs), source=source, sink=sink)


def earliest_arrival(graph: AttackGraph) -> dict[str, float]:
    """Shortest exploitation time from the start to every node (OR semantics).

    Works on raw or augmented graphs; unreachable nodes map to ``inf``.
    """
    starts = [graph.source] if graph.source is not None else list(graph.initial)
    dist = {n: math.inf for n in graph.nodes}
    heap = []
    for s in starts:
        dist[s] = 0.0
        heap.append((0.0, s))
    heapq.heapify(heap)
    adj: dict[str, list[Arc]] = {n: [] for n in graph.nodes}
    for a in graph.arcs:
        adj[a.tail].append(a)
    while heap:
        d, n = heapq.heappop(heap)
        if d > dist[n]:
            continue
        for a in adj[n]:
            nd = d + a.time
            if nd < dist[a.head]:
                dist[a.head] = nd
                heapq.heappush(heap, (nd, a.head))
    return dist


def shortest_path_arcs(graph: AttackGraph, targets: Iterable[str]) -> list[Arc]:
    """Arcs of a shortest-path tree restricted to the paths reaching ``targets``.

    Predecessor ties are broken by arc order so the result is deterministic.
    """
    dist = earliest_arrival(graph)
    starts = {graph.source} if graph.source is not None else set(graph.initial)
    chosen: set[tuple[str, str]] = set()
    for t in targets:
        if math.isinf(dist[t]):
            raise ScenarioError(f"target {t} is unreachable")
        node, seen = t, {t}
        while node not in starts:
            pred = next(a for a in graph.arcs if a.head == node and a.kind != "sink"
                        and a.tail not in seen
                        and abs(dist[a.tail] + a.time - dist[node]) <= 1e-9)
            chosen.add(pred.key)
            node = pred.tail
            seen.add(node)
    return [a for a in graph.arcs if a.key in chosen]


def min_start_times(graph: AttackGraph, used: set[tuple[str, str]], T: int,
                    big_m: str = "padded") -> dict[str, float] | None:
    """Least start times h >= 0 satisfying every big-M precedence row.

    Used arcs impose ``h_j >= h_i + t_ij``; unused arcs the relaxed
    ``h_j >= h_i + t_ij - M_ij``. Returns None on a positive cycle.
    """
    h = {n: 0.0 for n in graph.nodes if n != graph.sink}
    rows = []
    for a in graph.arcs:
        if a.kind == "sink":
            continue
        m = T + a.time if big_m == "padded" else float(T)
        rows.append((a.tail, a.head, a.time if a.key in used else a.time - m))
    for _ in range(len(h) + 1):
        changed = False
        for i, j, w in rows:
            if h[i] + w > h[j] + 1e-12:
                h[j] = h[i] + w
                changed = True
        if not changed:
            return h
    return None


def generate_topology(kind: str, seed: int) -> AttackGraph:
    """Random 12-state attack graph with 3 sensor and 3 controller targets.

    Layout: initial state ``0`` feeds states 1-4, which feed 5-8, which feed
    the precondition states 9-11. Targets hang off the preconditions:
    ``high`` wires every target to all three, ``medium`` wires sensors to 10
    and controllers to 11, ``low`` wires three random sensor/controller pairs
    to 9, 10 and 11. Exploitation times are U(1, 50).
    """
    if kind not in ("high", "medium", "low"):
        raise ValueError(f"unknown topology {kind!r}")
    rng = np.random.default_rng(seed)
    layer1, layer2, pre = ["1", "2", "3", "4"], ["5", "6", "7", "8"], ["9", "10", "11"]
    sensors, controllers = ["s1", "s2", "s3"], ["c1", "c2", "c3"]
    edges: list[tuple[str, str]] = [("0", n) for n in layer1]
    for n in layer2:
        for p in sorted(rng.choice(4, size=2, replace=False)):
            edges.append((layer1[p], n))
    for n in pre:
        for p in sorted(rng.choice(4, size=2, replace=False)):
            edges.append((layer2[p], n))
    if kind == "high":
        edges += [(p, t) for t in sensors + controllers for p in pre]
    elif kind == "medium":
        edges += [("10", s) for s in sensors] + [("11", c) for c in controllers]
    else:
        perm = rng.permutation(3)
        for k, p in enumerate(pre):
            edges += [(p, sensors[k]), (p, controllers[perm[k]])]
    times = rng.uniform(1.0, 50.0, size=len(edges))
    arcs = [Arc(i, j, float(t)) for (i, j), t in zip(edges, times)]
    nodes = ["0"] + layer1 + layer2 + pre + sensors + controllers
    return AttackGraph.build(nodes, arcs, ["0"], sensors, controllers)


# ---------------------------------------------------------------------------
# scenario files

@dataclass(frozen=True)
class SimSection:
    horizon: int = 1000
    replications: int = 50
    seed: int = 1
    post_horizon_policy: str = "hold_last"
    t_lambda: int = 600


def scenario_from_dict(doc: Mapping) -> tuple[AttackScenario, SimSection]:
    try:
        ga = doc["attack_graph"]
        graph = AttackGraph.build(
            ga["nodes"],
            [(a["from"], a["to"], a["time"]) for a in ga["arcs"]],
            ga["initial"], ga["sensors"], ga["controllers"])
        pa = doc["plant"]
        plant = PlantModel.build(pa["A"], pa["B"], pa["C"], pa["sigma_v"], pa["sigma_w"],
                                 pa.get("x0"), pa.get("x_bar"))
        da = doc["degradation"]
        deg = DegradationModel.build(da["kappa"], da["gamma"], da["sigma_s"], da.get("lambda"))
    except (KeyError, TypeError) as exc:
        raise ScenarioError(f"malformed scenario document: {exc}") from exc
    sc = doc.get("scenario", {})
    ns, nc = len(graph.sensors), len(graph.controllers)
    a_b = sc.get("a_bounds", [-3 * plant.sigma_w, 3 * plant.sigma_w])
    b_b = sc.get("b_bounds", [-3 * plant.sigma_v, 3 * plant.sigma_v])
    delta = sc.get("delta")
    fixed = sc.get("fixed_times")
    scenario = AttackScenario(
        graph=graph, plant=plant, degradation=deg,
        T=int(sc.get("T", 10)), K=int(sc.get("K", 1)),
        delta=_broadcast(math.inf if delta is None else delta, ns),
        a_lo=_broadcast(a_b[0], ns), a_hi=_broadcast(a_b[1], ns),
        b_lo=_broadcast(b_b[0], nc), b_hi=_broadcast(b_b[1], nc),
        w_cyber=float(sc.get("w_cyber", 1.0)),
        mode=sc.get("mode", "worst_case"),
        fixed_times=None if fixed is None else {str(k): int(v) for k, v in fixed.items()},
        big_m=sc.get("big_m", "padded"),
        activation=sc.get("activation", "arrival"),
    )
    si = doc.get("simulation", {})
    sim = SimSection(
        horizon=int(si.get("horizon", 1000)), replications=int(si.get("replications", 50)),
        seed=int(si.get("seed", 1)), post_horizon_policy=si.get("post_horizon_policy", "hold_last"),
        t_lambda=int(si.get("t_lambda", 600)))
    return scenario, sim


def scenario_to_dict(scenario: AttackScenario, sim: SimSection | None = None) -> dict:
    p, d = scenario.plant, scenario.degradation
    out = {
        "attack_graph": scenario.graph.to_dict(),
        "plant": {"A": p.A.tolist(), "B": p.B.tolist(), "C": p.C.tolist(),
                  "sigma_v": p.sigma_v, "sigma_w": p.sigma_w, "x0": p.x0.tolist()},
        "degradation": {"kappa": d.kappa, "gamma": d.gamma.tolist(), "sigma_s": d.sigma_s,
                        "lambda": d.lam},
        "scenario": {
            "T": scenario.T, "K": scenario.K,
            "delta": None if np.all(np.isinf(scenario.delta)) else scenario.delta.tolist(),
            "a_bounds": [scenario.a_lo.tolist(), scenario.a_hi.tolist()],
            "b_bounds": [scenario.b_lo.tolist(), scenario.b_hi.tolist()],
            "w_cyber": scenario.w_cyber, "mode": scenario.mode,
            "fixed_times": None if scenario.fixed_times is None else dict(scenario.fixed_times),
            "big_m": scenario.big_m, "activation": scenario.activation,
        },
    }
    if sim is not None:
        out["simulation"] = {"horizon": sim.horizon, "replications": sim.replications,
                             "seed": sim.seed, "post_horizon_policy": sim.post_horizon_policy,
                             "t_lambda": sim.t_lambda}
    return out


def load_scenario(path: str | Path) -> tuple[AttackScenario, SimSection]:
    with open(path) as fh:
        return scenario_from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# bundled fixtures

NUMERICAL_A = [[0.12, 0.30, 0.06], [0.06, 0.48, 0.06], [0.30, 0.12, 0.54]]
NUMERICAL_KAPPA = 0.4713 * math.sqrt(2.0)
NUMERICAL_GAMMA = [0.058, 0.058, 0.996]


def numerical_study(kind: str = "high", seed: int = 1, T: int = 50, K: int = 3,
                    lam: float | None = None, delta: float | Sequence[float] | None = None,
                    level: str = "moderate") -> AttackScenario:
    """Three-state numerical-study plant on a random topology.

    ``lam`` and ``delta`` are normally supplied by calibration; left as None
    the threshold is unset and the perception bound is inactive.
    """
    graph = generate_topology(kind, seed)
    plant = PlantModel.build(NUMERICAL_A, np.eye(3), np.eye(3), 0.1, math.sqrt(0.001))
    deg = DegradationModel.build(NUMERICAL_KAPPA, NUMERICAL_GAMMA, 0.1, lam)
    sc = AttackScenario(graph, plant, deg, T, K,
                        delta=_broadcast(math.inf if delta is None else delta, 3),
                        a_lo=np.zeros(3), a_hi=np.zeros(3), b_lo=np.zeros(3), b_hi=np.zeros(3))
    return sc.with_level(level)


def bwpp_document() -> dict:
    with resources.files("icsrisk.data").joinpath("bwpp.json").open() as fh:
        return json.load(fh)


def bwpp_fixture(time_scale: float = 1.0) -> tuple[AttackScenario, SimSection, dict[str, int]]:
    """Boiling-water power plant style fixture and the mapped intrusion schedule.

    ``time_scale`` shrinks every exploitation time (and the schedule, rounded
    up) so the case study fits an embedded solve.
    """
    doc = bwpp_document()
    for a in doc["attack_graph"]["arcs"]:
        a["time"] = a["time"] * time_scale
    scenario, sim = scenario_from_dict(doc)
    schedule = {k: int(math.ceil(v * time_scale - 1e-9)) for k, v in doc["reference_schedule"].items()}
    return scenario, sim, schedule
