"""Joint cyber-physical attack MILP.

``build_worst_case`` emits the full model: exploit precedence with big-M
linearization, K-unit flow to the super sink, monotone compromise indicators
gating the injected sensor/actuator offsets, noise-free closed-loop dynamics,
and the linear MTTF surrogate as objective. Two baselines reuse the same
constraint wiring: a damage-norm objective and a fixed intrusion schedule.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from . import impact
from .model import (AttackGraph, AttackScenario, ScenarioError, augment, earliest_arrival,
                    min_start_times, shortest_path_arcs, validate)

CONTINUOUS, BINARY, INTEGER = "C", "B", "I"
LE, EQ, GE = "L", "E", "G"


class DecodeError(ValueError):
    pass


@dataclass(eq=False)
class MilpInstance:
    """Solver-agnostic minimize c'x + constant over sparse rows and bounds."""

    names: list[str]
    kinds: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    A: sp.csr_matrix
    sense: np.ndarray
    rhs: np.ndarray
    row_names: list[str]
    c: np.ndarray
    constant: float = 0.0
    scenario: AttackScenario | None = None
    graph: AttackGraph | None = None
    mode: str | None = None
    name_map: dict[str, int] = field(init=False)

    def __post_init__(self):
        self.name_map = {n: i for i, n in enumerate(self.names)}
        if len(self.name_map) != len(self.names):
            raise ValueError("duplicate variable names")

    @property
    def n_cols(self) -> int:
        return len(self.names)

    @property
    def n_rows(self) -> int:
        return len(self.row_names)

    def col(self, name: str) -> int:
        return self.name_map[name]

    def integer_mask(self) -> np.ndarray:
        return self.kinds != CONTINUOUS

    def objective(self, x) -> float:
        return float(self.c @ np.asarray(x, dtype=float) + self.constant)

    def row_violation(self, x) -> np.ndarray:
        ax = self.A @ np.asarray(x, dtype=float)
        viol = np.zeros(self.n_rows)
        le, ge, eq = self.sense == LE, self.sense == GE, self.sense == EQ
        viol[le] = np.maximum(ax[le] - self.rhs[le], 0.0)
        viol[ge] = np.maximum(self.rhs[ge] - ax[ge], 0.0)
        viol[eq] = np.abs(ax[eq] - self.rhs[eq])
        return viol

    def max_violation(self, x) -> float:
        x = np.asarray(x, dtype=float)
        bound = np.maximum(np.maximum(self.lb - x, x - self.ub), 0.0)
        rows = self.row_violation(x)
        return float(max(bound.max(initial=0.0), rows.max(initial=0.0)))

    def integrality_violation(self, x) -> float:
        x = np.asarray(x, dtype=float)[self.integer_mask()]
        return float(np.abs(x - np.round(x)).max(initial=0.0))


class _Builder:
    def __init__(self):
        self.names: list[str] = []
        self.kinds: list[str] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.cost: list[float] = []
        self.rows: list[str] = []
        self.sense: list[str] = []
        self.rhs: list[float] = []
        self._r: list[int] = []
        self._c: list[int] = []
        self._v: list[float] = []

    def var(self, name, kind=CONTINUOUS, lb=-math.inf, ub=math.inf, cost=0.0) -> int:
        self.names.append(name)
        self.kinds.append(kind)
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.cost.append(float(cost))
        return len(self.names) - 1

    def row(self, name, terms: Sequence[tuple[int, float]], sense, rhs):
        r = len(self.rows)
        merged: dict[int, float] = {}
        for j, v in terms:
            merged[j] = merged.get(j, 0.0) + float(v)
        for j, v in merged.items():
            if v != 0.0:
                self._r.append(r)
                self._c.append(j)
                self._v.append(v)
        self.rows.append(name)
        self.sense.append(sense)
        self.rhs.append(float(rhs))

    def finish(self, constant, **meta) -> MilpInstance:
        A = sp.csr_matrix((self._v, (self._r, self._c)), shape=(len(self.rows), len(self.names)))
        A.sort_indices()
        return MilpInstance(
            names=self.names, kinds=np.array(self.kinds), lb=np.array(self.lb),
            ub=np.array(self.ub), A=A, sense=np.array(self.sense), rhs=np.array(self.rhs),
            row_names=self.rows, c=np.array(self.cost), constant=float(constant), **meta)


# ---------------------------------------------------------------------------
# builders

def _check(scenario: AttackScenario):
    rep = validate(scenario)
    if not rep.ok:
        raise ScenarioError("; ".join(rep.lines()))
    if scenario.degradation.lam is None and scenario.mode != "damage_norm":
        raise ScenarioError("failure threshold lambda is required")


def state_weights(scenario: AttackScenario) -> tuple[np.ndarray, float]:
    """Objective weight on each x_t (rows t=0..T) and the constant term.

    sum_tau z_tau = const - sum_t gamma' x_t * sum_{tau>=t} 1/(sigma_s sqrt(tau)).
    """
    d, T = scenario.degradation, scenario.T
    tau = np.arange(1, T + 1, dtype=float)
    inv = 1.0 / (d.sigma_s * np.sqrt(tau))
    # tail[t] = sum_{tau>=t} for t>=1; x_0 never enters
    tail = np.concatenate([[0.0], np.cumsum(inv[::-1])[::-1]])
    W = -np.outer(tail, d.gamma)
    lam = 0.0 if d.lam is None else d.lam
    const = float(np.sum((lam - d.kappa * tau) * inv))
    return W, const


def _physical(b: _Builder, scenario: AttackScenario, alpha, beta, W):
    """Dynamics, measurement, estimator, perception and gating rows."""
    p = scenario.plant
    T, M = scenario.T, p.n_states
    ns, nc = p.n_sensors, p.n_controllers
    E = impact.estimator_matrix(p.A, p.B, p.C)
    x = [[b.var(f"x_{k}_{t}", lb=p.x0[k] if t == 0 else -math.inf,
                ub=p.x0[k] if t == 0 else math.inf, cost=W[t, k])
          for k in range(M)] for t in range(T + 1)]
    u = [[b.var(f"u_{k}_{t}") for k in range(nc)] for t in range(T + 1)]
    z = [[b.var(f"z_{k}_{t}", lb=-scenario.delta[k], ub=scenario.delta[k])
          for k in range(ns)] for t in range(T + 1)]
    a = [[b.var(f"a_{k}_{t}", lb=scenario.a_lo[k], ub=scenario.a_hi[k])
          for k in range(ns)] for t in range(T + 1)]
    bb = [[b.var(f"b_{k}_{t}", lb=scenario.b_lo[k], ub=scenario.b_hi[k])
           for k in range(nc)] for t in range(T + 1)]
    for t in range(T):
        for k in range(M):
            terms = [(x[t + 1][k], 1.0)] + [(x[t][j], -p.A[k, j]) for j in range(M)]
            terms += [(u[t][j], -p.B[k, j]) for j in range(nc)]
            terms += [(bb[t][j], -p.B[k, j]) for j in range(nc)]
            b.row(f"dyn_{k}_{t}", terms, EQ, 0.0)
    for t in range(T + 1):
        for k in range(ns):
            terms = [(z[t][k], 1.0), (a[t][k], -1.0)] + [(x[t][j], -p.C[k, j]) for j in range(M)]
            b.row(f"meas_{k}_{t}", terms, EQ, 0.0)
        for k in range(nc):
            terms = [(u[t][k], 1.0)] + [(z[t][j], -E[k, j]) for j in range(ns)]
            b.row(f"est_{k}_{t}", terms, EQ, 0.0)
    for t in range(T + 1):
        for k in range(ns):
            b.row(f"gate_a_hi_{k}_{t}", [(a[t][k], 1.0), (alpha[k][t], -scenario.a_hi[k])], LE, 0.0)
            b.row(f"gate_a_lo_{k}_{t}", [(a[t][k], 1.0), (alpha[k][t], -scenario.a_lo[k])], GE, 0.0)
        for k in range(nc):
            b.row(f"gate_b_hi_{k}_{t}", [(bb[t][k], 1.0), (beta[k][t], -scenario.b_hi[k])], LE, 0.0)
            b.row(f"gate_b_lo_{k}_{t}", [(bb[t][k], 1.0), (beta[k][t], -scenario.b_lo[k])], GE, 0.0)
    return a, bb


def _cyber(b: _Builder, scenario: AttackScenario, g: AttackGraph):
    T, K = scenario.T, scenario.K
    h = {n: b.var(f"h_{n}", lb=0.0) for n in g.nodes if n != g.sink}
    y, f = {}, {}
    for arc in g.arcs:
        cost = scenario.w_cyber if arc.kind == "exploit" else 0.0
        y[arc.key] = b.var(f"y_{arc.tail}_{arc.head}", BINARY, 0.0, 1.0, cost)
    for arc in g.arcs:
        f[arc.key] = b.var(f"f_{arc.tail}_{arc.head}", INTEGER, 0.0, float(K))
    alpha = [[b.var(f"alpha_{n}_{t}", BINARY, 0.0, 1.0) for t in range(T + 1)] for n in g.sensors]
    beta = [[b.var(f"beta_{n}_{t}", BINARY, 0.0, 1.0) for t in range(T + 1)] for n in g.controllers]
    return h, y, f, alpha, beta


def _cyber_rows(b: _Builder, scenario: AttackScenario, g: AttackGraph, h, y, f, alpha, beta):
    T, K = scenario.T, scenario.K
    for arc in g.arcs:
        if arc.kind == "sink":
            continue
        big = T + arc.time if scenario.big_m == "padded" else float(T)
        b.row(f"prec_{arc.tail}_{arc.head}",
              [(h[arc.head], 1.0), (h[arc.tail], -1.0), (y[arc.key], -big)], GE, arc.time - big)
    for arc in g.arcs:
        b.row(f"cap_{arc.tail}_{arc.head}", [(f[arc.key], 1.0), (y[arc.key], -float(K))], LE, 0.0)
    for n in g.nodes:
        terms = [(f[a.key], 1.0) for a in g.arcs if a.tail == n]
        terms += [(f[a.key], -1.0) for a in g.arcs if a.head == n]
        supply = K if n == g.source else (-K if n == g.sink else 0)
        b.row(f"flow_{n}", terms, EQ, float(supply))
    offset = 2.0 if scenario.activation == "literal" else 1.0
    for group, ind in ((g.sensors, alpha), (g.controllers, beta)):
        for k, n in enumerate(group):
            inflow = [(f[a.key], -1.0) for a in g.arcs if a.head == n and a.kind != "sink"]
            for t in range(T + 1):
                b.row(f"reach_{n}_{t}", [(ind[k][t], 1.0)] + inflow, LE, 0.0)
            # literal: h - 1 <= sum_t (1 - alpha_t); arrival: h <= sum_t (1 - alpha_t)
            b.row(f"start_{n}", [(h[n], 1.0)] + [(ind[k][t], 1.0) for t in range(T + 1)],
                  LE, T + offset)
            for t in range(1, T + 1):
                b.row(f"mono_{n}_{t}", [(ind[k][t - 1], 1.0), (ind[k][t], -1.0)], LE, 0.0)


def build_worst_case(scenario: AttackScenario) -> MilpInstance:
    _check(scenario)
    g = augment(scenario.graph)
    W, const = state_weights(scenario)
    b = _Builder()
    h, y, f, alpha, beta = _cyber(b, scenario, g)
    _cyber_rows(b, scenario, g, h, y, f, alpha, beta)
    _physical(b, scenario, alpha, beta, W)
    return b.finish(const, scenario=scenario, graph=g, mode="worst_case")


def damage_big_m(scenario: AttackScenario, z_ref: np.ndarray) -> float:
    p = scenario.plant
    CB = p.C @ p.B
    bmax = float(np.max(np.abs(np.concatenate([scenario.b_lo, scenario.b_hi]))))
    amax = float(np.max(np.abs(np.concatenate([scenario.a_lo, scenario.a_hi]))))
    norm_cb = float(np.max(np.sum(np.abs(CB), axis=1)))
    return float(np.max(np.abs(z_ref))) + norm_cb * bmax + amax


def reference_measurements(scenario: AttackScenario) -> np.ndarray:
    """Noise-free nominal sensor trajectory, shape (T+1, |N_s|)."""
    p = scenario.plant
    E = impact.estimator_matrix(p.A, p.B, p.C)
    F = p.A + p.B @ E @ p.C
    x = p.x0.copy()
    out = np.empty((scenario.T + 1, p.n_sensors))
    for t in range(scenario.T + 1):
        out[t] = p.C @ x
        x = F @ x
    return out


def build_damage_norm(scenario: AttackScenario, z_ref=None) -> MilpInstance:
    """Same constraints as the worst case; maximize the l1 output distortion."""
    _check(scenario)
    p, T = scenario.plant, scenario.T
    z_ref = reference_measurements(scenario) if z_ref is None else np.asarray(z_ref, dtype=float)
    if z_ref.shape != (T + 1, p.n_sensors):
        raise ScenarioError(f"z_ref must have shape {(T + 1, p.n_sensors)}")
    g = augment(scenario.graph)
    bld = _Builder()
    h, y, f, alpha, beta = _cyber(bld, scenario, g)
    bld.cost = [0.0] * len(bld.cost)
    _cyber_rows(bld, scenario, g, h, y, f, alpha, beta)
    a, bb = _physical(bld, scenario, alpha, beta, np.zeros((T + 1, p.n_states)))
    big = damage_big_m(scenario, z_ref)
    CB = p.C @ p.B
    amax = np.maximum(np.abs(scenario.a_lo), np.abs(scenario.a_hi))
    bmax = np.maximum(np.abs(scenario.b_lo), np.abs(scenario.b_hi))
    for t in range(1, T + 1):
        for k in range(p.n_sensors):
            d = bld.var(f"d_{k}_{t}", lb=0.0, ub=big, cost=-1.0)
            s = bld.var(f"s_{k}_{t}", BINARY, 0.0, 1.0)
            # e = z_ref - (CB b)_k - a_k
            e_terms = [(bb[t][j], CB[k, j]) for j in range(p.n_controllers)] + [(a[t][k], 1.0)]
            # d <= e + 2M(1 - s)
            bld.row(f"abs_p_{k}_{t}", [(d, 1.0), (s, 2 * big)] + e_terms, LE, z_ref[t, k] + 2 * big)
            # d <= -e + 2M s
            bld.row(f"abs_n_{k}_{t}", [(d, 1.0), (s, -2 * big)] + [(j, -v) for j, v in e_terms],
                    LE, -z_ref[t, k])
            # |e| <= |z_ref| + sum_j |CB_kj| bmax_j beta_j + amax_k alpha_k; valid for every
            # integer point, and without it a fractional s lets d reach M with no compromise
            link = [(d, 1.0), (alpha[k][t], -amax[k])]
            link += [(beta[j][t], -abs(CB[k, j]) * bmax[j]) for j in range(p.n_controllers)]
            bld.row(f"abs_link_{k}_{t}", link, LE, abs(z_ref[t, k]))
    inst = bld.finish(0.0, scenario=scenario, graph=g, mode="damage_norm")
    inst.z_ref = z_ref
    return inst


def fixed_schedule_arcs(scenario: AttackScenario, fixed_times: Mapping[str, int]) -> list:
    """Exploit arcs of the shortest-path tree reaching the scheduled targets."""
    if not fixed_times:
        return []
    g = augment(scenario.graph)
    return [a for a in shortest_path_arcs(g, list(fixed_times)) if a.kind == "exploit"]


def build_fixed_intrusion(scenario: AttackScenario, fixed_times: Mapping[str, int] | None = None
                          ) -> MilpInstance:
    """Physical LP under a prescribed compromise schedule.

    Indicators are fixed by bounds; the exploit-count term becomes the
    constant w_cyber * |shortest-path arcs to the scheduled targets|.
    """
    fixed_times = dict(scenario.fixed_times or {}) if fixed_times is None else dict(fixed_times)
    _check(scenario.with_(mode="worst_case", fixed_times=None))
    g = scenario.graph
    T = scenario.T
    for n, t in fixed_times.items():
        if n not in g.targets:
            raise ScenarioError(f"{n} is not a target")
        if not 0 <= t <= T:
            raise ScenarioError(f"compromise time {t} of {n} exceeds horizon {T}")
    W, const = state_weights(scenario)
    const += scenario.w_cyber * len(fixed_schedule_arcs(scenario, fixed_times))
    bld = _Builder()

    def fixed(n, t):
        v = 1.0 if n in fixed_times and t >= fixed_times[n] else 0.0
        return v

    alpha = [[bld.var(f"alpha_{n}_{t}", BINARY, fixed(n, t), fixed(n, t)) for t in range(T + 1)]
             for n in g.sensors]
    beta = [[bld.var(f"beta_{n}_{t}", BINARY, fixed(n, t), fixed(n, t)) for t in range(T + 1)]
            for n in g.controllers]
    _physical(bld, scenario, alpha, beta, W)
    inst = bld.finish(const, scenario=scenario, graph=augment(g), mode="fixed_intrusion")
    inst.fixed_times = fixed_times
    return inst


def build(scenario: AttackScenario, **kw) -> MilpInstance:
    if scenario.mode == "worst_case":
        return build_worst_case(scenario)
    if scenario.mode == "damage_norm":
        return build_damage_norm(scenario, kw.get("z_ref"))
    return build_fixed_intrusion(scenario, kw.get("fixed_times"))


def expected_column_count(scenario: AttackScenario) -> int:
    """Closed-form column count of the worst-case instance."""
    g = augment(scenario.graph)
    n_nodes = len(g.nodes) - 1
    ns, nc, M = len(g.sensors), len(g.controllers), scenario.plant.n_states
    return n_nodes + 2 * len(g.arcs) + (ns + nc) * (scenario.T + 1) + (M + 2 * nc + 2 * ns) * (scenario.T + 1)


# ---------------------------------------------------------------------------
# plans

@dataclass(eq=False)
class AttackPlan:
    sensors: tuple[str, ...]
    controllers: tuple[str, ...]
    T: int
    used_arcs: list[tuple[str, str]]
    flows: dict[tuple[str, str], int]
    start_times: dict[str, float]
    compromise_time: dict[str, int | None]
    a: np.ndarray
    b: np.ndarray
    states: np.ndarray
    objective_value: float
    mttf_proxy_value: float | None
    mttf_surrogate: float | None
    exploit_count: int
    mode: str = "worst_case"

    def alpha(self) -> np.ndarray:
        return _indicator(self.sensors, self.compromise_time, self.T)

    def beta(self) -> np.ndarray:
        return _indicator(self.controllers, self.compromise_time, self.T)

    @property
    def compromised(self) -> list[str]:
        return [n for n, t in self.compromise_time.items() if t is not None]

    def to_dict(self) -> dict:
        return {
            "mode": self.mode, "T": self.T,
            "sensors": list(self.sensors), "controllers": list(self.controllers),
            "used_arcs": [list(k) for k in self.used_arcs],
            "flows": [[i, j, v] for (i, j), v in self.flows.items()],
            "start_times": self.start_times,
            "compromise_time": self.compromise_time,
            "a": self.a.tolist(), "b": self.b.tolist(), "states": self.states.tolist(),
            "objective_value": self.objective_value,
            "mttf_proxy_value": self.mttf_proxy_value,
            "mttf_surrogate": self.mttf_surrogate,
            "exploit_count": self.exploit_count,
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "AttackPlan":
        return cls(
            sensors=tuple(doc["sensors"]), controllers=tuple(doc["controllers"]), T=int(doc["T"]),
            used_arcs=[tuple(k) for k in doc["used_arcs"]],
            flows={(i, j): int(v) for i, j, v in doc["flows"]},
            start_times={k: float(v) for k, v in doc["start_times"].items()},
            compromise_time={k: (None if v is None else int(v))
                             for k, v in doc["compromise_time"].items()},
            a=np.array(doc["a"], dtype=float).reshape(len(doc["sensors"]), -1),
            b=np.array(doc["b"], dtype=float).reshape(len(doc["controllers"]), -1),
            states=np.array(doc["states"], dtype=float),
            objective_value=float(doc["objective_value"]),
            mttf_proxy_value=doc.get("mttf_proxy_value"),
            mttf_surrogate=doc.get("mttf_surrogate"),
            exploit_count=int(doc["exploit_count"]), mode=doc.get("mode", "worst_case"))


def _indicator(group, times, T) -> np.ndarray:
    out = np.zeros((len(group), T + 1))
    for k, n in enumerate(group):
        t = times.get(n)
        if t is not None:
            out[k, t:] = 1.0
    return out


def closed_loop_states(scenario: AttackScenario, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Noise-free trajectory x_0..x_T under open-loop offsets a, b."""
    p = scenario.plant
    E = impact.estimator_matrix(p.A, p.B, p.C)
    T = a.shape[1] - 1
    X = np.empty((T + 1, p.n_states))
    X[0] = p.x0
    for t in range(T):
        z = p.C @ X[t] + a[:, t]
        X[t + 1] = p.A @ X[t] + p.B @ (E @ z + b[:, t])
    return X


def _plan_metrics(scenario: AttackScenario, states: np.ndarray):
    if scenario.degradation.lam is None:
        return None, None
    params = impact.MttfProxyParams.from_model(scenario.degradation, scenario.T)
    return impact.mttf_proxy(states, params), impact.mttf_surrogate(states, params)


def decode_solution(instance: MilpInstance, raw, objective: float | None = None,
                    int_tol: float = 1e-6, residual_tol: float = 1e-6) -> AttackPlan:
    """Turn a raw column vector into an AttackPlan after feasibility checks."""
    raw = np.asarray(raw, dtype=float)
    if raw.shape != (instance.n_cols,):
        raise DecodeError(f"vector has length {raw.size}, instance has {instance.n_cols} columns")
    viol = instance.integrality_violation(raw)
    if viol > int_tol:
        raise DecodeError(f"integrality violation {viol:.3g}")
    res = instance.max_violation(raw)
    if res > residual_tol:
        raise DecodeError(f"constraint residual {res:.3g}")
    obj = instance.objective(raw)
    if objective is not None and abs(obj - objective) > 1e-6 * (1 + abs(objective)):
        raise DecodeError(f"objective mismatch: recomputed {obj!r}, solver {objective!r}")

    sc, g = instance.scenario, instance.graph
    T, nm = sc.T, instance.name_map
    val = lambda name: raw[nm[name]]
    used, flows, h = [], {}, {}
    if f"h_{g.source}" in nm:
        for arc in g.arcs:
            if val(f"y_{arc.tail}_{arc.head}") > 0.5 and arc.kind == "exploit":
                used.append(arc.key)
            fl = int(round(val(f"f_{arc.tail}_{arc.head}")))
            if fl:
                flows[arc.key] = fl
        h = {n: float(val(f"h_{n}")) for n in g.nodes if n != g.sink}
    times: dict[str, int | None] = {}
    for prefix, group in (("alpha", g.sensors), ("beta", g.controllers)):
        for n in group:
            ind = np.array([val(f"{prefix}_{n}_{t}") for t in range(T + 1)]) > 0.5
            times[n] = int(np.argmax(ind)) if ind.any() else None
    p = sc.plant
    a = np.array([[val(f"a_{k}_{t}") for t in range(T + 1)] for k in range(p.n_sensors)])
    b = np.array([[val(f"b_{k}_{t}") for t in range(T + 1)] for k in range(p.n_controllers)])
    states = np.array([[val(f"x_{k}_{t}") for k in range(p.n_states)] for t in range(T + 1)])
    proxy, surrogate = _plan_metrics(sc, states)
    n_exploits = len(used) if h else len(fixed_schedule_arcs(sc, getattr(instance, "fixed_times", {})))
    return AttackPlan(
        sensors=g.sensors, controllers=g.controllers, T=T, used_arcs=used, flows=flows,
        start_times=h, compromise_time=times, a=a, b=b, states=states, objective_value=obj,
        mttf_proxy_value=proxy, mttf_surrogate=surrogate, exploit_count=n_exploits,
        mode=instance.mode)


def encode_plan(instance: MilpInstance, plan: AttackPlan) -> np.ndarray:
    """Raw column vector for a plan; dependent variables are recomputed."""
    sc, g, nm = instance.scenario, instance.graph, instance.name_map
    p, T = sc.plant, sc.T
    raw = np.zeros(instance.n_cols)

    def put(name, v):
        raw[nm[name]] = v

    if f"h_{g.source}" in nm:
        used = set(plan.used_arcs)
        for arc in g.arcs:
            fl = plan.flows.get(arc.key, 0)
            on = arc.key in used or fl > 0
            put(f"y_{arc.tail}_{arc.head}", 1.0 if on else 0.0)
            put(f"f_{arc.tail}_{arc.head}", float(fl))
        for n in g.nodes:
            if n != g.sink:
                put(f"h_{n}", plan.start_times.get(n, 0.0))
    alpha, beta = plan.alpha(), plan.beta()
    for k, n in enumerate(g.sensors):
        for t in range(T + 1):
            put(f"alpha_{n}_{t}", alpha[k, t])
    for k, n in enumerate(g.controllers):
        for t in range(T + 1):
            put(f"beta_{n}_{t}", beta[k, t])
    E = impact.estimator_matrix(p.A, p.B, p.C)
    X = closed_loop_states(sc, plan.a, plan.b)
    for t in range(T + 1):
        z = p.C @ X[t] + plan.a[:, t]
        u = E @ z
        for k in range(p.n_states):
            put(f"x_{k}_{t}", X[t, k])
        for k in range(p.n_sensors):
            put(f"z_{k}_{t}", z[k])
            put(f"a_{k}_{t}", plan.a[k, t])
        for k in range(p.n_controllers):
            put(f"u_{k}_{t}", u[k])
            put(f"b_{k}_{t}", plan.b[k, t])
    if instance.mode == "damage_norm":
        big = damage_big_m(sc, instance.z_ref)
        CB = p.C @ p.B
        for t in range(1, T + 1):
            e = instance.z_ref[t] - CB @ plan.b[:, t] - plan.a[:, t]
            for k in range(p.n_sensors):
                put(f"d_{k}_{t}", min(abs(e[k]), big))
                put(f"s_{k}_{t}", 1.0 if e[k] >= 0 else 0.0)
    return raw


def plan_from_schedule(scenario: AttackScenario, times: Mapping[str, int | None], a, b,
                       used_arcs=(), flows=None, start_times=None, mode="worst_case") -> AttackPlan:
    """Assemble a plan from a compromise schedule and action arrays."""
    g = scenario.graph
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    states = closed_loop_states(scenario, a, b)
    proxy, surrogate = _plan_metrics(scenario, states)
    times = {n: times.get(n) for n in g.targets}
    exploits = [k for k in used_arcs]
    obj = scenario.w_cyber * len(exploits) + (surrogate or 0.0)
    return AttackPlan(g.sensors, g.controllers, scenario.T, exploits, dict(flows or {}),
                      dict(start_times or {}), times, a, b, states, obj, proxy, surrogate,
                      len(exploits), mode)


def damage_value(plan: AttackPlan, scenario: AttackScenario, z_ref=None) -> float:
    """sum_{t=1..T} || z_ref_t - CB b_t - a_t ||_1."""
    p = scenario.plant
    z_ref = reference_measurements(scenario) if z_ref is None else np.asarray(z_ref)
    CB = p.C @ p.B
    T = plan.T
    e = z_ref[1:T + 1].T - CB @ plan.b[:, 1:T + 1] - plan.a[:, 1:T + 1]
    return float(np.abs(e).sum())


def audit_plan(scenario: AttackScenario, plan: AttackPlan, tol: float = 1e-6) -> list[str]:
    """Check the plan invariants; returns human-readable violations."""
    out = []
    g = augment(scenario.graph)
    alpha, beta = plan.alpha(), plan.beta()
    for name, act, ind, lo, hi in (("a", plan.a, alpha, scenario.a_lo, scenario.a_hi),
                                   ("b", plan.b, beta, scenario.b_lo, scenario.b_hi)):
        if np.any(act > hi[:, None] * ind + tol) or np.any(act < lo[:, None] * ind - tol):
            out.append(f"{name} actions violate gated stealth bounds")
    if plan.flows:
        for n in g.nodes:
            net = sum(v for (i, _), v in plan.flows.items() if i == n) - sum(
                v for (_, j), v in plan.flows.items() if j == n)
            want = scenario.K if n == g.source else (-scenario.K if n == g.sink else 0)
            if net != want:
                out.append(f"flow imbalance {net} at {n} (expected {want})")
        times = {a.key: a.time for a in g.arcs}
        for key in plan.used_arcs:
            i, j = key
            if plan.start_times[j] < plan.start_times[i] + times[key] - tol:
                out.append(f"start time of {j} precedes {i} + t_ij")
        arrival = earliest_arrival(g)
        slack = 1.0 if scenario.activation == "literal" else 0.0
        for n, t in plan.compromise_time.items():
            if t is not None and t < arrival[n] - slack - tol:
                out.append(f"{n} compromised at {t} before it is reachable ({arrival[n]})")
    X = closed_loop_states(scenario, plan.a, plan.b)
    Z = X @ scenario.plant.C.T + plan.a.T
    if np.any(np.abs(Z) > scenario.delta + tol):
        out.append("sensor perception bound violated")
    return out
