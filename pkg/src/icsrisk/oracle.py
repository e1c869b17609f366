"""Exhaustive worst-case attack search for tiny scenarios.

Enumerates every subset of exploit arcs, derives the least start times the
big-M precedence rows allow, then every admissible set of activated targets.
Activating a target as early as its start row permits only widens the action
bounds, so the earliest activation dominates and is the only one evaluated.
The physical part is an LP in the actions alone (the noise-free closed loop is
substituted out) solved by the in-house simplex; its value is cached per
activation vector.
"""
from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .impact import estimator_matrix
from .milp import AttackPlan, plan_from_schedule
from .model import AttackScenario, augment, min_start_times
from .solver.lp import solve_lp


class OracleLimitError(ValueError):
    pass


class OracleInfeasible(RuntimeError):
    pass


@dataclass(frozen=True)
class OracleLimits:
    max_nodes: int = 12
    max_arcs: int = 16  # exploit arcs; source and sink arcs are implied
    max_K: int = 3
    max_T: int = 16
    max_states: int = 3
    budget: int = 10_000_000


def _check_limits(scenario: AttackScenario, limits: OracleLimits, n_exploit: int):
    g = scenario.graph
    checks = [("nodes", len(g.nodes), limits.max_nodes), ("arcs", n_exploit, limits.max_arcs),
              ("K", scenario.K, limits.max_K), ("T", scenario.T, limits.max_T),
              ("states", scenario.plant.n_states, limits.max_states)]
    for what, have, cap in checks:
        if have > cap:
            raise OracleLimitError(f"{what}={have} exceeds oracle limit {cap}")
    n_targets = len(g.targets)
    per_y = sum(math.comb(n_targets, k) for k in range(scenario.K + 1))
    if 2 ** n_exploit * per_y > limits.budget:
        raise OracleLimitError("enumeration budget exceeded")
    if scenario.mode != "worst_case":
        raise OracleLimitError("the oracle only covers worst_case mode")


class _PhysicalLp:
    """min over actions of the summed MTTF margins, for fixed activation times."""

    def __init__(self, scenario: AttackScenario):
        p, d, T = scenario.plant, scenario.degradation, scenario.T
        self.sc = scenario
        E = estimator_matrix(p.A, p.B, p.C)
        ns, nc, M = p.n_sensors, p.n_controllers, p.n_states
        self.ns, self.nc, self.T = ns, nc, T
        nv = (ns + nc) * (T + 1)
        ia = lambda k, t: k * (T + 1) + t
        ib = lambda k, t: ns * (T + 1) + k * (T + 1) + t
        self.ia, self.ib = ia, ib
        # x_t = x_free[t] + G[t] @ v
        F = p.A + p.B @ E @ p.C
        G = [np.zeros((M, nv))]
        x_free = [p.x0.copy()]
        for t in range(T):
            g = F @ G[t]
            for k in range(ns):
                g[:, ia(k, t)] += (p.B @ E)[:, k]
            for k in range(nc):
                g[:, ib(k, t)] += p.B[:, k]
            G.append(g)
            x_free.append(F @ x_free[t])
        # sum_{tau=1..T} (lam - kappa tau - gamma' sum_{t<=tau} x_t) / (sigma_s sqrt tau)
        cost, const = np.zeros(nv), 0.0
        run_v, run_c = np.zeros(nv), 0.0
        for tau in range(1, T + 1):
            run_v = run_v + d.gamma @ G[tau]
            run_c += float(d.gamma @ x_free[tau])
            scale = 1.0 / (d.sigma_s * math.sqrt(tau))
            cost -= scale * run_v
            const += scale * (d.lam - d.kappa * tau - run_c)
        self.cost, self.const = cost, const
        rows, rhs, sense = [], [], []
        for t in range(T + 1):
            for k in range(ns):
                delta = scenario.delta[k]
                if not math.isfinite(delta):
                    continue
                r = p.C[k] @ G[t]
                r[ia(k, t)] += 1.0
                zf = float(p.C[k] @ x_free[t])
                rows += [r, r]
                rhs += [delta - zf, -delta - zf]
                sense += ["L", "G"]
        self.A = np.array(rows) if rows else np.zeros((0, nv))
        self.rhs, self.sense = np.array(rhs), np.array(sense)
        self.cache: dict[tuple, tuple[float, np.ndarray] | None] = {}

    def solve(self, times: tuple) -> tuple[float, np.ndarray] | None:
        if times in self.cache:
            return self.cache[times]
        sc, T = self.sc, self.T
        lb, ub = np.zeros(self.cost.size), np.zeros(self.cost.size)
        for k in range(self.ns + self.nc):
            s = times[k]
            if s is None:
                continue
            lo, hi = ((sc.a_lo[k], sc.a_hi[k]) if k < self.ns
                      else (sc.b_lo[k - self.ns], sc.b_hi[k - self.ns]))
            idx = (self.ia(k, 0) if k < self.ns else self.ib(k - self.ns, 0))
            lb[idx + s: idx + T + 1] = lo
            ub[idx + s: idx + T + 1] = hi
        sol = solve_lp(self.cost, self.A, self.sense, self.rhs, lb, ub, backend="simplex")
        out = (float(sol.objective) + self.const, sol.x) if sol.status == "optimal" else None
        self.cache[times] = out
        return out


def _reachable(g, used: set) -> set:
    adj: dict[str, list[str]] = {}
    for a in g.arcs:
        if a.kind == "source" or a.key in used:
            adj.setdefault(a.tail, []).append(a.head)
    seen, todo = {g.source}, deque([g.source])
    while todo:
        n = todo.popleft()
        for m in adj.get(n, []):
            if m not in seen:
                seen.add(m)
                todo.append(m)
    return seen


def _route(g, used: set, targets: list[str], K: int) -> dict:
    """Integer flow sending one unit per target (the rest to the first) to the sink."""
    prev: dict[str, tuple] = {}
    todo, seen = deque([g.source]), {g.source}
    while todo:
        n = todo.popleft()
        for a in g.arcs:
            if a.tail == n and (a.kind == "source" or a.key in used) and a.head not in seen:
                seen.add(a.head)
                prev[a.head] = a.key
                todo.append(a.head)
    flows: dict = {}
    for k, t in enumerate(targets):
        units = 1 if k else K - len(targets) + 1
        flows[(t, g.sink)] = flows.get((t, g.sink), 0) + units
        node = t
        while node != g.source:
            key = prev[node]
            flows[key] = flows.get(key, 0) + units
            node = key[0]
    return flows


def brute_force(scenario: AttackScenario, limits: OracleLimits | None = None) -> AttackPlan:
    """Globally optimal worst-case plan by exhaustive enumeration."""
    limits = limits or OracleLimits()
    g = augment(scenario.graph)
    exploit = [a for a in g.arcs if a.kind == "exploit"]
    _check_limits(scenario, limits, len(exploit))
    T, K = scenario.T, scenario.K
    slack = 1.0 if scenario.activation == "literal" else 0.0
    h_cap = T + 1 + slack
    phys = _PhysicalLp(scenario)
    targets = g.targets
    best = None
    candidates = 0
    for mask in range(2 ** len(exploit)):
        used = {a.key for k, a in enumerate(exploit) if mask >> k & 1}
        h = min_start_times(g, used | {a.key for a in g.arcs if a.kind == "source"}, T,
                            scenario.big_m)
        if h is None or any(h[t] > h_cap + 1e-9 for t in targets):
            continue
        reach = _reachable(g, used)
        hit = [t for t in targets if t in reach]
        if not hit:
            continue
        earliest = {t: max(0, math.ceil(h[t] - slack - 1e-9)) for t in hit}
        eligible = [t for t in hit if earliest[t] <= T]
        cyber = scenario.w_cyber * len(used)
        for size in range(min(K, len(eligible)) + 1):
            for chosen in itertools.combinations(eligible, size):
                candidates += 1
                times = tuple(earliest[t] if t in chosen else None for t in targets)
                res = phys.solve(times)
                if res is None:
                    continue
                total = cyber + res[0]
                if best is None or total < best[0] - 1e-12:
                    best = (total, used, chosen or (hit[0],), times, res[1], h)
    if best is None:
        raise OracleInfeasible("no feasible attack exists")
    total, used, routed, times, v, h = best
    ns, nc = phys.ns, phys.nc
    a = v[: ns * (T + 1)].reshape(ns, T + 1)
    b = v[ns * (T + 1):].reshape(nc, T + 1)
    flows = _route(g, used, list(routed), K)
    plan = plan_from_schedule(
        scenario, dict(zip(targets, times)), a, b,
        used_arcs=[a_.key for a_ in exploit if a_.key in used], flows=flows,
        start_times=h)
    plan.objective_value = total
    plan.candidates = candidates
    return plan


def random_instance(seed: int, max_T: int = 12) -> AttackScenario:
    """Tiny seeded worst-case scenario inside the default oracle limits.

    At most 8 graph nodes and 14 exploit arcs, K <= 2, T <= max_T, one or
    two plant states; sometimes two initial states so augmentation adds a
    source.
    """
    from .model import AttackGraph, DegradationModel, PlantModel

    rng = np.random.default_rng(seed)
    M = int(rng.integers(1, 3))
    nc = 1 if M == 1 else int(rng.integers(1, 3))
    ns = int(rng.integers(M, 3))
    sensors = [f"s{k}" for k in range(ns)]
    controllers = [f"c{k}" for k in range(nc)]
    n_mid = int(rng.integers(1, 9 - ns - nc - 1))
    inner = ["0"] + [f"n{k}" for k in range(1, n_mid + 1)]
    initial = ["0", inner[1]] if n_mid >= 2 and rng.random() < 0.3 else ["0"]
    pairs = [(i, j) for i in inner for j in inner[1:] if i != j and j not in initial]
    pairs += [(i, t) for i in inner for t in sensors + controllers]
    order = rng.permutation(len(pairs))
    reserve = ns + nc + n_mid
    chosen = [pairs[k] for k in order[: min(len(pairs), int(rng.integers(2, 15 - reserve)))]]
    # make every target reachable through at least one arc from the inner layer
    for t in sensors + controllers:
        if not any(j == t for _, j in chosen):
            chosen.append((inner[int(rng.integers(len(inner)))], t))
    for n in inner[1:]:
        if n not in initial and not any(j == n for _, j in chosen):
            chosen.append((inner[0], n))
    arcs = [(i, j, float(np.round(rng.uniform(0.5, 4.5), 2))) for i, j in chosen]
    graph = AttackGraph.build(inner + sensors + controllers, arcs, initial, sensors, controllers)
    A = rng.uniform(-0.6, 0.6, (M, M))
    B = rng.uniform(0.5, 1.5, (M, nc)) if nc == M == 1 else rng.normal(size=(M, nc)) + np.eye(M, nc)
    C = rng.normal(size=(ns, M)) + np.eye(ns, M)
    plant = PlantModel.build(A, B, C, 0.1, 0.05)
    gamma = rng.uniform(0.05, 1.0, M)
    deg = DegradationModel.build(float(rng.uniform(0.1, 1.0)), gamma, float(rng.uniform(0.05, 0.5)),
                                 float(rng.uniform(5.0, 20.0)))
    T = int(rng.integers(3, max_T + 1))
    K = int(rng.integers(1, 3))
    delta = rng.uniform(0.3, 2.0, ns) if rng.random() < 0.7 else np.full(ns, math.inf)
    return AttackScenario(graph, plant, deg, T, K, delta=delta,
                          a_lo=-rng.uniform(0.0, 1.0, ns), a_hi=rng.uniform(0.0, 1.0, ns),
                          b_lo=-rng.uniform(0.0, 1.0, nc), b_hi=rng.uniform(0.0, 1.0, nc),
                          w_cyber=float(rng.uniform(0.05, 1.0)))
