"""Monte-Carlo closed-loop simulation of the degrading plant.

Replications run side by side as rows of one state array. Replication r
draws its noise from a Philox stream keyed by (seed, r); row t of that stream
holds [v_t, w_t, e_t], so any two runs with the same seed see identical noise
at every step (common random numbers), whatever the plan or horizon.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .impact import estimator_matrix
from .milp import AttackPlan, plan_from_schedule
from .model import LEVELS, AttackScenario, ScenarioError, augment, earliest_arrival, shortest_path_arcs

POLICIES = ("hold_last", "zero")
CHUNK = 256


@dataclass(frozen=True)
class SimConfig:
    horizon: int = 1000
    replications: int = 50
    seed: int = 1
    post_horizon_policy: str = "hold_last"
    t_lambda: int = 600

    def __post_init__(self):
        if self.horizon < 1 or self.replications < 1:
            raise ValueError("horizon and replications must be >= 1")
        if self.post_horizon_policy not in POLICIES:
            raise ValueError(f"unknown post-horizon policy {self.post_horizon_policy!r}")


@dataclass
class TtfDistribution:
    ttf: np.ndarray          # first crossing time, horizon when censored
    censored: np.ndarray     # bool per replication
    horizon: int
    diverged: int = 0

    @property
    def replications(self) -> int:
        return int(self.ttf.size)

    @property
    def censored_count(self) -> int:
        return int(self.censored.sum())

    @property
    def empirical_mttf(self) -> float:
        return float(np.minimum(self.ttf, self.horizon).mean())

    @property
    def standard_error(self) -> float:
        if self.ttf.size < 2:
            return math.nan
        return float(np.minimum(self.ttf, self.horizon).std(ddof=1) / math.sqrt(self.ttf.size))

    def histogram(self, bins: int = 20) -> tuple[np.ndarray, np.ndarray]:
        return np.histogram(np.minimum(self.ttf, self.horizon), bins=bins, range=(0, self.horizon))

    def summary(self) -> dict:
        return {"replications": self.replications, "horizon": self.horizon,
                "empirical_mttf": self.empirical_mttf, "standard_error": self.standard_error,
                "censored": self.censored_count, "censor_rate": self.censored_count / self.replications,
                "diverged": self.diverged}


@dataclass
class SimResult:
    ttf: TtfDistribution
    checkpoints: dict[int, np.ndarray]  # t -> S_t per replication
    z_std: np.ndarray                   # per replication and sensor, over t = 0..horizon
    mean_path: np.ndarray               # rows t = 0..horizon: mean S_t then mean x_t
    residual: dict[int, np.ndarray] = field(default_factory=dict)  # S_t - sum theta(x_tau)


def _noise(seed: int, r: int, horizon: int, width: int) -> np.ndarray:
    gen = np.random.Generator(np.random.Philox(key=np.array([seed, r], dtype=np.uint64)))
    return gen.standard_normal((horizon + 1, width))


def _actions(plan: AttackPlan | None, n: int, horizon: int, policy: str, which: str) -> np.ndarray:
    """Action schedule for t = 0..horizon; columns t >= T follow the policy."""
    out = np.zeros((horizon + 1, n))
    if plan is None:
        return out
    arr = plan.a if which == "a" else plan.b
    T = plan.T
    span = min(T, horizon + 1)
    out[:span] = arr[:, :span].T
    if policy == "hold_last" and horizon >= T:
        out[T:] = arr[:, T - 1]
    return out


def simulate(scenario: AttackScenario, plan: AttackPlan | None, cfg: SimConfig,
             checkpoints=()) -> SimResult:
    """Noisy closed loop under ``plan`` (None = no attack) for every replication."""
    p, d = scenario.plant, scenario.degradation
    if d.lam is None:
        raise ScenarioError("failure threshold lambda is required for simulation")
    H, R = cfg.horizon, cfg.replications
    M, ns, nc = p.n_states, p.n_sensors, p.n_controllers
    E = estimator_matrix(p.A, p.B, p.C)
    a_seq = _actions(plan, ns, H, cfg.post_horizon_policy, "a")
    b_seq = _actions(plan, nc, H, cfg.post_horizon_policy, "b")
    checkpoints = sorted({int(t) for t in checkpoints if 1 <= t <= H})
    ttf = np.full(R, H, dtype=np.int64)
    censored = np.ones(R, dtype=bool)
    diverged = np.zeros(R, dtype=bool)
    cps = {t: np.empty(R) for t in checkpoints}
    resid = {t: np.empty(R) for t in checkpoints}
    z_std = np.empty((R, ns))
    path_sum = np.zeros((H + 1, 1 + M))
    width = M + ns + 1
    for lo in range(0, R, CHUNK):
        rows = np.arange(lo, min(R, lo + CHUNK))
        noise = np.stack([_noise(cfg.seed, int(r), H, width) for r in rows], axis=1)
        v = noise[:, :, :M] * p.sigma_v
        w = noise[:, :, M:M + ns] * p.sigma_w
        e = noise[:, :, M + ns] * d.sigma_s
        n = rows.size
        x = np.tile(p.x0, (n, 1))
        drift = np.zeros(n)     # sum of gamma'x_tau + e_tau, so S_t = kappa t + drift exactly
        theta = np.zeros(n)     # sum of gamma'x_tau
        z_s1, z_s2 = np.zeros((n, ns)), np.zeros((n, ns))
        hit = np.zeros(n, dtype=bool)
        path_sum[0, 1:] += x.sum(axis=0)
        for t in range(H + 1):
            z = x @ p.C.T + a_seq[t] + w[t]
            z_s1 += z
            z_s2 += z * z
            if t >= 1:
                g = x @ d.gamma
                theta += g
                drift += g + e[t]
                S = d.kappa * t + drift
                new = ~hit & (S >= d.lam)
                ttf[rows[new]] = t
                censored[rows[new]] = False
                hit |= new
                path_sum[t, 0] += S.sum()
                if t in cps:
                    cps[t][rows] = S
                    resid[t][rows] = S - (d.kappa * t + theta)
            if t == H:
                break
            u = z @ E.T
            x = x @ p.A.T + (u + b_seq[t]) @ p.B.T + v[t]
            bad = ~np.all(np.isfinite(x), axis=1)
            if bad.any():
                diverged[rows[bad]] = True
                x[bad] = 0.0
            path_sum[t + 1, 1:] += x.sum(axis=0)
        cnt = H + 1
        var = np.maximum(z_s2 / cnt - (z_s1 / cnt) ** 2, 0.0) * cnt / max(cnt - 1, 1)
        z_std[rows] = np.sqrt(var)
    dist = TtfDistribution(ttf, censored & ~diverged, H, int(diverged.sum()))
    return SimResult(dist, cps, z_std, path_sum / R, resid)


@dataclass(frozen=True)
class CalibrationResult:
    lam: float
    sigma_z: float
    delta: float
    bounds: dict  # level -> {"a": (lo, hi), "b": (lo, hi)}

    def apply(self, scenario: AttackScenario, level: str | None = None) -> AttackScenario:
        sc = scenario.with_(lam=self.lam, delta=self.delta)
        if level is not None:
            bd = self.bounds[level]
            sc = sc.with_(a_lo=bd["a"][0], a_hi=bd["a"][1], b_lo=bd["b"][0], b_hi=bd["b"][1])
        return sc

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "sigma_z": self.sigma_z, "delta": self.delta,
                "bounds": {k: {"a": list(v["a"]), "b": list(v["b"])} for k, v in self.bounds.items()}}


def calibrate(scenario: AttackScenario, cfg: SimConfig) -> CalibrationResult:
    """Failure threshold, perception bound and stealth levels from nominal runs."""
    if cfg.replications < 2:
        raise ValueError("calibration needs at least two replications")
    probe = scenario.with_(lam=math.inf)
    run = simulate(probe, None, SimConfig(cfg.t_lambda, cfg.replications, cfg.seed,
                                          cfg.post_horizon_policy, cfg.t_lambda),
                   checkpoints=[cfg.t_lambda])
    lam = float(run.checkpoints[cfg.t_lambda].mean())
    sigma_z = float(run.z_std.mean())
    sw, sv = scenario.plant.sigma_w, scenario.plant.sigma_v
    bounds = {name: {"a": (-k * sw, k * sw), "b": (-k * sv, k * sv)} for name, k in LEVELS.items()}
    return CalibrationResult(lam, sigma_z, 3.0 * sigma_z, bounds)


def random_attack(scenario: AttackScenario, seed: int) -> AttackPlan:
    """Random attacker: K reachable targets, earliest compromise, uniform actions.

    Actions are drawn uniformly inside the stealth bounds from the compromise
    time on; if the noise-free closed loop then breaks the perception bound
    the whole action set is halved until it does not.
    """
    from .milp import closed_loop_states

    g = augment(scenario.graph)
    T, K = scenario.T, scenario.K
    arrival = earliest_arrival(g)
    ready = [t for t in g.targets if math.isfinite(arrival[t]) and math.ceil(arrival[t] - 1e-9) <= T]
    if len(ready) < K:
        raise ScenarioError(f"no reachable target set of size {K} within horizon {T}")
    rng = np.random.default_rng(seed)
    combos = list(itertools.combinations(ready, K))
    chosen = combos[int(rng.integers(len(combos)))]
    times = {t: int(math.ceil(arrival[t] - 1e-9)) if t in chosen else None for t in g.targets}
    p = scenario.plant
    a = np.zeros((p.n_sensors, T + 1))
    b = np.zeros((p.n_controllers, T + 1))
    for k, n in enumerate(g.sensors):
        if times[n] is not None:
            a[k, times[n]:] = rng.uniform(scenario.a_lo[k], scenario.a_hi[k], T + 1 - times[n])
    for k, n in enumerate(g.controllers):
        if times[n] is not None:
            b[k, times[n]:] = rng.uniform(scenario.b_lo[k], scenario.b_hi[k], T + 1 - times[n])
    for _ in range(64):
        X = closed_loop_states(scenario, a, b)
        Z = X @ p.C.T + a.T
        if np.all(np.abs(Z) <= scenario.delta * (1 - 1e-12)):
            break
        a, b = a * 0.5, b * 0.5
    else:
        a, b = np.zeros_like(a), np.zeros_like(b)
    tree = shortest_path_arcs(g, chosen)
    flows = {}
    for t in chosen:
        node = t
        flows[(t, g.sink)] = 1
        while node != g.source:
            arc = next(x for x in tree if x.head == node)
            flows[arc.key] = flows.get(arc.key, 0) + 1
            node = arc.tail
    starts = {n: arrival[n] for n in {x.tail for x in tree} | {x.head for x in tree}}
    used = [x.key for x in tree if x.kind == "exploit"]
    return plan_from_schedule(scenario, times, a, b, used_arcs=used, flows=flows,
                              start_times=starts, mode="random")
