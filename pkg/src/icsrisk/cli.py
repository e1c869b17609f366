"""Command-line front end: attack generation followed by risk assessment.

Every command writes into an output directory (``--out``, else the
``ICSRISK_OUT`` environment variable, else ``./icsrisk-out``) and finishes by
writing ``manifest.json`` listing each file it produced with its digest.
Nothing time- or host-dependent is written, so identical inputs give
byte-identical outputs.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, milp, model, sim
from .model import ScenarioError
from .solver import MilpOptions, solve_external, solve_milp
from .solver.lpfile import LpFormatError, export_lp, import_solution

EXIT_OK, EXIT_INVALID, EXIT_INFEASIBLE, EXIT_LIMIT = 0, 2, 3, 4
OUT_ENV = "ICSRISK_OUT"
EMBEDDED_MAX_COLUMNS = 400


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# inputs

def _read_scenario(spec: str):
    """Scenario file path, or ``builtin:bwpp`` / ``builtin:numerical[:kind[:seed]]``."""
    if spec.startswith("builtin:"):
        parts = spec.split(":")[1:]
        if parts[0] == "bwpp":
            doc = model.bwpp_document()
        elif parts[0] == "numerical":
            kind = parts[1] if len(parts) > 1 else "high"
            seed = int(parts[2]) if len(parts) > 2 else 6
            doc = model.scenario_to_dict(model.numerical_study(kind, seed), model.SimSection())
        else:
            raise CliError(f"unknown builtin scenario {spec!r}", EXIT_INVALID)
        raw = json.dumps(doc, sort_keys=True).encode()
    else:
        try:
            raw = Path(spec).read_bytes()
            doc = json.loads(raw)
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read scenario {spec}: {exc}", EXIT_INVALID) from exc
    try:
        scenario, simsec = model.scenario_from_dict(doc)
    except (ScenarioError, ValueError) as exc:
        raise CliError(str(exc), EXIT_INVALID) from exc
    return scenario, simsec, doc, hashlib.sha256(raw).hexdigest()


def _csv_list(text, cast=str):
    return [cast(v) for v in text.split(",") if v.strip()] if text else []


def _schedule(text: str | None) -> dict[str, int]:
    out = {}
    for item in _csv_list(text):
        name, _, t = item.partition("=")
        out[name.strip()] = int(t)
    return out


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else str(v)
    return str(v)


# ---------------------------------------------------------------------------
# outputs

class Outputs:
    """Collects files for one command and writes the manifest last."""

    def __init__(self, root: Path, command: str, scenario_hash: str | None, seed, options: dict):
        self.root = root
        self.root.mkdir(parents=True, exist_ok=True)
        self.command, self.scenario_hash, self.seed, self.options = command, scenario_hash, seed, options
        self.files: list[str] = []

    def path(self, name: str) -> Path:
        p = self.root / name
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def _register(self, name: str):
        if name not in self.files:
            self.files.append(name)

    def write_bytes(self, name: str, data: bytes):
        p = self.path(name)
        tmp = p.with_name(p.name + ".tmp")
        tmp.write_bytes(data)
        os.replace(tmp, p)
        self._register(name)

    def write_json(self, name: str, obj):
        self.write_bytes(name, (json.dumps(obj, indent=2, sort_keys=True, default=_json_default)
                                + "\n").encode())

    def write_csv(self, name: str, header, rows):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
        self.write_bytes(name, buf.getvalue().encode())

    def adopt(self, name: str):
        self._register(name)

    def finish(self, status: str):
        listing = []
        for name in self.files:
            digest = hashlib.sha256(self.path(name).read_bytes()).hexdigest()
            listing.append({"file": name, "sha256": digest})
        self.write_json("manifest.json", {
            "command": self.command, "scenario_sha256": self.scenario_hash, "seed": self.seed,
            "options": self.options, "tool_version": __version__, "status": status,
            "outputs": listing})


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _svg(fig) -> bytes:
    buf = io.BytesIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    return buf.getvalue()


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "icsrisk"
    return plt


# ---------------------------------------------------------------------------
# shared steps

def _sim_config(args, simsec: model.SimSection) -> sim.SimConfig:
    return sim.SimConfig(
        horizon=args.horizon or simsec.horizon,
        replications=args.replications or simsec.replications,
        seed=simsec.seed if args.seed is None else args.seed,
        post_horizon_policy=args.policy or simsec.post_horizon_policy,
        t_lambda=getattr(args, "t_lambda", None) or simsec.t_lambda)


def _calibrated(scenario, simsec, seed, calibration_path=None):
    """Fill in lambda and delta when the scenario leaves them open."""
    if calibration_path:
        cal_doc = json.loads(Path(calibration_path).read_text())
        return scenario.with_(lam=cal_doc["lambda"],
                              delta=cal_doc["delta"] if np.all(np.isinf(scenario.delta)) else scenario.delta)
    need_lam = scenario.degradation.lam is None
    need_delta = bool(np.all(np.isinf(scenario.delta)))
    if not (need_lam or need_delta):
        return scenario
    cal = sim.calibrate(scenario, sim.SimConfig(simsec.t_lambda, max(2, simsec.replications),
                                                simsec.seed if seed is None else seed,
                                                simsec.post_horizon_policy, simsec.t_lambda))
    changes = {}
    if need_lam:
        changes["lam"] = cal.lam
    if need_delta:
        changes["delta"] = cal.delta
    return scenario.with_(**changes)


def _apply_level(scenario, level):
    return scenario if level is None else scenario.with_level(level)


def _solve(instance, solver: str, node_limit: int, time_limit):
    if solver == "auto":
        solver = "embedded" if instance.n_cols <= EMBEDDED_MAX_COLUMNS else "external"
    if solver == "embedded":
        return solve_milp(instance, MilpOptions(node_limit=node_limit, time_limit=time_limit)), solver
    return solve_external(instance, time_limit=time_limit), solver


def _plan_summary(plan: milp.AttackPlan, scenario) -> dict:
    return {
        "mode": plan.mode, "T": plan.T, "K": scenario.K,
        "objective": plan.objective_value, "mttf_proxy": plan.mttf_proxy_value,
        "mttf_surrogate": plan.mttf_surrogate, "exploit_count": plan.exploit_count,
        "compromise_time": plan.compromise_time,
        "damage": milp.damage_value(plan, scenario),
        "audit": milp.audit_plan(scenario, plan),
    }


def synthesize(scenario, solver="auto", node_limit=200_000, time_limit=None):
    """Build, solve and decode; returns (plan | None, status, solver used)."""
    instance = milp.build(scenario)
    res, used = _solve(instance, solver, node_limit, time_limit)
    if res.x is None:
        return None, res.status, used
    plan = milp.decode_solution(instance, res.x, res.objective)
    return plan, res.status, used


# ---------------------------------------------------------------------------
# commands

def cmd_validate(args) -> int:
    scenario, _, _, digest = _read_scenario(args.scenario)
    rep = model.validate(scenario)
    out = Outputs(_out_dir(args), "validate", digest, None, {"scenario": args.scenario})
    out.write_json("validation.json", {"ok": rep.ok, "errors": rep.errors, "warnings": rep.warnings})
    for line in rep.lines():
        print(line)
    print("ok" if rep.ok else "invalid")
    out.finish("ok" if rep.ok else "invalid")
    return EXIT_OK if rep.ok else EXIT_INVALID


def _checked(scenario):
    rep = model.validate(scenario)
    if not rep.ok:
        raise CliError("; ".join(rep.lines()), EXIT_INVALID)
    return scenario


def cmd_calibrate(args) -> int:
    scenario, simsec, _, digest = _read_scenario(args.scenario)
    _checked(scenario)
    cfg = _sim_config(args, simsec)
    cal = sim.calibrate(scenario, cfg)
    out = Outputs(_out_dir(args), "calibrate", digest, cfg.seed, _opts(args))
    out.write_json("calibration.json", cal.to_dict())
    print(f"lambda={cal.lam!r} sigma_z={cal.sigma_z!r} delta={cal.delta!r}")
    out.finish("ok")
    return EXIT_OK


def _configure(scenario, simsec, args):
    changes = {}
    for key in ("K", "T"):
        if getattr(args, key, None) is not None:
            changes[key] = getattr(args, key)
    if getattr(args, "mode", None):
        changes["mode"] = args.mode
    if getattr(args, "w_cyber", None) is not None:
        changes["w_cyber"] = args.w_cyber
    fixed = _schedule(getattr(args, "fixed", None))
    if fixed:
        changes["fixed_times"] = fixed
    if changes.get("mode", scenario.mode) != "fixed_intrusion":
        changes["fixed_times"] = None
    elif scenario.fixed_times is None and "fixed_times" not in changes:
        changes["fixed_times"] = {}
    scenario = scenario.with_(**changes)
    scenario = _apply_level(scenario, getattr(args, "level", None))
    scenario = _calibrated(scenario, simsec, args.seed, getattr(args, "calibration", None))
    return _checked(scenario)


def cmd_attack(args) -> int:
    scenario, simsec, _, digest = _read_scenario(args.scenario)
    scenario = _configure(scenario, simsec, args)
    out = Outputs(_out_dir(args), "attack", digest, args.seed, _opts(args))
    instance = milp.build(scenario)
    if args.export_lp:
        export_lp(instance, out.path(args.export_lp))
        out.adopt(args.export_lp)
        if not args.import_solution:
            print(f"wrote {args.export_lp}")
            out.finish("exported")
            return EXIT_OK
    if args.import_solution:
        try:
            raw = import_solution(args.import_solution, instance)
            plan = milp.decode_solution(instance, raw)
        except (LpFormatError, milp.DecodeError) as exc:
            raise CliError(f"imported solution rejected: {exc}", EXIT_INVALID) from exc
        status, used = "imported", "external-file"
    else:
        res, used = _solve(instance, args.solver, args.node_limit, args.time_limit)
        status = res.status
        if res.x is None:
            out.write_json("summary.json", {"status": status, "solver": used})
            out.finish(status)
            print(f"status={status}")
            return EXIT_INFEASIBLE if status == "infeasible" else EXIT_LIMIT
        plan = milp.decode_solution(instance, res.x, res.objective)
    out.write_json("plan.json", plan.to_dict())
    summary = {"status": status, "solver": used, **_plan_summary(plan, scenario)}
    out.write_json("summary.json", summary)
    out.write_json("scenario.json", model.scenario_to_dict(scenario, simsec))
    out.finish(status)
    print(f"status={status} objective={plan.objective_value!r} "
          f"compromised={','.join(plan.compromised) or '-'}")
    return EXIT_LIMIT if status in ("feasible_limit", "limit") else EXIT_OK


def _simulate_outputs(out: Outputs, scenario, plan, cfg, prefix=""):
    res = sim.simulate(scenario, plan, cfg)
    d = res.ttf
    out.write_csv(f"{prefix}ttf.csv", ["replication", "ttf", "censored"],
                  [(r, int(d.ttf[r]), int(d.censored[r])) for r in range(d.replications)])
    step = max(1, cfg.horizon // 200)
    M = scenario.plant.n_states
    out.write_csv(f"{prefix}trajectories.csv", ["t", "mean_S"] + [f"mean_x{k}" for k in range(M)],
                  [[t] + [float(v) for v in res.mean_path[t]] for t in range(0, cfg.horizon + 1, step)])
    proxy = None
    if plan is not None:
        proxy = plan.mttf_proxy_value
    summary = {**d.summary(), "proxy_mttf": proxy, "seed": cfg.seed,
               "post_horizon_policy": cfg.post_horizon_policy}
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    counts, edges = d.histogram()
    ax.bar(edges[:-1], counts, width=np.diff(edges), align="edge", edgecolor="black")
    ax.set_xlabel("time to failure")
    ax.set_ylabel("replications")
    ax.set_title(f"empirical MTTF {d.empirical_mttf:.1f} ({d.censored_count} censored)")
    out.write_bytes(f"{prefix}histogram.svg", _svg(fig))
    plt.close(fig)
    return summary


def cmd_simulate(args) -> int:
    scenario, simsec, _, digest = _read_scenario(args.scenario)
    plan = None
    if args.plan:
        doc = json.loads(Path(args.plan).read_text())
        plan = milp.AttackPlan.from_dict(doc)
        scenario = scenario.with_(T=plan.T)
    scenario = _calibrated(scenario, simsec, args.seed, args.calibration)
    cfg = _sim_config(args, simsec)
    out = Outputs(_out_dir(args), "simulate", digest, cfg.seed, _opts(args))
    summary = _simulate_outputs(out, scenario, plan, cfg)
    out.write_json("summary.json", summary)
    out.finish("ok")
    print(f"empirical_mttf={summary['empirical_mttf']!r} censored={summary['censored']}")
    return EXIT_OK


def _sweep_cell(job):
    scenario, K, T, level, cfg, solver, node_limit = job
    sc = _apply_level(scenario.with_(K=K, T=T), level)
    plan, status, used = synthesize(sc, solver, node_limit)
    row = {"K": K, "T": T, "level": level or "", "status": status, "solver": used}
    if plan is None:
        return row
    d = sim.simulate(sc, plan, cfg).ttf
    row.update(objective=plan.objective_value, mttf_proxy=plan.mttf_proxy_value,
               mttf_surrogate=plan.mttf_surrogate, exploit_count=plan.exploit_count,
               empirical_mttf=d.empirical_mttf, standard_error=d.standard_error,
               censored=d.censored_count)
    return row


SWEEP_COLUMNS = ["K", "T", "level", "status", "solver", "objective", "mttf_proxy", "mttf_surrogate",
                 "exploit_count", "empirical_mttf", "standard_error", "censored"]


def cmd_sweep(args) -> int:
    scenario, simsec, _, digest = _read_scenario(args.scenario)
    scenario = _calibrated(scenario.with_(mode="worst_case", fixed_times=None), simsec, args.seed,
                           args.calibration)
    cfg = _sim_config(args, simsec)
    Ks = _csv_list(args.K_list, int) or [scenario.K]
    Ts = _csv_list(args.T_list, int) or [scenario.T]
    levels = _csv_list(args.levels) or [None]
    jobs = [(scenario, K, T, lv, cfg, args.solver, args.node_limit)
            for lv in levels for T in Ts for K in Ks]
    out = Outputs(_out_dir(args), "sweep", digest, cfg.seed, _opts(args))
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_cell, jobs))
    else:
        rows = [_sweep_cell(j) for j in jobs]
    for row in rows:
        out.write_json(f"cells/K{row['K']}_T{row['T']}_{row['level'] or 'scenario'}.json", row)
    out.write_csv("sweep.csv", SWEEP_COLUMNS, [[row.get(c) for c in SWEEP_COLUMNS] for row in rows])
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    for lv in levels:
        for T in Ts:
            pts = [(r["K"], r["empirical_mttf"]) for r in rows
                   if r["T"] == T and r["level"] == (lv or "") and "empirical_mttf" in r]
            if pts:
                ax.plot(*zip(*pts), marker="o", label=f"T={T} {lv or ''}".strip())
    ax.set_xlabel("K")
    ax.set_ylabel("empirical MTTF")
    if ax.get_lines():
        ax.legend()
    out.write_bytes("sweep.svg", _svg(fig))
    plt.close(fig)
    bad = [r for r in rows if r["status"] not in ("optimal",)]
    out.finish("ok" if not bad else "partial")
    print(f"{len(rows)} cells, {len(bad)} not optimal")
    return EXIT_OK


def cmd_compare(args) -> int:
    scenario, simsec, doc, digest = _read_scenario(args.scenario)
    scenario = _configure(scenario.with_(mode="worst_case"), simsec, args)
    cfg = _sim_config(args, simsec)
    out = Outputs(_out_dir(args), "compare", digest, cfg.seed, _opts(args))
    baselines = _csv_list(args.baselines) or ["random", "fixed", "damage_norm"]
    nominal = sim.simulate(scenario, None, cfg).ttf.empirical_mttf
    rows = []

    def add(name, plan, sc, status):
        if plan is None:
            rows.append([name, status] + [None] * 6)
            return
        d = sim.simulate(sc, plan, cfg).ttf
        rows.append([name, status, plan.objective_value, plan.mttf_surrogate,
                     milp.damage_value(plan, sc), plan.exploit_count, d.empirical_mttf,
                     1.0 - d.empirical_mttf / nominal])

    worst, status, _ = synthesize(scenario, args.solver, args.node_limit, args.time_limit)
    add("worst_case", worst, scenario, status)
    for name in baselines:
        if name == "random":
            vals = []
            for k in range(args.random_plans):
                try:
                    plan = sim.random_attack(scenario, cfg.seed * 1000 + k)
                except ScenarioError:
                    break
                d = sim.simulate(scenario, plan, cfg).ttf
                vals.append((plan.objective_value, plan.mttf_surrogate,
                             milp.damage_value(plan, scenario), plan.exploit_count, d.empirical_mttf))
            if not vals:
                rows.append(["random", "no reachable target set"] + [None] * 6)
                continue
            m = np.mean(np.array(vals, dtype=float), axis=0)
            rows.append(["random", f"mean of {args.random_plans}", float(m[0]), float(m[1]),
                         float(m[2]), float(m[3]), float(m[4]), 1.0 - float(m[4]) / nominal])
        elif name == "fixed":
            sched = _schedule(args.fixed) or dict(scenario.fixed_times or {}) \
                or {k: int(v) for k, v in doc.get("reference_schedule", {}).items()}
            sc = scenario.with_(mode="fixed_intrusion", fixed_times=sched)
            plan, st, _ = synthesize(sc, args.solver, args.node_limit, args.time_limit)
            add("fixed_intrusion", plan, sc, st)
        elif name == "damage_norm":
            sc = scenario.with_(mode="damage_norm")
            plan, st, _ = synthesize(sc, args.solver, args.node_limit, args.time_limit)
            add("damage_norm", plan, sc, st)
        else:
            raise CliError(f"unknown baseline {name!r}", EXIT_INVALID)
    out.write_csv("compare.csv", ["attack", "status", "objective", "mttf_surrogate", "damage",
                                  "exploit_count", "empirical_mttf", "acceleration"], rows)
    out.write_json("summary.json", {"nominal_empirical_mttf": nominal, "replications": cfg.replications})
    out.finish("ok")
    for r in rows:
        print(",".join(_fmt(v) for v in r))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser

def _out_dir(args) -> Path:
    return Path(args.out or os.environ.get(OUT_ENV) or "icsrisk-out")


def _opts(args) -> dict:
    skip = {"func", "out"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _add_sim_flags(p):
    p.add_argument("--replications", type=int)
    p.add_argument("--horizon", type=int)
    p.add_argument("--policy", choices=sim.POLICIES)


def _add_solver_flags(p):
    p.add_argument("--solver", choices=("auto", "embedded", "external"), default="auto")
    p.add_argument("--node-limit", type=int, default=200_000)
    p.add_argument("--time-limit", type=float)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="icsrisk", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./icsrisk-out)")
    common.add_argument("--seed", type=int)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", parents=[common], help="check a scenario file")
    p.add_argument("scenario")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("calibrate", parents=[common], help="derive lambda, delta and stealth levels")
    p.add_argument("scenario")
    _add_sim_flags(p)
    p.add_argument("--t-lambda", type=int)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("attack", parents=[common], help="synthesize an attack plan")
    p.add_argument("scenario")
    p.add_argument("--mode", choices=model.MODES)
    p.add_argument("--K", type=int)
    p.add_argument("--T", type=int)
    p.add_argument("--level", choices=tuple(model.LEVELS))
    p.add_argument("--w-cyber", type=float)
    p.add_argument("--fixed", help="compromise schedule, e.g. P1=104,FV=120")
    p.add_argument("--calibration", help="calibration.json to take lambda and delta from")
    p.add_argument("--export-lp", help="write the model as an LP file (relative to --out)")
    p.add_argument("--import-solution", help="decode a name/value solution file instead of solving")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("simulate", parents=[common], help="Monte-Carlo time to failure")
    p.add_argument("scenario")
    p.add_argument("plan", nargs="?", help="plan.json from attack; omit for the nominal system")
    p.add_argument("--calibration")
    _add_sim_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", parents=[common], help="grid over K, T and stealth level")
    p.add_argument("scenario")
    p.add_argument("--K-list", dest="K_list")
    p.add_argument("--T-list", dest="T_list")
    p.add_argument("--levels")
    p.add_argument("--calibration")
    p.add_argument("--jobs", type=int, default=1)
    _add_sim_flags(p)
    _add_solver_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", parents=[common], help="worst case against baseline attacks")
    p.add_argument("scenario")
    p.add_argument("--baselines", default="random,fixed,damage_norm")
    p.add_argument("--random-plans", type=int, default=20)
    p.add_argument("--K", type=int)
    p.add_argument("--T", type=int)
    p.add_argument("--level", choices=tuple(model.LEVELS))
    p.add_argument("--w-cyber", type=float)
    p.add_argument("--fixed")
    p.add_argument("--calibration")
    _add_sim_flags(p)
    _add_solver_flags(p)
    p.set_defaults(func=cmd_compare)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
