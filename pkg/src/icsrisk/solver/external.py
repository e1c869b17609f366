"""External MILP route: LP file out, HiGHS MIP, solution file back in.

Used for instances whose big-M relaxation is too weak for the embedded
branch and bound to close. The returned vector is re-polished with integer
columns fixed, so its continuous part comes from a certified LP.
"""
from __future__ import annotations

import math
import tempfile
from pathlib import Path

import numpy as np

from .bnb import LpAudit, MilpSolution
from .lp import HighsSession
from .lpfile import export_lp, import_solution, write_solution


def run_highs_file(lp_path, sol_path, gap_tol=1e-9, int_tol=1e-9, time_limit=None) -> str:
    """Solve an LP file with HiGHS and write a ``name value`` solution file."""
    import highspy

    h = highspy.Highs()
    for key, val in (("output_flag", False), ("threads", 1), ("random_seed", 0),
                     ("mip_rel_gap", gap_tol), ("mip_abs_gap", 0.0),
                     ("mip_feasibility_tolerance", int_tol),
                     ("primal_feasibility_tolerance", 1e-9)):
        h.setOptionValue(key, val)
    if time_limit is not None:
        h.setOptionValue("time_limit", float(time_limit))
    h.readModel(str(lp_path))
    h.run()
    status = h.getModelStatus()
    ok = (highspy.HighsModelStatus.kOptimal, highspy.HighsModelStatus.kTimeLimit,
          highspy.HighsModelStatus.kSolutionLimit, highspy.HighsModelStatus.kIterationLimit)
    if status in ok and h.getInfo().primal_solution_status == 2:
        write_solution(sol_path, h.getLp().col_names_, h.getSolution().col_value)
    if status == highspy.HighsModelStatus.kOptimal:
        return "optimal"
    if status == highspy.HighsModelStatus.kInfeasible:
        return "infeasible"
    return "feasible_limit" if Path(sol_path).exists() else "limit"


def solve_external(instance, workdir=None, gap_tol=1e-9, int_tol=1e-9,
                   time_limit=None) -> MilpSolution:
    with tempfile.TemporaryDirectory() as tmp:
        base = Path(workdir or tmp)
        lp_path, sol_path = base / "model.lp", base / "model.sol"
        sol_path.unlink(missing_ok=True)
        export_lp(instance, lp_path)
        status = run_highs_file(lp_path, sol_path, gap_tol, int_tol, time_limit)
        if not sol_path.exists():
            inf = math.inf if status == "infeasible" else math.nan
            return MilpSolution(status, None, inf, inf, math.inf, 0)
        raw = import_solution(sol_path, instance)
    x, audit = polish(instance, raw)
    obj = float(instance.c @ x + instance.constant)
    return MilpSolution(status, x, obj, obj if status == "optimal" else math.nan,
                        0.0 if status == "optimal" else math.nan, 0, audit)


def polish(instance, raw):
    """Fix rounded integer columns and re-solve the continuous LP."""
    imask = instance.integer_mask()
    lb, ub = instance.lb.copy(), instance.ub.copy()
    lb[imask] = ub[imask] = np.round(raw[imask])
    sol = HighsSession(instance.c, instance.A, instance.sense, instance.rhs, lb, ub).solve()
    audit = LpAudit()
    audit.add(sol)
    if sol.status != "optimal":
        return raw, audit
    return sol.x, audit
