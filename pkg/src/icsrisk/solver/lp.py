"""LP solving with duality certification.

Two backends share one result type. ``simplex`` is the in-house bounded
two-phase method; ``highs`` hands the LP to the HiGHS dual simplex and is the
fast path for branch-and-bound node relaxations. Either way the returned
solution is certified here from its own primal and dual vectors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .simplex import simplex

PRIMAL_TOL = 1e-8
DUAL_TOL = 1e-8
GAP_TOL = 1e-7
BACKENDS = ("highs", "simplex")


@dataclass
class LpSolution:
    status: str  # optimal | infeasible | unbounded | numerical
    x: np.ndarray | None = None
    duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    objective: float = math.nan
    primal_residual: float = math.nan
    dual_residual: float = math.nan
    gap: float = math.nan
    iterations: int = 0
    backend: str = ""

    @property
    def certified(self) -> bool:
        return (self.status == "optimal" and self.primal_residual <= PRIMAL_TOL
                and self.dual_residual <= DUAL_TOL
                and self.gap <= GAP_TOL * (1.0 + abs(self.objective)))


@dataclass(frozen=True)
class Certificate:
    primal_residual: float
    dual_residual: float
    gap: float
    primal_objective: float
    dual_objective: float


def certify(c, A, sense, rhs, lb, ub, x, y) -> Certificate:
    """Primal residual, dual residual and duality gap of a primal/dual pair.

    Dual convention: reduced costs d = c - A'y, with y >= 0 on >= rows and
    y <= 0 on <= rows (minimization).
    """
    A = sp.csr_matrix(A)
    c, rhs, lb, ub = (np.asarray(v, dtype=float) for v in (c, rhs, lb, ub))
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    sense = np.asarray(sense)
    ax = A @ x
    row_viol = np.where(sense == "L", ax - rhs, np.where(sense == "G", rhs - ax, np.abs(ax - rhs)))
    bound_viol = np.maximum(lb - x, x - ub)
    primal = float(max(np.max(row_viol, initial=0.0), np.max(bound_viol, initial=0.0), 0.0))

    sign_viol = np.where(sense == "L", y, np.where(sense == "G", -y, 0.0))
    d = c - A.T @ y
    # a reduced cost pushing toward an infinite bound is a dual infeasibility
    free_up = np.where(np.isinf(lb), np.maximum(d, 0.0), 0.0)
    free_dn = np.where(np.isinf(ub), np.maximum(-d, 0.0), 0.0)
    dual = float(max(np.max(sign_viol, initial=0.0), np.max(free_up, initial=0.0),
                     np.max(free_dn, initial=0.0), 0.0))
    at = np.where(d > 0, lb, np.where(d < 0, ub, 0.0))
    at = np.where(np.isfinite(at), at, x)
    dual_obj = float(rhs @ y + d @ at)
    primal_obj = float(c @ x)
    return Certificate(primal, dual, abs(primal_obj - dual_obj), primal_obj, dual_obj)


def _finish(sol: LpSolution, c, A, sense, rhs, lb, ub) -> LpSolution:
    if sol.status != "optimal":
        return sol
    cert = certify(c, A, sense, rhs, lb, ub, sol.x, sol.duals)
    sol.objective = cert.primal_objective
    sol.primal_residual, sol.dual_residual, sol.gap = cert.primal_residual, cert.dual_residual, cert.gap
    sol.reduced_costs = np.asarray(c, float) - sp.csr_matrix(A).T @ sol.duals
    return sol


def solve_lp(c, A, sense, rhs, lb, ub, backend: str = "highs", max_iter: int = 50_000,
             bland: bool = False) -> LpSolution:
    """min c'x subject to rows ``A x (sense) rhs`` and ``lb <= x <= ub``."""
    if backend not in BACKENDS:
        raise ValueError(f"unknown LP backend {backend!r}")
    if backend == "simplex":
        dense = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
        r = simplex(c, dense, sense, rhs, lb, ub, max_iter=max_iter, bland=bland)
        sol = LpSolution(r.status, r.x, r.duals, iterations=r.iterations, backend="simplex")
        return _finish(sol, c, A, sense, rhs, lb, ub)
    session = HighsSession(c, A, sense, rhs, lb, ub)
    return session.solve()


def solve_instance_lp(instance, backend: str = "highs", lb=None, ub=None) -> LpSolution:
    """LP relaxation of a MilpInstance, optionally with overridden bounds."""
    return solve_lp(instance.c, instance.A, instance.sense, instance.rhs,
                    instance.lb if lb is None else lb, instance.ub if ub is None else ub,
                    backend=backend)


class HighsSession:
    """A HiGHS LP kept alive across bound changes so re-solves warm start."""

    def __init__(self, c, A, sense, rhs, lb, ub):
        import highspy

        self._hs = highspy
        self.c = np.asarray(c, dtype=float)
        self.A = sp.csr_matrix(A)
        self.sense = np.asarray(sense)
        self.rhs = np.asarray(rhs, dtype=float)
        self.lb = np.asarray(lb, dtype=float).copy()
        self.ub = np.asarray(ub, dtype=float).copy()
        m, n = self.A.shape
        csc = self.A.tocsc()
        inf = highspy.kHighsInf
        lp = highspy.HighsLp()
        lp.num_col_, lp.num_row_ = n, m
        lp.col_cost_ = self.c
        lp.col_lower_ = np.where(np.isinf(self.lb), -inf, self.lb)
        lp.col_upper_ = np.where(np.isinf(self.ub), inf, self.ub)
        lp.row_lower_ = np.where(self.sense == "L", -inf, self.rhs)
        lp.row_upper_ = np.where(self.sense == "G", inf, self.rhs)
        lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
        lp.a_matrix_.start_ = csc.indptr.astype(np.int32)
        lp.a_matrix_.index_ = csc.indices.astype(np.int32)
        lp.a_matrix_.value_ = csc.data
        h = highspy.Highs()
        for key, val in (("output_flag", False), ("threads", 1), ("presolve", "off"),
                         ("solver", "simplex"), ("primal_feasibility_tolerance", 1e-9),
                         ("dual_feasibility_tolerance", 1e-9), ("random_seed", 0)):
            h.setOptionValue(key, val)
        h.passModel(lp)
        self.h = h

    def set_bounds(self, lb, ub):
        lb, ub = np.asarray(lb, dtype=float), np.asarray(ub, dtype=float)
        changed = np.nonzero((lb != self.lb) | (ub != self.ub))[0]
        if changed.size:
            inf = self._hs.kHighsInf
            lo = np.where(np.isinf(lb[changed]), -inf, lb[changed])
            hi = np.where(np.isinf(ub[changed]), inf, ub[changed])
            self.h.changeColsBounds(int(changed.size), changed.astype(np.int32), lo, hi)
            self.lb[changed], self.ub[changed] = lb[changed], ub[changed]

    def solve(self) -> LpSolution:
        if np.any(self.lb > self.ub):
            return LpSolution("infeasible", backend="highs")
        h, hs = self.h, self._hs
        h.run()
        status = h.getModelStatus()
        iters = int(h.getInfo().simplex_iteration_count)
        if status == hs.HighsModelStatus.kInfeasible:
            return LpSolution("infeasible", iterations=iters, backend="highs")
        if status in (hs.HighsModelStatus.kUnbounded, hs.HighsModelStatus.kUnboundedOrInfeasible):
            return LpSolution("unbounded", iterations=iters, backend="highs")
        if status != hs.HighsModelStatus.kOptimal:
            return LpSolution("numerical", iterations=iters, backend="highs")
        s = h.getSolution()
        x = np.clip(np.array(s.col_value), self.lb, self.ub)
        sol = LpSolution("optimal", x, np.array(s.row_dual), iterations=iters, backend="highs")
        return _finish(sol, self.c, self.A, self.sense, self.rhs, self.lb, self.ub)
