"""Best-bound branch and bound over LP relaxations.

Each node carries bounds on the integer columns only. Before a node LP is
solved its bounds are propagated along monotone chains (rows ``x_p - x_q <= 0``
between integer columns), so fixing one compromise indicator fixes the rest of
its time series: branching on a chain member is a split on the start time.
"""
from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .lp import HighsSession, LpSolution, solve_lp


@dataclass(frozen=True)
class MilpOptions:
    gap_tol: float = 1e-9
    int_tol: float = 1e-9
    node_limit: int = 200_000
    time_limit: float | None = None
    presolve: bool = True
    lp_backend: str = "highs"
    incumbent: object = None  # optional feasible start vector


@dataclass
class LpAudit:
    """Worst certification figures over all LPs of one solve."""

    count: int = 0
    primal_residual: float = 0.0
    dual_residual: float = 0.0
    gap_ratio: float = 0.0  # gap / (1 + |obj|)
    uncertified: int = 0

    def add(self, sol: LpSolution):
        if sol.status != "optimal":
            return
        self.count += 1
        self.primal_residual = max(self.primal_residual, sol.primal_residual)
        self.dual_residual = max(self.dual_residual, sol.dual_residual)
        self.gap_ratio = max(self.gap_ratio, sol.gap / (1.0 + abs(sol.objective)))
        self.uncertified += not sol.certified


@dataclass
class MilpSolution:
    status: str  # optimal | feasible_limit | limit | infeasible | unbounded
    x: np.ndarray | None
    objective: float
    bound: float
    gap: float
    nodes: int
    lp_audit: LpAudit = field(default_factory=LpAudit)
    elapsed: float = 0.0


def monotone_chains(A, sense, rhs, integer_mask) -> list[tuple[int, int]]:
    """Pairs (p, q) with a row x_p - x_q <= 0 over integer columns."""
    A = sp.csr_matrix(A)
    out = []
    for r in range(A.shape[0]):
        lo, hi = A.indptr[r], A.indptr[r + 1]
        if hi - lo != 2 or rhs[r] != 0.0 or sense[r] == "E":
            continue
        (j1, j2), (v1, v2) = A.indices[lo:hi], A.data[lo:hi]
        if not (integer_mask[j1] and integer_mask[j2]) or v1 != -v2 or v1 == 0:
            continue
        # v1*x_j1 + v2*x_j2 (<= or >=) 0 normalised to x_p <= x_q
        small, large = (j1, j2) if (v1 > 0) == (sense[r] == "L") else (j2, j1)
        out.append((int(small), int(large)))
    return out


class _Propagator:
    def __init__(self, pairs, n):
        self.succ = [[] for _ in range(n)]
        self.pred = [[] for _ in range(n)]
        for p, q in pairs:
            self.succ[p].append(q)
            self.pred[q].append(p)
        self.active = bool(pairs)

    def run(self, lb, ub, touched) -> bool:
        """Tighten bounds in place from the touched columns; False if empty."""
        if not self.active:
            return True
        stack = list(touched)
        while stack:
            j = stack.pop()
            for q in self.succ[j]:
                if lb[j] > lb[q]:
                    lb[q] = lb[j]
                    stack.append(q)
            for p in self.pred[j]:
                if ub[j] < ub[p]:
                    ub[p] = ub[j]
                    stack.append(p)
        return bool(np.all(lb <= ub))


def _gap(obj, bound):
    if not math.isfinite(obj):
        return math.inf
    return max(0.0, (obj - bound) / (1.0 + abs(obj)))


def solve_milp(instance, options: MilpOptions | None = None) -> MilpSolution:
    """Minimize ``instance.c @ x + instance.constant`` with integrality on B/I columns."""
    opt = options or MilpOptions()
    t0 = time.monotonic()
    c, A = np.asarray(instance.c, float), sp.csr_matrix(instance.A)
    sense, rhs = np.asarray(instance.sense), np.asarray(instance.rhs, float)
    lb0, ub0 = np.asarray(instance.lb, float).copy(), np.asarray(instance.ub, float).copy()
    const = float(instance.constant)
    imask = np.asarray(instance.integer_mask())
    icols = np.nonzero(imask)[0]
    binary = np.asarray(instance.kinds)[icols] == "B"
    lb0[icols], ub0[icols] = np.ceil(lb0[icols] - opt.int_tol), np.floor(ub0[icols] + opt.int_tol)

    prop = _Propagator(monotone_chains(A, sense, rhs, imask) if opt.presolve else [], len(c))
    audit = LpAudit()
    session = HighsSession(c, A, sense, rhs, lb0, ub0) if opt.lp_backend == "highs" else None

    def lp(lb, ub) -> LpSolution:
        if session is not None:
            session.set_bounds(lb, ub)
            sol = session.solve()
        else:
            sol = solve_lp(c, A, sense, rhs, lb, ub, backend=opt.lp_backend)
        audit.add(sol)
        return sol

    def finish(status, x, obj, bound, nodes):
        return MilpSolution(status, x, obj, bound, _gap(obj, bound), nodes, audit,
                            time.monotonic() - t0)

    lb, ub = lb0.copy(), ub0.copy()
    if not prop.run(lb, ub, icols):
        return finish("infeasible", None, math.inf, math.inf, 0)

    best_x, best_obj = None, math.inf
    if opt.incumbent is not None:
        x0 = np.asarray(opt.incumbent, dtype=float)
        if instance.max_violation(x0) <= 1e-6 and instance.integrality_violation(x0) <= opt.int_tol:
            best_x, best_obj = x0, float(c @ x0) + const
    heap: list = []
    seq = 0
    heapq.heappush(heap, (-math.inf, 0, seq, lb[icols], ub[icols]))
    nodes = 0
    root_unbounded = False
    while heap:
        bound_key = heap[0][0]
        if best_x is not None and _gap(best_obj, bound_key) <= opt.gap_tol:
            break
        if nodes >= opt.node_limit or (opt.time_limit is not None
                                       and time.monotonic() - t0 > opt.time_limit):
            status = "feasible_limit" if best_x is not None else "limit"
            return finish(status, best_x, best_obj, min(bound_key, best_obj), nodes)
        _, neg_depth, _, nlb, nub = heapq.heappop(heap)
        nodes += 1
        lb[icols], ub[icols] = nlb, nub
        sol = lp(lb, ub)
        if sol.status == "unbounded":
            root_unbounded = nodes == 1
            if root_unbounded:
                break
            continue
        if sol.status != "optimal":
            continue
        obj = sol.objective + const
        if best_x is not None and obj >= best_obj - opt.gap_tol * (1.0 + abs(best_obj)):
            continue
        xi = sol.x[icols]
        frac = np.abs(xi - np.round(xi))
        frac_mask = frac > opt.int_tol
        if not frac_mask.any():
            cand = _polish(lp, sol, lb, ub, icols)
            cobj = float(c @ cand) + const
            if cobj < best_obj:
                best_x, best_obj = cand, cobj
            continue
        # most fractional binary first, general integers only once binaries are
        # integral; argmin returns the lowest column on ties
        pool = frac_mask & binary
        if not pool.any():
            pool = frac_mask
        score = np.where(pool, np.abs(xi - np.floor(xi) - 0.5), np.inf)
        k = int(np.argmin(score))
        v = xi[k]
        for lo_k, hi_k in ((nlb[k], math.floor(v)), (math.ceil(v), nub[k])):
            clb, cub = nlb.copy(), nub.copy()
            clb[k], cub[k] = lo_k, hi_k
            lb[icols], ub[icols] = clb, cub
            if not prop.run(lb, ub, [icols[k]]):
                continue
            seq += 1
            heapq.heappush(heap, (obj, neg_depth - 1, seq, lb[icols].copy(), ub[icols].copy()))
    if root_unbounded:
        return finish("unbounded", None, -math.inf, -math.inf, nodes)
    if best_x is None:
        return finish("infeasible", None, math.inf, math.inf, nodes)
    bound = min([best_obj] + [h[0] for h in heap])
    return finish("optimal", best_x, best_obj, bound, nodes)


def _polish(lp, sol, lb, ub, icols) -> np.ndarray:
    """Round an integral-within-tolerance LP point and re-solve the continuous part."""
    xr = np.round(sol.x[icols])
    plb, pub = lb.copy(), ub.copy()
    plb[icols] = pub[icols] = xr
    fixed = lp(plb, pub)
    if fixed.status == "optimal":
        return fixed.x
    x = sol.x.copy()
    x[icols] = xr
    return x
