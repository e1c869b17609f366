"""Bounded-variable two-phase revised simplex.

Dense explicit basis inverse with eta updates and periodic refactorization.
Pricing is Dantzig (largest reduced cost, lowest index on ties) and falls back
to Bland's rule for the rest of a phase once a run of degenerate pivots is
seen, which rules out cycling. The ratio test is Harris's two-pass rule, so
among near-tied leaving rows the largest pivot wins.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

FEAS_TOL = 1e-9
OPT_TOL = 1e-9
PIVOT_TOL = 1e-9
HARRIS_TOL = 1e-9
REFACTOR_EVERY = 64
DEGENERATE_RUN = 30


class _Singular(Exception):
    pass


@dataclass
class SimplexResult:
    status: str
    x: np.ndarray | None
    duals: np.ndarray | None
    iterations: int
    used_bland: bool


class _Standard:
    """min c's, A s = b, 0 <= s <= u, b >= 0, built from general rows/bounds."""

    def __init__(self, c, A, sense, rhs, lb, ub):
        m, n = A.shape
        cols, cost, upper, back = [], [], [], []
        shift = np.zeros(n)
        for j in range(n):
            l, u = lb[j], ub[j]
            if math.isfinite(l):
                shift[j] = l
                cols.append(A[:, j]); cost.append(c[j]); upper.append(u - l); back.append((j, 1.0))
            elif math.isfinite(u):
                shift[j] = u
                cols.append(-A[:, j]); cost.append(-c[j]); upper.append(math.inf); back.append((j, -1.0))
            else:
                cols.append(A[:, j]); cost.append(c[j]); upper.append(math.inf); back.append((j, 1.0))
                cols.append(-A[:, j]); cost.append(-c[j]); upper.append(math.inf); back.append((j, -1.0))
        b = rhs - A @ shift
        flip = b < 0
        self.slack_rows: list[int | None] = [None] * m
        for i in range(m):
            if sense[i] != "E":
                e = np.zeros(m)
                e[i] = 1.0 if sense[i] == "L" else -1.0
                if (e[i] > 0) != flip[i]:
                    self.slack_rows[i] = len(cols)
                cols.append(e); cost.append(0.0); upper.append(math.inf); back.append((None, 0.0))
        S = np.column_stack(cols) if cols else np.zeros((m, 0))
        S[flip] *= -1.0
        b = np.where(flip, -b, b)
        self.A = S
        self.b = b
        self.c = np.array(cost, dtype=float)
        self.u = np.array(upper, dtype=float)
        self.back = back
        self.shift = shift
        self.flip = flip
        self.n_orig = n

    def recover(self, s: np.ndarray) -> np.ndarray:
        x = self.shift.copy()
        for k, (j, sign) in enumerate(self.back):
            if j is not None:
                x[j] += sign * s[k]
        return x


class _Tableau:
    def __init__(self, A, b, u, basic, at_upper):
        self.A, self.b, self.u = A, b, u
        self.m = A.shape[0]
        self.basic = list(basic)
        self.at_upper = at_upper
        self.pivots_since_refactor = 0
        self.refactor()

    def refactor(self):
        B = self.A[:, self.basic]
        try:
            self.Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError:
            raise _Singular from None
        nonbasic_upper = np.where(self.at_upper)[0]
        rhs = self.b - self.A[:, nonbasic_upper] @ self.u[nonbasic_upper]
        self.xB = self.Binv @ rhs
        self.pivots_since_refactor = 0

    def run(self, cost, max_iter, bland=False, degenerate_run=DEGENERATE_RUN, harris=True):
        A, u, m = self.A, self.u, self.m
        n = A.shape[1]
        iters, degenerate, used_bland = 0, 0, bland
        is_basic = np.zeros(n, dtype=bool)
        is_basic[self.basic] = True
        movable = u > 0
        while True:
            if iters >= max_iter:
                return "iteration_limit", iters, used_bland
            y = cost[self.basic] @ self.Binv
            d = cost - y @ A
            elig_up = (~is_basic) & movable & (~self.at_upper) & (d < -OPT_TOL)
            elig_dn = (~is_basic) & movable & self.at_upper & (d > OPT_TOL)
            elig = elig_up | elig_dn
            if not elig.any():
                return "optimal", iters, used_bland
            if used_bland:
                q = int(np.argmax(elig))
            else:
                score = np.where(elig, np.abs(d), -1.0)
                q = int(np.argmax(score))
            direction = 1.0 if elig_up[q] else -1.0
            col = self.Binv @ A[:, q]
            # basic values move by -direction * theta * col
            step = direction * col
            basic = np.asarray(self.basic, dtype=int)
            uB = u[basic]
            pos = step > PIVOT_TOL
            neg = (step < -PIVOT_TOL) & np.isfinite(uB)
            room = np.full(m, math.inf)
            room[pos] = self.xB[pos]
            room[neg] = uB[neg] - self.xB[neg]
            mag = np.abs(step)
            theta, leave, leave_upper = u[q], -1, False
            cand = pos | neg
            if cand.any():
                # pass 1: step length with every bound relaxed by HARRIS_TOL
                relaxed = float(np.min((room[cand] + HARRIS_TOL) / mag[cand]))
                if relaxed < theta:
                    ratio = np.where(cand, np.maximum(room, 0.0) / np.where(cand, mag, 1.0), math.inf)
                    if used_bland or not harris:
                        best = float(ratio.min())
                        ties = np.where(ratio <= best + 1e-12)[0]
                        leave = int(ties[np.argmin(basic[ties])]) if used_bland else int(ties[0])
                    else:
                        # pass 2: largest pivot among rows blocking within the relaxed step
                        ok = np.where(ratio <= relaxed)[0]
                        leave = int(ok[np.argmax(mag[ok])])
                    theta = float(ratio[leave])
                    leave_upper = bool(neg[leave])
            if math.isinf(theta):
                return "unbounded", iters, used_bland
            iters += 1
            if theta <= 1e-12:
                degenerate += 1
                if degenerate >= degenerate_run:
                    used_bland = True
            else:
                degenerate = 0
            self.xB -= theta * step
            if leave < 0:
                # bound flip of the entering variable
                self.at_upper[q] = not self.at_upper[q]
                continue
            out = self.basic[leave]
            enter_value = (u[q] - theta) if self.at_upper[q] else theta
            self.at_upper[q] = False
            piv = col[leave]
            row = self.Binv[leave] / piv
            self.Binv -= np.outer(col, row)
            self.Binv[leave] = row
            self.xB[leave] = enter_value
            self.basic[leave] = q
            is_basic[q], is_basic[out] = True, False
            self.at_upper[out] = leave_upper
            self.pivots_since_refactor += 1
            if self.pivots_since_refactor >= REFACTOR_EVERY:
                self.refactor()


def simplex(c, A, sense, rhs, lb, ub, max_iter: int = 50_000, bland: bool = False,
            degenerate_run: int = DEGENERATE_RUN, harris: bool = True) -> SimplexResult:
    """Solve min c'x subject to rows (sense in L/E/G) and bounds.

    Rows whose slack enters with coefficient +1 start with the slack basic;
    the others get an artificial. ``degenerate_run`` is the number of
    consecutive degenerate pivots tolerated before switching to Bland's rule.
    ``harris=False`` gives the textbook ratio test (first minimum ratio).
    """
    try:
        return _solve(c, A, sense, rhs, lb, ub, max_iter, bland, degenerate_run, harris)
    except _Singular:
        return SimplexResult("numerical", None, None, 0, bland)


def _solve(c, A, sense, rhs, lb, ub, max_iter, bland, degenerate_run, harris) -> SimplexResult:
    A = np.asarray(A, dtype=float)
    m = A.shape[0]
    std = _Standard(np.asarray(c, float), A, np.asarray(sense), np.asarray(rhs, float),
                    np.asarray(lb, float), np.asarray(ub, float))
    if np.any(std.u < -FEAS_TOL):
        return SimplexResult("infeasible", None, None, 0, bland)
    if m == 0:
        # bounds only: every column sits at its cheaper bound
        if np.any((std.c < 0) & np.isinf(std.u)):
            return SimplexResult("unbounded", None, None, 0, bland)
        return SimplexResult("optimal", std.recover(np.where(std.c < 0, std.u, 0.0)),
                             np.zeros(0), 0, bland)
    n = std.A.shape[1]
    A1 = np.hstack([std.A, np.eye(m)])
    u1 = np.concatenate([std.u, np.full(m, math.inf)])
    cost1 = np.concatenate([np.zeros(n), np.ones(m)])
    start = list(range(n, n + m))
    for j, col in enumerate(std.slack_rows):
        if col is not None:
            start[j] = col
    tab = _Tableau(A1, std.b, u1, start, np.zeros(n + m, dtype=bool))
    status, it1, b1 = tab.run(cost1, max_iter, bland, degenerate_run, harris)
    if status != "optimal":
        return SimplexResult("numerical" if status == "iteration_limit" else status, None, None, it1, b1)
    tab.refactor()
    infeas = float(cost1[tab.basic] @ tab.xB)
    if infeas > FEAS_TOL * max(1.0, float(np.abs(std.b).max(initial=0.0))):
        return SimplexResult("infeasible", None, None, it1, b1)
    # artificials are pinned to zero for phase 2
    tab.u = np.concatenate([std.u, np.zeros(m)])
    cost2 = np.concatenate([std.c, np.zeros(m)])
    status, it2, b2 = tab.run(cost2, max_iter - it1, bland, degenerate_run, harris)
    if status != "optimal":
        return SimplexResult("numerical" if status == "iteration_limit" else status, None, None,
                             it1 + it2, b1 or b2)
    tab.refactor()
    s = np.where(tab.at_upper, tab.u, 0.0)
    s[tab.basic] = tab.xB
    x = std.recover(s[:n])
    y = cost2[tab.basic] @ tab.Binv
    y = np.where(std.flip, -y, y)
    return SimplexResult("optimal", x, y, it1 + it2, b1 or b2)
