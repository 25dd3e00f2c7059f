"""Dense bounded-variable revised simplex and a small branch-and-bound.

Both routines work on ``min c'x  s.t.  A x = b,  l <= x <= u`` with possibly
infinite bounds. Free variables are kept as single columns; a nonbasic free
variable sits at zero and may enter in either direction.
"""

from __future__ import annotations

import heapq

import numpy as np

from .errors import SolverError

_PIVOT_TOL = 1e-9
_DEGENERATE_SWITCH = 50


def _nonbasic_start(lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    x = np.zeros(lower.size)
    fin_l = np.isfinite(lower)
    fin_u = np.isfinite(upper)
    x[fin_l] = lower[fin_l]
    only_u = ~fin_l & fin_u
    x[only_u] = upper[only_u]
    return x


class _Simplex:
    def __init__(self, A, b, lower, upper, tol):
        self.A = A
        self.b = b
        self.lower = lower
        self.upper = upper
        self.tol = tol
        m, n = A.shape
        self.m, self.n = m, n
        self.max_iter = 200 * (m + n) + 1000

    def run(self, cost, basis, x):
        """Iterate from a feasible basis. Returns ('optimal'|'unbounded', basis, x)."""
        A, lower, upper = self.A, self.lower, self.upper
        m, n = self.m, self.n
        cost_tol = self.tol * max(1.0, float(np.max(np.abs(cost))) if cost.size else 1.0)
        bland = False
        degenerate_run = 0
        is_basic = np.zeros(n, dtype=bool)
        is_basic[basis] = True
        for _ in range(self.max_iter):
            B = A[:, basis]
            nonbasic = ~is_basic
            rhs = self.b - A[:, nonbasic] @ x[nonbasic]
            try:
                x[basis] = np.linalg.solve(B, rhs) if m else np.zeros(0)
                y = np.linalg.solve(B.T, cost[basis]) if m else np.zeros(0)
            except np.linalg.LinAlgError as exc:
                raise SolverError("singular basis in simplex") from exc
            d = cost - A.T @ y
            span = upper - lower
            fin_l = np.isfinite(lower)
            at_lower = nonbasic & fin_l
            at_lower[fin_l] &= x[fin_l] <= lower[fin_l] + 1e-12 * (1 + np.abs(lower[fin_l]))
            at_upper = nonbasic & np.isfinite(upper) & ~at_lower
            free = nonbasic & ~np.isfinite(lower) & ~np.isfinite(upper)
            fixed = nonbasic & (span <= 0)
            score = np.zeros(n)
            direction = np.zeros(n)
            sel = at_lower & ~fixed & (d < -cost_tol)
            score[sel], direction[sel] = -d[sel], 1.0
            sel = at_upper & ~fixed & (d > cost_tol)
            score[sel], direction[sel] = d[sel], -1.0
            sel = free & (np.abs(d) > cost_tol)
            score[sel], direction[sel] = np.abs(d[sel]), -np.sign(d[sel])
            candidates = np.flatnonzero(score > 0)
            if candidates.size == 0:
                return "optimal", basis, x
            j = int(candidates[0]) if bland else int(candidates[np.argmax(score[candidates])])
            dj = direction[j]
            alpha = np.linalg.solve(B, A[:, j]) if m else np.zeros(0)
            rate = -dj * alpha
            xb = x[basis]
            lb = lower[basis]
            ub = upper[basis]
            limits = np.full(m, np.inf)
            dec = rate < -_PIVOT_TOL
            inc = rate > _PIVOT_TOL
            with np.errstate(invalid="ignore", divide="ignore"):
                lim_dec = np.maximum(xb - lb, 0.0) / -rate
                lim_inc = np.maximum(ub - xb, 0.0) / rate
            limits[dec] = lim_dec[dec]
            limits[inc] = lim_inc[inc]
            limits[~np.isfinite(limits) | np.isnan(limits)] = np.inf
            t_own = span[j] if np.isfinite(span[j]) else np.inf
            t_basic = float(np.min(limits)) if m else np.inf
            if not np.isfinite(t_basic) and not np.isfinite(t_own):
                return "unbounded", basis, x
            if t_own <= t_basic:
                x[j] = upper[j] if dj > 0 else lower[j]
                degenerate_run = 0
                continue
            ties = np.flatnonzero(limits <= t_basic + 1e-12 * (1 + t_basic))
            if bland:
                r = int(ties[np.argmin(basis[ties])])
            else:
                r = int(ties[np.argmax(np.abs(alpha[ties]))])
            t = limits[r]
            leaving = basis[r]
            x[j] = x[j] + dj * t
            x[leaving] = lower[leaving] if rate[r] < 0 else upper[leaving]
            is_basic[leaving] = False
            is_basic[j] = True
            basis = basis.copy()
            basis[r] = j
            if t <= 1e-12:
                degenerate_run += 1
                if degenerate_run > _DEGENERATE_SWITCH:
                    bland = True
            else:
                degenerate_run = 0
        raise SolverError("simplex iteration cap exceeded")


def simplex(c, A, b, lower, upper, tol=1e-9):
    """Solve the bounded LP. Returns (status, x, objective)."""
    c = np.asarray(c, dtype=float)
    A = np.asarray(A, dtype=float).reshape(-1, c.size)
    b = np.asarray(b, dtype=float).ravel()
    lower = np.asarray(lower, dtype=float).copy()
    upper = np.asarray(upper, dtype=float).copy()
    if np.any(lower > upper):
        return "infeasible", None, np.nan
    n = c.size
    # presolve: drop empty rows
    empty = ~np.any(A != 0, axis=1)
    if np.any(np.abs(b[empty]) > tol):
        return "infeasible", None, np.nan
    A, b = A[~empty], b[~empty]
    m = A.shape[0]

    x0 = _nonbasic_start(lower, upper)
    resid = b - A @ x0
    sign = np.where(resid >= 0, 1.0, -1.0)
    A1 = np.hstack([A, np.diag(sign)])
    low1 = np.concatenate([lower, np.zeros(m)])
    up1 = np.concatenate([upper, np.full(m, np.inf)])
    x = np.concatenate([x0, np.abs(resid)])
    basis = np.arange(n, n + m)
    engine = _Simplex(A1, b, low1, up1, tol)
    phase1_cost = np.concatenate([np.zeros(n), np.ones(m)])
    status, basis, x = engine.run(phase1_cost, basis, x)
    infeas = float(np.sum(x[n:]))
    if infeas > tol * max(1.0, float(np.max(np.abs(b))) if m else 1.0) * 10:
        return "infeasible", None, np.nan

    # fix artificials at zero and pivot them out where possible
    up1[n:] = 0.0
    x[n:] = 0.0
    for r in range(m):
        if basis[r] < n:
            continue
        B = A1[:, basis]
        row = np.linalg.solve(B.T, np.eye(m)[r])
        in_basis = np.zeros(n + m, dtype=bool)
        in_basis[basis] = True
        cand = [j for j in range(n) if not in_basis[j]]
        if not cand:
            continue
        vals = np.abs(row @ A1[:, cand])
        k = int(np.argmax(vals))
        if vals[k] > 1e-7:
            basis = basis.copy()
            basis[r] = cand[k]
    cost = np.concatenate([c, np.zeros(m)])
    status, basis, x = engine.run(cost, basis, x)
    if status == "unbounded":
        return "unbounded", None, -np.inf
    xs = x[:n].copy()
    return "optimal", xs, float(c @ xs)


def branch_and_bound(c, A, b, lower, upper, binaries, gap=1e-6, node_limit=100000,
                     lp_solver=None, int_tol=1e-6):
    """Depth-first most-fractional branch-and-bound over 0/1 variables.

    Switches to best-bound node selection after 10^4 nodes. ``lp_solver`` has
    the signature of :func:`simplex`.
    """
    lp_solver = lp_solver or simplex
    binaries = np.asarray(sorted(set(int(i) for i in binaries)), dtype=int)
    lower = np.asarray(lower, dtype=float).copy()
    upper = np.asarray(upper, dtype=float).copy()
    if binaries.size:
        lower[binaries] = np.maximum(lower[binaries], 0.0)
        upper[binaries] = np.minimum(upper[binaries], 1.0)
    best_x, best_val = None, np.inf
    # node: (bound, counter, lower, upper)
    stack = [(-np.inf, 0, lower, upper)]
    heap: list = []
    counter = 1
    nodes = 0
    root_unbounded = False
    while stack or heap:
        if nodes >= node_limit:
            raise SolverError("branch-and-bound node cap exceeded")
        if heap:
            bound, _, lo, up = heapq.heappop(heap)
        else:
            bound, _, lo, up = stack.pop()
        if bound >= best_val - gap:
            continue
        nodes += 1
        status, x, val = lp_solver(c, A, b, lo, up)
        if status == "infeasible":
            continue
        if status == "unbounded":
            if nodes == 1:
                root_unbounded = True
                break
            continue
        if val >= best_val - gap:
            continue
        if binaries.size:
            frac = np.abs(x[binaries] - np.round(x[binaries]))
        else:
            frac = np.zeros(0)
        if frac.size == 0 or np.max(frac) <= int_tol:
            if binaries.size:
                x = x.copy()
                x[binaries] = np.round(x[binaries])
            best_x, best_val = x, float(c @ x)
            continue
        k = int(np.argmax(frac))
        j = int(binaries[k])
        lo0, up0 = lo.copy(), up.copy()
        up0[j] = 0.0
        lo1, up1 = lo.copy(), up.copy()
        lo1[j] = 1.0
        children = [(val, counter, lo0, up0), (val, counter + 1, lo1, up1)]
        counter += 2
        # explore the child nearest the relaxed value first
        if x[j] >= 0.5:
            children.reverse()
        if nodes >= 10000:
            for ch in children:
                heapq.heappush(heap, ch)
        else:
            stack.extend(reversed(children))
    if root_unbounded:
        return "unbounded", None, -np.inf
    if best_x is None:
        return "infeasible", None, np.nan
    return "optimal", best_x, best_val
