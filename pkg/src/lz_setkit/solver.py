"""LP and MILP front end.

Problems are stated as ``min c'x`` subject to equality rows, optional
inequality rows, and per-variable bounds that may be infinite. Two backends
are available: ``"highs"`` (scipy's HiGHS bindings, default) and the
in-house dense bounded-variable simplex / branch-and-bound (``"simplex"``).
"""

from __future__ import annotations

import enum
import io
from dataclasses import dataclass, field

import numpy as np
import highspy
from scipy import optimize, sparse

from . import _simplex
from .errors import DimensionError, SolverError

DEFAULT_TOL = 1e-9


class LpStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


def _as_matrix(a, cols: int) -> np.ndarray:
    if a is None:
        return np.zeros((0, cols))
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return np.zeros((0, cols))
    if a.ndim == 1:
        a = a.reshape(1, -1)
    return a


@dataclass(frozen=True)
class LpProblem:
    """``min objective'x  s.t.  A_eq x = b_eq,  A_ub x <= b_ub,  lower <= x <= upper``."""

    objective: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None

    def __post_init__(self):
        c = np.asarray(self.objective, dtype=float).ravel()
        n = c.size
        A_eq = _as_matrix(self.A_eq, n)
        b_eq = np.zeros(0) if self.b_eq is None else np.asarray(self.b_eq, dtype=float).ravel()
        A_ub = _as_matrix(self.A_ub, n)
        b_ub = np.zeros(0) if self.b_ub is None else np.asarray(self.b_ub, dtype=float).ravel()
        lower = np.zeros(n) if self.lower is None else np.asarray(self.lower, dtype=float).ravel()
        upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float).ravel()
        if A_eq.shape != (b_eq.size, n):
            raise DimensionError(f"equality block {A_eq.shape} does not match {b_eq.size}x{n}")
        if A_ub.shape != (b_ub.size, n):
            raise DimensionError(f"inequality block {A_ub.shape} does not match {b_ub.size}x{n}")
        if lower.size != n or upper.size != n:
            raise DimensionError("bounds must have one entry per variable")
        if np.any(lower > upper):
            raise ValueError("lower bound exceeds upper bound")
        for name, val in (("objective", c), ("A_eq", A_eq), ("b_eq", b_eq),
                          ("A_ub", A_ub), ("b_ub", b_ub)):
            if not np.all(np.isfinite(val)):
                raise ValueError(f"{name} has non-finite entries")
        object.__setattr__(self, "objective", c)
        object.__setattr__(self, "A_eq", A_eq)
        object.__setattr__(self, "b_eq", b_eq)
        object.__setattr__(self, "A_ub", A_ub)
        object.__setattr__(self, "b_ub", b_ub)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def n_vars(self) -> int:
        return self.objective.size


@dataclass(frozen=True)
class LpSolution:
    status: LpStatus
    x: np.ndarray | None = None
    objective_value: float = np.nan
    proven: bool = True

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


@dataclass(frozen=True)
class MilpProblem:
    lp: LpProblem
    binaries: tuple = field(default_factory=tuple)

    def __post_init__(self):
        idx = tuple(sorted(set(int(i) for i in self.binaries)))
        if idx and (idx[0] < 0 or idx[-1] >= self.lp.n_vars):
            raise DimensionError("binary index outside variable range")
        object.__setattr__(self, "binaries", idx)


def _standard_form(p: LpProblem):
    """Append slacks so the in-house simplex sees equalities only."""
    m_ub = p.b_ub.size
    n = p.n_vars
    if m_ub == 0:
        return p.objective, p.A_eq, p.b_eq, p.lower, p.upper
    c = np.concatenate([p.objective, np.zeros(m_ub)])
    A = np.block([[p.A_eq, np.zeros((p.b_eq.size, m_ub))], [p.A_ub, np.eye(m_ub)]])
    b = np.concatenate([p.b_eq, p.b_ub])
    lo = np.concatenate([p.lower, np.zeros(m_ub)])
    up = np.concatenate([p.upper, np.full(m_ub, np.inf)])
    assert A.shape[1] == n + m_ub
    return c, A, b, lo, up


def _highs_model(p: LpProblem, tol: float, presolve: bool = True, solver: str = "choose"):
    """Build a silent HiGHS instance for ``p``; the objective is set by the caller."""
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    t = float(min(max(tol, 1e-10), 1e-7))
    h.setOptionValue("primal_feasibility_tolerance", t)
    h.setOptionValue("dual_feasibility_tolerance", t)
    h.setOptionValue("presolve", "on" if presolve else "off")
    h.setOptionValue("solver", solver)
    rows = sparse.csr_matrix(np.vstack([p.A_eq, p.A_ub]))
    lp = highspy.HighsLp()
    lp.num_col_ = p.n_vars
    lp.num_row_ = rows.shape[0]
    lp.col_cost_ = p.objective
    inf = highspy.kHighsInf
    lp.col_lower_ = np.where(np.isfinite(p.lower), p.lower, -inf)
    lp.col_upper_ = np.where(np.isfinite(p.upper), p.upper, inf)
    lp.row_lower_ = np.concatenate([p.b_eq, np.full(p.b_ub.size, -inf)])
    lp.row_upper_ = np.concatenate([p.b_eq, p.b_ub])
    lp.a_matrix_.format_ = highspy.MatrixFormat.kRowwise
    lp.a_matrix_.start_ = rows.indptr.astype(np.int32)
    lp.a_matrix_.index_ = rows.indices.astype(np.int32)
    lp.a_matrix_.value_ = rows.data.astype(float)
    lp.a_matrix_.num_col_ = p.n_vars
    lp.a_matrix_.num_row_ = rows.shape[0]
    h.passModel(lp)
    return h


_MS = highspy.HighsModelStatus


def _highs_run(h, c: np.ndarray):
    h.changeColsCost(c.size, np.arange(c.size, dtype=np.int32), c)
    h.run()
    status = h.getModelStatus()
    if status == _MS.kOptimal:
        x = np.asarray(h.getSolution().col_value, dtype=float)
        return status, x
    return status, None


def _highs_solve(p: LpProblem, c: np.ndarray, tol: float, h=None) -> tuple[LpSolution, object]:
    """One objective on an optional reusable model; falls back on numerical trouble."""
    if h is None:
        h = _highs_model(p, tol)
    status, x = _highs_run(h, c)
    if status == _MS.kOptimal:
        return LpSolution(LpStatus.OPTIMAL, x, float(c @ x)), h
    if status == _MS.kInfeasible:
        return LpSolution(LpStatus.INFEASIBLE), h
    if status == _MS.kUnbounded:
        return LpSolution(LpStatus.UNBOUNDED, objective_value=-np.inf), h
    if status == _MS.kUnboundedOrInfeasible:
        # a zero objective separates the two cases
        st, _ = _highs_run(_highs_model(p, tol, presolve=False), np.zeros(p.n_vars))
        if st == _MS.kOptimal:
            return LpSolution(LpStatus.UNBOUNDED, objective_value=-np.inf), h
        if st == _MS.kInfeasible:
            return LpSolution(LpStatus.INFEASIBLE), h
    # numerical failure: fresh model without presolve, then interior point, then our simplex
    for kwargs in ({"presolve": False}, {"solver": "ipm"}):
        st, x = _highs_run(_highs_model(p, tol, **kwargs), c)
        if st == _MS.kOptimal:
            return LpSolution(LpStatus.OPTIMAL, x, float(c @ x)), h
        if st == _MS.kInfeasible:
            return LpSolution(LpStatus.INFEASIBLE), h
        if st == _MS.kUnbounded:
            return LpSolution(LpStatus.UNBOUNDED, objective_value=-np.inf), h
    q = LpProblem(c, p.A_eq, p.b_eq, p.lower, p.upper, p.A_ub, p.b_ub)
    try:
        return _solve_lp_simplex(q, tol), h
    except SolverError as exc:
        raise SolverError(f"LP backend failure: HiGHS status {status}") from exc


def _solve_lp_highs(p: LpProblem, tol) -> LpSolution:
    if p.n_vars == 0:
        feasible = np.all(np.abs(p.b_eq) <= tol) and np.all(p.b_ub >= -tol)
        if feasible:
            return LpSolution(LpStatus.OPTIMAL, np.zeros(0), 0.0)
        return LpSolution(LpStatus.INFEASIBLE)
    return _highs_solve(p, p.objective, tol)[0]


def _solve_lp_simplex(p: LpProblem, tol) -> LpSolution:
    c, A, b, lo, up = _standard_form(p)
    status, x, val = _simplex.simplex(c, A, b, lo, up, tol=tol)
    if status == "optimal":
        return LpSolution(LpStatus.OPTIMAL, x[: p.n_vars], float(p.objective @ x[: p.n_vars]))
    if status == "unbounded":
        return LpSolution(LpStatus.UNBOUNDED, objective_value=-np.inf)
    return LpSolution(LpStatus.INFEASIBLE)


def solve_lp(p: LpProblem, method: str = "highs", tol: float = DEFAULT_TOL) -> LpSolution:
    """Solve an LP; raises :class:`SolverError` on numerical failure."""
    if method == "highs":
        return _solve_lp_highs(p, tol)
    if method == "simplex":
        return _solve_lp_simplex(p, tol)
    raise ValueError(f"unknown LP method {method!r}")


def solve_lp_many(p: LpProblem, objectives, method: str = "highs",
                  tol: float = DEFAULT_TOL) -> list[LpSolution]:
    """Solve ``p`` once per objective row, reusing one warm model with HiGHS."""
    objectives = np.atleast_2d(np.asarray(objectives, dtype=float))
    if objectives.shape[1] != p.n_vars:
        raise DimensionError("objective rows must have one entry per variable")
    if method == "simplex" or p.n_vars == 0:
        return [solve_lp(LpProblem(c, p.A_eq, p.b_eq, p.lower, p.upper, p.A_ub, p.b_ub),
                         method=method, tol=tol) for c in objectives]
    if method != "highs":
        raise ValueError(f"unknown LP method {method!r}")
    out, h = [], None
    for c in objectives:
        sol, h = _highs_solve(p, c, tol, h)
        out.append(sol)
    return out


def solve_milp(p: MilpProblem, gap: float = 1e-6, method: str = "highs",
               node_limit: int = 100000, time_limit: float | None = None,
               tol: float = DEFAULT_TOL) -> LpSolution:
    """Solve a MILP with 0/1 variables at ``p.binaries``.

    With ``method="highs"`` the gap is passed as HiGHS' relative MIP gap and
    a node or time cap that stops with an incumbent returns it with
    ``proven=False``. With ``method="bnb"`` the gap is absolute.
    """
    lp = p.lp
    if not p.binaries:
        return solve_lp(lp, method="simplex" if method == "bnb" else "highs", tol=tol)
    if method == "bnb":
        c, A, b, lo, up = _standard_form(lp)

        def relax(c_, A_, b_, lo_, up_):
            return _simplex.simplex(c_, A_, b_, lo_, up_, tol=tol)

        status, x, val = _simplex.branch_and_bound(c, A, b, lo, up, p.binaries, gap=gap,
                                                   node_limit=node_limit, lp_solver=relax)
        if status == "optimal":
            x = x[: lp.n_vars]
            return LpSolution(LpStatus.OPTIMAL, x, float(lp.objective @ x))
        if status == "unbounded":
            return LpSolution(LpStatus.UNBOUNDED, objective_value=-np.inf)
        return LpSolution(LpStatus.INFEASIBLE)
    if method != "highs":
        raise ValueError(f"unknown MILP method {method!r}")
    integrality = np.zeros(lp.n_vars)
    integrality[list(p.binaries)] = 1
    lo = lp.lower.copy()
    up = lp.upper.copy()
    idx = list(p.binaries)
    lo[idx] = np.maximum(lo[idx], 0.0)
    up[idx] = np.minimum(up[idx], 1.0)
    cons = []
    if lp.b_eq.size:
        cons.append(optimize.LinearConstraint(lp.A_eq, lp.b_eq, lp.b_eq))
    if lp.b_ub.size:
        cons.append(optimize.LinearConstraint(lp.A_ub, -np.inf, lp.b_ub))
    options = {"mip_rel_gap": gap, "node_limit": node_limit, "presolve": True}
    if time_limit is not None:
        options["time_limit"] = time_limit
    res = optimize.milp(lp.objective, integrality=integrality,
                        bounds=optimize.Bounds(lo, up), constraints=cons, options=options)
    if res.status == 0:
        return LpSolution(LpStatus.OPTIMAL, np.asarray(res.x), float(res.fun))
    if res.status == 1 and res.x is not None:
        return LpSolution(LpStatus.OPTIMAL, np.asarray(res.x), float(res.fun), proven=False)
    if res.status == 2:
        return LpSolution(LpStatus.INFEASIBLE)
    if res.status == 3:
        return LpSolution(LpStatus.UNBOUNDED, objective_value=-np.inf)
    if res.status == 1:
        raise SolverError(f"MILP cap reached without incumbent: {res.message}")
    raise SolverError(f"MILP backend failure: {res.message}")


def dump_lp(p: LpProblem) -> str:
    """Fixed-width text dump of an LP, meant for debugging only."""
    out = io.StringIO()
    fmt = "{:>14.6g}"
    out.write(f"vars {p.n_vars}  eq {p.b_eq.size}  ub {p.b_ub.size}\n")
    out.write("min  " + "".join(fmt.format(v) for v in p.objective) + "\n")
    for row, rhs in zip(p.A_eq, p.b_eq):
        out.write("eq   " + "".join(fmt.format(v) for v in row) + "  = " + fmt.format(rhs) + "\n")
    for row, rhs in zip(p.A_ub, p.b_ub):
        out.write("ub   " + "".join(fmt.format(v) for v in row) + " <= " + fmt.format(rhs) + "\n")
    out.write("lo   " + "".join(fmt.format(v) for v in p.lower) + "\n")
    out.write("up   " + "".join(fmt.format(v) for v in p.upper) + "\n")
    return out.getvalue()
