r"""Line zonotopes in CLG-rep and their exact set operations.

A line zonotope is

.. math::

    Z = \{c + M\delta + G\xi : \delta \in \mathbb{R}^{n_\delta},
          \|\xi\|_\infty \le 1,\ S\delta + A\xi = b\}.

Constrained zonotopes are the case ``n_lines == 0`` and zonotopes are
additionally constraint-free. Every block may have zero width so all
operations are total.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionError, EmptySetError, SolverError
from .solver import DEFAULT_TOL, LpProblem, LpStatus, solve_lp, solve_lp_many


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


def _vector(v, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim == 2 and 1 in v.shape:
        v = v.ravel()
    if v.ndim == 0:
        v = v.reshape(1)
    if v.ndim != 1:
        raise DimensionError(f"{name} must be a vector, got shape {v.shape}")
    return v


def _matrix(a, rows: int | None, cols: int | None, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        r = rows if rows is not None else (a.shape[0] if a.ndim == 2 else 0)
        c = cols if cols is not None else (a.shape[1] if a.ndim == 2 else 0)
        return np.zeros((r, c))
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        column = rows is not None and a.size == rows and cols in (None, 1)
        a = a.reshape(-1, 1) if column else a.reshape(1, -1)
    if a.ndim != 2:
        raise DimensionError(f"{name} must be a matrix, got shape {a.shape}")
    return a


@dataclass(frozen=True, eq=False)
class LineZonotope:
    """Immutable CLG-rep ``(M, G, c, S, A, b)``."""

    M: np.ndarray
    G: np.ndarray
    c: np.ndarray
    S: np.ndarray
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        c = _vector(self.c, "c")
        n = c.size
        b = _vector(self.b, "b") if np.asarray(self.b).size else np.zeros(0)
        nc = b.size
        M = _matrix(self.M, n, None, "M")
        G = _matrix(self.G, n, None, "G")
        S = _matrix(self.S, nc, M.shape[1], "S")
        A = _matrix(self.A, nc, G.shape[1], "A")
        if M.shape[0] != n or G.shape[0] != n:
            raise DimensionError(f"M {M.shape} and G {G.shape} must have {n} rows")
        if S.shape != (nc, M.shape[1]):
            raise DimensionError(f"S has shape {S.shape}, expected {(nc, M.shape[1])}")
        if A.shape != (nc, G.shape[1]):
            raise DimensionError(f"A has shape {A.shape}, expected {(nc, G.shape[1])}")
        for name, val in (("M", M), ("G", G), ("c", c), ("S", S), ("A", A), ("b", b)):
            if not np.all(np.isfinite(val)):
                raise ValueError(f"{name} has non-finite entries")
            object.__setattr__(self, name, _frozen(val))

    @property
    def n(self) -> int:
        return self.c.size

    @property
    def n_lines(self) -> int:
        return self.M.shape[1]

    @property
    def n_gens(self) -> int:
        return self.G.shape[1]

    @property
    def n_cons(self) -> int:
        return self.b.size

    @property
    def is_constrained_zonotope(self) -> bool:
        return self.n_lines == 0

    @property
    def is_zonotope(self) -> bool:
        return self.n_lines == 0 and self.n_cons == 0

    def __repr__(self) -> str:
        return (f"LineZonotope(n={self.n}, lines={self.n_lines}, "
                f"generators={self.n_gens}, constraints={self.n_cons})")

    def structurally_equal(self, other: "LineZonotope", atol: float = 0.0) -> bool:
        for name in ("M", "G", "c", "S", "A", "b"):
            a, b = getattr(self, name), getattr(other, name)
            if a.shape != b.shape or not np.allclose(a, b, rtol=0.0, atol=atol):
                return False
        return True


@dataclass(frozen=True)
class Strip:
    """``{x : |rho'x - d| <= sigma}``."""

    rho: np.ndarray
    d: float
    sigma: float

    def __post_init__(self):
        rho = _vector(self.rho, "rho")
        if self.sigma < 0:
            raise ValueError("strip half-width sigma must be nonnegative")
        object.__setattr__(self, "rho", _frozen(rho))
        object.__setattr__(self, "d", float(self.d))
        object.__setattr__(self, "sigma", float(self.sigma))

    def contains(self, x, tol: float = 0.0) -> bool:
        return abs(float(self.rho @ np.asarray(x, dtype=float)) - self.d) <= self.sigma + tol


@dataclass(frozen=True)
class Interval:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = _vector(self.lower, "lower")
        up = _vector(self.upper, "upper")
        if lo.size != up.size:
            raise DimensionError("interval bounds differ in length")
        if np.any(lo > up):
            raise ValueError("interval lower bound exceeds upper bound")
        object.__setattr__(self, "lower", _frozen(lo))
        object.__setattr__(self, "upper", _frozen(up))

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def bounded(self) -> bool:
        return bool(np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper)))


# -- constructors -----------------------------------------------------------

def lz_zonotope(G, c) -> LineZonotope:
    """Zonotope ``c + G B_inf`` as a line zonotope."""
    c = _vector(c, "c")
    G = _matrix(G, c.size, None, "G")
    if G.shape[0] != c.size:
        raise DimensionError(f"G has {G.shape[0]} rows but c has length {c.size}")
    n = c.size
    return LineZonotope(np.zeros((n, 0)), G, c, np.zeros((0, 0)), np.zeros((0, G.shape[1])), np.zeros(0))


def lz_constrained_zonotope(G, c, A, b) -> LineZonotope:
    c = _vector(c, "c")
    n = c.size
    b = np.asarray(b, dtype=float).ravel()
    return LineZonotope(np.zeros((n, 0)), G, c, np.zeros((b.size, 0)), A, b)


def lz_box(lower, upper) -> LineZonotope:
    lower = _vector(lower, "lower")
    upper = _vector(upper, "upper")
    return lz_zonotope(np.diag((upper - lower) / 2.0), (upper + lower) / 2.0)


def lz_realspace(n: int) -> LineZonotope:
    """``R^n`` as ``(I_n, _, 0)``."""
    if int(n) < 1:
        raise DimensionError("dimension must be at least 1")
    n = int(n)
    return LineZonotope(np.eye(n), np.zeros((n, 0)), np.zeros(n), np.zeros((0, n)), np.zeros((0, 0)), np.zeros(0))


def lz_from_strip(s: Strip) -> LineZonotope:
    """Strip as ``(I_n, 0, 0, rho', -sigma, d)``."""
    n = s.rho.size
    return LineZonotope(np.eye(n), np.zeros((n, 1)), np.zeros(n), s.rho.reshape(1, n),
                        np.array([[-s.sigma]]), np.array([s.d]))


def lz_singleton(x) -> LineZonotope:
    x = _vector(x, "x")
    return lz_zonotope(np.zeros((x.size, 0)), x)


# -- exact operations --------------------------------------------------------

def linear_map(R, Z: LineZonotope) -> LineZonotope:
    """``R Z``; the constraint block is untouched."""
    R = _matrix(R, None, Z.n, "R")
    if R.shape[1] != Z.n:
        raise DimensionError(f"map has {R.shape[1]} columns, set dimension is {Z.n}")
    return LineZonotope(R @ Z.M, R @ Z.G, R @ Z.c, Z.S, Z.A, Z.b)


def translate(Z: LineZonotope, t) -> LineZonotope:
    t = _vector(t, "t")
    if t.size != Z.n:
        raise DimensionError("translation length differs from set dimension")
    return LineZonotope(Z.M, Z.G, Z.c + t, Z.S, Z.A, Z.b)


def minkowski_sum(Z: LineZonotope, W: LineZonotope) -> LineZonotope:
    if Z.n != W.n:
        raise DimensionError(f"dimensions differ: {Z.n} vs {W.n}")
    return LineZonotope(
        np.hstack([Z.M, W.M]),
        np.hstack([Z.G, W.G]),
        Z.c + W.c,
        _bdiag(Z.S, W.S),
        _bdiag(Z.A, W.A),
        np.concatenate([Z.b, W.b]),
    )


def _bdiag(*blocks: np.ndarray) -> np.ndarray:
    rows = sum(b.shape[0] for b in blocks)
    cols = sum(b.shape[1] for b in blocks)
    out = np.zeros((rows, cols))
    r = c = 0
    for b in blocks:
        out[r:r + b.shape[0], c:c + b.shape[1]] = b
        r += b.shape[0]
        c += b.shape[1]
    return out


def generalized_intersection(Z: LineZonotope, Y: LineZonotope, R=None) -> LineZonotope:
    """``{z in Z : R z in Y}``; ``R`` defaults to the identity."""
    if R is None:
        R = np.eye(Z.n)
    R = _matrix(R, Y.n, Z.n, "R")
    if R.shape != (Y.n, Z.n):
        raise DimensionError(f"R has shape {R.shape}, expected {(Y.n, Z.n)}")
    return LineZonotope(
        np.hstack([Z.M, np.zeros((Z.n, Y.n_lines))]),
        np.hstack([Z.G, np.zeros((Z.n, Y.n_gens))]),
        Z.c,
        np.vstack([_bdiag(Z.S, Y.S), np.hstack([R @ Z.M, -Y.M])]),
        np.vstack([_bdiag(Z.A, Y.A), np.hstack([R @ Z.G, -Y.G])]),
        np.concatenate([Z.b, Y.b, Y.c - R @ Z.c]),
    )


def cartesian_product(Z: LineZonotope, W: LineZonotope) -> LineZonotope:
    return LineZonotope(
        _bdiag(Z.M, W.M),
        _bdiag(Z.G, W.G),
        np.concatenate([Z.c, W.c]),
        _bdiag(Z.S, W.S),
        _bdiag(Z.A, W.A),
        np.concatenate([Z.b, W.b]),
    )


def multi_intersection(Zs: Sequence[LineZonotope], Rs: Sequence) -> LineZonotope:
    """``{x in R^n : R_i x in Z_i for all i}`` in closed form."""
    if len(Zs) == 0:
        raise ValueError("need at least one set")
    if len(Zs) != len(Rs):
        raise DimensionError("one map per set is required")
    Rs = [np.atleast_2d(np.asarray(R, dtype=float)) for R in Rs]
    n = Rs[0].shape[1]
    for Z, R in zip(Zs, Rs):
        if R.shape != (Z.n, n):
            raise DimensionError(f"map shape {R.shape} does not match set dimension {Z.n} and {n}")
    P = Zs[0]
    for Z in Zs[1:]:
        P = cartesian_product(P, Z)
    Rt = np.vstack(Rs)
    return LineZonotope(
        np.hstack([np.eye(n), np.zeros((n, P.n_lines))]),
        np.zeros((n, P.n_gens)),
        np.zeros(n),
        np.vstack([np.hstack([np.zeros((P.n_cons, n)), P.S]), np.hstack([Rt, -P.M])]),
        np.vstack([P.A, -P.G]),
        np.concatenate([P.b, P.c]),
    )


def project(Z: LineZonotope, coords: Sequence[int]) -> LineZonotope:
    R = np.eye(Z.n)[list(coords)]
    return linear_map(R, Z)


# -- LP-based queries --------------------------------------------------------

def _kappa_lp(Z: LineZonotope, x: np.ndarray | None) -> LpProblem:
    """``min k  s.t.  |xi| <= 1 + k, k >= -1`` plus the set's equalities.

    Variables are ``(delta, xi, k)``. With ``x`` given the point equation
    ``M delta + G xi = x - c`` is appended.
    """
    nd, ng = Z.n_lines, Z.n_gens
    nv = nd + ng + 1
    rows = [np.hstack([Z.S, Z.A, np.zeros((Z.n_cons, 1))])]
    rhs = [Z.b]
    if x is not None:
        rows.insert(0, np.hstack([Z.M, Z.G, np.zeros((Z.n, 1))]))
        rhs.insert(0, x - Z.c)
    A_eq = np.vstack(rows)
    b_eq = np.concatenate(rhs)
    A_ub = np.zeros((2 * ng, nv))
    A_ub[:ng, nd:nd + ng] = np.eye(ng)
    A_ub[ng:, nd:nd + ng] = -np.eye(ng)
    A_ub[:, -1] = -1.0
    b_ub = np.ones(2 * ng)
    c = np.zeros(nv)
    c[-1] = 1.0
    lower = np.full(nv, -np.inf)
    upper = np.full(nv, np.inf)
    lower[-1] = -1.0
    return LpProblem(c, A_eq, b_eq, lower, upper, A_ub, b_ub)


def point_kappa(x, Z: LineZonotope, method: str = "highs") -> float:
    """Smallest ``k`` with ``x`` in the set inflated to ``|xi| <= 1 + k``.

    ``+inf`` if ``x`` is outside the affine hull reachable by the equalities.
    """
    x = _vector(x, "x")
    if x.size != Z.n:
        raise DimensionError(f"point has length {x.size}, set dimension is {Z.n}")
    sol = solve_lp(_kappa_lp(Z, x), method=method)
    if sol.status is LpStatus.INFEASIBLE:
        return np.inf
    if sol.status is LpStatus.UNBOUNDED:
        raise SolverError("kappa LP reported unbounded although kappa >= -1")
    return float(sol.objective_value)


def membership(x, Z: LineZonotope, tol: float = DEFAULT_TOL, method: str = "highs") -> bool:
    return point_kappa(x, Z, method=method) <= tol


def set_kappa(Z: LineZonotope, method: str = "highs") -> float:
    sol = solve_lp(_kappa_lp(Z, None), method=method)
    if sol.status is LpStatus.INFEASIBLE:
        return np.inf
    if sol.status is LpStatus.UNBOUNDED:
        raise SolverError("kappa LP reported unbounded although kappa >= -1")
    return float(sol.objective_value)


def is_empty(Z: LineZonotope, tol: float = DEFAULT_TOL, method: str = "highs") -> bool:
    if Z.n_cons == 0:
        return False
    return set_kappa(Z, method=method) > tol


def _support_lp(Z: LineZonotope) -> LpProblem:
    nd, ng = Z.n_lines, Z.n_gens
    lower = np.concatenate([np.full(nd, -np.inf), -np.ones(ng)])
    upper = np.concatenate([np.full(nd, np.inf), np.ones(ng)])
    return LpProblem(np.zeros(nd + ng), np.hstack([Z.S, Z.A]), Z.b, lower, upper)


def _support_many(Z: LineZonotope, D: np.ndarray, method: str) -> np.ndarray:
    """Support values for each row of ``D``."""
    H = np.hstack([Z.M, Z.G])
    if H.shape[1] == 0:
        if Z.n_cons and np.any(np.abs(Z.b) > DEFAULT_TOL):
            raise EmptySetError("support of an empty set")
        return D @ Z.c
    out = np.empty(D.shape[0])
    for i, sol in enumerate(solve_lp_many(_support_lp(Z), -(D @ H), method=method)):
        if sol.status is LpStatus.INFEASIBLE:
            raise EmptySetError("support of an empty set")
        out[i] = np.inf if sol.status is LpStatus.UNBOUNDED else D[i] @ Z.c - sol.objective_value
    return out


def support(Z: LineZonotope, direction, method: str = "highs") -> float:
    """``max_{x in Z} direction'x``; ``+inf`` if unbounded."""
    d = _vector(direction, "direction")
    if d.size != Z.n:
        raise DimensionError("direction length differs from set dimension")
    return float(_support_many(Z, d.reshape(1, -1), method)[0])


def interval_hull(Z: LineZonotope, method: str = "highs") -> Interval:
    eye = np.eye(Z.n)
    vals = _support_many(Z, np.vstack([eye, -eye]), method)
    return Interval(-vals[Z.n:], vals[:Z.n])


def radius(Z: LineZonotope, method: str = "highs") -> float:
    """Half the largest interval-hull edge; ``inf`` if any edge is unbounded."""
    hull = interval_hull(Z, method=method)
    if not hull.bounded:
        return np.inf
    return float(np.max(hull.width) / 2.0) if Z.n else 0.0
