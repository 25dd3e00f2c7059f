"""Set-based state estimation for linear descriptor systems.

The model is ``E x_k = A x_{k-1} + B u_{k-1} + Bw w_{k-1}`` with output
``y_k = C x_k + D u_k + Dv v_k`` and possibly singular ``E``. An SVD of ``E``
splits the transformed state ``z = T^{-1} x`` into a dynamic part (first
``n_z`` coordinates) and an algebraic part fixed by a static relation at
each step. Sets are propagated in ``z`` coordinates.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DimensionError
from .reduction import ReductionLimits, reduce
from .sets import (LineZonotope, _bdiag, generalized_intersection, is_empty, linear_map,
                   lz_realspace, lz_zonotope, multi_intersection, translate)

log = logging.getLogger(__name__)

RANK_TOL = 1e-10


def _mat(a, name):
    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(1, -1)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    a = a.copy()
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DescriptorModel:
    E: np.ndarray
    A: np.ndarray
    B: np.ndarray
    Bw: np.ndarray
    C: np.ndarray
    D: np.ndarray
    Dv: np.ndarray

    def __post_init__(self):
        for name in ("E", "A", "B", "Bw", "C", "D", "Dv"):
            object.__setattr__(self, name, _mat(getattr(self, name), name))
        n = self.A.shape[0]
        if self.E.shape != (n, n) or self.A.shape != (n, n):
            raise DimensionError("E and A must be square of equal size")
        if self.B.shape[0] != n or self.Bw.shape[0] != n:
            raise DimensionError("B and Bw must have n rows")
        ny = self.C.shape[0]
        if self.C.shape[1] != n:
            raise DimensionError("C must have n columns")
        if self.D.shape != (ny, self.B.shape[1]):
            raise DimensionError(f"D must be {ny}x{self.B.shape[1]}")
        if self.Dv.shape[0] != ny:
            raise DimensionError("Dv must have n_y rows")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]

    @property
    def n_w(self) -> int:
        return self.Bw.shape[1]

    @property
    def n_y(self) -> int:
        return self.C.shape[0]

    @property
    def n_v(self) -> int:
        return self.Dv.shape[1]


@dataclass(frozen=True)
class SvdTransform:
    """Transformed matrices; tilde blocks are dynamic rows, check blocks static rows."""

    T: np.ndarray
    T_inv: np.ndarray
    U: np.ndarray
    singular_values: np.ndarray
    n_z: int
    A_tilde: np.ndarray
    B_tilde: np.ndarray
    Bw_tilde: np.ndarray
    A_check: np.ndarray
    B_check: np.ndarray
    Bw_check: np.ndarray

    @property
    def n(self) -> int:
        return self.T.shape[0]

    @property
    def n_static(self) -> int:
        return self.n - self.n_z


def svd_transform(m: DescriptorModel, rank_tol: float = RANK_TOL) -> SvdTransform:
    U, s, Vt = np.linalg.svd(m.E)
    smax = s[0] if s.size else 0.0
    n_z = int(np.sum(s > rank_tol * smax)) if smax > 0 else 0
    T = Vt.T
    T_inv = Vt
    scale = np.ones(m.n)
    scale[:n_z] = 1.0 / s[:n_z]
    Ut = U.T

    def split(X):
        Y = scale[:, None] * (Ut @ X)
        return Y[:n_z], Y[n_z:]

    At, Ac = split(m.A @ T)
    Bt, Bc = split(m.B)
    Bwt, Bwc = split(m.Bw)
    return SvdTransform(T, T_inv, U, s, n_z, At, Bt, Bwt, Ac, Bc, Bwc)


def _measurement_set(m: DescriptorModel, V: LineZonotope, u, y) -> LineZonotope:
    """``(y - D u) + (-Dv V)``."""
    u = np.asarray(u, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if y.size != m.n_y or u.size != m.n_u:
        raise DimensionError("input or output length does not match the model")
    return translate(linear_map(-m.Dv, V), y - m.D @ u)


def initial_estimate(m: DescriptorModel, X0: LineZonotope, V: LineZonotope, u0, y0) -> LineZonotope:
    """``X0`` intersected with the states consistent with the first measurement."""
    if X0.n != m.n or V.n != m.n_v:
        raise DimensionError("X0 and V dimensions do not match the model")
    return generalized_intersection(X0, _measurement_set(m, V, u0, y0), m.C)


def initial_feasible_set(m: DescriptorModel, t: SvdTransform, X0: LineZonotope, W: LineZonotope,
                         V: LineZonotope, u0, y0) -> LineZonotope:
    """Initial set in ``z`` coordinates with measurement and static row at k = 0."""
    if X0.n != m.n or W.n != m.n_w or V.n != m.n_v:
        raise DimensionError("X0, W, V dimensions do not match the model")
    u0 = np.asarray(u0, dtype=float).ravel()
    Xhat0 = initial_estimate(m, X0, V, u0, y0)
    Z = linear_map(t.T_inv, Xhat0)
    nl, ng = Z.n_lines, Z.n_gens
    Ac, Bc, Bwc = t.A_check, t.B_check, t.Bw_check
    ns = t.n_static
    M = np.hstack([Z.M, np.zeros((m.n, W.n_lines))])
    G = np.hstack([Z.G, np.zeros((m.n, W.n_gens))])
    S = np.vstack([
        np.block([[Z.S, np.zeros((Z.n_cons, W.n_lines))], [np.zeros((W.n_cons, nl)), W.S]]),
        np.hstack([Ac @ Z.M, Bwc @ W.M]),
    ])
    A = np.vstack([
        np.block([[Z.A, np.zeros((Z.n_cons, W.n_gens))], [np.zeros((W.n_cons, ng)), W.A]]),
        np.hstack([Ac @ Z.G, Bwc @ W.G]),
    ])
    b = np.concatenate([Z.b, W.b, -Ac @ Z.c - Bwc @ W.c - Bc @ u0])
    assert S.shape[0] == Z.n_cons + W.n_cons + ns
    return LineZonotope(M, G, Z.c, S, A, b)


def predict(t: SvdTransform, Zhat_prev: LineZonotope, W: LineZonotope, u_prev, u_k,
            static_set: LineZonotope | None = None) -> LineZonotope:
    """Prediction with the static relation at time k folded into the constraints.

    ``static_set`` encloses the algebraic coordinates at time k. The default
    is the whole space, which is what the line-zonotope estimator uses; the
    constrained-zonotope baseline passes a bounded admissible set instead.
    """
    n, nz, ns = t.n, t.n_z, t.n_static
    if Zhat_prev.n != n or W.n != t.Bw_tilde.shape[1]:
        raise DimensionError("set dimensions do not match the transform")
    u_prev = np.asarray(u_prev, dtype=float).ravel()
    u_k = np.asarray(u_k, dtype=float).ravel()
    R = static_set if static_set is not None else (lz_realspace(ns) if ns else None)
    if R is None:
        R = LineZonotope(np.zeros((0, 0)), np.zeros((0, 0)), np.zeros(0), np.zeros((0, 0)),
                         np.zeros((0, 0)), np.zeros(0))
    if R.n != ns:
        raise DimensionError(f"static set must have dimension {ns}")
    At, Bt, Bwt = t.A_tilde, t.B_tilde, t.Bw_tilde
    Ac, Bc, Bwc = t.A_check, t.B_check, t.Bw_check
    Zp = Zhat_prev
    ndw, ngw = W.n_lines, W.n_gens

    def lift(top, bottom_cols):
        return np.vstack([top, np.zeros((ns, bottom_cols))])

    top_c = At @ Zp.c + Bt @ u_prev + Bwt @ W.c
    c_bar = np.concatenate([top_c, R.c])
    # column blocks: lines (delta_{k-1}, theta_{k-1}, theta_k, delta_R), generators (xi_{k-1}, phi_{k-1}, phi_k, xi_R)
    M_blocks = [lift(At @ Zp.M, Zp.n_lines), lift(Bwt @ W.M, ndw), np.zeros((n, ndw)),
                np.vstack([np.zeros((nz, R.n_lines)), R.M])]
    G_blocks = [lift(At @ Zp.G, Zp.n_gens), lift(Bwt @ W.G, ngw), np.zeros((n, ngw)),
                np.vstack([np.zeros((nz, R.n_gens)), R.G])]
    M_bar = np.hstack(M_blocks)
    G_bar = np.hstack(G_blocks)
    S_top = _bdiag(Zp.S, W.S, W.S, R.S)
    A_top = _bdiag(Zp.A, W.A, W.A, R.A)
    S_static = np.hstack([Ac @ M_blocks[0], Ac @ M_blocks[1], Bwc @ W.M, Ac @ M_blocks[3]])
    A_static = np.hstack([Ac @ G_blocks[0], Ac @ G_blocks[1], Bwc @ W.G, Ac @ G_blocks[3]])
    b_static = -Ac @ c_bar - Bc @ u_k - Bwc @ W.c
    return LineZonotope(M_bar, G_bar, c_bar, np.vstack([S_top, S_static]),
                        np.vstack([A_top, A_static]), np.concatenate([Zp.b, W.b, W.b, R.b, b_static]))


def update(t: SvdTransform, Zbar: LineZonotope, m: DescriptorModel, V: LineZonotope, u_k, y_k) -> LineZonotope:
    """Measurement update ``Zbar  intersect_{C T}  ((y - D u) + (-Dv V))``."""
    return generalized_intersection(Zbar, _measurement_set(m, V, u_k, y_k), m.C @ t.T)


def static_set_from_admissible(t: SvdTransform, X_A: LineZonotope) -> LineZonotope:
    """Algebraic-coordinate rows of ``T^{-1} X_A``."""
    Z = linear_map(t.T_inv, X_A)
    return linear_map(np.eye(t.n)[t.n_z:], Z)


@dataclass(frozen=True)
class EstimatorState:
    k: int
    Zhat: LineZonotope | None
    Xhat: LineZonotope | None
    empty: bool = False
    reduction_time: float = 0.0
    step_time: float = 0.0


def estimate_run(m: DescriptorModel, X0: LineZonotope, W: LineZonotope, V: LineZonotope,
                 inputs: Sequence, outputs: Sequence, limits: ReductionLimits | None,
                 static_set: LineZonotope | None = None,
                 check_empty: bool = True) -> list[EstimatorState]:
    """Run the prediction/update recursion over ``len(outputs)`` steps.

    Reduction runs after each update. Once a step is empty the remaining
    steps are reported empty without further computation.

    At ``k = 0`` the reported ``Xhat`` is :func:`initial_estimate`, the prior
    refined by the first measurement only. ``Zhat`` also carries the static
    relation at ``k = 0`` and is what the recursion propagates, so it can be
    tighter than ``T Xhat`` at that step.
    """
    inputs = [np.asarray(u, dtype=float).ravel() for u in inputs]
    outputs = [np.asarray(y, dtype=float).ravel() for y in outputs]
    if len(inputs) < len(outputs):
        raise DimensionError("need one input per output sample")
    t = svd_transform(m)
    states: list[EstimatorState] = []
    Zhat = None
    for k, y in enumerate(outputs):
        t0 = time.perf_counter()
        if k == 0:
            Zk = initial_feasible_set(m, t, X0, W, V, inputs[0], y)
        else:
            Zbar = predict(t, Zhat, W, inputs[k - 1], inputs[k], static_set)
            Zk = update(t, Zbar, m, V, inputs[k], y)
        if check_empty and is_empty(Zk):
            states.append(EstimatorState(k, None, None, True, 0.0, time.perf_counter() - t0))
            for kk in range(k + 1, len(outputs)):
                states.append(EstimatorState(kk, None, None, True))
            log.info("estimate empty at k=%d", k)
            break
        t1 = time.perf_counter()
        if limits is not None:
            Zk = reduce(Zk, limits)
        t2 = time.perf_counter()
        Zhat = Zk
        Xhat = initial_estimate(m, X0, V, inputs[0], y) if k == 0 else linear_map(t.T, Zhat)
        states.append(EstimatorState(k, Zhat, Xhat, False, t2 - t1, t2 - t0))
    return states


def _sample_set(Z: LineZonotope, rng: np.random.Generator) -> np.ndarray:
    if Z.n_lines or Z.n_cons:
        raise ValueError("noise sampling needs a zonotope (no lines, no constraints)")
    return Z.c + Z.G @ rng.uniform(-1.0, 1.0, Z.n_gens)


def solve_static(t: SvdTransform, z_tilde, u, w) -> np.ndarray:
    """Algebraic coordinates from ``0 = A_check z + B_check u + Bw_check w``."""
    nz = t.n_z
    Ac1 = t.A_check[:, :nz]
    Ac2 = t.A_check[:, nz:]
    if t.n_static == 0:
        return np.zeros(0)
    if np.linalg.matrix_rank(Ac2) < t.n_static:
        raise ValueError("static block is singular in the algebraic coordinates")
    rhs = -(Ac1 @ z_tilde + t.B_check @ u + t.Bw_check @ w)
    return np.linalg.solve(Ac2, rhs)


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray
    outputs: np.ndarray
    w: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)


def simulate(m: DescriptorModel, x0, inputs: Sequence, noise_seed: int,
             W: LineZonotope, V: LineZonotope) -> Trajectory:
    """Trajectory with uniform noise on the generator boxes of W and V.

    The algebraic part of ``x0`` is recomputed from the static relation so
    the initial condition is consistent.
    """
    rng = np.random.default_rng(noise_seed)
    t = svd_transform(m)
    inputs = [np.asarray(u, dtype=float).ravel() for u in inputs]
    K = len(inputs)
    xs = np.empty((K, m.n))
    ys = np.empty((K, m.n_y))
    ws = np.empty((K, m.n_w))
    vs = np.empty((K, m.n_v))
    z = t.T_inv @ np.asarray(x0, dtype=float).ravel()
    for k in range(K):
        w = _sample_set(W, rng)
        v = _sample_set(V, rng)
        if k > 0:
            z_tilde = t.A_tilde @ z + t.B_tilde @ inputs[k - 1] + t.Bw_tilde @ ws[k - 1]
        else:
            z_tilde = z[: t.n_z]
        z = np.concatenate([z_tilde, solve_static(t, z_tilde, inputs[k], w)])
        x = t.T @ z
        xs[k], ws[k], vs[k] = x, w, v
        ys[k] = m.C @ x + m.D @ inputs[k] + m.Dv @ v
    return Trajectory(xs, ys, ws, vs)


def feasible_sets(E, A, X0: LineZonotope, K: int) -> list[LineZonotope]:
    """Exact consistent-state sets of the autonomous system ``E x_k = A x_{k-1}``.

    ``S_0`` is ``X0`` cut by the rows of ``A`` that ``E`` does not
    propagate; ``S_k`` holds the states reachable from ``S_{k-1}`` that are
    again consistent with the next step.
    """
    E = np.atleast_2d(np.asarray(E, dtype=float))
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    if E.shape != (n, n) or X0.n != n:
        raise DimensionError("E, A and X0 must share the state dimension")
    U, s, _ = np.linalg.svd(E)
    smax = s[0] if s.size else 0.0
    nz = int(np.sum(s > RANK_TOL * smax)) if smax > 0 else 0
    static = U[:, nz:].T @ A
    zero = lz_zonotope(np.zeros((n - nz, 0)), np.zeros(n - nz))
    sets = []
    S = generalized_intersection(X0, zero, static) if n > nz else X0
    sets.append(S)
    for _ in range(1, K):
        rows = [linear_map(A, S)] + ([zero] if n > nz else [])
        maps = [E] + ([static] if n > nz else [])
        S = multi_intersection(rows, maps)
        sets.append(S)
    return sets


def zonotope_box(half_widths, center=None) -> LineZonotope:
    h = np.asarray(half_widths, dtype=float).ravel()
    c = np.zeros(h.size) if center is None else np.asarray(center, dtype=float).ravel()
    return lz_zonotope(np.diag(h), c)


__all__ = [
    "DescriptorModel", "SvdTransform", "EstimatorState", "Trajectory", "svd_transform",
    "initial_feasible_set", "predict", "update", "estimate_run", "simulate", "solve_static",
    "static_set_from_admissible", "zonotope_box", "feasible_sets", "initial_estimate",
]
