"""Tube-based active fault diagnosis for descriptor systems.

Each candidate model gets an augmented state ``z = (T^{-1} x, w)``. The
state reachable tube over ``k = 0..N`` is a single line zonotope whose
center and constraint right-hand side are affine in the stacked input
``u_bar``. Two models are told apart by ``u_bar`` when their output tubes
do not intersect, which is a point-not-in-set test on a difference set.
Inputs are designed with a MILP that enforces a separation margin ``eps``
for every pair while minimizing ``||R (u_bar - u_ref)||_1``.
"""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import linalg

from .errors import DimensionError, InfeasibleDesignError, SolverError
from .estimator import DescriptorModel, SvdTransform, solve_static, svd_transform
from .reduction import ReductionLimits, compress_lines, reduce
from .sets import (LineZonotope, _bdiag, cartesian_product, interval_hull, linear_map,
                   lz_realspace, lz_zonotope, point_kappa)
from .solver import LpProblem, LpStatus, MilpProblem, solve_milp

log = logging.getLogger(__name__)

RANK_TOL = 1e-10
CERT_TOL = 1e-6


def _empty_lz(n: int = 0) -> LineZonotope:
    return LineZonotope(np.zeros((n, 0)), np.zeros((n, 0)), np.zeros(n), np.zeros((0, 0)),
                        np.zeros((0, 0)), np.zeros(0))


def _power_set(Z: LineZonotope, k: int) -> LineZonotope:
    out = Z
    for _ in range(k - 1):
        out = cartesian_product(out, Z)
    return out


def _kron_eye(k: int, X: np.ndarray) -> np.ndarray:
    return np.kron(np.eye(k), X)


# -- problem data -------------------------------------------------------------

@dataclass(frozen=True)
class FaultModelSet:
    """Candidate models and the data shared by the design problem.

    ``U`` is the per-step input set (no lines). ``u_ref`` is either one
    step (repeated) or the whole stacked sequence. ``R`` is the diagonal of
    the cost weight, per step or stacked. ``limits`` applies to each pair's
    separation set; ``None`` keeps everything except exact line removal.
    """

    models: tuple
    X0: LineZonotope
    W: LineZonotope
    V: LineZonotope
    U: LineZonotope
    u0: np.ndarray
    N: int
    eps: float
    u_ref: np.ndarray | None = None
    R: np.ndarray | None = None
    limits: ReductionLimits | None = None
    X_A: LineZonotope | None = None

    def __post_init__(self):
        models = tuple(self.models)
        if len(models) < 1:
            raise ValueError("need at least one model")
        m0 = models[0]
        for m in models:
            if not isinstance(m, DescriptorModel):
                raise TypeError("models must be DescriptorModel instances")
            if (m.n, m.n_u, m.n_w, m.n_v, m.n_y) != (m0.n, m0.n_u, m0.n_w, m0.n_v, m0.n_y):
                raise DimensionError("all models must share n, n_u, n_w, n_v, n_y")
        object.__setattr__(self, "models", models)
        if self.N < 0:
            raise ValueError("horizon must be nonnegative")
        if not self.eps > 0:
            raise ValueError("separation threshold must be positive")
        if self.X0.n != m0.n or self.W.n != m0.n_w or self.V.n != m0.n_v or self.U.n != m0.n_u:
            raise DimensionError("X0, W, V, U dimensions do not match the models")
        if self.U.n_lines:
            raise ValueError("the input set must be bounded (no lines)")
        if self.X_A is not None and self.X_A.n != m0.n:
            raise DimensionError("X_A dimension does not match the models")
        nu = m0.n_u
        total = (self.N + 1) * nu
        u0 = np.asarray(self.u0, dtype=float).ravel()
        if u0.size != nu:
            raise DimensionError("u0 must have n_u entries")
        object.__setattr__(self, "u0", u0)
        ref = np.zeros(total) if self.u_ref is None else np.asarray(self.u_ref, dtype=float).ravel()
        if ref.size == nu:
            ref = np.tile(ref, self.N + 1)
        if ref.size != total:
            raise DimensionError("u_ref must have n_u or (N+1) n_u entries")
        object.__setattr__(self, "u_ref", ref)
        R = np.ones(total) if self.R is None else np.asarray(self.R, dtype=float).ravel()
        if R.size == nu:
            R = np.tile(R, self.N + 1)
        if R.size != total or np.any(R <= 0):
            raise ValueError("R must be positive with n_u or (N+1) n_u entries")
        object.__setattr__(self, "R", R)

    @property
    def n_models(self) -> int:
        return len(self.models)

    @property
    def n_u(self) -> int:
        return self.models[0].n_u

    @property
    def n_y(self) -> int:
        return self.models[0].n_y

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return list(itertools.combinations(range(self.n_models), 2))

    def U_bar(self) -> LineZonotope:
        """Stacked input set ``U^{N+1}``."""
        return _power_set(self.U, self.N + 1)


def limits_for(f: FaultModelSet, generator_factor: float, max_constraints: int) -> ReductionLimits:
    """Limits sized to the dimension ``(N+1) n_u`` of the input sequence.

    The cap counts unprotected generators; the input generators are extra.
    """
    dim = (f.N + 1) * f.n_u
    return ReductionLimits(int(np.floor(generator_factor * dim)), int(max_constraints))


@dataclass(frozen=True)
class TransformedModel:
    """Augmented-state form of one model.

    ``Az_tilde = [A_tilde Bw_tilde]`` and ``Az_check = [A_check Bw_check]``
    act on ``z = (T^{-1} x, w)``. ``F = C T [I 0]`` maps ``z`` to the
    noise-free output. ``Z_static`` encloses the coordinates that are not
    propagated by the dynamics (algebraic part and the next disturbance).
    """

    model: DescriptorModel
    t: SvdTransform
    Az_tilde: np.ndarray
    Az_check: np.ndarray
    B_tilde: np.ndarray
    B_check: np.ndarray
    F: np.ndarray
    Z_sigma: LineZonotope
    Z_static: LineZonotope

    @property
    def n_aug(self) -> int:
        return self.Az_tilde.shape[1]

    @property
    def n_z(self) -> int:
        return self.t.n_z

    def initial_set(self, u0) -> LineZonotope:
        """``Z_sigma`` with the static row at ``k = 0`` appended."""
        Z = self.Z_sigma
        u0 = np.asarray(u0, dtype=float).ravel()
        Ac = self.Az_check
        return LineZonotope(Z.M, Z.G, Z.c, np.vstack([Z.S, Ac @ Z.M]), np.vstack([Z.A, Ac @ Z.G]),
                            np.concatenate([Z.b, -Ac @ Z.c - self.B_check @ u0]))


def _static_set(t: SvdTransform, W: LineZonotope, X_A: LineZonotope | None) -> LineZonotope:
    ns = t.n_static
    if X_A is None:
        alg = lz_realspace(ns) if ns else _empty_lz()
    else:
        alg = linear_map(t.T_inv[t.n_z:], X_A)
    return cartesian_product(alg, W)


def transform_model(m: DescriptorModel, X0: LineZonotope, W: LineZonotope,
                    X_A: LineZonotope | None = None) -> TransformedModel:
    t = svd_transform(m)
    n = m.n
    L = np.hstack([np.eye(n), np.zeros((n, m.n_w))])
    Z_sigma = cartesian_product(linear_map(t.T_inv, X0), W)
    return TransformedModel(
        model=m, t=t,
        Az_tilde=np.hstack([t.A_tilde, t.Bw_tilde]),
        Az_check=np.hstack([t.A_check, t.Bw_check]),
        B_tilde=t.B_tilde, B_check=t.B_check,
        F=m.C @ t.T @ L,
        Z_sigma=Z_sigma,
        Z_static=_static_set(t, W, X_A),
    )


def transform_fault_models(f: FaultModelSet, admissible: bool = False) -> list[TransformedModel]:
    """Augmented forms of all models; ``admissible`` uses ``f.X_A`` for the static part."""
    if admissible and f.X_A is None:
        raise ValueError("admissible set X_A is required for the constrained-zonotope tubes")
    X_A = f.X_A if admissible else None
    return [transform_model(m, f.X0, f.W, X_A) for m in f.models]


# -- sets affine in the stacked input -------------------------------------------

@dataclass(frozen=True)
class AffineLZ:
    """Line zonotope with ``c(u) = c0 + Hc u`` and ``b(u) = b0 + Hb u``."""

    M: np.ndarray
    G: np.ndarray
    c0: np.ndarray
    Hc: np.ndarray
    S: np.ndarray
    A: np.ndarray
    b0: np.ndarray
    Hb: np.ndarray

    def at(self, u) -> LineZonotope:
        u = np.asarray(u, dtype=float).ravel()
        if u.size != self.Hc.shape[1]:
            raise DimensionError(f"input sequence has length {u.size}, expected {self.Hc.shape[1]}")
        return LineZonotope(self.M, self.G, self.c0 + self.Hc @ u, self.S, self.A, self.b0 + self.Hb @ u)


@dataclass(frozen=True)
class TubeOperator:
    """Closed-form state tube of one model over ``k = 0..N``.

    Center ``Q c_sigma + p + H u`` and right-hand side
    ``alpha + Lam c_sigma + Omega u``. The remaining fields are the
    building blocks of those maps.
    """

    N: int
    n_aug: int
    Q: np.ndarray
    p: np.ndarray
    H: np.ndarray
    alpha: np.ndarray
    Lam: np.ndarray
    Omega: np.ndarray
    M: np.ndarray
    G: np.ndarray
    S: np.ndarray
    A: np.ndarray
    c_sigma: np.ndarray
    beta: np.ndarray
    Upsilon: np.ndarray
    Gamma: np.ndarray
    P_M: np.ndarray
    P_G: np.ndarray

    @property
    def affine(self) -> AffineLZ:
        return AffineLZ(self.M, self.G, self.Q @ self.c_sigma + self.p, self.H, self.S, self.A,
                        self.alpha + self.Lam @ self.c_sigma, self.Omega)

    def at(self, u) -> LineZonotope:
        return self.affine.at(u)


def build_state_tube(tm: TransformedModel, N: int) -> TubeOperator:
    """State tube in closed form; rows stacked as ``z_0, ..., z_N``.

    Constraint rows are ordered: initial set, static rows for ``k = 0..N``,
    then the constraints of each step's static set.
    """
    if N < 0:
        raise ValueError("horizon must be nonnegative")
    na, nz = tm.n_aug, tm.n_z
    nu = tm.B_tilde.shape[1]
    ns = tm.Az_check.shape[0]
    K = N + 1
    Zs, ZA = tm.Z_sigma, tm.Z_static
    Abar = np.vstack([tm.Az_tilde, np.zeros((na - nz, na))])
    Bbar = np.vstack([tm.B_tilde, np.zeros((na - nz, nu))])
    pw = [np.eye(na)]
    for _ in range(N):
        pw.append(Abar @ pw[-1])
    cA = np.concatenate([np.zeros(nz), ZA.c])
    MA = np.vstack([np.zeros((nz, ZA.n_lines)), ZA.M])
    GA = np.vstack([np.zeros((nz, ZA.n_gens)), ZA.G])
    lA, gA = ZA.n_lines, ZA.n_gens

    Q = np.vstack(pw[:K])
    p = np.zeros(K * na)
    H = np.zeros((K * na, K * nu))
    P_M = np.zeros((K * na, N * lA))
    P_G = np.zeros((K * na, N * gA))
    for ell in range(1, K):
        rows = slice(ell * na, (ell + 1) * na)
        for m in range(1, ell + 1):
            Ap = pw[ell - m]
            p[rows] += Ap @ cA
            H[rows, (m - 1) * nu:m * nu] = Ap @ Bbar
            P_M[rows, (m - 1) * lA:m * lA] = Ap @ MA
            P_G[rows, (m - 1) * gA:m * gA] = Ap @ GA

    M = np.hstack([Q @ Zs.M, P_M])
    G = np.hstack([Q @ Zs.G, P_G])
    Xi_check = _kron_eye(K, tm.Az_check)
    ncs, ncA = Zs.n_cons, ZA.n_cons
    S = np.vstack([
        np.hstack([Zs.S, np.zeros((ncs, N * lA))]),
        Xi_check @ M,
        np.hstack([np.zeros((N * ncA, Zs.n_lines)), _kron_eye(N, ZA.S)]),
    ])
    A = np.vstack([
        np.hstack([Zs.A, np.zeros((ncs, N * gA))]),
        Xi_check @ G,
        np.hstack([np.zeros((N * ncA, Zs.n_gens)), _kron_eye(N, ZA.A)]),
    ])
    beta = np.concatenate([Zs.b, np.zeros(K * ns), np.tile(ZA.b, N)])
    Upsilon = np.vstack([np.zeros((ncs, K * na)), -Xi_check, np.zeros((N * ncA, K * na))])
    Gamma = np.vstack([np.zeros((ncs, K * nu)), _kron_eye(K, -tm.B_check),
                       np.zeros((N * ncA, K * nu))])
    return TubeOperator(
        N=N, n_aug=na, Q=Q, p=p, H=H,
        alpha=beta + Upsilon @ p, Lam=Upsilon @ Q, Omega=Gamma + Upsilon @ H,
        M=M, G=G, S=S, A=A, c_sigma=Zs.c.copy(),
        beta=beta, Upsilon=Upsilon, Gamma=Gamma, P_M=P_M, P_G=P_G,
    )


def tube_by_recursion(tm: TransformedModel, N: int) -> AffineLZ:
    """State tube from the one-step recursion, tracking the input symbolically.

    Independent of :func:`build_state_tube`; the row order of the
    constraints is arranged to match it.
    """
    na, nz = tm.n_aug, tm.n_z
    nu = tm.B_tilde.shape[1]
    K = N + 1
    Zs, ZA = tm.Z_sigma, tm.Z_static
    Ac = tm.Az_check

    def u_sel(k):
        E = np.zeros((nu, K * nu))
        E[:, k * nu:(k + 1) * nu] = np.eye(nu)
        return E

    # current step: c = c0 + Hc u, columns shared with the stack
    c0, Hc = Zs.c.copy(), np.zeros((na, K * nu))
    Mk, Gk = Zs.M.copy(), Zs.G.copy()
    first = (Zs.S, Zs.A, Zs.b, np.zeros((Zs.n_cons, K * nu)))
    static_rows = [(Ac @ Mk, Ac @ Gk, -Ac @ c0, -Ac @ Hc - tm.B_check @ u_sel(0))]
    extra_rows = []
    stack = [(Mk, Gk, c0, Hc)]
    for k in range(1, K):
        top_c0 = tm.Az_tilde @ c0
        top_H = tm.Az_tilde @ Hc + tm.B_tilde @ u_sel(k - 1)
        c0 = np.concatenate([top_c0, ZA.c])
        Hc = np.vstack([top_H, np.zeros((na - nz, K * nu))])
        Mk = _bdiag(tm.Az_tilde @ Mk, ZA.M)
        Gk = _bdiag(tm.Az_tilde @ Gk, ZA.G)
        stack = [(np.hstack([a, np.zeros((a.shape[0], ZA.n_lines))]),
                  np.hstack([g, np.zeros((g.shape[0], ZA.n_gens))]), cc, hh)
                 for a, g, cc, hh in stack]
        stack.append((Mk, Gk, c0, Hc))
        static_rows = [(np.hstack([s, np.zeros((s.shape[0], ZA.n_lines))]),
                        np.hstack([a, np.zeros((a.shape[0], ZA.n_gens))]), bb, hb)
                       for s, a, bb, hb in static_rows]
        static_rows.append((Ac @ Mk, Ac @ Gk, -Ac @ c0, -Ac @ Hc - tm.B_check @ u_sel(k)))
        extra_rows = [(np.hstack([s, np.zeros((s.shape[0], ZA.n_lines))]),
                       np.hstack([a, np.zeros((a.shape[0], ZA.n_gens))]), bb, hb)
                      for s, a, bb, hb in extra_rows]
        nl_prev, ng_prev = Mk.shape[1] - ZA.n_lines, Gk.shape[1] - ZA.n_gens
        extra_rows.append((np.hstack([np.zeros((ZA.n_cons, nl_prev)), ZA.S]),
                           np.hstack([np.zeros((ZA.n_cons, ng_prev)), ZA.A]),
                           ZA.b, np.zeros((ZA.n_cons, K * nu))))
    nl, ng = Mk.shape[1], Gk.shape[1]
    pad = lambda X, cols: np.hstack([X, np.zeros((X.shape[0], cols - X.shape[1]))])  # noqa: E731
    rows = [(pad(first[0], nl), pad(first[1], ng), first[2], first[3])] + static_rows + extra_rows
    return AffineLZ(
        M=np.vstack([s[0] for s in stack]), G=np.vstack([s[1] for s in stack]),
        c0=np.concatenate([s[2] for s in stack]), Hc=np.vstack([s[3] for s in stack]),
        S=np.vstack([r[0] for r in rows]), A=np.vstack([r[1] for r in rows]),
        b0=np.concatenate([r[2] for r in rows]), Hb=np.vstack([r[3] for r in rows]),
    )


@dataclass(frozen=True)
class OutputTube:
    """Output tube ``F_bar Z_bar + D_bar u + Dv_bar V_bar`` with its lifts."""

    set: AffineLZ
    F_bar: np.ndarray
    D_bar: np.ndarray
    Dv_bar: np.ndarray
    V_bar: LineZonotope

    def at(self, u) -> LineZonotope:
        return self.set.at(u)


def build_output_tube(tm: TransformedModel, tube: TubeOperator, V: LineZonotope) -> OutputTube:
    m = tm.model
    K = tube.N + 1
    Fb = _kron_eye(K, tm.F)
    Db = _kron_eye(K, m.D)
    Dvb = _kron_eye(K, m.Dv)
    Vb = _power_set(V, K)
    st = tube.affine
    Y = AffineLZ(
        M=np.hstack([Fb @ st.M, Dvb @ Vb.M]),
        G=np.hstack([Fb @ st.G, Dvb @ Vb.G]),
        c0=Fb @ st.c0 + Dvb @ Vb.c,
        Hc=Fb @ st.Hc + Db,
        S=_bdiag(st.S, Vb.S),
        A=_bdiag(st.A, Vb.A),
        b0=np.concatenate([st.b0, Vb.b]),
        Hb=np.vstack([st.Hb, np.zeros((Vb.n_cons, st.Hb.shape[1]))]),
    )
    return OutputTube(Y, Fb, Db, Dvb, Vb)


def output_tubes(f: FaultModelSet, admissible: bool = False) -> list[OutputTube]:
    out = []
    for tm in transform_fault_models(f, admissible):
        out.append(build_output_tube(tm, build_state_tube(tm, f.N), f.V))
    return out


# -- pairwise separation ----------------------------------------------------------

@dataclass(frozen=True)
class RingForm:
    """Line-free equivalent: separated iff ``N_ring xi_u`` is outside ``(G_ring, c_ring)``."""

    N_ring: np.ndarray
    G_ring: np.ndarray
    c_ring: np.ndarray
    plus_rows: np.ndarray
    M_plus: np.ndarray
    M_minus: np.ndarray
    G_plus: np.ndarray
    G_minus: np.ndarray
    N_plus: np.ndarray
    N_minus: np.ndarray
    c_plus: np.ndarray
    c_minus: np.ndarray

    def kappa(self, xi_u) -> float:
        xi_u = np.asarray(xi_u, dtype=float).ravel()
        return point_kappa(self.N_ring @ xi_u, lz_zonotope(self.G_ring, self.c_ring))


@dataclass(frozen=True)
class SeparationProblem:
    """Data of one model pair ``(i, j)``.

    ``Y`` holds ``(M, G, c, S, A, b)`` at ``u = 0``; the pair is separated by
    ``u`` iff ``[N; Omega] u`` is outside the lifted zonotope
    ``([M; S], [G; A], [c; -b])``. After :func:`input_dependent_reduce`,
    ``reduced`` is the set whose trailing ``n_u_gens`` generators are the
    input factors, and ``U_bar`` the input set they parametrize.
    """

    pair: tuple[int, int]
    N: np.ndarray
    Omega: np.ndarray
    Y: LineZonotope
    U_bar: LineZonotope | None = None
    reduced: LineZonotope | None = None
    n_u_gens: int = 0
    ring: RingForm | None = None
    kappa_max: float | None = None

    def lifted(self) -> LineZonotope:
        Y = self.Y
        return LineZonotope(np.vstack([Y.M, Y.S]), np.vstack([Y.G, Y.A]),
                            np.concatenate([Y.c, -Y.b]), np.zeros((0, Y.n_lines)),
                            np.zeros((0, Y.n_gens)), np.zeros(0))

    def image(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float).ravel()
        return np.concatenate([self.N @ u, self.Omega @ u])


def build_separation_problem(tubes: Sequence[OutputTube], q: tuple[int, int]) -> SeparationProblem:
    i, j = q
    if i == j:
        raise ValueError("a pair needs two different model indices")
    Yi, Yj = tubes[i].set, tubes[j].set
    if Yi.Hc.shape != Yj.Hc.shape:
        raise DimensionError("tubes must share horizon and dimensions")
    Y = LineZonotope(
        np.hstack([Yi.M, -Yj.M]), np.hstack([Yi.G, -Yj.G]), Yi.c0 - Yj.c0,
        _bdiag(Yi.S, Yj.S), _bdiag(Yi.A, Yj.A), np.concatenate([Yi.b0, Yj.b0]))
    return SeparationProblem(pair=(i, j), N=Yj.Hc - Yi.Hc, Omega=np.vstack([Yi.Hb, Yj.Hb]), Y=Y)


def check_separation(sp: SeparationProblem, u_seq) -> float:
    """Inflation level needed for the pair's tubes to meet under ``u_seq``.

    Positive means the output tubes are disjoint; ``+inf`` means the point
    is not even in the affine hull.
    """
    return point_kappa(sp.image(u_seq), sp.lifted())


def input_dependent_reduce(sp: SeparationProblem, U_bar: LineZonotope,
                           limits: ReductionLimits | None) -> SeparationProblem:
    """Substitute ``u = c_u + G_u xi_u`` and reduce with the input factors protected."""
    if U_bar.n_lines:
        raise ValueError("the input set must be bounded")
    if U_bar.n != sp.N.shape[1]:
        raise DimensionError("input set dimension does not match the separation problem")
    Y = sp.Y
    Gu, cu = U_bar.G, U_bar.c
    ngu, ncu = U_bar.n_gens, U_bar.n_cons
    Z = LineZonotope(
        Y.M,
        np.hstack([Y.G, -sp.N @ Gu]),
        Y.c - sp.N @ cu,
        np.vstack([Y.S, np.zeros((ncu, Y.n_lines))]),
        np.vstack([np.hstack([Y.A, -sp.Omega @ Gu]), np.hstack([np.zeros((ncu, Y.n_gens)), U_bar.A])]),
        np.concatenate([Y.b + sp.Omega @ cu, U_bar.b]),
    )
    if limits is None:
        big = Z.n_gens + Z.n_cons + 1
        limits = ReductionLimits(big, big)
    limits = ReductionLimits(limits.max_generators, limits.max_constraints, minimize_lines=True)
    Zr = reduce(Z, limits, n_protected=ngu, rescale=False)
    if Zr.n_lines:
        Zr = compress_lines(Zr)
    return replace(sp, U_bar=U_bar, reduced=Zr, n_u_gens=ngu, ring=None, kappa_max=None)


def reduced_kappa(sp: SeparationProblem, xi_u) -> float:
    """Inflation at which 0 enters the reduced set for fixed input factors."""
    Z = sp.reduced
    if Z is None:
        raise ValueError("call input_dependent_reduce first")
    xi_u = np.asarray(xi_u, dtype=float).ravel()
    k = sp.n_u_gens
    ng = Z.n_gens - k
    Gz, Gu = Z.G[:, :ng], Z.G[:, ng:]
    Az, Au = Z.A[:, :ng], Z.A[:, ng:]
    fixed = LineZonotope(Z.M, Gz, Z.c + Gu @ xi_u, Z.S, Az, Z.b - Au @ xi_u)
    return point_kappa(np.zeros(Z.n), fixed)


def zonotope_equivalent(sp: SeparationProblem) -> SeparationProblem:
    """Eliminate the lines of the reduced set by a row partition.

    Rows of ``[M; 0]`` are split so that the selected block ``M_plus`` is
    square and invertible; the remaining rows minus their projection give
    the line-free ring form.
    """
    Z = sp.reduced
    if Z is None:
        raise ValueError("call input_dependent_reduce first")
    k = sp.n_u_gens
    ng = Z.n_gens - k
    nd = Z.n_lines
    if nd and np.any(np.abs(Z.S) > 0):
        raise ValueError("ring form requires line-free constraints")
    Nd = -np.vstack([Z.G[:, ng:], Z.A[:, ng:]])
    Md = np.vstack([Z.M, np.zeros((Z.n_cons, nd))])
    Gd = np.vstack([Z.G[:, :ng], Z.A[:, :ng]])
    cd = np.concatenate([Z.c, -Z.b])
    rows = Md.shape[0]
    if nd == 0:
        plus = np.zeros(0, dtype=int)
    else:
        _, R, piv = linalg.qr(Md.T, mode="economic", pivoting=True)
        diag = np.abs(np.diag(R))
        if diag.size < nd or diag[nd - 1] <= RANK_TOL * max(diag[0], 1.0):
            raise np.linalg.LinAlgError("line block is rank deficient after compression")
        plus = np.sort(piv[:nd])
    minus = np.setdiff1d(np.arange(rows), plus)
    Mp, Mm = Md[plus], Md[minus]
    if nd:
        T = Mm @ np.linalg.inv(Mp)
    else:
        T = np.zeros((minus.size, 0))
    ring = RingForm(
        N_ring=Nd[minus] - T @ Nd[plus], G_ring=Gd[minus] - T @ Gd[plus], c_ring=cd[minus] - T @ cd[plus],
        plus_rows=plus, M_plus=Mp, M_minus=Mm, G_plus=Gd[plus], G_minus=Gd[minus],
        N_plus=Nd[plus], N_minus=Nd[minus], c_plus=cd[plus], c_minus=cd[minus],
    )
    return replace(sp, ring=ring)


def _gauge(G: np.ndarray, v: np.ndarray) -> float:
    """``min ||xi||_inf  s.t.  G xi = v`` (``inf`` if unsolvable)."""
    if not np.any(v):
        return 0.0
    return 1.0 + point_kappa(v, lz_zonotope(G, np.zeros(v.size)))


def bound_kappa_max(sp: SeparationProblem) -> float:
    """Upper bound of the ring inflation level over the input factor box.

    The ring optimum is ``phi(N xi_u - c) - 1`` with ``phi`` the gauge
    ``min ||xi||_inf s.t. G xi = r``, which is symmetric and sublinear, so
    ``phi(c) + sum_j phi(N e_j) - 1`` bounds it for ``|xi_u| <= 1``. The
    pseudo-inverse solution gives a second interval bound; the smaller one
    is returned. Raises if the ring equation can be unsolvable for some
    input, since no finite bound exists then.
    """
    ring = sp.ring
    if ring is None:
        raise ValueError("call zonotope_equivalent first")
    G, Nr, c = ring.G_ring, ring.N_ring, ring.c_ring
    if G.shape[0] == 0:
        return -1.0
    gauges = [_gauge(G, -c)] + [_gauge(G, Nr[:, j]) for j in range(Nr.shape[1])]
    if not np.all(np.isfinite(gauges)):
        raise SolverError("separation bound is unbounded: ring generators do not span the input image")
    bound = float(np.sum(gauges)) - 1.0
    if Nr.shape[1]:
        rhs = np.hstack([Nr, -c[:, None]])
        X = np.linalg.pinv(G, rcond=RANK_TOL) @ rhs
        if np.allclose(G @ X, rhs, rtol=0.0, atol=1e-8 * max(1.0, float(np.max(np.abs(rhs))))):
            bound = min(bound, float(np.max(np.sum(np.abs(X), axis=1), initial=0.0)) - 1.0)
    return max(bound, -1.0)


def prepare_pair(sp: SeparationProblem, U_bar: LineZonotope,
                 limits: ReductionLimits | None) -> SeparationProblem:
    sp = input_dependent_reduce(sp, U_bar, limits)
    sp = zonotope_equivalent(sp)
    return replace(sp, kappa_max=bound_kappa_max(sp))


# -- input design ------------------------------------------------------------------

@dataclass(frozen=True)
class DesignResult:
    u: np.ndarray
    cost: float
    kappa: dict
    kappa_reduced: dict
    proven_optimal: bool
    problems: list = field(repr=False, default_factory=list)


def merge_parallel(G: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Sum parallel columns and drop zero ones.

    The zonotope and its inflation by any factor are unchanged, so the
    ring inflation level is exact on the merged matrix.
    """
    if G.shape[1] == 0:
        return G
    norms = np.linalg.norm(G, axis=0)
    scale = max(float(np.max(norms)), 1.0)
    groups: list[list] = []
    for j in np.flatnonzero(norms > tol * scale):
        d = G[:, j] / norms[j]
        lead = np.flatnonzero(np.abs(d) > 1e-6)[0]
        d = d * np.sign(d[lead])
        for g in groups:
            if np.max(np.abs(g[0] - d)) <= 1e-9:
                g[1] += norms[j]
                break
        else:
            groups.append([d, norms[j]])
    if not groups:
        return np.zeros((G.shape[0], 0))
    return np.column_stack([d * w for d, w in groups])


def _design_milp(f: FaultModelSet, sps: Sequence[SeparationProblem], gap: float,
                 time_limit: float | None):
    blocked = [sp.pair for sp in sps if sp.kappa_max < f.eps]
    if blocked:
        raise InfeasibleDesignError(
            f"no separating input at horizon N={f.N}: pairs {blocked} cannot reach kappa >= eps")
    U_bar = sps[0].U_bar
    Gu, cu = U_bar.G, U_bar.c
    ngu = Gu.shape[1]
    nub = Gu.shape[0]
    nu = f.n_u
    R = f.R
    # variable layout: xi_u | t | per pair (kappa, xi, lam, mu1, mu2, p1, p2)
    offs = []
    merged = []
    nv = ngu + nub
    for sp in sps:
        merged.append(merge_parallel(sp.ring.G_ring))
        r = sp.ring.G_ring.shape[0]
        offs.append(nv)
        nv += 1 + 5 * merged[-1].shape[1] + r
    lower = np.full(nv, -np.inf)
    upper = np.full(nv, np.inf)
    lower[:ngu], upper[:ngu] = -1.0, 1.0
    lower[ngu:ngu + nub] = 0.0
    binaries = []
    eq_rows, eq_rhs, ub_rows, ub_rhs = [], [], [], []

    def row():
        return np.zeros(nv)

    for r_ in range(U_bar.n_cons):
        a = row()
        a[:ngu] = U_bar.A[r_]
        eq_rows.append(a)
        eq_rhs.append(U_bar.b[r_])
    KG = Gu[:nu]
    for r_ in range(nu):
        a = row()
        a[:ngu] = KG[r_]
        eq_rows.append(a)
        eq_rhs.append(f.u0[r_] - cu[r_])
    # |R (c_u + G_u xi_u - u_ref)| <= t
    for r_ in range(nub):
        for sgn in (1.0, -1.0):
            a = row()
            a[:ngu] = sgn * R[r_] * Gu[r_]
            a[ngu + r_] = -1.0
            ub_rows.append(a)
            ub_rhs.append(sgn * R[r_] * (f.u_ref[r_] - cu[r_]))
    for sp, o, Gm in zip(sps, offs, merged):
        ring = sp.ring
        r, g = Gm.shape
        km = float(sp.kappa_max)
        big = 2.0 * (1.0 + km)
        ik = o
        ix = o + 1
        il = ix + g
        im1 = il + r
        im2 = im1 + g
        ip1 = im2 + g
        ip2 = ip1 + g
        lower[ik], upper[ik] = f.eps, km
        lower[ix:ix + g], upper[ix:ix + g] = -(1.0 + km), 1.0 + km
        lower[im1:ip1], upper[im1:ip1] = 0.0, 1.0
        lower[ip1:ip2 + g], upper[ip1:ip2 + g] = 0.0, 1.0
        binaries.extend(range(ip1, ip2 + g))
        for a_ in range(r):
            a = row()
            a[:ngu] = ring.N_ring[a_]
            a[ix:ix + g] = -Gm[a_]
            eq_rows.append(a)
            eq_rhs.append(ring.c_ring[a_])
        for j in range(g):
            a = row()
            a[il:il + r] = Gm[:, j]
            a[im1 + j] = -1.0
            a[im2 + j] = 1.0
            eq_rows.append(a)
            eq_rhs.append(0.0)
        a = row()
        a[im1:ip1] = 1.0
        eq_rows.append(a)
        eq_rhs.append(1.0)
        for j in range(g):
            for sgn in (1.0, -1.0):
                a = row()
                a[ix + j] = sgn
                a[ik] = -1.0
                ub_rows.append(a)
                ub_rhs.append(1.0)
            a = row()
            a[im1 + j], a[ip1 + j] = 1.0, -1.0
            ub_rows.append(a)
            ub_rhs.append(0.0)
            a = row()
            a[im2 + j], a[ip2 + j] = 1.0, -1.0
            ub_rows.append(a)
            ub_rhs.append(0.0)
            # complementarity: p1 = 1 forces xi_j = 1 + kappa, p2 = 1 forces xi_j = -(1 + kappa)
            a = row()
            a[ix + j], a[ik], a[ip1 + j] = -1.0, 1.0, big
            ub_rows.append(a)
            ub_rhs.append(big - 1.0)
            a = row()
            a[ix + j], a[ik], a[ip2 + j] = 1.0, 1.0, big
            ub_rows.append(a)
            ub_rhs.append(big - 1.0)
            # with kappa > -1 a factor cannot sit at both bounds
            a = row()
            a[ip1 + j], a[ip2 + j] = 1.0, 1.0
            ub_rows.append(a)
            ub_rhs.append(1.0)
    cost = np.zeros(nv)
    cost[ngu:ngu + nub] = 1.0
    lp = LpProblem(cost, np.array(eq_rows), np.array(eq_rhs), lower, upper,
                   np.array(ub_rows), np.array(ub_rhs))
    sol = solve_milp(MilpProblem(lp, tuple(binaries)), gap=gap, time_limit=time_limit)
    if sol.status is not LpStatus.OPTIMAL:
        raise InfeasibleDesignError(f"no separating input at horizon N={f.N}")
    xi_u = np.clip(sol.x[:ngu], -1.0, 1.0)
    kred = {sp.pair: float(sol.x[o]) for sp, o in zip(sps, offs)}
    return xi_u, kred, sol.proven


def _prepared_pairs(f: FaultModelSet, tubes: Sequence[OutputTube], jobs: int) -> list[SeparationProblem]:
    U_bar = f.U_bar()
    sps = [build_separation_problem(tubes, q) for q in f.pairs]

    def work(sp):
        return prepare_pair(sp, U_bar, f.limits)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(work, sps))
    return [work(sp) for sp in sps]


def design_input(f: FaultModelSet, admissible: bool = False, gap: float = 1e-6,
                 time_limit: float | None = None, jobs: int = 1,
                 certify: bool = True) -> DesignResult:
    """Cheapest input sequence whose pairwise separation margin is at least ``eps``.

    ``admissible`` builds the tubes with the bounded static set from
    ``f.X_A`` (constrained-zonotope baseline). Certificates are computed on
    the unreduced problems of the same tubes.
    """
    if f.n_models < 2:
        raise ValueError("need at least two models to separate")
    tubes = output_tubes(f, admissible)
    sps = _prepared_pairs(f, tubes, jobs)
    xi_u, kred, proven = _design_milp(f, sps, gap, time_limit)
    U_bar = sps[0].U_bar
    u = U_bar.c + U_bar.G @ xi_u
    nu = f.n_u
    if np.max(np.abs(u[:nu] - f.u0)) > 1e-6:
        raise SolverError("designed input does not start with u0")
    u[:nu] = f.u0
    kappa = {}
    if certify:
        for sp in sps:
            kappa[sp.pair] = check_separation(sp, u)
            if kappa[sp.pair] < f.eps - CERT_TOL:
                log.warning("pair %s certificate %.3g below threshold", sp.pair, kappa[sp.pair])
    cost = float(np.sum(np.abs(f.R * (u - f.u_ref))))
    return DesignResult(u, cost, kappa, kred, proven, sps)


def cz_baseline_tube(f: FaultModelSet) -> list[OutputTube]:
    """Output tubes with the static coordinates confined to ``T^{-1} X_A``."""
    return output_tubes(f, admissible=True)


def cz_baseline_design(f: FaultModelSet, **kw) -> DesignResult:
    if f.X0.n_lines:
        raise ValueError("the constrained-zonotope baseline needs a bounded X0")
    return design_input(f, admissible=True, **kw)


def pairwise_kappa(f: FaultModelSet, u_seq, admissible: bool = False) -> dict:
    """Unreduced separation level of every pair under ``u_seq``."""
    tubes = output_tubes(f, admissible)
    return {q: check_separation(build_separation_problem(tubes, q), u_seq) for q in f.pairs}


# -- verification by sampling --------------------------------------------------------

def _sample_factors(Z: LineZonotope, rng: np.random.Generator, line_range: float) -> np.ndarray:
    if Z.n_cons:
        raise ValueError("sampling needs an unconstrained set")
    d = rng.uniform(-line_range, line_range, Z.n_lines)
    xi = rng.uniform(-1.0, 1.0, Z.n_gens)
    return Z.c + Z.M @ d + Z.G @ xi


def sample_outputs(tm: TransformedModel, f: FaultModelSet, u_seq, n_samples: int,
                   rng: np.random.Generator, line_range: float = 10.0,
                   max_tries: int = 1000) -> np.ndarray:
    """Stacked output sequences of one model with uniform noise.

    Initial states are drawn from ``X0`` (lines within ``line_range``), the
    algebraic part is made consistent, and draws that leave ``X0`` are
    rejected.
    """
    m, t = tm.model, tm.t
    K = f.N + 1
    nu = f.n_u
    u = np.asarray(u_seq, dtype=float).reshape(K, nu)
    out = np.empty((n_samples, K * m.n_y))
    for s in range(n_samples):
        for _ in range(max_tries):
            x0 = _sample_factors(f.X0, rng, line_range)
            w0 = _sample_factors(f.W, rng, line_range)
            z = t.T_inv @ x0
            z = np.concatenate([z[:t.n_z], solve_static(t, z[:t.n_z], u[0], w0)])
            x0c = t.T @ z
            if point_kappa(x0c, f.X0) <= 1e-9:
                break
        else:
            raise SolverError("could not draw a consistent initial state from X0")
        w = w0
        ys = []
        for k in range(K):
            if k > 0:
                wk = _sample_factors(f.W, rng, line_range)
                zt = t.A_tilde @ z + t.B_tilde @ u[k - 1] + t.Bw_tilde @ w
                z = np.concatenate([zt, solve_static(t, zt, u[k], wk)])
                w = wk
            v = _sample_factors(f.V, rng, line_range)
            ys.append(m.C @ (t.T @ z) + m.D @ u[k] + m.Dv @ v)
        out[s] = np.concatenate(ys)
    return out


def verify_diagnosis(f: FaultModelSet, u_seq, n_samples: int, seed: int,
                     tol: float = 1e-7) -> np.ndarray:
    """Counts ``C[i, j]`` of sampled outputs of model ``i`` inside output tube ``j``."""
    rng = np.random.default_rng(seed)
    tms = transform_fault_models(f)
    sets = [build_output_tube(tm, build_state_tube(tm, f.N), f.V).at(u_seq) for tm in tms]
    counts = np.zeros((f.n_models, f.n_models), dtype=int)
    for i, tm in enumerate(tms):
        ys = sample_outputs(tm, f, u_seq, n_samples, rng)
        for y in ys:
            for j, Y in enumerate(sets):
                if point_kappa(y, Y) <= tol:
                    counts[i, j] += 1
    return counts


def tube_hulls(f: FaultModelSet, u_seq, admissible: bool = False) -> list[tuple[int, int, int, float, float]]:
    """Interval hull of each model's output tube: ``(model, k, output, lo, hi)`` rows."""
    rows = []
    ny = f.n_y
    for i, tube in enumerate(output_tubes(f, admissible)):
        h = interval_hull(tube.at(u_seq))
        for idx in range(h.lower.size):
            rows.append((i, idx // ny, idx % ny, float(h.lower[idx]), float(h.upper[idx])))
    return rows


__all__ = [
    "FaultModelSet", "TransformedModel", "AffineLZ", "TubeOperator", "OutputTube", "RingForm",
    "SeparationProblem", "DesignResult", "limits_for", "transform_model", "transform_fault_models",
    "build_state_tube", "tube_by_recursion", "build_output_tube", "output_tubes",
    "build_separation_problem", "check_separation", "input_dependent_reduce", "reduced_kappa",
    "zonotope_equivalent", "bound_kappa_max", "prepare_pair", "design_input",
    "cz_baseline_tube", "cz_baseline_design", "pairwise_kappa", "sample_outputs",
    "verify_diagnosis", "tube_hulls",
]
