"""Complexity reduction for line zonotopes.

Line elimination is exact. Constraint elimination and generator reduction
return enclosures. Every routine accepts ``n_protected``: that many trailing
generator columns are never removed or merged.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import DimensionError, EmptySetError
from .sets import LineZonotope, interval_hull

log = logging.getLogger(__name__)

PIVOT_TOL = 1e-10
RANK_TOL = 1e-10
_ABS_TOL = 1e-13


@dataclass(frozen=True)
class ReductionLimits:
    max_generators: int
    max_constraints: int
    minimize_lines: bool = True

    def __post_init__(self):
        if self.max_generators < 0 or self.max_constraints < 0:
            raise ValueError("limits must be nonnegative")


def _row_scale(Z: LineZonotope) -> np.ndarray:
    if Z.n_cons == 0:
        return np.zeros(0)
    return np.max(np.abs(np.hstack([Z.S, Z.A, np.zeros((Z.n_cons, 1))])), axis=1)


def _effective_S(Z: LineZonotope) -> np.ndarray:
    """S with entries below the relative pivot tolerance zeroed."""
    scale = _row_scale(Z)
    S = Z.S.copy()
    S[np.abs(S) <= PIVOT_TOL * scale[:, None] + _ABS_TOL] = 0.0
    return S


def _clean(M, G, c, S, A, b) -> LineZonotope:
    """Zero negligible S entries and drop trivially satisfied rows."""
    if b.size:
        scale = np.max(np.abs(np.hstack([S, A, np.zeros((b.size, 1))])), axis=1)
        S = S.copy()
        S[np.abs(S) <= PIVOT_TOL * scale[:, None] + _ABS_TOL] = 0.0
        trivial = (scale <= _ABS_TOL) & (np.abs(b) <= _ABS_TOL * 10)
        if np.any(trivial):
            keep = ~trivial
            S, A, b = S[keep], A[keep], b[keep]
    return LineZonotope(M, G, c, S, A, b)


def eliminate_line(Z: LineZonotope, i: int, j: int) -> LineZonotope:
    """Remove line ``j`` using constraint row ``i`` (exact)."""
    if not (0 <= i < Z.n_cons) or not (0 <= j < Z.n_lines):
        raise IndexError(f"pivot ({i}, {j}) outside S of shape {Z.S.shape}")
    piv = Z.S[i, j]
    scale = _row_scale(Z)[i]
    if abs(piv) <= PIVOT_TOL * scale or abs(piv) <= _ABS_TOL:
        raise ValueError(f"zero pivot S[{i},{j}] = {piv!r}")
    Mj = Z.M[:, j:j + 1]
    Sj = Z.S[:, j:j + 1]
    Si = Z.S[i:i + 1, :]
    Ai = Z.A[i:i + 1, :]
    bi = Z.b[i]
    c = Z.c + Mj[:, 0] * bi / piv
    M = Z.M - Mj @ Si / piv
    G = Z.G - Mj @ Ai / piv
    S = Z.S - Sj @ Si / piv
    A = Z.A - Sj @ Ai / piv
    b = Z.b - Sj[:, 0] * bi / piv
    keep_c = np.arange(Z.n_lines) != j
    keep_r = np.arange(Z.n_cons) != i
    return _clean(M[:, keep_c], G, c, S[np.ix_(keep_r, keep_c)], A[keep_r], b[keep_r])


def _best_pivot(Z: LineZonotope):
    if Z.n_cons == 0 or Z.n_lines == 0:
        return None
    S = _effective_S(Z)
    if not np.any(S):
        return None
    flat = int(np.argmax(np.abs(S)))
    return divmod(flat, Z.n_lines)


def eliminate_all_lines(Z: LineZonotope) -> LineZonotope:
    """Apply line elimination with largest-|pivot| choice until S is numerically zero."""
    while True:
        piv = _best_pivot(Z)
        if piv is None:
            break
        Z = eliminate_line(Z, *piv)
    if Z.n_cons and Z.n_lines:
        Z = LineZonotope(Z.M, Z.G, Z.c, _effective_S(Z), Z.A, Z.b)
    return Z


def _require_line_free_constraints(Z: LineZonotope, what: str):
    if Z.n_cons and Z.n_lines and np.any(_effective_S(Z)):
        raise ValueError(f"{what} requires S = 0; call eliminate_all_lines first")


def _constraint_choice(Z: LineZonotope, n_protected: int):
    """(row, col) pair with smallest hull-growth score, or None."""
    ng = Z.n_gens
    free_cols = ng - n_protected
    if free_cols <= 0:
        return None
    A = Z.A
    gnorm = np.linalg.norm(Z.G, axis=0)
    best = None
    best_score = np.inf
    for r in range(Z.n_cons):
        row = A[r]
        rs = np.max(np.abs(row)) if ng else 0.0
        if rs <= _ABS_TOL:
            continue
        abs_row = np.abs(row)
        total = abs_row.sum()
        for j in range(free_cols):
            a = abs_row[j]
            if a <= PIVOT_TOL * rs:
                continue
            # interval radius of xi_j implied by row r with the other factors in [-1, 1]
            implied = (abs(Z.b[r]) + total - a) / a
            score = max(0.0, implied - 1.0) * gnorm[j]
            if score < best_score - 1e-15:
                best, best_score = (r, j), score
    return best


def factor_bounds(Z: LineZonotope, sweeps: int = 4) -> tuple[np.ndarray, np.ndarray] | None:
    """Interval bounds on the generator factors implied by the line-free constraints.

    Returns ``None`` when propagation proves the set empty.
    """
    ng = Z.n_gens
    lo = -np.ones(ng)
    hi = np.ones(ng)
    if Z.n_cons == 0 or ng == 0:
        return lo, hi
    S = _effective_S(Z) if Z.n_lines else np.zeros((Z.n_cons, 0))
    rows = [r for r in range(Z.n_cons) if not np.any(S[r])]
    for _ in range(sweeps):
        changed = False
        for r in rows:
            a = Z.A[r]
            nzc = np.flatnonzero(np.abs(a) > _ABS_TOL)
            if nzc.size == 0:
                continue
            t_lo = np.minimum(a[nzc] * lo[nzc], a[nzc] * hi[nzc])
            t_hi = np.maximum(a[nzc] * lo[nzc], a[nzc] * hi[nzc])
            s_lo, s_hi = t_lo.sum(), t_hi.sum()
            for k, j in enumerate(nzc):
                rest_lo = s_lo - t_lo[k]
                rest_hi = s_hi - t_hi[k]
                v1 = (Z.b[r] - rest_hi) / a[j]
                v2 = (Z.b[r] - rest_lo) / a[j]
                new_lo, new_hi = min(v1, v2), max(v1, v2)
                pad = 1e-12 * (1.0 + abs(new_lo) + abs(new_hi))
                new_lo -= pad
                new_hi += pad
                if new_lo > lo[j] + 1e-9:
                    lo[j] = new_lo
                    changed = True
                if new_hi < hi[j] - 1e-9:
                    hi[j] = new_hi
                    changed = True
                if lo[j] > hi[j]:
                    return None
                t_lo_j = min(a[j] * lo[j], a[j] * hi[j])
                t_hi_j = max(a[j] * lo[j], a[j] * hi[j])
                s_lo += t_lo_j - t_lo[k]
                s_hi += t_hi_j - t_hi[k]
                t_lo[k], t_hi[k] = t_lo_j, t_hi_j
        if not changed:
            break
    return lo, hi


def rescale_generators(Z: LineZonotope, n_protected: int = 0) -> LineZonotope:
    """Shrink the unit box of the factors to their propagated bounds (exact)."""
    bounds = factor_bounds(Z)
    if bounds is None:
        return Z
    lo, hi = bounds
    n_free = Z.n_gens - n_protected
    lo[n_free:], hi[n_free:] = -1.0, 1.0
    mid = (lo + hi) / 2.0
    rad = (hi - lo) / 2.0
    if np.allclose(mid, 0.0, atol=1e-12) and np.allclose(rad, 1.0, atol=1e-12):
        return Z
    G = Z.G * rad
    A = Z.A * rad
    return _clean(Z.M, G, Z.c + Z.G @ mid, Z.S, A, Z.b - Z.A @ mid)


def eliminate_constraint(Z: LineZonotope, n_protected: int = 0) -> LineZonotope:
    """Drop one constraint and one generator; returns an enclosure."""
    if Z.n_cons == 0:
        raise ValueError("no constraints to eliminate")
    _require_line_free_constraints(Z, "constraint elimination")
    choice = _constraint_choice(Z, n_protected)
    if choice is None:
        raise ValueError("no eliminable (constraint, generator) pair")
    r, j = choice
    a = Z.A[r, j]
    gj = Z.G[:, j:j + 1]
    aj = Z.A[:, j:j + 1]
    Ar = Z.A[r:r + 1, :]
    br = Z.b[r]
    G = Z.G - gj @ Ar / a
    c = Z.c + gj[:, 0] * br / a
    A = Z.A - aj @ Ar / a
    b = Z.b - aj[:, 0] * br / a
    S = Z.S - aj @ Z.S[r:r + 1, :] / a
    keep_c = np.arange(Z.n_gens) != j
    keep_r = np.arange(Z.n_cons) != r
    return _clean(Z.M, G[:, keep_c], c, S[keep_r], A[np.ix_(keep_r, keep_c)], b[keep_r])


def eliminate_constraints(Z: LineZonotope, target: int, n_protected: int = 0,
                          rescale: bool = False) -> LineZonotope:
    """Eliminate constraints until at most ``target`` remain or no pair is eligible."""
    while Z.n_cons > target:
        if rescale:
            Z = rescale_generators(Z, n_protected)
        if _constraint_choice(Z, n_protected) is None:
            log.warning("constraint limit %d not reachable; %d constraints remain", target, Z.n_cons)
            break
        Z = eliminate_constraint(Z, n_protected)
    return Z


def _box_lifted(Z: LineZonotope, target: int, n_protected: int) -> LineZonotope:
    """Greedy box aggregation of ``[G; A]`` with the 2-norm minus inf-norm score."""
    n_free = Z.n_gens - n_protected
    lifted_dim = Z.n + Z.n_cons
    L = np.vstack([Z.G, Z.A])
    free = L[:, :n_free]
    k = min(n_free - target + lifted_dim, n_free)
    norm2 = np.linalg.norm(free, axis=0)
    norminf = np.max(np.abs(free), axis=0) if free.size else np.zeros(n_free)
    order = np.lexsort((np.arange(n_free), norm2, norm2 - norminf))
    boxed = np.zeros(n_free, dtype=bool)
    boxed[order[:k]] = True
    box = np.sum(np.abs(free[:, boxed]), axis=1)
    nz = box > 0
    Bx = np.diag(box)[:, nz]
    newL = np.hstack([free[:, ~boxed], Bx, L[:, n_free:]])
    return LineZonotope(Z.M, newL[:Z.n], Z.c, Z.S, newL[Z.n:], Z.b)


def orthogonalize_constraints(Z: LineZonotope) -> LineZonotope | None:
    """Equivalent CLG-rep with orthonormal constraint rows and ``G A' = 0``.

    Uses ``G <- G + P A``, ``c <- c - P b`` (exact on ``A xi = b``) with ``P``
    the least-squares choice, after replacing the rows by an orthonormal basis
    of their span. Returns ``None`` if the rows are rank deficient with an
    inconsistent right-hand side or touch the lines.
    """
    if Z.n_cons == 0 or np.any(_effective_S(Z)):
        return None
    U, sv, Vt = np.linalg.svd(Z.A, full_matrices=False)
    if sv.size == 0 or sv[0] <= _ABS_TOL:
        return None
    keep = sv > RANK_TOL * sv[0]
    resid = U[:, ~keep].T @ Z.b
    if resid.size and np.max(np.abs(resid)) > RANK_TOL * max(1.0, float(np.max(np.abs(Z.b)))):
        return None
    A = Vt[keep]
    b = (U[:, keep].T @ Z.b) / sv[keep]
    P = -Z.G @ A.T
    return LineZonotope(Z.M, Z.G + P @ A, Z.c - P @ b, np.zeros((A.shape[0], Z.n_lines)), A, b)


def _hull_size(Z: LineZonotope) -> float:
    try:
        return float(np.sum(interval_hull(Z).width))
    except EmptySetError:
        return np.inf


def reduce_generators(Z: LineZonotope, target: int, n_protected: int = 0,
                      refine: bool = True) -> LineZonotope:
    """Box the least significant generators in the lifted space ``[G; A]``.

    ``target`` bounds the number of unprotected generators. The result has at
    least ``n + n_c`` of them when any reduction happens; smaller targets are
    clamped to that floor with a warning.

    With ``refine`` the box is also built on the equivalent form from
    :func:`orthogonalize_constraints` and the candidate with the smaller
    interval hull (sum of widths, ties to the plain form) is returned. Both
    candidates enclose ``Z``.
    """
    _require_line_free_constraints(Z, "generator reduction")
    n_free = Z.n_gens - n_protected
    if n_free <= target:
        return Z
    lifted_dim = Z.n + Z.n_cons
    if target < lifted_dim:
        log.warning("generator target %d below floor n + n_c = %d; clamping", target, lifted_dim)
        target = lifted_dim
        if n_free <= target:
            return Z
    plain = _box_lifted(Z, target, n_protected)
    if not refine:
        return plain
    alt = orthogonalize_constraints(Z)
    if alt is None:
        return plain
    other = _box_lifted(alt, target, n_protected)
    size_plain = _hull_size(plain)
    size_other = _hull_size(other)
    return other if size_other < size_plain * (1.0 - 1e-6) else plain


def compress_lines(Z: LineZonotope) -> LineZonotope:
    """Replace M by an orthonormal basis of its range (requires S = 0)."""
    if Z.n_lines == 0:
        return Z
    _require_line_free_constraints(Z, "line compression")
    s = np.linalg.svd(Z.M, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        r = 0
    else:
        r = int(np.sum(s > RANK_TOL * s[0]))
    if r == 0:
        Q = np.zeros((Z.n, 0))
    elif r == Z.n_lines:
        Q, _ = np.linalg.qr(Z.M)
    else:
        Q, _, _ = linalg.qr(Z.M, mode="economic", pivoting=True)
        Q = Q[:, :r]
    return LineZonotope(Q, Z.G, Z.c, np.zeros((Z.n_cons, Q.shape[1])), Z.A, Z.b)


def reduce(Z: LineZonotope, limits: ReductionLimits, n_protected: int = 0,
           rescale: bool = True, refine: bool = True) -> LineZonotope:
    """Lines, then constraints, then generators, then optional line compression.

    ``rescale`` shrinks factor boxes to their propagated bounds before each
    constraint elimination. The set is unchanged but the meaning of the unit
    box is not, so callers that compare inflation levels turn it off.
    ``refine`` is passed to :func:`reduce_generators`.
    """
    if n_protected < 0 or n_protected > Z.n_gens:
        raise DimensionError("protected column count outside generator range")
    Z = eliminate_all_lines(Z)
    Z = eliminate_constraints(Z, limits.max_constraints, n_protected, rescale=rescale)
    Z = reduce_generators(Z, limits.max_generators, n_protected, refine=refine)
    if limits.minimize_lines:
        Z = compress_lines(Z)
    return Z
