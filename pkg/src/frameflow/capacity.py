"""Capacity computations for nonnegative matrices, frames, and operator
tuples, plus the zero-capacity combinatorics.

For a nonnegative m x n matrix the capacity is

    inf_{x > 0}  m * (prod_i (A x)_i)^{1/m} / (prod_j x_j)^{1/n},

for an operator tuple  inf_{X > 0}  m * det(sum U_i X U_i^T)^{1/m} / det(X)^{1/n},
and for a frame the operator form restricted to diagonal X.  Capacity never
exceeds the size s, equals it exactly at double balance, and transforms under
diagonal/determinant-one scalings by explicit factors — which is what the
scaling-based route exploits.  Capacity is zero exactly when the support has
no perfect matching (square case; rectangular inputs are tensor-lifted to a
square first), certified by a Hall-style row/column witness.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from ._jacobi import jacobi_eigh
from .core import Frame, NonNegMatrix, OperatorTuple, delta_of, size_of
from .discrete_scaling import ScalingError, operator_sinkhorn, sinkhorn
from .dynamics import KAPPA_RATE

GRAD_TOL = 1e-10
ARMIJO_C = 1e-4


class CapacityError(RuntimeError):
    pass


@dataclass(frozen=True)
class CapacityResult:
    value: float
    method: str                       # scaling-based | convex-descent | zero-detected | bracket-only
    certificate: dict | None = None   # Hall witness {"rows": [...], "cols": [...]} when zero
    lower: float | None = None        # always-valid bracket around the true capacity
    upper: float | None = None
    converged: bool = True


@dataclass(frozen=True)
class TightExample:
    """Two-block matrix with minimal imbalance subject to zero capacity."""

    k: int
    A: NonNegMatrix
    x: float
    y: float
    E: float
    F: float


# ---------------------------------------------------------------------------
# perfect matchings on the support


def _hopcroft_karp(adj: list[np.ndarray], nl: int, nr: int):
    """Maximum bipartite matching; returns (match_l, match_r, size)."""
    INF = nl + nr + 1
    match_l = np.full(nl, -1, dtype=np.int64)
    match_r = np.full(nr, -1, dtype=np.int64)
    dist = np.empty(nl, dtype=np.int64)
    size = 0

    def bfs() -> bool:
        q = deque()
        for u in range(nl):
            if match_l[u] == -1:
                dist[u] = 0
                q.append(u)
            else:
                dist[u] = INF
        found = False
        while q:
            u = q.popleft()
            for v in adj[u]:
                w = match_r[v]
                if w == -1:
                    found = True
                elif dist[w] == INF:
                    dist[w] = dist[u] + 1
                    q.append(w)
        return found

    def dfs(u: int) -> bool:
        for v in adj[u]:
            w = match_r[v]
            if w == -1 or (dist[w] == dist[u] + 1 and dfs(w)):
                match_l[u] = v
                match_r[v] = u
                return True
        dist[u] = INF
        return False

    while bfs():
        for u in range(nl):
            if match_l[u] == -1 and dfs(u):
                size += 1
    return match_l, match_r, size


def _hall_witness(adj, match_l, match_r, nl: int, nr: int):
    """Rows/cols witnessing the deficiency: rows X' reachable by alternating
    paths from free rows, cols Y' = complement of their neighborhood; the
    X' x Y' submatrix is all zero and |X'| + |Y'| > n."""
    reach_l = [u for u in range(nl) if match_l[u] == -1]
    seen_l = set(reach_l)
    seen_r = set()
    q = deque(reach_l)
    while q:
        u = q.popleft()
        for v in adj[u]:
            if v not in seen_r:
                seen_r.add(v)
                w = match_r[v]
                if w != -1 and w not in seen_l:
                    seen_l.add(w)
                    q.append(w)
    rows = sorted(int(u) for u in seen_l)
    cols = [v for v in range(nr) if v not in seen_r]
    return {"rows": rows, "cols": cols}


def tensor_square(a: NonNegMatrix) -> NonNegMatrix:
    """Lift an m x n matrix to a square one of side mn/gcd(m,n) by tensoring
    with a constant block; size, delta, and capacity are preserved."""
    m, n = a.m, a.n
    g = math.gcd(m, n)
    block = np.full((n // g, m // g), (g * g) / (m * n))
    return NonNegMatrix(np.kron(a.entries, block))


def capacity_zero_check(a: NonNegMatrix) -> dict | None:
    """Return a Hall witness if the capacity is zero, else None.

    Rectangular inputs are tensor-lifted to a square matrix first; witness
    indices then refer to the lifted object.
    """
    work = a if a.m == a.n else tensor_square(a)
    n = work.m
    support = work.entries > 0.0

    # cheap certificates first
    empty_rows = np.nonzero(~support.any(axis=1))[0]
    if empty_rows.size:
        return {"rows": [int(empty_rows[0])], "cols": list(range(n))}
    empty_cols = np.nonzero(~support.any(axis=0))[0]
    if empty_cols.size:
        return {"rows": list(range(n)), "cols": [int(empty_cols[0])]}

    rows_idx, cols_idx = np.nonzero(support)
    splits = np.searchsorted(rows_idx, np.arange(1, n))
    adj = np.split(cols_idx, splits)
    match_l, match_r, size = _hopcroft_karp(adj, n, n)
    if size == n:
        return None
    return _hall_witness(adj, match_l, match_r, n, n)


# ---------------------------------------------------------------------------
# bounds


def capacity_bounds(obj) -> tuple[float, float]:
    """Always-valid (lower, upper) bracket from size and imbalance alone.

    upper = s; lower = s - mn sqrt(delta/2) (rectangular / operator form),
    improved to s - n sqrt(delta/2) for square matrices, and further by the
    decay-rate bound  s - delta/(5 kappa alpha n)  whenever its pseudorandom
    preconditions verifiably hold.
    """
    s = size_of(obj)
    delta = delta_of(obj)
    root = math.sqrt(delta / 2.0)
    if isinstance(obj, NonNegMatrix):
        m, n = obj.m, obj.n
        lower = s - m * n * root
        if m == n:
            lower = max(lower, s - n * root)
        alpha = float(obj.entries.min())
        if alpha > 0.0 and delta <= 0.1 and abs(s - m) <= 1e-9 * max(1.0, m):
            cols_ok = np.abs(obj.col_sums() - s / n).max() <= 1e-9 * max(1.0, s)
            if cols_ok and alpha >= 80.0 * math.sqrt(m * delta) / (KAPPA_RATE * n):
                lower = max(lower, s - delta / (5.0 * KAPPA_RATE * alpha * n))
    elif isinstance(obj, Frame):
        lower = s - obj.d * obj.n * root
    elif isinstance(obj, OperatorTuple):
        lower = s - obj.m * obj.n * root
    else:
        raise TypeError(f"unsupported object {type(obj).__name__}")
    return max(0.0, lower), s


# ---------------------------------------------------------------------------
# matrix capacity, two independent routes


def matrix_capacity(a: NonNegMatrix, tol: float = 1e-12, max_iters: int = 100_000) -> CapacityResult:
    """Scaling route: balance with sinkhorn to delta <= tol * s^2, then undo
    the diagonal scalings; at balance the capacity equals the size, so the
    estimate is s(B) * (prod x)^{-1/m} (prod y)^{-1/n}, clamped at s because
    capacity never exceeds size."""
    cert = capacity_zero_check(a)
    if cert is not None:
        return CapacityResult(0.0, "zero-detected", cert, 0.0, 0.0)
    s_in = size_of(a)
    lower, upper = capacity_bounds(a)
    b, pair, report = sinkhorn(a, tol * s_in * s_in, max_iters)
    value = size_of(b) * math.exp(-pair.left_logdet / a.m - pair.right_logdet / a.n)
    value = min(value, s_in)
    method = "scaling-based" if report.converged else "bracket-only"
    return CapacityResult(value, method, None, lower, upper, report.converged)


def _descent(f_and_grad, y0: np.ndarray, tol: float, max_iters: int):
    """Plain gradient descent with Armijo backtracking (c = 1e-4, halving)."""
    y = y0.copy()
    f, g = f_and_grad(y)
    step = 1.0
    for _ in range(max_iters):
        gnorm = float(np.abs(g).max())
        if gnorm <= tol:
            return y, f, True
        g2 = float(g @ g)
        while True:
            trial = y - step * g
            f_new, g_new = f_and_grad(trial)
            if f_new <= f - ARMIJO_C * step * g2:
                break
            step *= 0.5
            if step < 1e-18:
                return y, f, False
        y, f, g = trial, f_new, g_new
        step = min(step * 2.0, 1e6)
    return y, f, False


def matrix_capacity_convex(a: NonNegMatrix, tol: float = GRAD_TOL, max_iters: int = 100_000) -> CapacityResult:
    """Convex route: minimize
        f(y) = log m + (1/m) sum_i log((A e^y)_i) - (1/n) sum_j y_j
    from y = 0; the capacity is exp(f*).  Kept independent of the scaling
    route so the two can cross-check each other."""
    cert = capacity_zero_check(a)
    if cert is not None:
        return CapacityResult(0.0, "zero-detected", cert, 0.0, 0.0)
    m, n = a.m, a.n
    mat = a.entries
    logm = math.log(m)

    def f_and_grad(y):
        w = np.exp(y)
        rows = mat @ w
        if np.any(rows <= 0.0) or not np.all(np.isfinite(rows)):
            return math.inf, np.zeros(n)
        f = logm + float(np.log(rows).sum()) / m - float(y.sum()) / n
        grad = (mat / rows[:, None]).sum(axis=0) * w / m - 1.0 / n
        return f, grad

    y, f, ok = _descent(f_and_grad, np.zeros(n), tol, max_iters)
    lower, upper = capacity_bounds(a)
    return CapacityResult(math.exp(f), "convex-descent", None, lower, upper, ok)


# ---------------------------------------------------------------------------
# frames and operator tuples


def _frame_objective(vecs: np.ndarray, d: int, n: int):
    """Objective/gradient closure for the diagonal-weight program
        g(y) = log d + (1/d) logdet(sum_l e^{y_l} u_l u_l^T) - (1/n) sum_l y_l.
    """
    logd = math.log(d)

    def f_and_grad(y):
        w = np.exp(y)
        gram = (vecs * w[:, None]).T @ vecs
        sgn, logdet = np.linalg.slogdet(gram)
        if sgn <= 0:
            return math.inf, np.zeros(n)
        f = logd + logdet / d - float(y.sum()) / n
        z = np.linalg.solve(gram, vecs.T)          # d x n
        quad = np.einsum("nd,dn->n", vecs, z)      # u_l^T gram^{-1} u_l
        grad = w * quad / d - 1.0 / n
        return f, grad

    return f_and_grad


def frame_weight_minimizer(fr: Frame, tol: float = GRAD_TOL,
                           max_iters: int = 20_000) -> np.ndarray:
    """Positive per-vector weights x_l = e^{y_l} minimizing the diagonal
    capacity program; the eigenbasis of sum_l x_l u_l u_l^T at these weights
    is the natural frame-side basis for the matrix compression."""
    sign, _ = np.linalg.slogdet(fr.vectors.T @ fr.vectors)
    if sign <= 0:
        raise CapacityError("vectors do not span; no interior minimizer")
    y, _, _ = _descent(_frame_objective(fr.vectors, fr.d, fr.n),
                       np.zeros(fr.n), tol, max_iters)
    return np.exp(y)


def frame_capacity(fr: Frame, tol: float = GRAD_TOL, max_iters: int = 100_000) -> CapacityResult:
    """Diagonal-weight capacity of a frame:
        g(y) = log d + (1/d) logdet(sum_l e^{y_l} u_l u_l^T) - (1/n) sum_l y_l,
    minimized by descent; value exp(g*).  A frame whose vectors do not span
    R^d has capacity zero (the determinant vanishes for every weight)."""
    d, n = fr.d, fr.n
    vecs = fr.vectors
    sign, _ = np.linalg.slogdet(vecs.T @ vecs)
    if sign <= 0:
        return CapacityResult(0.0, "zero-detected", {"reason": "vectors do not span"}, 0.0, 0.0)
    y, f, ok = _descent(_frame_objective(vecs, d, n), np.zeros(n), tol, max_iters)
    lower, upper = capacity_bounds(fr)
    return CapacityResult(math.exp(f), "convex-descent", None, lower, upper, ok)


def operator_capacity(u: OperatorTuple, tol: float = 1e-12, max_iters: int = 100_000) -> CapacityResult:
    """Scaling route for operator tuples, with the always-reported bracket
    [s - mn sqrt(delta/2), s].  The balanced point estimate uses the exact
    transform rule cap(L U R) = det(L)^{2/m} det(R)^{2/n} cap(U), so it is
    valid (an upper estimate) even when the iteration stops early."""
    s_in = size_of(u)
    lower, upper = capacity_bounds(u)
    try:
        v, pair, report = operator_sinkhorn(u, tol * s_in * s_in, max_iters)
    except ScalingError as exc:
        return CapacityResult(0.0, "zero-detected", {"reason": str(exc)}, 0.0, 0.0)
    value = size_of(v) * math.exp(-2.0 * pair.left_logdet / u.m - 2.0 * pair.right_logdet / u.n)
    value = min(value, s_in)
    method = "scaling-based" if report.converged else "bracket-only"
    return CapacityResult(value, method, None, lower, upper, report.converged)


def _embedded_frame(u: OperatorTuple) -> Frame | None:
    """Recognize the image of frame_to_operator (U_l supported on column l)."""
    if u.k != u.n:
        return None
    mask = np.ones((u.k, u.n), dtype=bool)
    mask[np.arange(u.k), np.arange(u.n)] = False
    off = u.mats.transpose(0, 2, 1)[mask]         # all columns l' != l
    if np.any(off != 0.0):
        return None
    return Frame(u.mats[np.arange(u.n), :, np.arange(u.n)])


def reduce_operator_to_matrix(u: OperatorTuple, x: np.ndarray | None = None) -> NonNegMatrix:
    """Compress an operator tuple to a nonnegative matrix through a positive
    definite weight X:  A_ij = sum_l (g_i^T U_l f_j)^2  with f the eigenbasis
    of X and g the eigenbasis of sum_l U_l X U_l^T.  Size is preserved
    exactly; the imbalance never increases; capacity can only drop toward the
    infimum that an optimal X attains.

    Default X: for an embedded frame, the diagonal weights found by the
    frame capacity descent; otherwise the identity.
    """
    if x is None:
        fr = _embedded_frame(u)
        if fr is not None and np.linalg.slogdet(fr.vectors.T @ fr.vectors)[0] > 0:
            x = np.diag(frame_weight_minimizer(fr))
        else:
            x = np.eye(u.n)

    x = np.asarray(x, dtype=float)
    wx, fbasis = jacobi_eigh(x)
    if wx[0] <= 0.0:
        raise ValueError("weight matrix must be positive definite")
    t = np.einsum("kmn,nl,kol->mo", u.mats, x, u.mats)
    _, gbasis = jacobi_eigh(t)
    proj = np.einsum("im,kmn,nj->kij", gbasis.T, u.mats, fbasis)
    return NonNegMatrix(np.einsum("kij,kij->ij", proj, proj))


# ---------------------------------------------------------------------------
# the tight family


def tight_example(k: int) -> TightExample:
    """Two-block (2k-1) x (2k+1) matrix of unit size whose imbalance is the
    smallest possible subject to zero capacity: delta = 1/(8k^4 - 6k^2)."""
    if k < 1:
        raise ValueError("k >= 1 required")
    m, n = 2 * k - 1, 2 * k + 1
    a_coef = (4.0 * k * k + 2.0 * k - 1.0) / (k * (k + 1.0))
    if k == 1:
        e_mass, f_mass = 1.0, 0.0
        x = e_mass / (k * (k + 1.0))
        y = 0.0
    else:
        b_coef = (4.0 * k * k - 2.0 * k - 1.0) / ((k - 1.0) * k)
        opt = 1.0 / (1.0 / a_coef + 1.0 / b_coef)
        e_mass, f_mass = opt / a_coef, opt / b_coef
        x = e_mass / (k * (k + 1.0))
        y = f_mass / ((k - 1.0) * k)
    entries = np.zeros((m, n))
    entries[:k, k:] = x
    if k > 1:
        entries[k:, :k] = y
    return TightExample(k, NonNegMatrix(entries), x, y, e_mass, f_mass)
