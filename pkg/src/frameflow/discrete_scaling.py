"""Discrete scaling iterations: matrix sinkhorn, operator alternating
normalization, and the frame special case.

Conventions
-----------
* matrix: a row pass scales every row sum to s/m, a column pass every column
  sum to s/n (s is invariant under both).  One iteration = row pass + column
  pass; convergence is delta(B) <= tol, checked on entry and after each
  double step.
* operator: odd step V <- L^{-1/2} V with L = sum V_i V_i^T (exact left
  normalization), even step V <- sqrt(m/n) * V R^{-1/2} with R = sum V_i^T V_i
  (exact right Gram, proportional to the identity afterwards).
* frame: u_i <- S^{-1/2} u_i, then u_i <- sqrt(d/n) * u_i / ||u_i|| — the same
  double step as the operator iteration applied to the frame embedding, so the
  two agree iterate-by-iterate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._jacobi import sym_inv_sqrt
from .core import Frame, NonNegMatrix, OperatorTuple, delta_of


class ScalingError(RuntimeError):
    """Raised when a scaling step is undefined (zero row, singular Gram, ...)."""


@dataclass(frozen=True)
class ScalingPair:
    """Accumulated left/right transforms taking the input to the output.

    ``left``/``right`` are full matrices; the ``*_diagonal`` flags mark
    transforms whose off-diagonal part is exactly zero.  ``*_logdet`` stores
    log|det| of the corresponding transform.
    """

    left: np.ndarray
    right: np.ndarray
    left_diagonal: bool
    right_diagonal: bool
    left_logdet: float
    right_logdet: float

    def __post_init__(self):
        for name in ("left", "right"):
            arr = np.array(getattr(self, name), dtype=float)
            if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
                raise ValueError(f"{name} transform must be square, got {arr.shape}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.left_diagonal and np.any(self.left != np.diag(np.diag(self.left))):
            raise ValueError("left flagged diagonal but has off-diagonal entries")
        if self.right_diagonal and np.any(self.right != np.diag(np.diag(self.right))):
            raise ValueError("right flagged diagonal but has off-diagonal entries")

    @staticmethod
    def identity(m: int, n: int) -> "ScalingPair":
        return ScalingPair(np.eye(m), np.eye(n), True, True, 0.0, 0.0)


def _logabsdet(a: np.ndarray, diagonal: bool) -> float:
    if diagonal:
        d = np.abs(np.diag(a))
        if np.any(d == 0.0):
            return -math.inf
        return float(np.sum(np.log(d)))
    sign, logdet = np.linalg.slogdet(a)
    return float(logdet) if sign != 0 else -math.inf


def make_scaling_pair(left: np.ndarray, right: np.ndarray) -> ScalingPair:
    """Build a ScalingPair, detecting exact diagonal structure."""
    left = np.asarray(left, dtype=float)
    right = np.asarray(right, dtype=float)
    ld = bool(np.all(left == np.diag(np.diag(left))))
    rd = bool(np.all(right == np.diag(np.diag(right))))
    return ScalingPair(left, right, ld, rd, _logabsdet(left, ld), _logabsdet(right, rd))


@dataclass(frozen=True)
class IterationReport:
    iterations: int
    final_delta: float
    converged: bool


# ---------------------------------------------------------------------------


def sinkhorn(
    a: NonNegMatrix, tol: float = 1e-12, max_iters: int = 100_000
) -> tuple[NonNegMatrix, ScalingPair, IterationReport]:
    """Alternate row/column normalization of a nonnegative matrix.

    Returns (B, scaling, report) with B = diag(x) A diag(y) and
    delta(B) <= tol on convergence.  A zero row or column makes the update
    undefined and raises ScalingError.
    """
    mat = a.entries.copy()
    m, n = mat.shape
    if np.any(mat.sum(axis=1) == 0.0):
        raise ScalingError("zero row: row normalization undefined")
    if np.any(mat.sum(axis=0) == 0.0):
        raise ScalingError("zero column: column normalization undefined")

    x = np.ones(m)
    y = np.ones(n)
    delta = delta_of(NonNegMatrix(mat))
    iterations = 0
    while delta > tol and iterations < max_iters:
        s = mat.sum()
        r = mat.sum(axis=1)
        row_scale = (s / m) / r
        mat *= row_scale[:, None]
        x *= row_scale

        s = mat.sum()
        c = mat.sum(axis=0)
        col_scale = (s / n) / c
        mat *= col_scale[None, :]
        y *= col_scale

        iterations += 1
        delta = delta_of(NonNegMatrix(mat))

    pair = ScalingPair(
        np.diag(x), np.diag(y), True, True,
        float(np.sum(np.log(x))), float(np.sum(np.log(y))),
    )
    report = IterationReport(iterations, float(delta), bool(delta <= tol))
    return NonNegMatrix(mat), pair, report


def operator_sinkhorn(
    u: OperatorTuple, tol: float = 1e-12, max_iters: int = 100_000
) -> tuple[OperatorTuple, ScalingPair, IterationReport]:
    """Alternate exact left/right normalization of an operator tuple.

    Odd steps make sum V_i V_i^T the identity, even steps make
    sum V_i^T V_i equal (m/n) I_n.  Singular Gram matrices raise
    ScalingError.
    """
    mats = u.mats.copy()
    m, n = u.m, u.n
    left = np.eye(m)
    right = np.eye(n)
    rescale = math.sqrt(m / n)

    delta = delta_of(OperatorTuple(mats))
    iterations = 0
    while delta > tol and iterations < max_iters:
        gram_l = np.einsum("kmn,kln->ml", mats, mats)
        try:
            li = sym_inv_sqrt(gram_l)
        except np.linalg.LinAlgError as exc:
            raise ScalingError(f"left Gram singular: {exc}") from exc
        mats = np.matmul(li, mats)
        left = li @ left

        gram_r = np.einsum("kmi,kmj->ij", mats, mats)
        try:
            ri = sym_inv_sqrt(gram_r)
        except np.linalg.LinAlgError as exc:
            raise ScalingError(f"right Gram singular: {exc}") from exc
        mats = rescale * np.matmul(mats, ri)
        right = right @ (rescale * ri)

        iterations += 1
        delta = delta_of(OperatorTuple(mats))

    pair = make_scaling_pair(left, right)
    report = IterationReport(iterations, float(delta), bool(delta <= tol))
    return OperatorTuple(mats), pair, report


def frame_alternating(
    f: Frame, tol: float = 1e-12, max_iters: int = 100_000
) -> tuple[Frame, ScalingPair, IterationReport]:
    """Alternating exact-Parseval / equal-norm steps for a frame.

    The double step is u <- S^{-1/2} u followed by the norm reset to
    sqrt(d/n) (all vectors equal norm, total size d).  Matches
    operator_sinkhorn applied to the frame embedding, iterate for iterate.
    """
    vecs = f.vectors.copy()
    d, n = f.d, f.n
    left = np.eye(d)
    yscale = np.ones(n)
    target_norm = math.sqrt(d / n)

    delta = delta_of(Frame(vecs))
    iterations = 0
    while delta > tol and iterations < max_iters:
        gram = vecs.T @ vecs
        try:
            si = sym_inv_sqrt(gram)
        except np.linalg.LinAlgError as exc:
            raise ScalingError(f"frame Gram singular: {exc}") from exc
        vecs = vecs @ si  # si symmetric: rows become S^{-1/2} u_i
        left = si @ left

        norms = np.sqrt(np.einsum("nd,nd->n", vecs, vecs))
        if np.any(norms == 0.0):
            raise ScalingError("zero vector after Parseval step")
        step_scale = target_norm / norms
        vecs = vecs * step_scale[:, None]
        yscale *= step_scale

        iterations += 1
        delta = delta_of(Frame(vecs))

    pair = ScalingPair(
        left, np.diag(yscale), False, True,
        _logabsdet(left, False), float(np.sum(np.log(np.abs(yscale)))),
    )
    report = IterationReport(iterations, float(delta), bool(delta <= tol))
    return Frame(vecs), pair, report
