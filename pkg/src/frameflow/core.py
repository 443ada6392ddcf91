"""Core objects and measures.

Three kinds of scaling objects live here:

* ``Frame`` — n vectors in R^d (rows of ``vectors``).  The balanced target is
  sum_i u_i u_i^T = I_d with every norm^2 equal to d/n.
* ``OperatorTuple`` — k real m x n matrices.  Balanced means
  sum_i U_i U_i^T and sum_i U_i^T U_i are both multiples of the identity.
* ``NonNegMatrix`` — an entrywise-nonnegative m x n matrix.  Balanced means
  all row sums equal s/m and all column sums equal s/n.

The shared measures are the size ``s`` (total squared mass), the imbalance
``delta`` (zero exactly at double balance, scales as c^4 under U -> cU), and
the spectral nearness ``eps``.  All three agree across the embedding of a
frame as an operator tuple.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Union

import numpy as np

from ._jacobi import jacobi_eigh

SCHEMA_VERSION = "1"

# entries of a NonNegMatrix in [-NEG_CLAMP, 0) are treated as roundoff and
# clamped to zero; anything more negative is rejected
NEG_CLAMP = 1e-15


def _as_float_array(a, name: str) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Frame:
    """n vectors in R^d, stored as the rows of an (n, d) array."""

    vectors: np.ndarray

    def __post_init__(self):
        arr = _as_float_array(self.vectors, "vectors")
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"vectors must be (n, d) with n, d >= 1, got {arr.shape}")
        object.__setattr__(self, "vectors", arr)

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def d(self) -> int:
        return self.vectors.shape[1]

    def gram(self) -> np.ndarray:
        """sum_i u_i u_i^T  (d x d)."""
        return self.vectors.T @ self.vectors

    def norms2(self) -> np.ndarray:
        return np.einsum("nd,nd->n", self.vectors, self.vectors)


@dataclass(frozen=True)
class OperatorTuple:
    """k real matrices of common shape m x n, stored as a (k, m, n) array."""

    mats: np.ndarray

    def __post_init__(self):
        arr = _as_float_array(self.mats, "mats")
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise ValueError(f"mats must be (k, m, n) with all dims >= 1, got {arr.shape}")
        object.__setattr__(self, "mats", arr)

    @property
    def k(self) -> int:
        return self.mats.shape[0]

    @property
    def m(self) -> int:
        return self.mats.shape[1]

    @property
    def n(self) -> int:
        return self.mats.shape[2]

    def left_gram(self) -> np.ndarray:
        """sum_i U_i U_i^T  (m x m)."""
        return np.einsum("kmn,kln->ml", self.mats, self.mats)

    def right_gram(self) -> np.ndarray:
        """sum_i U_i^T U_i  (n x n)."""
        return np.einsum("kmi,kmj->ij", self.mats, self.mats)


@dataclass(frozen=True)
class NonNegMatrix:
    """Entrywise-nonnegative m x n matrix.

    Tiny negative entries (>= -1e-15, i.e. roundoff from upstream float work)
    are clamped to exactly zero; anything more negative raises.
    """

    entries: np.ndarray

    def __post_init__(self):
        arr = np.array(self.entries, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise ValueError("entries must be finite")
        if arr.ndim != 2 or min(arr.shape) < 1:
            raise ValueError(f"entries must be (m, n) with m, n >= 1, got {arr.shape}")
        low = arr.min(initial=0.0)
        if low < -NEG_CLAMP:
            raise ValueError(f"negative entry {low:.3e} below the -1e-15 clamp window")
        if low < 0.0:
            arr = np.where(arr < 0.0, 0.0, arr)
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)

    @property
    def m(self) -> int:
        return self.entries.shape[0]

    @property
    def n(self) -> int:
        return self.entries.shape[1]

    def row_sums(self) -> np.ndarray:
        return self.entries.sum(axis=1)

    def col_sums(self) -> np.ndarray:
        return self.entries.sum(axis=0)


ScalingObject = Union[Frame, OperatorTuple, NonNegMatrix]


@dataclass(frozen=True)
class Measures:
    """Size / imbalance / nearness summary of one object.

    ``eps`` is None for plain nonnegative matrices (nearness is a spectral
    notion for frames and operator tuples).
    """

    s: float
    delta: float
    eps: float | None


# ---------------------------------------------------------------------------
# measures


def size_of(obj: ScalingObject) -> float:
    """Total squared mass: sum of squared vector norms / Frobenius norms,
    or the plain entry sum for a nonnegative matrix."""
    if isinstance(obj, Frame):
        return float(np.einsum("nd,nd->", obj.vectors, obj.vectors))
    if isinstance(obj, OperatorTuple):
        return float(np.einsum("kmn,kmn->", obj.mats, obj.mats))
    if isinstance(obj, NonNegMatrix):
        return float(obj.entries.sum())
    raise TypeError(f"unsupported object {type(obj).__name__}")


def delta_of(obj: ScalingObject) -> float:
    """Imbalance measure; 0 exactly at double balance, scales as c^4."""
    if isinstance(obj, Frame):
        v = obj.vectors
        d, n = obj.d, obj.n
        gram = v.T @ v
        s = float(np.trace(gram))
        norms2 = np.einsum("nd,nd->n", v, v)
        left = s * np.eye(d) - d * gram
        right = s - n * norms2
        return float(np.sum(left * left) / d + np.sum(right * right) / n)
    if isinstance(obj, OperatorTuple):
        m, n = obj.m, obj.n
        bl = obj.left_gram()
        br = obj.right_gram()
        s = float(np.trace(bl))
        dl = s * np.eye(m) - m * bl
        dr = s * np.eye(n) - n * br
        return float(np.sum(dl * dl) / m + np.sum(dr * dr) / n)
    if isinstance(obj, NonNegMatrix):
        m, n = obj.m, obj.n
        r = obj.row_sums()
        c = obj.col_sums()
        s = float(obj.entries.sum())
        return float(np.sum((s - m * r) ** 2) / m + np.sum((s - n * c) ** 2) / n)
    raise TypeError(f"unsupported object {type(obj).__name__}")


def measures_of(obj: ScalingObject) -> Measures:
    eps = None
    if isinstance(obj, (Frame, OperatorTuple)):
        eps = eps_nearness(obj)
    return Measures(s=size_of(obj), delta=delta_of(obj), eps=eps)


def dist(a: ScalingObject, b: ScalingObject) -> float:
    """Squared distance: sum of squared entrywise differences."""
    if type(a) is not type(b):
        raise TypeError(f"cannot compare {type(a).__name__} with {type(b).__name__}")
    if isinstance(a, Frame):
        x, y = a.vectors, b.vectors
    elif isinstance(a, OperatorTuple):
        x, y = a.mats, b.mats
    elif isinstance(a, NonNegMatrix):
        x, y = a.entries, b.entries
    else:
        raise TypeError(f"unsupported object {type(a).__name__}")
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    diff = x - y
    return float(np.sum(diff * diff))


def distance(a: ScalingObject, b: ScalingObject) -> float:
    """Euclidean distance (square root of ``dist``)."""
    return float(np.sqrt(dist(a, b)))


def eps_nearness(obj: Frame | OperatorTuple) -> float:
    """Smallest eps >= 0 such that both Gram spectra are within a factor
    (1 +/- eps) of their balanced values (identity on the left, (m/n) I on
    the right; for frames the right side is the vector norms against d/n).
    """
    if isinstance(obj, Frame):
        d, n = obj.d, obj.n
        w, _ = jacobi_eigh(obj.gram())
        norms2 = obj.norms2()
        target = d / n
        viol = (
            1.0 - w[0],
            w[-1] - 1.0,
            1.0 - norms2.min() / target,
            norms2.max() / target - 1.0,
        )
        return float(max(0.0, *viol))
    if isinstance(obj, OperatorTuple):
        m, n = obj.m, obj.n
        wl, _ = jacobi_eigh(obj.left_gram())
        wr, _ = jacobi_eigh(obj.right_gram())
        target = m / n
        viol = (
            1.0 - wl[0],
            wl[-1] - 1.0,
            1.0 - wr[0] / target,
            wr[-1] / target - 1.0,
        )
        return float(max(0.0, *viol))
    raise TypeError(f"eps_nearness is defined for frames and operator tuples, not {type(obj).__name__}")


def is_doubly_balanced(obj: ScalingObject, tol: float = 1e-12) -> bool:
    """True iff the scalar imbalance is at or below tol.

    The tolerance is on delta (the single quantity the convergence
    statements are phrased in) rather than on per-entry marginal
    deviations.
    """
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    return delta_of(obj) <= tol


def is_doubly_stochastic(obj: ScalingObject, tol: float = 1e-12) -> bool:
    """Doubly balanced AND normalized: size equals m (= d for frames)."""
    m = obj.d if isinstance(obj, Frame) else obj.m
    return is_doubly_balanced(obj, tol) and abs(size_of(obj) - m) <= tol * max(1.0, m)


# ---------------------------------------------------------------------------
# conversions


def frame_to_operator(frame: Frame) -> OperatorTuple:
    """Embed a frame as n matrices of shape d x n, the i-th holding u_i in
    column i.  Size, delta, and eps are preserved exactly."""
    d, n = frame.d, frame.n
    mats = np.zeros((n, d, n))
    idx = np.arange(n)
    mats[idx, :, idx] = frame.vectors
    return OperatorTuple(mats)


def hadamard_square(a: NonNegMatrix | np.ndarray) -> NonNegMatrix:
    """Entrywise square of a real matrix, as a NonNegMatrix."""
    arr = a.entries if isinstance(a, NonNegMatrix) else np.asarray(a, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"matrix expected, got shape {arr.shape}")
    return NonNegMatrix(arr * arr)


# ---------------------------------------------------------------------------
# serialization


def to_dict(obj: ScalingObject) -> dict:
    if isinstance(obj, Frame):
        return {
            "kind": "frame",
            "d": obj.d,
            "n": obj.n,
            "vectors": obj.vectors.tolist(),
        }
    if isinstance(obj, OperatorTuple):
        return {
            "kind": "operator",
            "m": obj.m,
            "n": obj.n,
            "k": obj.k,
            "mats": obj.mats.tolist(),
        }
    if isinstance(obj, NonNegMatrix):
        return {
            "kind": "matrix",
            "m": obj.m,
            "n": obj.n,
            "entries": obj.entries.tolist(),
        }
    raise TypeError(f"unsupported object {type(obj).__name__}")


def from_dict(data: dict) -> ScalingObject:
    kind = data.get("kind")
    if kind == "frame":
        frame = Frame(np.array(data["vectors"], dtype=float))
        if frame.d != data["d"] or frame.n != data["n"]:
            raise ValueError("frame header (d, n) disagrees with the vector array")
        return frame
    if kind == "operator":
        op = OperatorTuple(np.array(data["mats"], dtype=float))
        if (op.m, op.n, op.k) != (data["m"], data["n"], data["k"]):
            raise ValueError("operator header (m, n, k) disagrees with the array")
        return op
    if kind == "matrix":
        mat = NonNegMatrix(np.array(data["entries"], dtype=float))
        if (mat.m, mat.n) != (data["m"], data["n"]):
            raise ValueError("matrix header (m, n) disagrees with the array")
        return mat
    raise ValueError(f"unknown kind {kind!r}")


def dumps(obj: ScalingObject) -> str:
    return json.dumps(to_dict(obj), sort_keys=True)


def loads(text: str) -> ScalingObject:
    return from_dict(json.loads(text))


def save_json(obj: ScalingObject, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(obj))
        fh.write("\n")


def load_json(path) -> ScalingObject:
    with open(path) as fh:
        return loads(fh.read())
