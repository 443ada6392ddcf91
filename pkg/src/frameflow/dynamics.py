"""Continuous scaling flows.

The flowed objects and their derivatives:

* operator tuple:  dU_i/dt = C_m U_i + U_i C_n  with  C_m = s I - m B_m,
  C_n = s I - n B_n  (B_m, B_n the two Gram sums, s their common trace).
  Both C's are traceless, so the accumulated transforms X, Y (dX = C_m X,
  dY = Y C_n) keep determinant one.
* frame:  du_i/dt = (s I - d S) u_i + (s - n ||u_i||^2) u_i, the embedding
  special case; the right transform is diagonal and is integrated in logs.
* matrix:  the input is the entrywise SQUARE of the underlying matrix.  With
  s, r_i, c_j taken from the squared entries M, each supported entry obeys
  d(log M_ij)/dt = 2 (2 s - m r_i - n c_j); row/column scaling exponents
  integrate s - m r_i and s - n c_j.  Zero entries stay exactly zero.

Along every flow  ds/dt = -2 delta  and  ddelta/dt = -4 * speed^2, where
speed is the Frobenius velocity of the flowed object; both monitored values
are recorded analytically at every accepted step.

Integration is classical RK4 with step-doubling: a step is accepted when the
doubled-step error estimate is <= step_err_tol and the relative change of
delta is <= rel_delta_step.  Retained samples are thinned to at most
max_samples by doubling the record stride.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Frame, NonNegMatrix, OperatorTuple, ScalingObject
from .discrete_scaling import ScalingPair, make_scaling_pair

CSV_HEADER = "t,s,delta,ds_dt,dDelta_dt,movement,logdetX,logdetY"


class FlowError(RuntimeError):
    """Numerical failure inside a flow (non-finite state, step underflow)."""


@dataclass(frozen=True)
class FlowOptions:
    rel_delta_step: float = 0.05      # max relative delta change per step
    step_err_tol: float = 1e-8        # step-doubling error estimate bound
    max_samples: int = 10_000         # retained-sample cap (stride doubling)
    record_states: bool = False       # keep per-sample FlowState objects
    record_scalings: bool = False     # keep per-sample (X, Y) transforms
    fixed_step: float | None = None   # disable adaptivity (diagnostics)
    h0: float | None = None           # initial step override


def validation_options(**overrides) -> FlowOptions:
    """Recording profile fine enough for the finite-difference identity
    checks on trajectories (derivative-identity residuals are quadratic in
    the step, so the default 5% delta step is too coarse for them)."""
    base = dict(rel_delta_step=0.002, step_err_tol=1e-10, max_samples=40_000)
    base.update(overrides)
    return FlowOptions(**base)


@dataclass(frozen=True)
class FlowState:
    """One sampled point of a flow: time and the reconstructed object."""

    t: float
    obj: ScalingObject


@dataclass
class Trajectory:
    kind: str                  # "operator" | "frame" | "matrix"
    m: int
    n: int
    k: int
    t: np.ndarray
    s: np.ndarray
    delta: np.ndarray
    ds_dt: np.ndarray
    dDelta_dt: np.ndarray
    movement: np.ndarray       # arc length travelled by the flowed object
    logdetX: np.ndarray
    logdetY: np.ndarray
    status: str                # "converged" | "t_max"
    scaling: ScalingPair       # final accumulated transforms
    kappa_ratio: float         # max/min diagonal scaling over the run (nan if none)
    scale_max: float
    scale_min: float
    states: list[FlowState] | None = None
    scalings: list[tuple[np.ndarray, np.ndarray]] | None = None

    def __post_init__(self):
        # delta and s never increase along a flow; allow float-resolution slack
        for name in ("s", "delta"):
            v = getattr(self, name)
            if v.size >= 2:
                grace = 1e-12 * np.maximum(1.0, np.abs(v[:-1]))
                if np.any(v[1:] > v[:-1] + grace):
                    raise FlowError(f"{name} increased along the trajectory")

    def __len__(self) -> int:
        return len(self.t)


def trajectory_csv(traj: Trajectory) -> str:
    """Render the monitored columns as CSV (17 significant digits)."""
    lines = [CSV_HEADER]
    cols = (traj.t, traj.s, traj.delta, traj.ds_dt, traj.dDelta_dt,
            traj.movement, traj.logdetX, traj.logdetY)
    for i in range(len(traj.t)):
        lines.append(",".join(f"{col[i]:.17g}" for col in cols))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# flow systems: pack the integrated quantities into one flat vector


class _OperatorSystem:
    kind = "operator"

    def __init__(self, op: OperatorTuple):
        self.k, self.m, self.n = op.k, op.m, op.n
        self.sl_u = self.k * self.m * self.n
        self.sl_x = self.sl_u + self.m * self.m
        self.sl_y = self.sl_x + self.n * self.n
        self.y0 = np.concatenate([
            op.mats.ravel(), np.eye(self.m).ravel(), np.eye(self.n).ravel(), [0.0],
        ])

    def _parts(self, y):
        u = y[: self.sl_u].reshape(self.k, self.m, self.n)
        x = y[self.sl_u: self.sl_x].reshape(self.m, self.m)
        yy = y[self.sl_x: self.sl_y].reshape(self.n, self.n)
        return u, x, yy

    def deriv(self, y):
        u, x, yy = self._parts(y)
        bl = np.einsum("kmn,kln->ml", u, u)
        br = np.einsum("kmi,kmj->ij", u, u)
        s = float(np.trace(bl))
        cm = -self.m * bl
        np.fill_diagonal(cm, np.diag(cm) + s)
        cn = -self.n * br
        np.fill_diagonal(cn, np.diag(cn) + s)
        du = np.matmul(cm, u) + np.matmul(u, cn)
        dx = cm @ x
        dy = yy @ cn
        speed = math.sqrt(float(np.einsum("kmn,kmn->", du, du)))
        return np.concatenate([du.ravel(), dx.ravel(), dy.ravel(), [speed]])

    def measures(self, y):
        u, _, _ = self._parts(y)
        bl = np.einsum("kmn,kln->ml", u, u)
        br = np.einsum("kmi,kmj->ij", u, u)
        s = float(np.trace(bl))
        dl = s * np.eye(self.m) - self.m * bl
        dr = s * np.eye(self.n) - self.n * br
        delta = float(np.sum(dl * dl) / self.m + np.sum(dr * dr) / self.n)
        du = np.matmul(dl, u) + np.matmul(u, dr)
        speed2 = float(np.einsum("kmn,kmn->", du, du))
        return s, delta, speed2

    def delta(self, y):
        return self.measures(y)[1]

    def logdets(self, y):
        _, x, yy = self._parts(y)
        return float(np.linalg.slogdet(x)[1]), float(np.linalg.slogdet(yy)[1])

    def diag_scalings(self, y):
        return None  # right transform is dense: no diagonal story

    def transforms(self, y):
        _, x, yy = self._parts(y)
        return x.copy(), yy.copy()

    def movement(self, y):
        return float(y[-1])

    def obj(self, y):
        u, _, _ = self._parts(y)
        return OperatorTuple(u.copy())

    def scaling_pair(self, y):
        x, yy = self.transforms(y)
        return make_scaling_pair(x, yy)


class _FrameSystem:
    kind = "frame"

    def __init__(self, fr: Frame):
        self.n, self.d = fr.n, fr.d
        self.m = self.d          # left dimension of the embedding
        self.k = self.n          # embedded tuple length
        self.sl_u = self.n * self.d
        self.sl_x = self.sl_u + self.d * self.d
        self.sl_y = self.sl_x + self.n
        self.y0 = np.concatenate([
            fr.vectors.ravel(), np.eye(self.d).ravel(), np.zeros(self.n), [0.0],
        ])

    def _parts(self, y):
        u = y[: self.sl_u].reshape(self.n, self.d)
        x = y[self.sl_u: self.sl_x].reshape(self.d, self.d)
        ylog = y[self.sl_x: self.sl_y]
        return u, x, ylog

    def deriv(self, y):
        u, x, _ = self._parts(y)
        norms2 = np.einsum("nd,nd->n", u, u)
        s = float(norms2.sum())
        gram = u.T @ u
        c = -self.d * gram
        np.fill_diagonal(c, np.diag(c) + s)
        w = s - self.n * norms2
        du = u @ c + w[:, None] * u
        dx = c @ x
        speed = math.sqrt(float(np.einsum("nd,nd->", du, du)))
        return np.concatenate([du.ravel(), dx.ravel(), w, [speed]])

    def measures(self, y):
        u, _, _ = self._parts(y)
        norms2 = np.einsum("nd,nd->n", u, u)
        s = float(norms2.sum())
        gram = u.T @ u
        dl = s * np.eye(self.d) - self.d * gram
        w = s - self.n * norms2
        delta = float(np.sum(dl * dl) / self.d + np.sum(w * w) / self.n)
        du = u @ dl + w[:, None] * u
        speed2 = float(np.einsum("nd,nd->", du, du))
        return s, delta, speed2

    def delta(self, y):
        return self.measures(y)[1]

    def logdets(self, y):
        _, x, ylog = self._parts(y)
        return float(np.linalg.slogdet(x)[1]), float(ylog.sum())

    def diag_scalings(self, y):
        _, _, ylog = self._parts(y)
        return np.exp(ylog)

    def transforms(self, y):
        _, x, ylog = self._parts(y)
        return x.copy(), np.diag(np.exp(ylog))

    def movement(self, y):
        return float(y[-1])

    def obj(self, y):
        u, _, _ = self._parts(y)
        return Frame(u.copy())

    def scaling_pair(self, y):
        x, yy = self.transforms(y)
        return make_scaling_pair(x, yy)


class _MatrixSystem:
    """Flow of the squared entries M on their support, in log domain."""

    kind = "matrix"

    def __init__(self, mat: NonNegMatrix):
        self.m, self.n = mat.m, mat.n
        self.k = 0
        self.support = mat.entries > 0.0
        self.sup_idx = np.nonzero(self.support)
        self.nnz = int(self.support.sum())
        self.sl_l = self.nnz
        self.sl_x = self.sl_l + self.m
        self.sl_y = self.sl_x + self.n
        self.y0 = np.concatenate([
            np.log(mat.entries[self.sup_idx]), np.zeros(self.m), np.zeros(self.n), [0.0],
        ])

    def _mat(self, y):
        mm = np.zeros((self.m, self.n))
        mm[self.sup_idx] = np.exp(y[: self.sl_l])
        return mm

    def _rates(self, mm):
        r = mm.sum(axis=1)
        c = mm.sum(axis=0)
        s = float(r.sum())
        rate = 2.0 * s - self.m * r[:, None] - self.n * c[None, :]
        return s, r, c, rate

    def deriv(self, y):
        mm = self._mat(y)
        s, r, c, rate = self._rates(mm)
        dlog = 2.0 * rate[self.sup_idx]
        dx = s - self.m * r
        dy = s - self.n * c
        speed = math.sqrt(float(np.sum(rate * rate * mm)))
        return np.concatenate([dlog, dx, dy, [speed]])

    def measures(self, y):
        mm = self._mat(y)
        s, r, c, rate = self._rates(mm)
        delta = float(np.sum((s - self.m * r) ** 2) / self.m
                      + np.sum((s - self.n * c) ** 2) / self.n)
        speed2 = float(np.sum(rate * rate * mm))
        return s, delta, speed2

    def delta(self, y):
        return self.measures(y)[1]

    def logdets(self, y):
        return float(y[self.sl_l: self.sl_x].sum()), float(y[self.sl_x: self.sl_y].sum())

    def diag_scalings(self, y):
        return np.exp(np.concatenate([y[self.sl_l: self.sl_x], y[self.sl_x: self.sl_y]]))

    def transforms(self, y):
        # transforms of the UNSQUARED matrix: its squared entries reconstruct
        # as (X_ii Y_jj)^2 * M0_ij
        return (np.diag(np.exp(y[self.sl_l: self.sl_x])),
                np.diag(np.exp(y[self.sl_x: self.sl_y])))

    def movement(self, y):
        return float(y[-1])

    def obj(self, y):
        return NonNegMatrix(self._mat(y))

    def scaling_pair(self, y):
        x, yy = self.transforms(y)
        return make_scaling_pair(x, yy)


# ---------------------------------------------------------------------------
# integrator


def _rk4(system, y, h):
    k1 = system.deriv(y)
    k2 = system.deriv(y + 0.5 * h * k1)
    k3 = system.deriv(y + 0.5 * h * k2)
    k4 = system.deriv(y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


class _Recorder:
    """Sample collector with stride-doubling thinning."""

    def __init__(self, max_samples: int, record_states: bool, record_scalings: bool):
        self.max_samples = max(2, max_samples)
        self.rows = []
        self.states = [] if record_states else None
        self.scalings = [] if record_scalings else None
        self.stride = 1
        self.count = 0

    def add(self, system, y, t, force=False):
        self.count += 1
        if not force and (self.count - 1) % self.stride != 0:
            return
        s, delta, speed2 = system.measures(y)
        ldx, ldy = system.logdets(y)
        self.rows.append((t, s, delta, -2.0 * delta, -4.0 * speed2,
                          system.movement(y), ldx, ldy))
        if self.states is not None:
            self.states.append(FlowState(t, system.obj(y)))
        if self.scalings is not None:
            self.scalings.append(system.transforms(y))
        if len(self.rows) > self.max_samples:
            keep = self.rows[::2]
            self.rows = keep
            if self.states is not None:
                self.states = self.states[::2]
            if self.scalings is not None:
                self.scalings = self.scalings[::2]
            self.stride *= 2


def _integrate(system, target_delta, t_max, opts: FlowOptions):
    y = system.y0.copy()
    t = 0.0
    s0, delta0, speed2 = system.measures(y)
    if not (math.isfinite(s0) and math.isfinite(delta0)):
        raise FlowError("non-finite input")
    if target_delta is None:
        target_delta = 1e-12 * s0 * s0

    rec = _Recorder(opts.max_samples, opts.record_states, opts.record_scalings)
    rec.add(system, y, t)

    scalings = system.diag_scalings(y)
    scale_max = float(scalings.max()) if scalings is not None else math.nan
    scale_min = float(scalings.min()) if scalings is not None else math.nan

    status = "converged" if delta0 <= target_delta else None
    delta_cur = delta0

    if status is None:
        rate0 = 4.0 * speed2 / delta_cur if delta_cur > 0 else 1.0
        h = opts.h0 if opts.h0 is not None else 0.02 / max(rate0, 1e-9)
        h = min(h, t_max)
        if opts.fixed_step is not None:
            h = opts.fixed_step

    while status is None:
        h = min(h, t_max - t)
        if h <= 0.0:
            status = "t_max"
            break
        y_full = _rk4(system, y, h)
        y_half = _rk4(system, y, 0.5 * h)
        y_two = _rk4(system, y_half, 0.5 * h)
        if not np.all(np.isfinite(y_two)):
            raise FlowError(f"non-finite state at t={t:.6g}")
        err = float(np.max(np.abs(y_two - y_full))) / max(1.0, float(np.max(np.abs(y))))
        delta_new = system.delta(y_two)
        relchg = abs(delta_new - delta_cur) / delta_cur if delta_cur > 0 else 0.0

        accept = err <= opts.step_err_tol and relchg <= opts.rel_delta_step
        if opts.fixed_step is not None:
            accept = True
        if accept:
            y = y_two
            t += h
            delta_cur = delta_new
            rec.add(system, y, t)
            scalings = system.diag_scalings(y)
            if scalings is not None:
                scale_max = max(scale_max, float(scalings.max()))
                scale_min = min(scale_min, float(scalings.min()))
            if delta_cur <= target_delta:
                status = "converged"
            elif t >= t_max:
                status = "t_max"
            if opts.fixed_step is None:
                f_err = 0.9 * (opts.step_err_tol / max(err, 1e-300)) ** 0.2
                f_rel = 0.8 * opts.rel_delta_step / max(relchg, 1e-12)
                h *= max(0.2, min(2.0, f_err, f_rel))
        else:
            h *= 0.5
            if h < 1e-12 * max(1.0, t):
                raise FlowError(f"step size underflow at t={t:.6g}")

    # make sure the final point is retained even if thinning skipped it
    if rec.rows and rec.rows[-1][0] != t:
        rec.add(system, y, t, force=True)

    rows = np.array(rec.rows, dtype=float)
    kappa = scale_max / scale_min if scalings is not None and scale_min > 0 else math.nan
    traj = Trajectory(
        kind=system.kind,
        m=system.m,
        n=system.n,
        k=system.k,
        t=rows[:, 0], s=rows[:, 1], delta=rows[:, 2], ds_dt=rows[:, 3],
        dDelta_dt=rows[:, 4], movement=rows[:, 5], logdetX=rows[:, 6],
        logdetY=rows[:, 7],
        status=status,
        scaling=system.scaling_pair(y),
        kappa_ratio=kappa, scale_max=scale_max, scale_min=scale_min,
        states=rec.states, scalings=rec.scalings,
    )
    return system.obj(y), traj


def operator_flow(
    u0: OperatorTuple,
    target_delta: float | None = None,
    t_max: float = 1e6,
    opts: FlowOptions | None = None,
) -> tuple[OperatorTuple, Trajectory]:
    """Flow an operator tuple until delta <= target_delta (default
    1e-12 * s0^2) or t_max is reached."""
    return _integrate(_OperatorSystem(u0), target_delta, t_max, opts or FlowOptions())


def frame_flow(
    f0: Frame,
    target_delta: float | None = None,
    t_max: float = 1e6,
    opts: FlowOptions | None = None,
) -> tuple[Frame, Trajectory]:
    """Frame version of the flow; right scaling is diagonal throughout."""
    return _integrate(_FrameSystem(f0), target_delta, t_max, opts or FlowOptions())


def matrix_flow(
    m0sq: NonNegMatrix,
    target_delta: float | None = None,
    t_max: float = 1e6,
    opts: FlowOptions | None = None,
) -> tuple[NonNegMatrix, Trajectory]:
    """Flow the squared-entry matrix (the input IS the squared object)."""
    return _integrate(_MatrixSystem(m0sq), target_delta, t_max, opts or FlowOptions())


# ---------------------------------------------------------------------------
# rate monitoring


# constant in the weak-pseudorandom decay bound -ddelta/dt >= alpha n delta * KAPPA_RATE
KAPPA_RATE = 1.0 / 8192000.0
STRONG_RATE_DENOM = 32000.0
PSEUDORANDOM_BETA = 1e-9


@dataclass(frozen=True)
class RateReport:
    variant: str
    alpha: float
    ratios: np.ndarray            # (-dDelta/dt) / bound, per sample
    precondition_held: np.ndarray  # bool per sample
    violations: np.ndarray        # indices where the precondition held but ratio < 1
    ok: bool


def _strong_census(mat: np.ndarray, alpha: float) -> bool:
    m, n = mat.shape
    below = mat < alpha
    return bool(below.sum(axis=1).max(initial=0) <= n / 8000.0
                and below.sum(axis=0).max(initial=0) <= m / 8000.0)


def _weak_census(mat: np.ndarray, alpha: float, beta: float) -> bool:
    n = mat.shape[1]
    if mat.max(axis=0).min() < alpha:
        return False
    below = (mat < alpha).sum(axis=1)
    return bool(below.max(initial=0) <= beta * n + 1e-12)


def rate_monitor(traj: Trajectory, alpha: float, variant: str = "strong") -> RateReport:
    """Check the decay-rate inequality of a matrix flow sample by sample.

    strong: -ddelta/dt >= alpha m n delta / 32000, requiring every row to
    have at most n/8000 and every column at most m/8000 entries below alpha.
    weak: -ddelta/dt >= alpha n delta / 8192000, requiring every column to
    reach alpha and every row to have at most beta n entries below alpha.

    Violations are flagged only at samples where the precondition held,
    which needs per-sample states (run the flow with record_states=True).
    """
    if traj.kind != "matrix":
        raise ValueError("rate_monitor applies to matrix flows")
    if traj.states is None:
        raise ValueError("trajectory has no recorded states; rerun with record_states=True")
    if variant not in ("strong", "weak"):
        raise ValueError(f"unknown variant {variant!r}")

    m, n = traj.m, traj.n
    if variant == "strong":
        bound = alpha * m * n * traj.delta / STRONG_RATE_DENOM
    else:
        bound = alpha * n * traj.delta * KAPPA_RATE

    neg_rate = -traj.dDelta_dt
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(bound > 0, neg_rate / np.where(bound > 0, bound, 1.0), np.inf)

    held = np.zeros(len(traj.t), dtype=bool)
    for i, st in enumerate(traj.states):
        entries = st.obj.entries
        if variant == "strong":
            held[i] = _strong_census(entries, alpha)
        else:
            held[i] = _weak_census(entries, alpha, PSEUDORANDOM_BETA)

    viol = np.nonzero(held & (ratios < 1.0))[0]
    return RateReport(variant, alpha, ratios, held, viol, bool(viol.size == 0))
