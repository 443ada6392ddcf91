"""Continuous scaling flows: identities, monitors, scaling accumulation."""

import io

import numpy as np
import pytest

from frameflow import (
    Frame,
    NonNegMatrix,
    delta_of,
    dist,
    frame_to_operator,
    size_of,
)
from frameflow.capacity import matrix_capacity
from frameflow.checks import finite_difference, validate_trace_csv
from frameflow.dynamics import (
    CSV_HEADER,
    FlowOptions,
    frame_flow,
    matrix_flow,
    operator_flow,
    rate_monitor,
    trajectory_csv,
    validation_options,
)
from frameflow.generate import (
    harmonic_frame,
    near_parseval_frame,
    random_matrix,
    random_operator,
)


def _near_uniform_matrix(m, n, seed, spread=0.3):
    rng = np.random.default_rng(seed)
    entries = (1.0 + spread * rng.uniform(-1.0, 1.0, (m, n))) / (m * n)
    return NonNegMatrix(entries)


# ---------------------------------------------------------------------------
# fixed points and monotonicity


def test_balanced_inputs_are_fixed_points():
    fr = harmonic_frame(3, 6)
    final, traj = frame_flow(fr)
    assert traj.status == "converged"
    assert traj.t[-1] == 0.0
    assert traj.movement[-1] == 0.0
    assert dist(fr, final) == 0.0

    a = NonNegMatrix(np.full((4, 4), 0.25))
    _, traj = matrix_flow(a)
    assert traj.t.shape == (1,)


def test_s_and_delta_nonincreasing():
    u = random_operator(5, 3, 5, 17)
    _, traj = operator_flow(u)
    assert traj.status == "converged"
    assert np.all(np.diff(traj.s) <= 1e-12)
    assert np.all(np.diff(traj.delta) <= 1e-12)
    assert np.all(traj.delta >= 0.0)


def test_default_target_delta():
    a = _near_uniform_matrix(3, 4, 3)
    s0 = size_of(a)
    final, traj = matrix_flow(a)
    assert traj.status == "converged"
    assert delta_of(final) <= 1e-12 * s0 * s0


# ---------------------------------------------------------------------------
# derivative identities (finite differences against analytic monitors)


@pytest.mark.parametrize(
    "make",
    [
        lambda: frame_to_operator(near_parseval_frame(3, 8, 0.05, 0)[0]),
        lambda: near_parseval_frame(3, 8, 0.05, 1)[0],
        lambda: _near_uniform_matrix(3, 4, 2),
    ],
    ids=["operator", "frame", "matrix"],
)
def test_flow_derivative_identities(make):
    obj = make()
    flow = {
        "OperatorTuple": operator_flow,
        "Frame": frame_flow,
        "NonNegMatrix": matrix_flow,
    }[type(obj).__name__]
    _, traj = flow(obj, opts=validation_options())
    delta_in = traj.delta[1:-1]
    scale = np.maximum(1.0, delta_in)

    fd_s = finite_difference(traj.t, traj.s)
    assert np.max(np.abs(fd_s + 2.0 * delta_in) / scale) <= 1e-5

    fd_d = finite_difference(traj.t, traj.delta)
    assert np.max(np.abs(fd_d - traj.dDelta_dt[1:-1]) / scale) <= 1e-4


def test_trace_of_drift_matrices_vanishes():
    fr, _ = near_parseval_frame(3, 7, 0.02, 5)
    _, traj = frame_flow(fr, opts=FlowOptions(record_states=True))
    for state in traj.states[:: max(1, len(traj.states) // 7)]:
        v = state.obj.vectors
        s = float(np.einsum("nd,nd->", v, v))
        c_m = s * np.eye(3) - 3 * (v.T @ v)
        c_n = s - 7 * np.einsum("nd,nd->n", v, v)
        assert abs(np.trace(c_m)) <= 1e-9 * s
        assert abs(c_n.sum()) <= 1e-9 * s


# ---------------------------------------------------------------------------
# scaling accumulation


def test_unit_determinant_scalings():
    fr, _ = near_parseval_frame(3, 9, 0.05, 8)
    _, traj = frame_flow(fr)
    assert abs(traj.logdetX[-1]) <= 1e-6
    assert abs(traj.logdetY[-1]) <= 1e-6

    a = _near_uniform_matrix(4, 5, 9)
    _, traj = matrix_flow(a)
    # sum of accumulated row/column exponents is the log-determinant
    assert np.max(np.abs(traj.logdetX)) <= 1e-8
    assert np.max(np.abs(traj.logdetY)) <= 1e-8


def test_scaling_reconstruction_along_trajectory():
    u = random_operator(4, 3, 4, 12)
    opts = FlowOptions(record_states=True, record_scalings=True)
    _, traj = operator_flow(u, opts=opts)
    norm0 = np.sqrt(size_of(u))
    for state, (x, y) in list(zip(traj.states, traj.scalings))[:: max(1, len(traj.states) // 9)]:
        rebuilt = np.einsum("ab,kbc,cd->kad", x, u.mats, y)
        err = np.sqrt(np.sum((rebuilt - state.obj.mats) ** 2))
        assert err <= 1e-7 * norm0


def test_matrix_flow_support_preserved():
    entries = np.array([[0.4, 0.0, 0.2], [0.0, 0.3, 0.1], [0.2, 0.1, 0.0]])
    final, _ = matrix_flow(NonNegMatrix(entries), t_max=5.0)
    assert np.all((final.entries == 0.0) == (entries == 0.0))
    assert np.all(final.entries[entries > 0] > 0.0)


def test_kappa_ratio_reported_for_diagonal_flows():
    a = _near_uniform_matrix(3, 5, 14)
    _, traj = matrix_flow(a)
    assert np.isfinite(traj.kappa_ratio)
    assert traj.kappa_ratio >= 1.0
    assert traj.scale_max >= traj.scale_min > 0.0


# ---------------------------------------------------------------------------
# embedding equivalence


def test_frame_flow_matches_embedded_operator_flow():
    fr, _ = near_parseval_frame(3, 6, 0.05, 23)
    opts = FlowOptions(fixed_step=0.02, max_samples=100_000, record_states=True)
    _, ftraj = frame_flow(fr, target_delta=1e-10, t_max=40.0, opts=opts)
    _, otraj = operator_flow(
        frame_to_operator(fr), target_delta=1e-10, t_max=40.0, opts=opts
    )
    assert ftraj.t.shape == otraj.t.shape
    np.testing.assert_array_equal(ftraj.t, otraj.t)
    np.testing.assert_allclose(ftraj.s, otraj.s, rtol=0, atol=1e-9)
    np.testing.assert_allclose(ftraj.delta, otraj.delta, rtol=0, atol=1e-9)
    for fs, os_ in zip(ftraj.states[::10], otraj.states[::10]):
        emb = frame_to_operator(fs.obj)
        assert dist(emb, os_.obj) <= 1e-18


# ---------------------------------------------------------------------------
# capacity along the flow


def test_capacity_conserved_matrix_flow():
    a = _near_uniform_matrix(4, 4, 6)
    cap0 = matrix_capacity(a).value
    final, _ = matrix_flow(a)
    cap1 = matrix_capacity(final).value
    assert abs(cap1 - cap0) <= 1e-5 * cap0


def test_total_movement_bound():
    # coarse empirical form of the movement analysis on a near-balanced input
    u = frame_to_operator(near_parseval_frame(3, 8, 0.01, 3)[0])
    delta0 = delta_of(u)
    final, traj = operator_flow(u)
    assert dist(u, final) <= 100.0 * u.m * u.n * np.sqrt(delta0)
    assert traj.movement[-1] ** 2 <= 100.0 * u.m * u.n * np.sqrt(delta0)


# ---------------------------------------------------------------------------
# trajectory recording / export


def test_sample_thinning_keeps_endpoints():
    a = _near_uniform_matrix(3, 4, 30)
    _, dense = matrix_flow(a, opts=FlowOptions(max_samples=100_000))
    _, thin = matrix_flow(a, opts=FlowOptions(max_samples=64))
    assert len(thin.t) <= 65  # cap, plus the force-retained endpoint
    assert thin.t[0] == dense.t[0] == 0.0
    assert thin.t[-1] == dense.t[-1]
    assert np.all(np.diff(thin.t) > 0)


def test_csv_layout_and_revalidation():
    fr, _ = near_parseval_frame(3, 7, 0.03, 10)
    _, traj = frame_flow(fr, opts=validation_options())
    text = trajectory_csv(traj)
    lines = text.strip().split("\n")
    assert lines[0] == CSV_HEADER
    parsed = np.loadtxt(io.StringIO(text), delimiter=",", skiprows=1)
    assert parsed.shape == (len(traj.t), 8)
    np.testing.assert_allclose(parsed[:, 0], traj.t, rtol=0, atol=0)

    results = validate_trace_csv(text)
    assert results and all(r.ok for r in results), [r.detail for r in results if not r.ok]


def test_t_max_reported():
    a = _near_uniform_matrix(3, 4, 44)
    _, traj = matrix_flow(a, target_delta=1e-30, t_max=0.5)
    assert traj.status == "t_max"
    assert traj.t[-1] == pytest.approx(0.5, abs=1e-9)


# ---------------------------------------------------------------------------
# rate monitors


def _pseudorandom_instance(m, n, seed):
    rng = np.random.default_rng(seed)
    entries = (1.0 + 0.25 * rng.uniform(-1.0, 1.0, (m, n))) / (m * n)
    a = NonNegMatrix(entries)
    alpha = 0.6 / (m * n)  # every entry clears this
    assert entries.min() >= alpha
    return a, alpha


def test_rate_monitor_strong_all_samples():
    a, alpha = _pseudorandom_instance(4, 8, 70)
    _, traj = matrix_flow(a, opts=FlowOptions(record_states=True))
    report = rate_monitor(traj, alpha, variant="strong")
    assert report.ok
    assert report.violations.size == 0
    assert np.all(report.precondition_held)
    # -dDelta/dt >= alpha m n Delta / 32000 with real margin, not rounding luck
    assert report.ratios.min() >= 1.0


def test_rate_monitor_weak_envelope():
    a, alpha = _pseudorandom_instance(6, 12, 71)
    _, traj = matrix_flow(a, opts=FlowOptions(record_states=True))
    report = rate_monitor(traj, alpha, variant="weak")
    assert report.ok
    envelope = traj.delta[0] * np.exp(-alpha * traj.n * traj.t / 8192000.0)
    assert np.all(traj.delta <= envelope * (1.0 + 1e-12))


def test_rate_monitor_balanced_input_trivial():
    a = NonNegMatrix(np.full((3, 3), 1.0 / 9.0))
    _, traj = matrix_flow(a, opts=FlowOptions(record_states=True))
    report = rate_monitor(traj, alpha=0.05, variant="strong")
    assert report.ok
