import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stickslip.errors import DomainMismatch, EventOverflow, SelectionOutOfGraph
from stickslip.model import CASE_A, CASE_B, to_x
from stickslip.modes import AffineFlow, slip_exit_time
from stickslip.simulator import (
    STICK,
    SimOptions,
    StribeckSelection,
    detect_phases,
    simulate,
    simulate_perturbed,
    simulate_regularized,
    trajectory_diff,
)

Z0 = np.array([0.0, 1.0, 0.0])
box = st.floats(-5, 5, allow_nan=False)


@pytest.fixture(scope="module")
def fig_a():
    return simulate(Z0, CASE_A, SimOptions(horizon=40.0))


@pytest.fixture(scope="module")
def fig_b():
    return simulate(Z0, CASE_B, SimOptions(horizon=60.0))


def stick_entries(traj):
    out = []
    for ph in traj.phases:
        if ph.kind == STICK and ph.t_start > 0:
            i = np.searchsorted(traj.times, ph.t_start)
            out.append((ph, traj.z[i]))
    return out


def test_equilibrium_is_constant(preset):
    z0 = np.array([0.5 * preset.f_c / preset.k_i, 0.0, 0.0])
    tr = simulate(z0, preset, SimOptions(horizon=10.0))
    assert len(tr.phases) == 1 and tr.phases[0].kind == STICK
    assert tr.phases[0].t_end == 10.0
    np.testing.assert_array_equal(tr.z, np.broadcast_to(z0, tr.z.shape))


def test_case_a_ramps_flatten_and_lengthen(fig_a):
    entries = stick_entries(fig_a)
    assert len(entries) >= 4
    slopes = [abs(z[1]) for _, z in entries]
    # the last stick is cut by the horizon
    durations = [ph.duration for ph, _ in entries[:-1]]
    assert all(a > b for a, b in zip(slopes, slopes[1:]))
    assert all(a < b for a, b in zip(durations, durations[1:]))
    tail = fig_a.z[fig_a.times > 30]
    assert np.all(np.abs(tail[:, 0]) <= 0.25 + 0.05)
    assert abs(fig_a.z[-1, 1]) < 0.05 and fig_a.z[-1, 2] == 0.0


def test_case_b_single_stick_then_monotone(fig_b):
    kinds = [ph.kind for ph in fig_b.phases]
    assert kinds.count(STICK) == 1
    after = fig_b.z[fig_b.times > fig_b.phases[kinds.index(STICK)].t_end]
    assert np.all(after[:, 2] < 0) or np.all(after[:, 2] > 0)
    assert abs(abs(fig_b.z[-1, 0]) - CASE_B.f_c / CASE_B.k_i) < 1e-3


@settings(max_examples=25)
@given(st.tuples(box, box, box), st.sampled_from(["case_a", "case_b"]))
def test_trajectory_invariants(z0, name):
    params = CASE_A if name == "case_a" else CASE_B
    tr = simulate(np.array(z0), params, SimOptions(horizon=30.0))
    for a, b in tr.segments:
        assert np.all(np.diff(tr.times[a : b + 1]) > 0)
    # phases tile [0, horizon]
    assert tr.phases[0].t_start == 0.0 and tr.phases[-1].t_end == 30.0
    for p, q in zip(tr.phases, tr.phases[1:]):
        assert p.t_end == q.t_start and p.kind != q.kind
    for a, b in tr.segments:
        mode = tr.modes[b]
        v = tr.z[a : b + 1, 2]
        inner = v[1:-1]
        if mode == 0:
            assert np.all(v == 0)
            strip = np.abs(params.k_i * tr.z[a : b + 1, 0] + params.k_p * tr.z[a : b + 1, 1])
            assert np.all(strip <= params.f_c + 1e-8)
        else:
            assert np.all(mode * inner > -1e-10)


def test_detect_phases_reproduces_event_phases(fig_a, fig_b):
    for tr in (fig_a, fig_b):
        assert detect_phases(tr, tr.params, tr.v_tol) == tr.phases


def test_detect_phases_on_equilibrium():
    tr = simulate([0.1, 0.0, 0.0], CASE_A, SimOptions(horizon=5.0))
    phases = detect_phases(tr, CASE_A, 1e-10)
    assert len(phases) == 1 and phases[0].kind == STICK


def test_regularized_interior_drift():
    eps = 1e-4
    z0 = np.array([0.1, 0.0, 0.0])
    assert abs(z0[0]) < CASE_A.f_c / CASE_A.k_i * (1 - eps * CASE_A.k_i / CASE_A.f_c)
    short = simulate_regularized(z0, CASE_A, eps, 1e-5, 1.0)
    assert np.max(np.linalg.norm(short.z - z0, axis=1)) <= 10 * eps
    # inside the band v ~ -eps u / f_c, so e_i creeps like eps k_i e_0 t^2 / (2 f_c)
    long = simulate_regularized(z0, CASE_A, eps, 1e-5, 10.0)
    creep = z0[0] - long.z[:, 0]
    law = eps * CASE_A.k_i * z0[0] * long.times**2 / (2 * CASE_A.f_c)
    np.testing.assert_allclose(creep[100:], law[100:], rtol=0.05)
    assert np.max(np.abs(long.z[:, 2])) <= eps


def test_regularized_single_slip_arc_matches_closed_form():
    z0 = np.array([-5.0, 0.0, 1.0])
    x0 = to_x(z0, CASE_A)
    assert slip_exit_time(1, x0, CASE_A, 10.0) > 1.0
    tr = simulate_regularized(z0, CASE_A, 1e-4, 1e-5, 1.0)
    exact = AffineFlow.for_mode(1, CASE_A).states(x0, tr.times)
    got = np.asarray(to_x(tr.z, CASE_A))
    assert np.max(np.abs(got - exact)) <= 1e-6


def test_regularized_matches_exact_phase_structure(fig_a):
    reg = simulate_regularized(Z0, CASE_A, 1e-4, 1e-5, 40.0, dense_output_dt=1e-3)
    assert [p.kind for p in reg.phases] == [p.kind for p in fig_a.phases]
    # early boundaries agree to the smoothing width plus one output step;
    # later stick exits are amplified by 1/|s| and are only checked loosely
    for p, q in zip(fig_a.phases[:4], reg.phases[:4]):
        assert abs(p.t_end - q.t_end) <= 10 * 1e-4 + 1e-3
    for p, q in zip(fig_a.phases, reg.phases):
        assert abs(p.t_end - q.t_end) <= 0.1


def test_oracle_converges(fig_a):
    grid = np.linspace(0, 40, 4001)
    coarse = trajectory_diff(fig_a, simulate_regularized(Z0, CASE_A, 1e-3, 1e-4, 40.0), grid)
    fine = trajectory_diff(fig_a, simulate_regularized(Z0, CASE_A, 1e-4, 1e-5, 40.0), grid)
    assert fine <= 5e-3 and fine < coarse


def test_perturbed_with_zero_rho_is_regularized():
    sel = StribeckSelection(CASE_A.f_c, 0.1)
    a = simulate_perturbed(Z0, CASE_A, 0.0, sel, SimOptions(horizon=5.0), 1e-4, 1e-5)
    b = simulate_regularized(Z0, CASE_A, 1e-4, 1e-5, 5.0)
    np.testing.assert_array_equal(a.z, b.z)
    np.testing.assert_array_equal(a.times, b.times)


def test_stribeck_graph_check():
    StribeckSelection(1.25, 0.1).check_graph(1.0, 0.3)
    with pytest.raises(SelectionOutOfGraph):
        StribeckSelection(1.25, 0.1).check_graph(1.0, 0.1)
    with pytest.raises(SelectionOutOfGraph):
        StribeckSelection(0.9, 0.1).check_graph(1.0, 0.3)
    with pytest.raises(SelectionOutOfGraph):
        simulate_perturbed(Z0, CASE_A, 0.0, StribeckSelection(1.1, 0.1))
    with pytest.raises(ValueError):
        StribeckSelection(1.1, 0.0)


@given(st.floats(0.0, 0.5), st.floats(0.01, 1.0))
def test_stribeck_peak_inside_inflated_graph(rho, v_s):
    # the peak value f_c (1 + rho) is the largest admissible static friction
    StribeckSelection(CASE_A.f_c * (1 + rho), v_s).check_graph(CASE_A.f_c, rho)


def test_hunting_stays_bounded():
    sel = StribeckSelection(1.25, 0.1)
    tr = simulate_perturbed(Z0, CASE_A, 0.3, sel, SimOptions(horizon=20.0), 1e-4, 2e-5)
    assert np.all(np.isfinite(tr.z)) and np.max(np.abs(tr.z)) < 10


def test_trajectory_diff(fig_a):
    grid = np.linspace(0, 40, 401)
    assert trajectory_diff(fig_a, fig_a, grid) == 0.0
    tight = simulate(Z0, CASE_A, SimOptions(horizon=40.0, event_tol=1e-12))
    assert trajectory_diff(fig_a, tight, grid) <= 1e-8
    with pytest.raises(DomainMismatch):
        trajectory_diff(fig_a, fig_a, np.linspace(0, 41, 10))


def test_event_overflow():
    with pytest.raises(EventOverflow):
        simulate(Z0, CASE_A, SimOptions(horizon=40.0, max_events=2))


def test_options_validation():
    for bad in ({"horizon": 0.0}, {"event_tol": -1.0}, {"dense_output_dt": 0.0}):
        with pytest.raises(ValueError):
            SimOptions(**bad)
    with pytest.raises(ValueError):
        simulate([math.nan, 0, 0], CASE_A)


def test_stick_law_on_every_phase(fig_a):
    p = CASE_A
    for ph, z_entry in stick_entries(fig_a):
        m = (fig_a.times >= ph.t_start) & (fig_a.times <= ph.t_end)
        t, z = fig_a.times[m], fig_a.z[m]
        ramp = z_entry[0] + z_entry[1] * (t - ph.t_start)
        assert np.max(np.abs(z[:, 0] - ramp)) <= 1e-9
        assert np.all(z[:, 2] == 0)
        if ph.t_end < fig_a.horizon:
            assert abs(abs(p.k_i * z[-1, 0] + p.k_p * z[-1, 1]) - p.f_c) <= 1e-8


def test_case_a_converges_like_inverse_time():
    # stick k lasts 2 f_c / (k_i |s_k|) and |s| contracts by r per cycle,
    # so |s| t at stick entry tends to (2 f_c / k_i) r / (1 - r)
    tr = simulate(Z0, CASE_A, SimOptions(horizon=1000.0, dense_output_dt=0.1))
    entries = stick_entries(tr)
    s = np.array([abs(z[1]) for _, z in entries])
    t = np.array([ph.t_start for ph, _ in entries])
    r = s[-1] / s[-2]
    limit = 2 * CASE_A.f_c / CASE_A.k_i * r / (1 - r)
    assert 0.3 < r < 0.6
    assert s[-1] * t[-1] == pytest.approx(limit, rel=0.05)
    assert np.all(s * t > 0.4)
