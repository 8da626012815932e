import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm

from oracles import grid_min_gap
from stickslip.certificates import (
    PMatrix,
    VhatGains,
    audit_decrease,
    audit_stability,
    cumulative_v_squared,
    iss_envelope,
    lyap_V,
    lyap_Vhat,
    lyap_Vk,
    pick_vhat_gains,
    region_R,
    stability_constants,
    vhat_directional_check,
)
from stickslip.errors import AuditFailed, GainSynthesisFailed
from stickslip.model import CASE_A, CASE_B, deadzone, dist_to_attractor_x
from stickslip.modes import AffineFlow, system_matrix
from stickslip.simulator import STICK, SimOptions, simulate
from stickslip.verify import sample_outside_R, sample_R

coord = st.floats(-5, 5, allow_nan=False)


@pytest.fixture(scope="module")
def fig_a():
    return simulate([0.0, 1.0, 0.0], CASE_A, SimOptions(horizon=40.0, dense_output_dt=1e-3))


def test_V_examples():
    eps = 1e-6
    assert lyap_V((0, 0, eps), CASE_A) == pytest.approx(1 + 3 * eps**2, abs=1e-15)
    assert lyap_V((0, 0.5, 0), CASE_A) == 0.0


def test_V_gap_matches_grid_minimisation(preset, rng):
    xs = rng.uniform(-4, 4, (300, 3))
    xs[::3, 2] = 0.0
    s, v = xs[:, 0], xs[:, 2]
    quad_part = preset.k_v / preset.k_i * s**2 - 2 * s * v + preset.k_p * v**2
    ref = quad_part + np.array([grid_min_gap(x[1], x[2], preset.f_c) for x in xs])
    np.testing.assert_allclose(lyap_V(xs, preset), ref, atol=1e-12, rtol=1e-12)


def test_Vk_examples():
    assert lyap_Vk(0, (2.0, 123.0, 0.0), CASE_A) == pytest.approx(6.4)
    assert lyap_Vk(1, (0.0, 1.0, 0.0), CASE_A) == 0.0
    assert lyap_Vk(-1, (0.0, -1.0, 0.0), CASE_A) == 0.0
    with pytest.raises(ValueError):
        lyap_Vk(2, (0, 0, 0), CASE_A)


def test_P_matrix_and_decrease_identity(preset):
    P = PMatrix.from_params(preset).matrix
    assert np.all(np.linalg.eigvalsh(P) > 0)
    A = system_matrix(preset)
    c = 2 * (preset.k_v * preset.k_p - preset.k_i)
    # A^T P + P A = -c e3 e3^T is what makes V_k drop at rate c v^2
    np.testing.assert_allclose(A.T @ P + P @ A, np.diag([0, 0, -c]), atol=1e-12)


@given(st.tuples(coord, coord, coord), st.floats(0.01, 10), st.sampled_from([1, -1]))
def test_slip_energy_rate_matches_finite_difference(xi0, t, mode):
    flow = AffineFlow.for_mode(mode, CASE_B)
    c = 2 * (CASE_B.k_v * CASE_B.k_p - CASE_B.k_i)
    h = 1e-4 * max(t, 1.0)
    pts = flow.states(xi0, np.array([t - h, t, t + h]))
    vals = lyap_Vk(mode, pts, CASE_B)
    fd = (vals[2] - vals[0]) / (2 * h)
    exact = -c * pts[1, 2] ** 2
    assert abs(fd - exact) <= 1e-6 * (1 + abs(exact) + vals[1])


def test_Vhat_examples():
    g = VhatGains(1.0, 1.0, 1.01, 3.03)
    assert lyap_Vhat((0, 0.7, 0), CASE_A, g) == 0.0
    assert lyap_Vhat((1, 0, 1), CASE_A, g) == pytest.approx(0.5 + 1.01 + 0.5 * 3.03)


@given(st.tuples(coord, coord, coord))
def test_Vhat_is_quadratic_form_of_magnitudes(x):
    g = pick_vhat_gains(CASE_B)
    m = np.array([abs(x[0]), abs(deadzone(x[1], CASE_B.f_c)), abs(x[2])])
    assert lyap_Vhat(x, CASE_B, g) == pytest.approx(0.5 * m @ g.matrix @ m, rel=1e-12, abs=1e-14)


def test_gain_synthesis_examples():
    a = pick_vhat_gains(CASE_A)
    assert (a.k1, a.k2) == (1.0, 1.0)
    assert a.k3 == pytest.approx(1.01) and a.k4 == pytest.approx(3.03)
    b = pick_vhat_gains(CASE_B)
    assert b.k3 == pytest.approx(1.01) and b.k4 == pytest.approx(1.01**3)
    with pytest.raises(GainSynthesisFailed):
        VhatGains(1.0, 1.0, 2.0, 3.0)
    with pytest.raises(ValueError):
        pick_vhat_gains(CASE_A, margin=1.0)


@given(
    st.floats(0.05, 10), st.floats(0.05, 10), st.floats(0.05, 10), st.floats(1.001, 2.0)
)
def test_synthesised_gains_always_valid(k_p, k_v, k_i, margin):
    from stickslip.model import Params

    if not k_v * k_p > k_i * 1.01:
        return
    params = Params(k_p, k_v, k_i, 1.0)
    g = pick_vhat_gains(params, margin)
    assert g.satisfies(params) and np.all(np.linalg.eigvalsh(g.matrix) > 0)


def test_region_examples():
    assert region_R((3.0, -9.0, 0.0), CASE_A)
    assert region_R((0.0, 2.0, 1.0), CASE_A)
    assert not region_R((0.0, 0.0, 1.0), CASE_A)


def test_constants_examples():
    a, b = stability_constants(CASE_A), stability_constants(CASE_B)
    assert a.c_decrease == pytest.approx(30.4) and b.c_decrease == pytest.approx(1.82)
    for k in (a, b):
        assert k.c1 <= k.c2 and k.chat1 <= k.chat2 and k.stab_gain >= 1
        assert k.stab_gain == pytest.approx(math.sqrt(k.c2 * k.chat2 / (k.c1 * k.chat1)))
    assert stability_constants(CASE_A, delta_l=0.5).delta_l == 0.5


def test_lower_sandwich_everywhere(preset, rng):
    k = stability_constants(preset)
    xs = rng.uniform(-5, 5, (100_000, 3))
    xs[: 20_000, 2] = 0.0
    gap = lyap_V(xs, preset) - k.c1 * dist_to_attractor_x(xs, preset) ** 2
    assert gap.min() >= -1e-12


def test_region_samplers(preset, rng):
    assert not region_R(sample_outside_R(preset, rng, 5000), preset).any()
    assert region_R(sample_R(preset, rng, 5000), preset).all()


def test_vhat_directional_examples():
    g = pick_vhat_gains(CASE_A)
    assert vhat_directional_check((0.0, 0.0, 1.0), CASE_A, g) <= 0
    with pytest.raises(ValueError):
        vhat_directional_check((0.0, 2.0, 1.0), CASE_A, g)


def test_vhat_directional_matches_finite_difference(preset, rng):
    g = pick_vhat_gains(preset)
    A, b = system_matrix(preset), np.array([0.0, 0.0, preset.f_c])
    xs = sample_outside_R(preset, rng, 400)
    xs = xs[(np.abs(xs[:, 0]) > 1e-2) & (np.abs(np.abs(xs[:, 1]) - preset.f_c) > 1e-2)]
    h = 1e-7
    for x in xs:
        f = A @ x - np.sign(x[2]) * b
        fd = (lyap_Vhat(x + h * f, preset, g) - lyap_Vhat(x - h * f, preset, g)) / (2 * h)
        exact = vhat_directional_check(x, preset, g)
        assert abs(fd - exact) <= 1e-5 * (1 + abs(exact) + np.linalg.norm(f) ** 2)


def test_iss_envelope_bounds_the_propagator(preset):
    env = iss_envelope(preset)
    Ad = np.array([[0, 1, 0], [0, 0, 1], [-preset.k_i, -preset.k_p, -preset.k_v]])
    ts = np.linspace(0, 60, 3001)
    norms = np.array([np.linalg.norm(expm(Ad * t), 2) for t in ts])
    assert np.all(norms <= env.transient_gain * np.exp(-env.lambda_iss * ts) * (1 + 1e-9))
    # forced gain against a midpoint Riemann sum to a long horizon
    dt = 1e-3
    mids = np.arange(dt / 2, 150, dt)
    w, V = np.linalg.eig(Ad)
    coef = np.linalg.solve(V, [0, 0, 1.0])
    cols = np.real(V @ (coef[:, None] * np.exp(np.outer(w, mids))))
    riemann = np.sum(np.linalg.norm(cols, axis=0)) * dt
    assert env.forced_gain == pytest.approx(riemann, rel=1e-5)
    assert env.kappa1 == pytest.approx(math.sqrt(2) * env.c_iss)
    assert env.kappa3 == env.c_iss


def test_iss_constants_case_a():
    env = iss_envelope(CASE_A)
    assert env.lambda_iss == pytest.approx(0.99 * 0.19418, rel=1e-3)
    assert env.kappa2 == pytest.approx(env.c_iss * (1 + math.sqrt(2) / 4))


def test_settle_time():
    env = iss_envelope(CASE_A)
    assert env.settle_time(1e-6, 0.1) == 0.0
    s = 10.0
    assert env.settle_time(s, 1.0) == pytest.approx(math.log(2 * env.kappa1 * s) / env.lambda_iss)


def test_equilibrium_audits_trivial():
    tr = simulate([0.1, 0.0, 0.0], CASE_A, SimOptions(horizon=5.0))
    dec = audit_decrease(tr, CASE_A)
    stab = audit_stability(tr, CASE_A)
    assert dec.passed and stab.passed
    assert dec.details["V0"] == 0 == dec.details["V_end"]
    assert stab.details["dist0"] == 0 == stab.details["sup_dist"]


def test_staircase_on_case_a(fig_a):
    report = audit_decrease(fig_a, CASE_A)
    assert report.passed
    V = lyap_V(fig_a.x, CASE_A)
    labels = fig_a.phase_labels()
    for ph in fig_a.phases:
        if ph.kind == STICK:
            m = (fig_a.times > ph.t_start) & (fig_a.times < ph.t_end)
            assert np.ptp(V[m]) <= 1e-12 * (1 + V[m].max())
    slip = labels != STICK
    assert np.all(np.diff(V[slip]) <= 1e-9)
    assert report.jumps and all(d <= 0 for _, d in report.jumps)


def test_cumulative_integral_matches_closed_form():
    # a single slip arc from rest: compare with the energy identity
    z0 = np.array([-5.0, 0.0, 1.0])
    tr = simulate(z0, CASE_A, SimOptions(horizon=1.5, dense_output_dt=1e-3))
    assert len(tr.segments) == 1
    Vk = lyap_Vk(1, tr.x, CASE_A)
    c = 2 * (CASE_A.k_v * CASE_A.k_p - CASE_A.k_i)
    np.testing.assert_allclose(Vk[0] - Vk, c * cumulative_v_squared(tr), atol=1e-9 * Vk[0])


def test_stick_entry_jumps_never_positive(preset, rng):
    for _ in range(25):
        z0 = rng.uniform(-5, 5, 3)
        tr = simulate(z0, preset, SimOptions(horizon=40.0, dense_output_dt=1e-3))
        report = audit_decrease(tr, preset)
        assert report.passed, report.to_dict()
        assert all(d <= 1e-12 for _, d in report.jumps)


def test_sigma_shrinks_between_sticks(rng):
    for _ in range(10):
        tr = simulate(rng.uniform(-5, 5, 3), CASE_A, SimOptions(horizon=60.0))
        entries = [
            abs(tr.x[np.searchsorted(tr.times, ph.t_start), 0])
            for ph in tr.phases
            if ph.kind == STICK and ph.t_start > 0
        ]
        assert all(a > b for a, b in zip(entries, entries[1:]))


def test_audits_reject_time_reversal(fig_a):
    reverse = replace(
        fig_a, x=fig_a.x[::-1].copy(), z=fig_a.z[::-1].copy(), source="reversed"
    )
    dec = audit_decrease(reverse, CASE_A)
    assert not dec.passed and dec.location[0] < dec.location[1]
    with pytest.raises(AuditFailed) as info:
        audit_decrease(reverse, CASE_A, raise_on_fail=True)
    assert info.value.report is not None
    with pytest.raises(AuditFailed):
        audit_stability(reverse, CASE_A, raise_on_fail=True)


def test_report_serialises(fig_a):
    d = audit_stability(fig_a, CASE_A).to_dict()
    assert d["passed"] is True and d["n_checked"] == fig_a.times.size
