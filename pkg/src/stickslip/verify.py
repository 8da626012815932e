"""One-shot battery of the package's invariant checks on both presets."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .certificates import (
    PMatrix,
    audit_decrease,
    audit_stability,
    lyap_V,
    lyap_Vhat,
    lyap_Vk,
    pick_vhat_gains,
    region_R,
    stability_constants,
    vhat_directional_check,
)
from .model import PRESETS, Params, dist_to_attractor_x, dist_to_attractor_z
from .modes import (
    AffineFlow,
    Mode,
    classify_mode,
    slip_exit_time,
    stick_exit_time,
    system_matrix,
)
from .simulator import (
    SimOptions,
    StribeckSelection,
    simulate,
    simulate_perturbed,
    simulate_regularized,
    trajectory_diff,
)

TABLE_ROOTS = {
    "case_a": np.array([-6.01, -0.19 - 0.79j, -0.19 + 0.79j]),
    "case_b": np.array([-0.8, -0.5, -0.2]),
}
ROW_MODES = {
    "i": 1, "ii": 1, "iii": 1, "iv": 0, "v": 0, "vi": 0,
    "vii": 0, "viii": 0, "ix": -1, "x": -1, "xi": -1,
}


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


def table_row_states(row: str, params: Params, rng: np.random.Generator, n: int) -> np.ndarray:
    """``n`` random states satisfying the defining conditions of one table row."""
    f_c = params.f_c
    sigma = rng.uniform(0.05, 5.0, n) * rng.choice([-1.0, 1.0], n)
    mag = rng.uniform(0.05, 5.0, n)
    phi = rng.uniform(-5.0, 5.0, n)
    v = np.zeros(n)
    if row == "i":
        v = mag
    elif row == "xi":
        v = -mag
    elif row == "ii":
        phi = f_c + mag
    elif row == "x":
        phi = -f_c - mag
    elif row in ("iii", "iv", "v"):
        phi = np.full(n, f_c)
        sigma = {"iii": np.abs(sigma), "iv": np.zeros(n), "v": -np.abs(sigma)}[row]
    elif row in ("vii", "viii", "ix"):
        phi = np.full(n, -f_c)
        sigma = {"vii": np.abs(sigma), "viii": np.zeros(n), "ix": -np.abs(sigma)}[row]
    elif row == "vi":
        phi = rng.uniform(-0.999, 0.999, n) * f_c
    else:
        raise ValueError(f"unknown row {row!r}")
    return np.column_stack([sigma, phi, v])


def _flow(mode: int, x0, ts, params: Params) -> np.ndarray:
    return AffineFlow.for_mode(mode, params).states(x0, np.asarray(ts, dtype=float))


def check_roots() -> CheckResult:
    worst = 0.0
    for name, ref in TABLE_ROOTS.items():
        roots = PRESETS[name].roots
        worst = max(worst, float(np.max(np.abs(np.round(roots, 2) - ref))))
    return CheckResult("preset roots", worst < 1e-9, f"max rounded deviation {worst:.2e}")


def check_mode_table(params: Params, rng, n: int = 20) -> CheckResult:
    """Right-derivative in F(x) and ``V == V_k`` just after every table row."""
    A = system_matrix(params)
    h = 1e-7
    worst_incl, worst_v = 0.0, 0.0
    for row, expected in ROW_MODES.items():
        for x0 in table_row_states(row, params, rng, n):
            mode = int(classify_mode(x0, params))
            if mode != expected:
                return CheckResult("mode table", False, f"row {row}: {x0} -> {mode}")
            pts = _flow(mode, x0, [0.0, h], params)
            d = (pts[1] - pts[0]) / h
            drift = A @ x0
            g = (drift[2] - d[2]) / params.f_c
            scale = 1.0 + np.abs(drift).max()
            off = max(abs(d[0] - drift[0]), abs(d[1] - drift[1]), max(abs(g) - 1.0, 0.0))
            worst_incl = max(worst_incl, off / scale)
            if mode == Mode.STICK:
                T = stick_exit_time(x0, params)
            else:
                T = slip_exit_time(mode, x0, params, 1e-3) or 1e-3
            ts = np.linspace(min(T, 1e-3) * 0.1, min(T, 1e-3), 10)
            xs = _flow(mode, x0, ts, params)
            gap = np.abs(lyap_V(xs, params) - lyap_Vk(mode, xs, params))
            worst_v = max(worst_v, float(np.max(gap / (1.0 + lyap_Vk(mode, xs, params)))))
    ok = worst_incl < 1e-5 and worst_v < 1e-10
    return CheckResult(
        "mode table", ok, f"inclusion defect {worst_incl:.1e}, |V - V_k| {worst_v:.1e}"
    )


def check_oracle(params: Params, horizon: float = 40.0) -> CheckResult:
    z0 = np.array([0.0, 1.0, 0.0])
    exact = simulate(z0, params, SimOptions(horizon=horizon))
    reg = simulate_regularized(z0, params, 1e-4, 1e-5, horizon)
    grid = np.linspace(0.0, horizon, int(horizon * 100) + 1)
    diff = trajectory_diff(exact, reg, grid)
    return CheckResult("oracle equivalence", diff <= 5e-3, f"sup diff {diff:.2e}")


def check_tolerance(params: Params, event_tol: float, horizon: float = 40.0) -> CheckResult:
    z0 = np.array([0.0, 1.0, 0.0])
    a = simulate(z0, params, SimOptions(horizon=horizon, event_tol=1e-10))
    b = simulate(z0, params, SimOptions(horizon=horizon, event_tol=event_tol))
    grid = np.linspace(0.0, horizon, int(horizon * 100) + 1)
    diff = trajectory_diff(a, b, grid)
    return CheckResult("event tolerance", diff <= 1e-8, f"sup diff {diff:.2e}")


def check_audits(params: Params, rng, n: int, horizon: float, opts: SimOptions) -> CheckResult:
    consts = stability_constants(params)
    worst_dec, worst_stab = -math.inf, -math.inf
    for _ in range(n):
        z0 = rng.uniform(-5.0, 5.0, 3)
        tr = simulate(z0, params, replace(opts, horizon=horizon))
        dec = audit_decrease(tr, params, consts.c_decrease)
        stab = audit_stability(tr, params, consts)
        if any(j[1] > 0 for j in dec.jumps):
            return CheckResult("trajectory audits", False, f"positive V jump from {z0}")
        worst_dec = max(worst_dec, dec.worst_margin)
        worst_stab = max(worst_stab, stab.worst_margin)
    ok = worst_dec <= 0 and worst_stab <= 0
    return CheckResult(
        "trajectory audits", ok, f"decrease margin {worst_dec:.1e}, stability {worst_stab:.1e}"
    )


def check_constants(params: Params) -> CheckResult:
    gains = pick_vhat_gains(params)
    consts = stability_constants(params, gains)
    pd = np.all(np.linalg.eigvalsh(PMatrix.from_params(params).matrix) > 0) and np.all(
        np.linalg.eigvalsh(gains.matrix) > 0
    )
    expected = 2.0 * (params.k_v * params.k_p - params.k_i)
    ok = bool(pd) and gains.satisfies(params) and math.isclose(consts.c_decrease, expected)
    return CheckResult(
        "constants", ok, f"c={consts.c_decrease:.4g}, gain={consts.stab_gain:.4g}"
    )


def sample_outside_R(params: Params, rng, n: int) -> np.ndarray:
    """Uniform-ish states with ``v != 0`` in the complement of ``R``."""
    f_c = params.f_c
    sigma = rng.uniform(-5.0, 5.0, n)
    sigma[: n // 20] = 0.0
    v = rng.uniform(0.01, 5.0, n) * rng.choice([-1.0, 1.0], n)
    # phi on the far side of sign(v) * f_c
    phi = np.sign(v) * f_c - np.sign(v) * rng.uniform(1e-9, 10.0, n)
    return np.column_stack([sigma, phi, v])


def sample_R(params: Params, rng, n: int) -> np.ndarray:
    f_c = params.f_c
    sigma = rng.uniform(-5.0, 5.0, n)
    v = rng.uniform(-5.0, 5.0, n)
    v[: n // 4] = 0.0
    phi = np.where(
        v == 0,
        rng.uniform(-8.0, 8.0, n),
        np.sign(v) * f_c + np.sign(v) * rng.uniform(0.0, 5.0, n),
    )
    return np.column_stack([sigma, phi, v])


def check_pointwise(params: Params, rng, n: int) -> CheckResult:
    gains = pick_vhat_gains(params)
    consts = stability_constants(params, gains)
    xh = sample_outside_R(params, rng, n)
    xr = sample_R(params, rng, n)
    if region_R(xh, params).any() or not region_R(xr, params).all():
        return CheckResult("pointwise sandwiches", False, "sampler left its region")
    dh = dist_to_attractor_x(xh, params) ** 2
    vh = lyap_Vhat(xh, params, gains)
    hat_ok = np.all(consts.chat1 * dh <= vh * (1 + 1e-12)) and np.all(
        vh <= consts.chat2 * dh * (1 + 1e-12)
    )
    dr = dist_to_attractor_x(xr, params) ** 2
    vr = lyap_V(xr, params)
    r_ok = np.all(consts.c1 * dr <= vr * (1 + 1e-12) + 1e-12) and np.all(
        vr <= consts.c2 * dr * (1 + 1e-12) + 1e-12
    )
    worst = max(vhat_directional_check(x, params, gains) for x in xh[: max(n // 10, 1)])
    witness = np.array([0.0, 0.0, 1e-6])
    w_fail = lyap_V(witness, params) > consts.c2 * dist_to_attractor_x(witness, params) ** 2
    ok = bool(hat_ok and r_ok and worst <= 1e-12 and w_fail)
    return CheckResult("pointwise sandwiches", ok, f"max Vhat derivative {worst:.1e}")


def check_iss(params: Params, horizon: float = 20.0) -> CheckResult:
    consts = stability_constants(params)
    worst = -math.inf
    z0 = np.array([0.0, 1.0, 0.0])
    for rho in (0.0, 0.3):
        sel = StribeckSelection(params.f_c * (1.0 + 0.25 * rho / 0.3), 0.1)
        tr = simulate_perturbed(z0, params, rho, sel, SimOptions(horizon=horizon), 1e-4, 2e-5)
        norm = np.linalg.norm(tr.z, axis=1)
        bound = consts.c_iss * np.exp(-consts.lambda_iss * tr.times) * np.linalg.norm(z0)
        bound += consts.c_iss * (1.0 + rho)
        dist = dist_to_attractor_z(tr.z, params)
        dbound = consts.kappa1 * np.exp(-consts.lambda_iss * tr.times) * dist[0]
        dbound += consts.kappa2 + consts.kappa3 * rho
        worst = max(worst, float(np.max(norm - bound)), float(np.max(dist - dbound)))
    return CheckResult("ISS envelope", worst <= 0, f"worst margin {worst:.2e}")


def run_battery(event_tol: float = 1e-10, seed: int = 0, quick: bool = False) -> list:
    """All checks on both presets; ``quick`` trims sample counts."""
    rng = np.random.default_rng(seed)
    n_runs, n_points = (3, 2000) if quick else (10, 10_000)
    opts = SimOptions(event_tol=event_tol, dense_output_dt=1e-3)
    results = [check_roots()]
    for name, params in PRESETS.items():
        horizon = 80.0 if name == "case_a" else 300.0
        checks = [
            check_mode_table(params, rng),
            check_tolerance(params, event_tol),
            check_audits(params, rng, n_runs, horizon, opts),
            check_constants(params),
            check_pointwise(params, rng, n_points),
            check_iss(params),
        ]
        if name == "case_a":
            checks.insert(1, check_oracle(params))
        results.extend(replace(c, name=f"{name}: {c.name}") for c in checks)
    return results
