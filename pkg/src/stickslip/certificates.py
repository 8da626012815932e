"""Lyapunov certificates for the friction inclusion and trajectory audits.

Three functions carry the analysis. ``V`` is a discontinuous energy that
never increases along solutions and drops by at least ``c * int v^2``;
``V_k`` are its smooth restrictions to the three sub-dynamics; ``Vhat`` is a
continuous companion used where ``V`` has no useful upper bound. The audits
replay these statements on sampled trajectories.

Notes
-----
Both pairwise audits (decrease and ``Vhat`` monotonicity) reduce an
all-pairs check ``W(t2) - W(t1) <= slack(t1)`` for ``t1 < t2`` to a single
reverse cumulative maximum, so every ordered pair of output samples is
covered at linear cost.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson, quad
from scipy.linalg import expm, solve_continuous_lyapunov

from .errors import AuditFailed, GainSynthesisFailed, NonHurwitz
from .model import Params, deadzone, dist_to_attractor_x, to_x
from .modes import Mode

DECREASE_SLACK = 1e-6
STABILITY_SLACK = 1e-9
VHAT_SLACK = 1e-9
GAIN_MARGIN = 1.01
LAMBDA_SHRINK = 0.99
TAIL_TOL = 1e-12


@dataclass(frozen=True)
class PMatrix:
    """Weight ``[[k_v/k_i, 0, -1], [0, 1, 0], [-1, 0, k_p]]`` of the slip energies."""

    matrix: np.ndarray

    @classmethod
    def from_params(cls, params: Params) -> "PMatrix":
        m = np.array(
            [[params.k_v / params.k_i, 0.0, -1.0], [0.0, 1.0, 0.0], [-1.0, 0.0, params.k_p]]
        )
        if not np.all(np.linalg.eigvalsh(m) > 0):
            raise NonHurwitz("P is not positive definite")
        m.setflags(write=False)
        return cls(m)

    def quad_form(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return np.einsum("...i,ij,...j->...", y, self.matrix, y)


@dataclass(frozen=True)
class VhatGains:
    k1: float
    k2: float
    k3: float
    k4: float

    def __post_init__(self):
        if min(self.k1, self.k2, self.k3, self.k4) <= 0:
            raise GainSynthesisFailed(f"gains must be positive: {self}")
        if not self.k1 * self.k4 > self.k3**2:
            raise GainSynthesisFailed(f"k1*k4 <= k3^2 for {self}")

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.k1, 0.0, self.k3], [0.0, self.k2, 0.0], [self.k3, 0.0, self.k4]])

    def satisfies(self, params: Params) -> bool:
        """Domination inequalities that make ``Vhat`` decrease off ``R``."""
        ratio = params.k_i / params.k_v
        return self.k3 > max(ratio * self.k1, self.k2) and self.k4 > max(
            ratio * self.k3, params.k_p * self.k2, self.k3**2 / self.k1
        )


@dataclass(frozen=True)
class IssEnvelope:
    """Constants of ``|z(t)| <= c e^{-lam t} |z0| + c (1 + rho)`` and its ``|.|_A`` form."""

    c_iss: float
    lambda_iss: float
    kappa1: float
    kappa2: float
    kappa3: float
    transient_gain: float
    forced_gain: float

    def norm_bound(self, t, z0_norm: float, rho_v: float):
        t = np.asarray(t, dtype=float)
        return self.c_iss * np.exp(-self.lambda_iss * t) * z0_norm + self.c_iss * (1 + abs(rho_v))

    def dist_bound(self, t, dist0: float, rho_v: float):
        t = np.asarray(t, dtype=float)
        return (
            self.kappa1 * np.exp(-self.lambda_iss * t) * dist0
            + self.kappa2
            + self.kappa3 * abs(rho_v)
        )

    def settle_time(self, s: float, delta_l: float) -> float:
        """``max(0, log(2 delta_l kappa1 s) / lam)`` for a user-supplied ``delta_l``."""
        arg = 2.0 * delta_l * self.kappa1 * s
        return 0.0 if arg <= 1.0 else math.log(arg) / self.lambda_iss


@dataclass(frozen=True)
class StabilityConstants:
    c1: float
    c2: float
    chat1: float
    chat2: float
    c_decrease: float
    stab_gain: float
    c_iss: float
    lambda_iss: float
    kappa1: float
    kappa2: float
    kappa3: float
    delta_l: float | None = None

    def __post_init__(self):
        if not (0 < self.c1 <= self.c2 and 0 < self.chat1 <= self.chat2):
            raise GainSynthesisFailed(f"inconsistent sandwich constants {self}")
        if not (self.c_decrease > 0 and self.stab_gain >= 1):
            raise GainSynthesisFailed(f"inconsistent decay constants {self}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class CertificateReport:
    name: str
    passed: bool
    worst_margin: float
    location: tuple | None = None
    n_checked: int = 0
    jumps: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "worst_margin": float(self.worst_margin),
            "location": None if self.location is None else [float(t) for t in self.location],
            "n_checked": int(self.n_checked),
            "jumps": [[float(t), float(d)] for t, d in self.jumps],
            "details": self.details,
        }


def _split(x):
    x = np.asarray(x, dtype=float)
    return x[..., 0], x[..., 1], x[..., 2]


def lyap_V(x, params: Params):
    """Discontinuous energy: velocity-position quadratic plus friction gap.

    The gap is ``min (phi - f)^2`` over ``f`` in ``f_c SGN(v)``, i.e.
    ``(phi - f_c sign v)^2`` in motion and ``dz(phi)^2`` at rest.
    """
    sigma, phi, v = _split(x)
    quad_part = (params.k_v / params.k_i) * sigma**2 - 2.0 * sigma * v + params.k_p * v**2
    gap = np.where(v == 0, deadzone(phi, params.f_c), phi - params.f_c * np.sign(v))
    out = quad_part + np.square(gap)
    return float(out) if np.ndim(out) == 0 else out


def lyap_Vk(mode, xi, params: Params):
    """Smooth energy of one sub-dynamics; the stick form only weighs ``sigma``."""
    mode = int(mode)
    sigma, phi, v = _split(xi)
    if mode == Mode.STICK:
        out = (params.k_v / params.k_i) * sigma**2
    elif mode in (Mode.POS, Mode.NEG):
        y = np.stack([sigma, phi - mode * params.f_c, v], axis=-1)
        out = PMatrix.from_params(params).quad_form(y)
    else:
        raise ValueError(f"unknown mode {mode}")
    return float(out) if np.ndim(out) == 0 else out


def lyap_Vhat(x, params: Params, gains: VhatGains):
    sigma, phi, v = _split(x)
    dz = deadzone(phi, params.f_c)
    out = (
        0.5 * gains.k1 * sigma**2
        + 0.5 * gains.k2 * np.square(dz)
        + gains.k3 * np.abs(sigma) * np.abs(v)
        + 0.5 * gains.k4 * v**2
    )
    return float(out) if np.ndim(out) == 0 else out


def pick_vhat_gains(params: Params, margin: float = GAIN_MARGIN) -> VhatGains:
    """Smallest gains (up to ``margin``) that satisfy the domination inequalities."""
    if not margin > 1:
        raise ValueError("margin must exceed 1")
    ratio = params.k_i / params.k_v
    k1 = k2 = 1.0
    k3 = margin * max(ratio * k1, k2)
    k4 = margin * max(ratio * k3, params.k_p * k2, k3**2 / k1)
    gains = VhatGains(k1, k2, k3, k4)
    if not gains.satisfies(params):
        raise GainSynthesisFailed(f"synthesised {gains} misses the domination bounds")
    return gains


def region_R(x, params: Params):
    """True where ``v (phi - sign(v) f_c) >= 0``; the complement is where ``Vhat`` is needed."""
    _, phi, v = _split(x)
    out = v * (phi - np.sign(v) * params.f_c) >= 0
    return bool(out) if np.ndim(out) == 0 else out


def vhat_directional_check(x, params: Params, gains: VhatGains) -> float:
    """Largest ``<grad, field>`` over the generalised gradients of ``Vhat`` at ``x``.

    ``x`` must lie off ``R`` with ``v != 0``; there the inclusion is a single
    vector. At ``sigma = 0`` both endpoints of ``SGN(sigma)`` are tried.
    """
    sigma, phi, v = (float(c) for c in x)
    if v == 0 or region_R(x, params):
        raise ValueError(f"{x} is not in the complement of R with v != 0")
    sv = 1.0 if v > 0 else -1.0
    f_sigma = -params.k_i * v
    f_phi = sigma - params.k_p * v
    f_v = phi - params.k_v * v - sv * params.f_c
    dz = deadzone(phi, params.f_c)
    zetas = (-1.0, 1.0) if sigma == 0 else (math.copysign(1.0, sigma),)
    best = -math.inf
    for zeta in zetas:
        g_sigma = gains.k1 * sigma + gains.k3 * zeta * abs(v)
        g_phi = gains.k2 * dz
        g_v = gains.k3 * abs(sigma) * sv + gains.k4 * v
        best = max(best, g_sigma * f_sigma + g_phi * f_phi + g_v * f_v)
    return best


def _friction_free_matrix(params: Params) -> np.ndarray:
    return np.array(
        [[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [-params.k_i, -params.k_p, -params.k_v]]
    )


def iss_envelope(params: Params) -> IssEnvelope:
    """Exponential envelope for the PID loop driven by a bounded friction input.

    With ``A_d`` the friction-free matrix and ``|f| <= f_c (1 + rho)``,
    variation of constants gives ``|z(t)| <= M e^{-lam t} |z0| + f_c G (1 + rho)``
    where ``M`` comes from a Lyapunov equation shifted by ``lam`` and
    ``G = int_0^inf |e^{A_d t} e3| dt``. Taking ``c = max(M, f_c G)`` and
    ``|z| <= sqrt(2) (|z|_A + f_c/k_i)`` yields the ``kappa`` constants.
    """
    A = _friction_free_matrix(params)
    eig = np.linalg.eigvals(A)
    if not np.all(eig.real < 0):
        raise NonHurwitz(f"friction-free matrix has eigenvalues {eig}")
    lam = LAMBDA_SHRINK * float(np.min(-eig.real))
    shifted = A + lam * np.eye(3)
    P = solve_continuous_lyapunov(shifted.T, -np.eye(3))
    w = np.linalg.eigvalsh(P)
    if not w[0] > 0:
        raise NonHurwitz("shifted Lyapunov solution is not positive definite")
    M = math.sqrt(w[-1] / w[0])
    # |e^{At} e3| <= M e^{-lam t}; integrate until the remaining tail is negligible
    t_cut = max(math.log(M / (lam * TAIL_TOL)) / lam, 1.0)
    e3 = np.array([0.0, 0.0, 1.0])

    def col_norm(t):
        return float(np.linalg.norm(expm(A * t) @ e3))

    breaks = np.linspace(0.0, t_cut, 65)
    head = sum(
        quad(col_norm, a, b, epsabs=1e-13, epsrel=1e-11, limit=200)[0]
        for a, b in zip(breaks[:-1], breaks[1:])
    )
    G = head + M * math.exp(-lam * t_cut) / lam
    c = max(M, params.f_c * G)
    root2 = math.sqrt(2.0)
    return IssEnvelope(
        c_iss=c,
        lambda_iss=lam,
        kappa1=root2 * c,
        kappa2=c * (1.0 + root2 * params.f_c / params.k_i),
        kappa3=c,
        transient_gain=M,
        forced_gain=G,
    )


def stability_constants(
    params: Params, gains: VhatGains | None = None, delta_l: float | None = None
) -> StabilityConstants:
    gains = pick_vhat_gains(params) if gains is None else gains
    planar = np.array([[params.k_v / params.k_i, -1.0], [-1.0, params.k_p]])
    c1 = min(float(np.linalg.eigvalsh(planar)[0]), 1.0)
    c2 = float(np.linalg.eigvalsh(PMatrix.from_params(params).matrix)[-1])
    wk = np.linalg.eigvalsh(gains.matrix)
    chat1, chat2 = 0.5 * float(wk[0]), 0.5 * float(wk[-1])
    env = iss_envelope(params)
    return StabilityConstants(
        c1=c1,
        c2=c2,
        chat1=chat1,
        chat2=chat2,
        c_decrease=2.0 * (params.k_v * params.k_p - params.k_i),
        stab_gain=math.sqrt(c2 * chat2 / (c1 * chat1)),
        c_iss=env.c_iss,
        lambda_iss=env.lambda_iss,
        kappa1=env.kappa1,
        kappa2=env.kappa2,
        kappa3=env.kappa3,
        delta_l=delta_l,
    )


def _x_of(traj) -> np.ndarray:
    x = getattr(traj, "x", None)
    return np.asarray(x if x is not None else to_x(traj.z, traj.params), dtype=float)


def cumulative_v_squared(traj) -> np.ndarray:
    """``int_0^t v^2`` at every sample, Simpson within each smooth segment."""
    t = traj.times
    v2 = _x_of(traj)[:, 2] ** 2
    out = np.zeros(t.size)
    offset = 0.0
    for i0, i1 in traj.segments:
        ts, ys = t[i0 : i1 + 1], v2[i0 : i1 + 1]
        if ts.size >= 3:
            part = cumulative_simpson(ys, x=ts, initial=0.0)
        else:
            part = np.concatenate(([0.0], np.cumsum(0.5 * np.diff(ts) * (ys[1:] + ys[:-1]))))
        out[i0 : i1 + 1] = offset + part
        offset = out[i1]
    return out


def _worst_forward_rise(w: np.ndarray, slack: np.ndarray):
    """Max of ``w[j] - w[i] - slack[i]`` over ``i < j``, with its arg pair."""
    if w.size < 2:
        return -math.inf, None
    suffix = np.maximum.accumulate(w[::-1])[::-1]
    rise = suffix[1:] - w[:-1] - slack[:-1]
    i = int(np.argmax(rise))
    j = i + 1 + int(np.argmax(w[i + 1 :]))
    return float(rise[i]), (i, j)


def _stick_entry_jumps(traj, x, values, params):
    """``V(event) - V(left limit)`` at every sample where a slip arc enters a stick."""
    jumps = []
    # a shared boundary sample carries the mode of the segment it closes
    for (_, i1), (_, j1) in zip(traj.segments[:-1], traj.segments[1:]):
        before, after = int(traj.modes[i1]), int(traj.modes[j1])
        if before != Mode.STICK and after == Mode.STICK:
            left = lyap_Vk(before, x[i1], params)
            jumps.append((float(traj.times[i1]), float(values[i1] - left)))
    return jumps


def audit_decrease(traj, params: Params, c_decrease: float | None = None, raise_on_fail=False):
    """Check ``V(t2) - V(t1) <= -c int_{t1}^{t2} v^2`` on every ordered sample pair."""
    c = 2.0 * (params.k_v * params.k_p - params.k_i) if c_decrease is None else c_decrease
    x = _x_of(traj)
    values = lyap_V(x, params)
    w = values + c * cumulative_v_squared(traj)
    slack = DECREASE_SLACK * (1.0 + values)
    worst, pair = _worst_forward_rise(w, slack)
    jumps = _stick_entry_jumps(traj, x, values, params) if traj.source == "exact" else []
    positive_jumps = [j for j in jumps if j[1] > DECREASE_SLACK * (1.0 + abs(j[1]))]
    report = CertificateReport(
        name="decrease",
        passed=worst <= 0 and not positive_jumps,
        worst_margin=worst,
        location=None if pair is None else (traj.times[pair[0]], traj.times[pair[1]]),
        n_checked=int(values.size),
        jumps=jumps,
        details={"c_decrease": c, "V0": float(values[0]), "V_end": float(values[-1])},
    )
    if raise_on_fail and not report.passed:
        raise AuditFailed(f"decrease audit failed: margin {worst} at {report.location}", report)
    return report


def _runs(mask: np.ndarray):
    """Maximal ``[i, j]`` index runs where ``mask`` holds."""
    edges = np.diff(np.concatenate(([0], mask.astype(int), [0])))
    return list(zip(np.flatnonzero(edges == 1), np.flatnonzero(edges == -1) - 1))


def audit_stability(
    traj,
    params: Params,
    consts: StabilityConstants | None = None,
    gains: VhatGains | None = None,
    raise_on_fail=False,
):
    """Check ``|x(t)|_A <= gain |x(0)|_A`` and ``Vhat`` monotonicity off ``R``."""
    gains = pick_vhat_gains(params) if gains is None else gains
    consts = stability_constants(params, gains) if consts is None else consts
    x = _x_of(traj)
    dist = dist_to_attractor_x(x, params)
    bound = consts.stab_gain * dist[0] + STABILITY_SLACK
    k = int(np.argmax(dist))
    margin = float(dist[k] - bound)
    vhat = lyap_Vhat(x, params, gains)
    outside = ~region_R(x, params)
    vhat_worst, vhat_at = -math.inf, None
    for i, j in _runs(outside):
        seg = vhat[i : j + 1]
        rise, pair = _worst_forward_rise(seg, VHAT_SLACK * (1.0 + seg))
        if rise > vhat_worst:
            vhat_worst = rise
            vhat_at = None if pair is None else (traj.times[i + pair[0]], traj.times[i + pair[1]])
    report = CertificateReport(
        name="stability",
        passed=margin <= 0 and vhat_worst <= 0,
        worst_margin=max(margin, vhat_worst),
        location=(float(traj.times[k]),) if margin > vhat_worst else vhat_at,
        n_checked=int(dist.size),
        details={
            "stab_gain": consts.stab_gain,
            "dist0": float(dist[0]),
            "sup_dist": float(dist[k]),
            "bound_margin": margin,
            "vhat_margin": vhat_worst,
        },
    )
    if raise_on_fail and not report.passed:
        raise AuditFailed(f"stability audit failed: margin {report.worst_margin}", report)
    return report
