"""Affine sub-dynamics of the friction inclusion and their event times.

Away from ``v = 0`` the closed loop in ``x = (sigma, phi, v)`` coordinates
is one of two affine systems ``xi' = A xi -+ b``; while stuck it follows the
linear ramp ``sigma' = 0, phi' = sigma, v' = 0``. Each initial condition is
assigned one of the three by :func:`classify_mode`, and the simulator glues
closed-form arcs together at the events located here.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.optimize import brentq

from .errors import BracketFailure, NonHurwitz, NotInStick, SingularA
from .model import Params, StateX

DEFAULT_TOL = 1e-10
SAMPLES_PER_PERIOD = 1024
REFINE_FACTOR = 4
REFINE_LEVELS = 3
EIG_COND_LIMIT = 1e8
_CHUNK = 4096
SHORT_TIME = 0.5
TAYLOR_TERMS = 30


class Mode(enum.IntEnum):
    NEG = -1
    STICK = 0
    POS = 1


def system_matrix(params: Params) -> np.ndarray:
    return np.array(
        [
            [0.0, 0.0, -params.k_i],
            [1.0, 0.0, -params.k_p],
            [0.0, 1.0, -params.k_v],
        ]
    )


def friction_vector(params: Params) -> np.ndarray:
    return np.array([0.0, 0.0, params.f_c])


STICK_MATRIX = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])


class Propagator:
    """``exp(A t)`` for the slip matrix of one parameter set.

    Uses an eigendecomposition when ``A`` is diagonalisable with a
    well-conditioned eigenbasis and scaling-and-squaring Pade otherwise.
    """

    def __init__(self, A: np.ndarray):
        self.A = A
        lam, vecs = np.linalg.eig(A)
        self.eigvals = lam
        self.cond = np.linalg.cond(vecs)
        self.use_eig = bool(np.isfinite(self.cond) and self.cond < EIG_COND_LIMIT)
        if self.use_eig:
            self._vecs = vecs
            self._inv = np.linalg.inv(vecs)
        if not np.all(lam.real < 0):
            raise NonHurwitz(f"slip matrix eigenvalues {lam}")
        # |exp(At)| <= growth for all t >= 0, from A^T P + P A = -I.
        P = scipy.linalg.solve_continuous_lyapunov(A.T, -np.eye(3))
        ev = np.linalg.eigvalsh(P)
        self.growth = math.sqrt(ev[-1] / ev[0])
        self.norm = float(np.linalg.norm(A, 2))

    def apply_eig(self, t, y0) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        coef = self._inv @ np.asarray(y0, dtype=complex)
        expo = np.exp(np.outer(t, self.eigvals))
        return ((expo * coef) @ self._vecs.T).real

    def apply_pade(self, t, y0) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        mats = scipy.linalg.expm(t[:, None, None] * self.A)
        return mats @ np.asarray(y0, dtype=float)

    def apply_taylor(self, t, y0) -> np.ndarray:
        """Truncated series; accurate componentwise for ``t |A| <= SHORT_TIME``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))[:, None]
        term = np.tile(np.asarray(y0, dtype=float), (t.shape[0], 1))
        out = term.copy()
        for k in range(1, TAYLOR_TERMS + 1):
            term = (term @ self.A.T) * (t / k)
            out += term
        return out

    def apply(self, t, y0) -> np.ndarray:
        """Rows ``exp(A t_j) y0`` for each ``t_j`` in ``t``.

        Short times go through the series so that tiny components leaving a
        switching surface are not swamped by cancellation between modes.
        """
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = self.apply_eig(t, y0) if self.use_eig else self.apply_pade(t, y0)
        short = t * self.norm <= SHORT_TIME
        if short.any():
            out[short] = self.apply_taylor(t[short], y0)
        return out

    def time_scale(self) -> float:
        imag = np.abs(self.eigvals.imag)
        if np.any(imag > 0):
            return 2.0 * math.pi / imag.max()
        return 1.0 / np.abs(self.eigvals.real).max()


@functools.lru_cache(maxsize=64)
def propagator(params: Params) -> Propagator:
    return Propagator(system_matrix(params))


@dataclass(frozen=True, eq=False)
class AffineFlow:
    """Closed-form flow of one of the three sub-dynamics."""

    A_mat: np.ndarray
    b_vec: np.ndarray
    mode: Mode
    params: Params = field(repr=False)

    @classmethod
    def for_mode(cls, mode, params: Params) -> "AffineFlow":
        return cls(system_matrix(params), friction_vector(params), Mode(mode), params)

    @property
    def equilibrium(self) -> np.ndarray:
        """Fixed point ``A^{-1} b * mode`` of a slip field."""
        if self.mode == Mode.STICK:
            raise ValueError("the stick ramp has no isolated equilibrium")
        if abs(np.linalg.det(self.A_mat)) == 0.0:
            raise SingularA("slip matrix is singular")
        return np.linalg.solve(self.A_mat, int(self.mode) * self.b_vec)

    def field(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        if self.mode == Mode.STICK:
            return xi @ STICK_MATRIX.T
        return xi @ self.A_mat.T - int(self.mode) * self.b_vec

    def states(self, xi0, t) -> np.ndarray:
        """States at the times ``t`` (array), shape ``(len(t), 3)``."""
        xi0 = np.asarray(xi0, dtype=float)
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if self.mode == Mode.STICK:
            out = np.tile(xi0, (t.size, 1))
            out[:, 1] = xi0[1] + xi0[0] * t
            return out
        x_eq = self.equilibrium
        return x_eq + propagator(self.params).apply(t, xi0 - x_eq)

    def __call__(self, xi0, t) -> StateX:
        return StateX(*self.states(xi0, [t])[0])


def classify_mode(x, params: Params, tol: float = DEFAULT_TOL) -> Mode:
    """Pick the sub-dynamics that the inclusion follows from ``x`` onwards."""
    sigma, phi, v = (float(c) for c in x)
    f_c = params.f_c
    if v > tol:
        return Mode.POS
    if v < -tol:
        return Mode.NEG
    if phi > f_c + tol:
        return Mode.POS
    if phi < -f_c - tol:
        return Mode.NEG
    if abs(phi - f_c) <= tol:
        return Mode.POS if sigma > tol else Mode.STICK
    if abs(phi + f_c) <= tol:
        return Mode.NEG if sigma < -tol else Mode.STICK
    return Mode.STICK


def affine_flow(mode, xi0, t: float, params: Params) -> StateX:
    if t < 0:
        raise ValueError("t must be nonnegative")
    return AffineFlow.for_mode(mode, params)(xi0, t)


def stick_exit_time(x0, params: Params, tol: float = DEFAULT_TOL) -> float:
    """Time for the stick ramp ``phi + sigma t`` to reach the boundary it heads to."""
    sigma, phi, v = (float(c) for c in x0)
    if classify_mode(x0, params, tol) != Mode.STICK or abs(phi) > params.f_c + tol:
        raise NotInStick(f"{x0} is not a stick state")
    if abs(sigma) <= tol:
        return math.inf
    target = math.copysign(params.f_c, sigma)
    return max((target - phi) / sigma, 0.0)


class _SlipSearch:
    """Locate the first return of ``v`` to zero along one slip arc.

    ``g = mode * v`` is positive inside the arc. A sample interval
    ``[a, b]`` with ``g(a) >= 0, g(b) > 0`` is certified root-free by lower
    bounds built from ``g`` and its first two derivatives at the ends plus a
    rigorous bound on the third (a linear interpolant minus a concavity
    term, or a Taylor polynomial from ``a``). Uncertified intervals are
    refined and, at the finest level, resolved through the critical point
    of ``g``.
    """

    def __init__(self, mode, xi0, params: Params, tol: float):
        self.k = int(mode)
        self.xi0 = np.asarray(xi0, dtype=float)
        self.tol = tol
        self.x_eq = AffineFlow.for_mode(mode, params).equilibrium
        self.prop = propagator(params)
        self.y0 = self.xi0 - self.x_eq
        A = self.prop.A
        A2 = A @ A
        # columns map y = xi - x_eq to v, v', v''
        self.rows = np.stack([np.eye(3)[2], A[2], A2[2]], axis=1)
        # |g'''| <= |e3^T A^3| * growth * |y(a)| on [a, inf)
        self.jerk = np.linalg.norm((A2 @ A)[2]) * self.prop.growth

    def eval(self, t):
        t = np.asarray(t, dtype=float)
        y = self.prop.apply(t, self.y0)
        # exact values at t = 0 keep g' = 0 starts from looking like descents
        y[t == 0] = self.y0
        d = self.k * (y @ self.rows)
        return d[:, 0], d[:, 1], d[:, 2], np.linalg.norm(y, axis=1)

    def g(self, t: float) -> float:
        return float(self.eval([t])[0][0])

    def gd(self, t: float) -> float:
        return float(self.eval([t])[1][0])

    def certified(self, h, ga, gb, gda, gdda, gddb, ra):
        """Vectorised test that ``g > 0`` on ``(a, b]``."""
        J = self.jerk * ra
        # linear interpolant minus concavity, with -g'' <= C on [a, b]
        C = np.maximum(0.0, -0.5 * (gdda + gddb) + 0.5 * h * J)
        interp = np.minimum(ga, gb) > C * h * h / 8.0
        # Taylor bounds from the left end handle arcs leaving g = 0
        C2 = np.maximum(0.0, -gdda + h * J)
        quad = (ga >= 0) & ((ga > 0) | (gda > 0)) & (ga + gda * h - C2 * h * h / 2.0 > 0)
        cubic = (
            (ga >= 0)
            & (gda >= 0)
            & (gdda > 0)
            & (ga + gda * h + gdda * h * h / 2.0 - J * h**3 / 6.0 > 0)
        )
        return interp | quad | cubic

    def root(self, a: float, b: float) -> float:
        t = brentq(self.g, a, b, xtol=1e-14, rtol=4 * np.finfo(float).eps)
        if abs(self.g(t)) > self.tol:
            raise BracketFailure(f"refined event at t={t} has |v|={abs(self.g(t))}")
        return t

    def check_interval(self, a, b, level):
        """Event time in ``[a, b]`` or None; ``g(a) >= 0`` and ``g(b) > 0``."""
        ts = np.linspace(a, b, REFINE_FACTOR + 1)
        g, gd, gdd, r = self.eval(ts)
        g[0] = max(g[0], 0.0)
        for i in range(REFINE_FACTOR):
            ta, tb = ts[i], ts[i + 1]
            if g[i + 1] <= 0:
                return self.root(ta, tb)
            if self.certified(tb - ta, g[i], g[i + 1], gd[i], gdd[i], gdd[i + 1], r[i]):
                continue
            if level + 1 < REFINE_LEVELS:
                hit = self.check_interval(ta, tb, level + 1)
                if hit is not None:
                    return hit
                continue
            if gd[i] < 0 < gd[i + 1]:
                tm = brentq(self.gd, ta, tb, xtol=1e-15)
                gm = self.g(tm)
                if gm <= 0:
                    return self.root(ta, tm)
                if gm <= self.tol:
                    return tm
                continue
            raise BracketFailure(
                f"cannot certify v != 0 on [{ta}, {tb}] after {REFINE_LEVELS} refinements"
            )
        return None

    def run(self, horizon: float):
        dt = self.prop.time_scale() / SAMPLES_PER_PERIOD
        n_total = max(int(math.ceil(horizon / dt)), 1)
        g0 = self.k * self.xi0[2]
        if g0 < -self.tol:
            raise ValueError(f"state {self.xi0} moves against mode {self.k}")
        armed = g0 > 0
        _, gd, gdd, r = self.eval([0.0])
        last = (0.0, max(g0, 0.0), gd[0], gdd[0], r[0])
        for start in range(0, n_total, _CHUNK):
            stop = min(start + _CHUNK, n_total)
            ts = np.arange(start + 1, stop + 1) * dt
            if stop == n_total:
                ts[-1] = horizon
            g, gd, gdd, r = self.eval(ts)
            T = np.concatenate(([last[0]], ts))
            G = np.concatenate(([last[1]], g))
            GD = np.concatenate(([last[2]], gd))
            GDD = np.concatenate(([last[3]], gdd))
            R = np.concatenate(([last[4]], r))
            last = (T[-1], G[-1], GD[-1], GDD[-1], R[-1])
            first = 0
            if not armed:
                # leaving v = 0: skip samples until g turns positive
                pos = np.flatnonzero(G[1:] > 0)
                lead = G[1:] if pos.size == 0 else G[1 : pos[0] + 1]
                if np.any(lead < -self.tol):
                    raise BracketFailure(f"v leaves zero against mode {self.k}")
                if pos.size == 0:
                    continue
                armed = True
                first = pos[0]
                G[first] = max(G[first], 0.0)
            h = np.diff(T[first:])
            Ga, Gb = G[first:-1], G[first + 1 :]
            cross = Gb <= 0
            n_check = int(np.argmax(cross)) if cross.any() else cross.size
            ok = self.certified(
                h, np.maximum(Ga, 0.0), Gb, GD[first:-1], GDD[first:-1], GDD[first + 1 :], R[first:-1]
            )
            for j in np.flatnonzero(~ok[:n_check]) + first:
                hit = self.check_interval(T[j], T[j + 1], 0)
                if hit is not None:
                    return hit
            if cross.any():
                j = first + n_check
                return self.root(T[j], T[j + 1])
        return None


def slip_exit_time(mode, xi0, params: Params, horizon: float, tol: float = DEFAULT_TOL):
    """First ``t`` in ``(0, horizon]`` where the slip arc returns to ``v = 0``.

    Returns None when ``v`` keeps the sign of ``mode`` over the horizon.
    """
    if int(mode) not in (-1, 1):
        raise ValueError("slip_exit_time needs mode -1 or +1")
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    return _SlipSearch(mode, xi0, params, tol).run(horizon)
