"""Core domain types for a PID-controlled point mass under Coulomb friction.

Physical coordinates are ``z = (e_i, s, v)``: integral of position error,
position and velocity. The friction-aligned coordinates used by the
certificates are ``x = (sigma, phi, v)`` with ``sigma = -k_i s`` and
``phi = -k_i e_i - k_p s``. All gains are per unit mass.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import AssumptionViolated, NonHurwitz, ZeroWidth

log = logging.getLogger(__name__)

HURWITZ_TOL = 1e-9


class StateZ(NamedTuple):
    e_i: float
    s: float
    v: float


class StateX(NamedTuple):
    sigma: float
    phi: float
    v: float


@dataclass(frozen=True)
class Interval:
    """Closed real interval ``[lo, hi]``; singletons have ``lo == hi``."""

    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    def __contains__(self, value) -> bool:
        return self.lo <= value <= self.hi

    def issubset(self, other: "Interval") -> bool:
        return other.lo <= self.lo and self.hi <= other.hi

    def scaled(self, factor: float) -> "Interval":
        a, b = factor * self.lo, factor * self.hi
        return Interval(min(a, b), max(a, b))


def closed_loop_roots(k_p: float, k_v: float, k_i: float) -> np.ndarray:
    """Roots of ``s^3 + k_v s^2 + k_p s + k_i`` via a companion eigensolve."""
    companion = np.array(
        [[-k_v, -k_p, -k_i], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], dtype=float
    )
    roots = np.linalg.eigvals(companion)
    return roots[np.lexsort((roots.imag, roots.real))]


@dataclass(frozen=True)
class Params:
    """Reduced PID and friction constants (all per unit mass).

    Construction enforces ``k_i > 0``, ``k_p > 0``, ``k_v k_p > k_i`` and
    ``f_c > 0``, and cross-checks the Routh conditions against the roots of
    the frictionless characteristic polynomial.
    """

    k_p: float
    k_v: float
    k_i: float
    f_c: float

    def __post_init__(self):
        for name in ("k_p", "k_v", "k_i", "f_c"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise AssumptionViolated(f"{name}={value!r} is not finite")
            object.__setattr__(self, name, float(value))
        if not self.k_i > 0:
            raise AssumptionViolated(f"k_i > 0 fails (k_i={self.k_i})")
        if not self.k_p > 0:
            raise AssumptionViolated(f"k_p > 0 fails (k_p={self.k_p})")
        if not self.k_v * self.k_p > self.k_i:
            raise AssumptionViolated(
                f"k_v*k_p > k_i fails ({self.k_v * self.k_p} <= {self.k_i})"
            )
        if not self.f_c > 0:
            raise AssumptionViolated(f"f_c > 0 fails (f_c={self.f_c})")
        roots = self.roots
        if not np.all(roots.real < -HURWITZ_TOL):
            # Routh says this cannot happen once the inequalities above hold.
            raise NonHurwitz(f"roots {roots} not in the open left half-plane")

    @property
    def roots(self) -> np.ndarray:
        return closed_loop_roots(self.k_p, self.k_v, self.k_i)

    @property
    def ei_band(self) -> float:
        """Half-width ``f_c / k_i`` of the equilibrium segment in ``e_i``."""
        return self.f_c / self.k_i


def validate_params(k_p: float, k_v: float, k_i: float, f_c: float) -> Params:
    params = Params(k_p, k_v, k_i, f_c)
    log.debug("closed-loop roots for %s: %s", params, params.roots)
    return params


def sgn_set(v: float) -> Interval:
    """Set-valued sign: ``{sign(v)}`` off zero, ``[-1, 1]`` at zero."""
    if v > 0:
        return Interval(1.0, 1.0)
    if v < 0:
        return Interval(-1.0, -1.0)
    return Interval(-1.0, 1.0)


def sgn_inflated(v: float, rho_v: float) -> Interval:
    """Sign map inflated by ``|rho_v|`` in both argument and value."""
    r = abs(rho_v)
    if abs(v) > r:
        sg = 1.0 if v > 0 else -1.0
        return Interval(sg - r, sg + r)
    return Interval(-1.0 - r, 1.0 + r)


def pid_accel(z, params: Params) -> float:
    e_i, s, v = z
    return -params.k_p * s - params.k_v * v - params.k_i * e_i


def classical_accel(z, params: Params) -> float:
    """Acceleration of the discontinuous (non-regularised) friction model."""
    v = z[2]
    u = pid_accel(z, params)
    f_c = params.f_c
    if v > 0 or (v == 0 and u >= f_c):
        return u - f_c
    if v < 0 or (v == 0 and u <= -f_c):
        return u + f_c
    return 0.0


def to_x(z, params: Params):
    """Map ``(e_i, s, v)`` to ``(sigma, phi, v)``; works on ``(..., 3)`` arrays."""
    z = np.asarray(z, dtype=float)
    e_i, s, v = z[..., 0], z[..., 1], z[..., 2]
    sigma = -params.k_i * s
    phi = -params.k_i * e_i - params.k_p * s
    if z.ndim == 1:
        return StateX(float(sigma), float(phi), float(v))
    return np.stack([sigma, phi, v], axis=-1)


def to_z(x, params: Params):
    """Inverse of :func:`to_x`."""
    x = np.asarray(x, dtype=float)
    sigma, phi, v = x[..., 0], x[..., 1], x[..., 2]
    s = -sigma / params.k_i
    e_i = (-phi - params.k_p * s) / params.k_i
    if x.ndim == 1:
        return StateZ(float(e_i), float(s), float(v))
    return np.stack([e_i, s, v], axis=-1)


def deadzone(x, c: float):
    """``x - c*sat(x/c)``: zero on ``[-|c|, |c|]``, shifted identity outside."""
    if c == 0:
        raise ZeroWidth("deadzone width must be nonzero")
    c = abs(c)
    out = np.asarray(x, dtype=float) - np.clip(x, -c, c)
    return float(out) if out.ndim == 0 else out


def dist_to_attractor_x(x, params: Params):
    """Euclidean distance from ``x`` to the equilibrium segment."""
    x = np.asarray(x, dtype=float)
    dz = deadzone(x[..., 1], params.f_c)
    out = np.hypot(np.hypot(x[..., 0], x[..., 2]), dz)
    return float(out) if out.ndim == 0 else out


def dist_to_attractor_z(z, params: Params):
    """Distance in ``z`` coordinates, with the band ``|e_i| <= f_c/k_i``."""
    z = np.asarray(z, dtype=float)
    dz = deadzone(z[..., 0], params.ei_band)
    out = np.hypot(np.hypot(z[..., 1], z[..., 2]), dz)
    return float(out) if out.ndim == 0 else out


CASE_A = Params(k_p=3.0, k_v=6.4, k_i=4.0, f_c=1.0)
CASE_B = Params(k_p=0.66, k_v=1.5, k_i=0.08, f_c=1.0)
PRESETS = {"case_a": CASE_A, "case_b": CASE_B}
