"""Simulation of the friction inclusion.

:func:`simulate` is the exact event-driven integrator: it chains closed-form
slip arcs and stick ramps, switching at located events. The fixed-step
regularised integrators below it are independent oracles (smoothed sign)
and the vehicle for Stribeck-type perturbations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import DomainMismatch, EventOverflow, SelectionOutOfGraph
from .model import Params, sgn_inflated, to_x, to_z
from .modes import (
    DEFAULT_TOL,
    AffineFlow,
    Mode,
    classify_mode,
    slip_exit_time,
    stick_exit_time,
)

STICK, SLIP_POS, SLIP_NEG = "stick", "slip+", "slip-"
PHASE_OF_MODE = {Mode.STICK: STICK, Mode.POS: SLIP_POS, Mode.NEG: SLIP_NEG}
# grid samples closer than this fraction of dt to an event are dropped
_GRID_GAP = 0.1


@dataclass(frozen=True)
class SimOptions:
    horizon: float = 40.0
    event_tol: float = DEFAULT_TOL
    max_events: int = 10_000
    dense_output_dt: float = 1e-2

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if not self.event_tol > 0:
            raise ValueError("event_tol must be positive")
        if not self.dense_output_dt > 0:
            raise ValueError("dense_output_dt must be positive")


@dataclass(frozen=True)
class Event:
    time: float
    kind: str  # stick-entry, stick-exit, v-crossing, horizon


@dataclass(frozen=True)
class Phase:
    t_start: float
    t_end: float
    kind: str

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start


@dataclass
class Trajectory:
    """Sampled solution with its event log and stick/slip phases.

    ``segments`` holds inclusive sample-index ranges of the smooth pieces;
    neighbouring ranges share their boundary sample.
    """

    params: Params
    times: np.ndarray
    z: np.ndarray
    x: np.ndarray
    modes: np.ndarray
    events: list = field(default_factory=list)
    phases: list = field(default_factory=list)
    segments: list = field(default_factory=list)
    dense_output_dt: float = 1e-2
    v_tol: float = DEFAULT_TOL
    source: str = "exact"

    def __len__(self):
        return self.times.size

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def phase_labels(self) -> np.ndarray:
        """Phase kind for every sample (right-continuous at boundaries)."""
        labels = np.full(self.times.size, self.phases[-1].kind, dtype=object)
        for ph in self.phases:
            labels[(self.times >= ph.t_start) & (self.times < ph.t_end)] = ph.kind
        return labels


def _segment_times(t0: float, t1: float, dt: float) -> np.ndarray:
    k0 = math.floor(t0 / dt) + 1
    k1 = math.ceil(t1 / dt) - 1
    grid = np.arange(k0, k1 + 1) * dt if k1 >= k0 else np.empty(0)
    grid = grid[(grid > t0 + _GRID_GAP * dt) & (grid < t1 - _GRID_GAP * dt)]
    return np.concatenate(([t0], grid, [t1]))


def _merge_phases(raw) -> list:
    phases = []
    for t0, t1, kind in raw:
        if phases and phases[-1].kind == kind:
            phases[-1] = Phase(phases[-1].t_start, t1, kind)
        else:
            phases.append(Phase(t0, t1, kind))
    return phases


def simulate(z0, params: Params, opts: SimOptions = SimOptions()) -> Trajectory:
    """Exact event-driven solution from ``z0`` over ``[0, opts.horizon]``."""
    z0 = np.asarray(z0, dtype=float)
    if not np.all(np.isfinite(z0)):
        raise ValueError(f"initial state {z0} is not finite")
    tol, dt, horizon = opts.event_tol, opts.dense_output_dt, opts.horizon
    x = np.asarray(to_x(z0, params), dtype=float)
    t = 0.0
    times, zs, xs, modes = [], [], [], []
    events, raw_phases, segments = [], [], []
    n_samples = 0

    def emit(ts, z_seg, x_seg, mode):
        nonlocal n_samples
        skip = 1 if times else 0
        times.append(ts[skip:])
        zs.append(z_seg[skip:])
        xs.append(x_seg[skip:])
        modes.append(np.full(ts.size - skip, int(mode)))
        start = max(n_samples - 1, 0)
        n_samples += ts.size - skip
        segments.append((start, n_samples - 1))

    while t < horizon:
        if len(events) > opts.max_events:
            raise EventOverflow(f"more than {opts.max_events} events before t={t}")
        mode = classify_mode(x, params, tol)
        if mode == Mode.STICK:
            duration = stick_exit_time(x, params, tol)
            t_end = min(t + duration, horizon)
            ts = _segment_times(t, t_end, dt)
            z_start = np.asarray(to_z(x, params))
            tau = ts - t
            z_seg = np.column_stack(
                [z_start[0] + z_start[1] * tau, np.full_like(tau, z_start[1]), np.zeros_like(tau)]
            )
            x_seg = to_x(z_seg, params)
            if t + duration <= horizon:
                x = np.array([x[0], math.copysign(params.f_c, x[0]), 0.0])
                x_seg[-1] = x
                z_seg[-1] = to_z(x, params)
                kind = "stick-exit"
            else:
                x = x_seg[-1]
                kind = "horizon"
        else:
            flow = AffineFlow.for_mode(mode, params)
            duration = slip_exit_time(mode, x, params, horizon - t, tol)
            t_end = horizon if duration is None else t + duration
            ts = _segment_times(t, t_end, dt)
            x_seg = flow.states(x, ts - t)
            x_seg[0] = x
            if duration is None:
                kind = "horizon"
            else:
                x_seg[-1, 2] = 0.0
                after = classify_mode(x_seg[-1], params, tol)
                kind = "stick-entry" if after == Mode.STICK else "v-crossing"
            x = x_seg[-1].copy()
            z_seg = to_z(x_seg, params)
        emit(ts, z_seg, x_seg, mode)
        raw_phases.append((t, t_end, PHASE_OF_MODE[mode]))
        events.append(Event(t_end, kind))
        t = t_end

    return Trajectory(
        params=params,
        times=np.concatenate(times),
        z=np.concatenate(zs),
        x=np.concatenate(xs),
        modes=np.concatenate(modes),
        events=events,
        phases=_merge_phases(raw_phases),
        segments=segments,
        dense_output_dt=dt,
        v_tol=tol,
        source="exact",
    )


@dataclass(frozen=True)
class StribeckSelection:
    """Gaussian Stribeck curve ``sign(v) (f_c + (f_s - f_c) exp(-(v/v_s)^2))``."""

    f_s: float
    v_s: float

    def __post_init__(self):
        if not self.v_s > 0:
            raise ValueError("v_s must be positive")

    def curve(self, v, f_c: float):
        v = np.asarray(v, dtype=float)
        return np.sign(v) * (f_c + (self.f_s - f_c) * np.exp(-((v / self.v_s) ** 2)))

    def check_graph(self, f_c: float, rho_v: float) -> None:
        """Raise SelectionOutOfGraph unless the curve lies in ``f_c SGN_rho``."""
        if self.f_s < f_c:
            raise SelectionOutOfGraph(f"f_s={self.f_s} below f_c={f_c}")
        r = abs(rho_v)
        mag = np.concatenate(
            (
                [0.0, r, math.nextafter(r, math.inf)],
                np.logspace(-10, 3, 4001),
                np.linspace(0.0, 10 * max(self.v_s, r, 1.0), 4001),
            )
        )
        grid = np.concatenate((mag, -mag))
        values = self.curve(grid, f_c) / f_c
        for v, val in zip(grid, values):
            box = sgn_inflated(float(v), r)
            # relative slack for the division by f_c
            if not (box.lo - 1e-12 <= val <= box.hi + 1e-12):
                raise SelectionOutOfGraph(
                    f"Stribeck value {val * f_c} at v={v} outside f_c*[{box.lo}, {box.hi}]"
                )


@numba.njit(cache=True, nogil=True)
def _rk4_kernel(z0, k_p, k_v, k_i, f_c, f_s, v_s, eps, h, n_steps, every):
    n_rec = n_steps // every + 1
    out = np.empty((n_rec, 3))
    e, s, v = z0[0], z0[1], z0[2]
    out[0, 0], out[0, 1], out[0, 2] = e, s, v
    excess = f_s - f_c
    rec = 1
    for n in range(1, n_steps + 1):
        # four stages of classical RK4 on (e_i, s, v)
        w = min(max(v / eps, -1.0), 1.0)
        fr = w * (f_c + excess * math.exp(-((v / v_s) ** 2)))
        k1e, k1s, k1v = s, v, -k_i * e - k_p * s - k_v * v - fr
        e2, s2, v2 = e + 0.5 * h * k1e, s + 0.5 * h * k1s, v + 0.5 * h * k1v
        w = min(max(v2 / eps, -1.0), 1.0)
        fr = w * (f_c + excess * math.exp(-((v2 / v_s) ** 2)))
        k2e, k2s, k2v = s2, v2, -k_i * e2 - k_p * s2 - k_v * v2 - fr
        e3, s3, v3 = e + 0.5 * h * k2e, s + 0.5 * h * k2s, v + 0.5 * h * k2v
        w = min(max(v3 / eps, -1.0), 1.0)
        fr = w * (f_c + excess * math.exp(-((v3 / v_s) ** 2)))
        k3e, k3s, k3v = s3, v3, -k_i * e3 - k_p * s3 - k_v * v3 - fr
        e4, s4, v4 = e + h * k3e, s + h * k3s, v + h * k3v
        w = min(max(v4 / eps, -1.0), 1.0)
        fr = w * (f_c + excess * math.exp(-((v4 / v_s) ** 2)))
        k4e, k4s, k4v = s4, v4, -k_i * e4 - k_p * s4 - k_v * v4 - fr
        e += h / 6.0 * (k1e + 2.0 * k2e + 2.0 * k3e + k4e)
        s += h / 6.0 * (k1s + 2.0 * k2s + 2.0 * k3s + k4s)
        v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        if not (math.isfinite(e) and math.isfinite(s) and math.isfinite(v)):
            return out[:rec], False
        if n % every == 0:
            out[rec, 0], out[rec, 1], out[rec, 2] = e, s, v
            rec += 1
    return out[:rec], True


def _fixed_step(z0, params, eps, step, horizon, dense_output_dt, f_s, v_s, source):
    if not eps > 0 or not step > 0:
        raise ValueError("eps and step must be positive")
    n_steps = max(int(math.ceil(horizon / step - 1e-9)), 1)
    h = horizon / n_steps
    every = max(int(round(dense_output_dt / h)), 1)
    n_steps = (n_steps // every) * every
    z0 = np.asarray(z0, dtype=float)
    z, ok = _rk4_kernel(
        z0, params.k_p, params.k_v, params.k_i, params.f_c, f_s, v_s, eps, h, n_steps, every
    )
    if not ok:
        raise FloatingPointError(f"{source} integration overflowed")
    times = np.arange(z.shape[0]) * (h * every)
    traj = Trajectory(
        params=params,
        times=times,
        z=z,
        x=to_x(z, params),
        modes=np.zeros(times.size, dtype=int),
        segments=[(0, times.size - 1)],
        dense_output_dt=h * every,
        v_tol=eps,
        source=source,
    )
    traj.phases = detect_phases(traj, params, eps)
    labels = traj.phase_labels()
    traj.modes = np.select([labels == SLIP_POS, labels == SLIP_NEG], [1, -1], 0)
    return traj


def simulate_regularized(
    z0, params: Params, eps: float, step: float, horizon: float, dense_output_dt: float = 1e-2
) -> Trajectory:
    """Fixed-step RK4 on the smoothed law ``f_c * sat(v / eps)``."""
    return _fixed_step(
        z0, params, eps, step, horizon, dense_output_dt, params.f_c, 1.0, "regularized"
    )


def simulate_perturbed(
    z0,
    params: Params,
    rho_v: float,
    selection: StribeckSelection,
    opts: SimOptions = SimOptions(),
    eps: float = 1e-4,
    step: float = 1e-5,
) -> Trajectory:
    """One solution of the inflated inclusion, through a Stribeck selection."""
    if rho_v < 0:
        raise ValueError("rho_v must be nonnegative")
    selection.check_graph(params.f_c, rho_v)
    return _fixed_step(
        z0,
        params,
        eps,
        step,
        opts.horizon,
        opts.dense_output_dt,
        selection.f_s,
        selection.v_s,
        "perturbed",
    )


def detect_phases(traj: Trajectory, params: Params, tol: float, min_duration=None) -> list:
    """Split a sampled trajectory into stick and signed slip phases.

    Stick phases are maximal sample runs with ``|v| <= tol`` lasting at
    least ``min_duration`` (default two output steps). Slip stretches are
    split where ``v`` changes sign.
    """
    t, v = traj.times, traj.z[:, 2]
    if min_duration is None:
        min_duration = 2.0 * traj.dense_output_dt
    small = np.abs(v) <= tol
    n = t.size
    sticks = []
    i = 0
    while i < n:
        if not small[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and small[j + 1]:
            j += 1
        if t[j] - t[i] >= min_duration:
            sticks.append((i, j))
        i = j + 1
    raw = []
    cursor = 0
    for i0, i1 in sticks:
        if i0 > cursor:
            raw.extend(_split_slip(t, v, small, cursor, i0))
        raw.append((t[i0], t[i1], STICK))
        cursor = i1
    if cursor < n - 1:
        raw.extend(_split_slip(t, v, small, cursor, n - 1))
    return _merge_phases([(float(a), float(b), kind) for a, b, kind in raw])


def _slip_kind(v: float) -> str:
    return SLIP_POS if v > 0 else SLIP_NEG


def _split_slip(t, v, small, i0, i1):
    """Signed slip pieces between sample ``i0`` and ``i1``."""
    pieces = []
    start = t[i0]
    idx = [k for k in range(i0, i1 + 1) if not small[k]]
    if not idx:
        return [(t[i0], t[i1], STICK)]
    kind = _slip_kind(v[idx[0]])
    for a, b in zip(idx[:-1], idx[1:]):
        if np.sign(v[a]) != np.sign(v[b]):
            if b - a > 1:
                cut = t[a + 1]
            else:
                cut = t[a] + (t[b] - t[a]) * v[a] / (v[a] - v[b])
            pieces.append((start, cut, kind))
            start, kind = cut, _slip_kind(v[b])
    pieces.append((start, t[i1], kind))
    return pieces


def trajectory_diff(a: Trajectory, b: Trajectory, t_grid) -> float:
    """Sup over ``t_grid`` of the distance between interpolated ``z`` states."""
    t_grid = np.asarray(t_grid, dtype=float)
    for tr in (a, b):
        if t_grid.min() < tr.times[0] - 1e-12 or t_grid.max() > tr.times[-1] + 1e-9:
            raise DomainMismatch(
                f"grid [{t_grid.min()}, {t_grid.max()}] outside "
                f"[{tr.times[0]}, {tr.times[-1]}]"
            )
    za = np.column_stack([np.interp(t_grid, a.times, a.z[:, k]) for k in range(3)])
    zb = np.column_stack([np.interp(t_grid, b.times, b.z[:, k]) for k in range(3)])
    return float(np.max(np.linalg.norm(za - zb, axis=1)))
