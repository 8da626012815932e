"""Command-line front end: ``stickslip {simulate,lyapunov,iss-sweep,verify}``.

Exit codes: 0 ok, 1 runtime error, 2 configuration or assumption error,
3 audit failure. ``STICKSLIP_THREADS`` caps the number of concurrent runs.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .certificates import (
    audit_decrease,
    audit_stability,
    lyap_V,
    lyap_Vhat,
    pick_vhat_gains,
    region_R,
    stability_constants,
)
from .config import ExperimentConfig, default_config, load_config
from .errors import (
    AssumptionViolated,
    AuditFailed,
    ConfigError,
    NonHurwitz,
    SelectionOutOfGraph,
    StickSlipError,
)
from .model import PRESETS, dist_to_attractor_z
from .simulator import StribeckSelection, simulate, simulate_perturbed
from .verify import run_battery

log = logging.getLogger("stickslip")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG, EXIT_AUDIT = 0, 1, 2, 3
TRAJ_COLUMNS = ["t", "e_i", "s", "v", "sigma", "phi", "mode", "phase", "V", "Vhat", "dist_A"]
TAIL_FRACTION = 0.25


def _fmt(value) -> str:
    if isinstance(value, (str, np.str_)):
        return str(value)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _threads() -> int:
    raw = os.environ.get("STICKSLIP_THREADS", "")
    try:
        return max(int(raw), 1)
    except ValueError:
        return max(os.cpu_count() or 1, 1)


def _map(fn, items):
    """Ordered parallel map; order keeps outputs deterministic."""
    items = list(items)
    workers = min(_threads(), max(len(items), 1))
    if workers == 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def trajectory_rows(traj, params, gains):
    labels = traj.phase_labels()
    V = lyap_V(traj.x, params)
    Vh = lyap_Vhat(traj.x, params, gains)
    dist = dist_to_attractor_z(traj.z, params)
    for k in range(traj.times.size):
        yield (
            traj.times[k], *traj.z[k], *traj.x[k][:2],
            int(traj.modes[k]), labels[k], V[k], Vh[k], dist[k],
        )


def _phase_rows(traj):
    return [(p.t_start, p.t_end, p.kind, p.duration) for p in traj.phases]


def _phase_table(traj):
    return [
        {"t_start": p.t_start, "t_end": p.t_end, "kind": p.kind, "duration": p.duration}
        for p in traj.phases
    ]


def _run_exact(cfg: ExperimentConfig, dt=None):
    opts = cfg.sim_options(dt)
    return _map(lambda z0: simulate(z0, cfg.params, opts), cfg.all_initial_conditions())


def _audit(cfg, traj, consts, gains) -> dict:
    out = {}
    if cfg.audits.decrease:
        out["decrease"] = audit_decrease(traj, cfg.params, consts.c_decrease).to_dict()
    if cfg.audits.stability:
        out["stability"] = audit_stability(traj, cfg.params, consts, gains).to_dict()
    return out


def _dump_summary(out: Path, payload: dict) -> None:
    (out / "summary.json").write_text(json.dumps(payload, indent=2, default=float) + "\n")


def cmd_simulate(cfg: ExperimentConfig, out: Path) -> int:
    params = cfg.params
    gains = pick_vhat_gains(params)
    consts = stability_constants(params, gains)
    trajs = _run_exact(cfg)
    audit_dt = min(cfg.audit_dt, cfg.sim.dense_output_dt)
    wants_audit = cfg.audits.decrease or cfg.audits.stability
    # audits resample the same solution on a finer grid for the quadrature
    fine = _run_exact(cfg, audit_dt) if wants_audit and audit_dt < cfg.sim.dense_output_dt else trajs
    runs, failed = [], False
    for i, (tr, tr_fine) in enumerate(zip(trajs, fine)):
        _write_csv(out / f"traj_{i:03d}.csv", TRAJ_COLUMNS, trajectory_rows(tr, params, gains))
        _write_csv(
            out / f"phases_{i:03d}.csv", ["t_start", "t_end", "kind", "duration"], _phase_rows(tr)
        )
        audits = _audit(cfg, tr_fine, consts, gains)
        failed |= any(not a["passed"] for a in audits.values())
        runs.append(
            {
                "index": i,
                "z0": tr.z[0].tolist(),
                "z_end": tr.z[-1].tolist(),
                "dist_A_end": float(dist_to_attractor_z(tr.z[-1], params)),
                "abs_e_i_end": float(abs(tr.z[-1, 0])),
                "e_i_band": params.ei_band,
                "n_events": len(tr.events),
                "phases": _phase_table(tr),
                "audits": audits,
            }
        )
    _dump_summary(
        out,
        {
            "command": "simulate",
            "config": cfg.to_dict(),
            "constants": consts.to_dict(),
            "gains": gains.__dict__,
            "runs": runs,
        },
    )
    return EXIT_AUDIT if failed else EXIT_OK


def cmd_lyapunov(cfg: ExperimentConfig, out: Path) -> int:
    params = cfg.params
    gains = pick_vhat_gains(params)
    consts = stability_constants(params, gains)
    trajs = _run_exact(cfg, min(cfg.audit_dt, cfg.sim.dense_output_dt))
    runs, failed = [], False
    for i, tr in enumerate(trajs):
        V = lyap_V(tr.x, params)
        Vh = lyap_Vhat(tr.x, params, gains)
        flag = np.where(region_R(tr.x, params), "R", "Rhat")
        dist = dist_to_attractor_z(tr.z, params)
        _write_csv(
            out / f"lyap_{i:03d}.csv",
            ["t", "V", "Vhat", "region", "dist_A"],
            zip(tr.times, V, Vh, flag, dist),
        )
        report = audit_decrease(tr, params, consts.c_decrease)
        failed |= not report.passed
        runs.append({"index": i, "z0": tr.z[0].tolist(), "decrease": report.to_dict()})
    _dump_summary(
        out,
        {"command": "lyapunov", "config": cfg.to_dict(), "constants": consts.to_dict(), "runs": runs},
    )
    return EXIT_AUDIT if failed else EXIT_OK


def _sweep_cell(cfg: ExperimentConfig, consts, rho: float, index: int, z0):
    params, pert = cfg.params, cfg.perturbation
    sel = StribeckSelection(pert.peak_for(rho, params.f_c), pert.v_s)
    tr = simulate_perturbed(z0, params, rho, sel, cfg.sim_options(), pert.eps, pert.step)
    t = tr.times
    norm = np.linalg.norm(tr.z, axis=1)
    dist = dist_to_attractor_z(tr.z, params)
    decay = np.exp(-consts.lambda_iss * t)
    norm_bound = consts.c_iss * decay * norm[0] + consts.c_iss * (1.0 + rho)
    dist_bound = consts.kappa1 * decay * dist[0] + consts.kappa2 + consts.kappa3 * rho
    tail = t >= (1.0 - TAIL_FRACTION) * t[-1]
    tail_phases = sum(1 for p in tr.phases if p.t_end > t[-1] * (1.0 - TAIL_FRACTION))
    return {
        "rho_v": rho,
        "ic": index,
        "f_s": sel.f_s,
        "tail_sup": float(dist[tail].max()),
        "envelope": consts.kappa2 + consts.kappa3 * rho,
        "norm_margin": float(np.max(norm - norm_bound)),
        "dist_margin": float(np.max(dist - dist_bound)),
        "n_phases": len(tr.phases),
        "tail_phases": tail_phases,
    }


def cmd_iss_sweep(cfg: ExperimentConfig, out: Path, rho_list=None) -> int:
    if cfg.perturbation is None:
        raise ConfigError("iss-sweep needs a 'perturbation' block")
    rhos = tuple(rho_list) if rho_list else cfg.perturbation.rho_list
    if 0.0 not in rhos:
        rhos = (0.0, *rhos)
    # the static peak scales with rho, so its graph check holds for every row
    StribeckSelection(cfg.perturbation.f_s, cfg.perturbation.v_s).check_graph(
        cfg.params.f_c, cfg.perturbation.rho_v
    )
    consts = stability_constants(cfg.params)
    ics = cfg.all_initial_conditions()
    cells = [(rho, i, z0) for rho in rhos for i, z0 in enumerate(ics)]
    rows = _map(lambda c: _sweep_cell(cfg, consts, *c), cells)
    header = list(rows[0])
    _write_csv(out / "sweep.csv", header, ([r[k] for k in header] for r in rows))
    ok = all(r["norm_margin"] <= 0 and r["dist_margin"] <= 0 for r in rows)
    _dump_summary(
        out,
        {
            "command": "iss-sweep",
            "config": cfg.to_dict(),
            "constants": consts.to_dict(),
            "rows": rows,
            "envelope_ok": ok,
        },
    )
    return EXIT_OK if ok else EXIT_AUDIT


def cmd_verify(cfg: ExperimentConfig, out: Path | None = None) -> int:
    results = run_battery(event_tol=cfg.sim.event_tol, seed=cfg.seed)
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL'}  {r.detail}")
    ok = all(r.passed for r in results)
    if out is not None:
        _dump_summary(
            out,
            {"command": "verify", "results": [r.__dict__ for r in results], "passed": ok},
        )
    return EXIT_OK if ok else EXIT_AUDIT


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stickslip", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "lyapunov", "iss-sweep", "verify"):
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="JSON experiment configuration")
        p.add_argument("--preset", choices=sorted(PRESETS))
        p.add_argument("--out", type=Path, help="output directory")
        p.add_argument("--horizon", type=float)
        p.add_argument("--seed", type=int)
        if name == "iss-sweep":
            p.add_argument("--rho", type=float, nargs="+", help="rho_v values to sweep")
    return parser


def resolve_config(args) -> ExperimentConfig:
    if args.config is not None:
        cfg = load_config(args.config, args.preset)
    else:
        cfg = default_config(args.preset or "case_a")
    if args.horizon is not None:
        if not args.horizon > 0:
            raise ConfigError("--horizon must be positive")
        cfg = replace(cfg, horizon=args.horizon, sim=replace(cfg.sim, horizon=args.horizon))
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.out is not None:
        cfg = replace(cfg, output_dir=str(args.out))
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        cfg = resolve_config(args)
    except (ConfigError, AssumptionViolated, NonHurwitz, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "simulate":
            return cmd_simulate(cfg, out)
        if args.command == "lyapunov":
            return cmd_lyapunov(cfg, out)
        if args.command == "iss-sweep":
            return cmd_iss_sweep(cfg, out, args.rho)
        return cmd_verify(cfg, out)
    except AuditFailed as exc:
        print(f"audit failed: {exc}", file=sys.stderr)
        return EXIT_AUDIT
    except (ConfigError, AssumptionViolated, SelectionOutOfGraph) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (StickSlipError, OSError, ArithmeticError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
