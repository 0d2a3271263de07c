"""Command-line orchestration: simulate, invariant, zeta-alpha, moll-limit, verify.

Ensemble members are scheduled over a process pool; every member's stream
is keyed by (seed, member index), so outputs are identical for any worker
count and reruns with the same resolved config reproduce all CSVs bitwise.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, config as cfgmod, streams
from .csvio import write_csv, write_trajectory_csv
from .estimators import (
    build_kb_report,
    exceedance_fraction,
    mollification_gap_report,
    kb_average,
    panel_for_dim,
    panel_observables,
    stationarity_diagnostic,
)
from .integrator import ConfigurationError, SolverConfig, _Stepper, simulate
from .noise import flag_non_monotone, zeta_alpha_statistics
from .nonlinearity import MollifierParam
from .spectral import SpectralField, write_snapshot
from .verify import all_passed, format_ledger, run_all


def _workers(args) -> int:
    if args.workers is not None:
        return max(1, args.workers)
    env = os.environ.get("SDNS_WORKERS")
    if env:
        return max(1, int(env))
    return 1


def _outdir(args, cfg) -> Path:
    out = Path(args.out) if args.out else Path(cfg["out.dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_run_metadata(out: Path, cfg, command: str, workers: int = 1):
    (out / "config.resolved").write_text(cfgmod.resolved_text(cfg))
    meta = [
        f"version = {__version__}",
        f"command = {command}",
        f"seed = {cfg['seed']}",
        f"config_digest = {cfgmod.digest(cfg)}",
        f"workers = {workers}",
    ]
    (out / "meta.txt").write_text("\n".join(meta) + "\n")


def _load(args, overrides=None) -> dict:
    overrides = dict(overrides or {})
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.config:
        return cfgmod.load(args.config, overrides)
    return cfgmod.resolve({}, overrides)


# -- ensemble plumbing ---------------------------------------------------------


def _member(payload):
    cfg, index, zero_ic, with_panel = payload
    scfg = cfgmod.build_solver_config(cfg, zero_ic=zero_ic)
    extra = {}
    if with_panel:
        extra = panel_observables(panel_for_dim(scfg.grid.d), scfg.grid)
    return simulate(scfg, trajectory_index=index, extra_observables=extra)


def _run_ensemble(cfg, size, workers, zero_ic=False, with_panel=True):
    payloads = [(cfg, i, zero_ic, with_panel) for i in range(size)]
    if workers <= 1:
        return [_member(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_member, payloads))


# -- subcommands ---------------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg = _load(args)
    out = _outdir(args, cfg)
    scfg = cfgmod.build_solver_config(cfg)
    traj = simulate(scfg)
    write_trajectory_csv(out / "trajectory.csv", traj)
    if scfg.snapshot_fields:
        snapdir = out / "snapshots"
        snapdir.mkdir(exist_ok=True)
        for name in scfg.snapshot_fields:
            for i, (t, f) in enumerate(zip(traj.snapshot_times, traj.snapshots[name])):
                write_snapshot(snapdir / f"{name}_{i:06d}.sdns", f, time=float(t))
    _write_run_metadata(out, cfg, "simulate")
    return 0


def cmd_invariant(args) -> int:
    cfg = _load(args)
    size = cfg["ensemble.size"]
    if size < 2:
        raise cfgmod.ConfigError("ensemble.size must be at least 2 for invariant studies")
    T0 = cfg["estimators.horizon"]
    if T0 <= 0:
        T0 = cfg["t_end"] / 4.0
    horizons = [T0, 2.0 * T0, 4.0 * T0]
    if horizons[-1] > cfg["t_end"] + 1e-9:
        raise cfgmod.ConfigError(
            f"estimators.horizon too long: 4*T0 = {horizons[-1]:g} exceeds t_end"
        )
    workers = _workers(args)
    out = _outdir(args, cfg)
    # Exceedance statistics are defined from a zero start; the whole
    # ensemble honours that.
    trajs = _run_ensemble(cfg, size, workers, zero_ic=True, with_panel=True)
    panel = panel_for_dim(cfg["d"])

    rows = build_kb_report(trajs, panel, horizons)
    write_csv(
        out / "kb_report.csv",
        ("observable", "horizon", "mean", "se", "gap_mean", "gap_se"),
        [(r.observable, r.horizon, r.mean, r.se, r.gap_mean, r.gap_se) for r in rows],
    )

    pooled = np.concatenate([t.column("norm_H") for t in trajs])
    quantiles = np.linspace(0.1, 0.99, cfg["estimators.r_points"])
    r_grid = sorted(set(float(np.quantile(pooled, q)) for q in quantiles))
    exc_rows = []
    for R in r_grid:
        for T in horizons:
            vals = [exceedance_fraction(t, R, T) for t in trajs]
            exc_rows.append(
                (
                    R,
                    T,
                    float(np.mean(vals)),
                    float(np.std(vals, ddof=1) / math.sqrt(size)),
                )
            )
    write_csv(out / "exceedance.csv", ("R", "horizon", "fraction_mean", "fraction_se"), exc_rows)

    burn = cfg["estimators.burn_in"]
    if burn < 0:
        burn = max(10.0 / cfg["gamma"], cfg["t_end"] / 2.0)
    st_rows = []
    for spec in panel:
        for i, traj in enumerate(trajs):
            res = stationarity_diagnostic(traj, spec, burn_in=burn)
            st_rows.append(
                (spec.name, i, res.statistic, res.pvalue, res.n_eff[0], res.n_eff[1], res.verdict)
            )
    write_csv(
        out / "stationarity.csv",
        ("observable", "member", "statistic", "pvalue", "n_eff_a", "n_eff_b", "verdict"),
        st_rows,
    )
    _write_run_metadata(out, cfg, "invariant", workers)
    return 0


class _CoupledVelocity:
    """Velocity path co-evolved with the damped convolutions.

    Shares the per-step Gaussian block with the convolution sampler (same
    counter path), which is exactly the same driving Wiener process.
    """

    def __init__(self, cfg):
        self.scfg = cfgmod.build_solver_config(cfg)
        self.stepper = _Stepper(self.scfg)
        self.sample = None

    def __call__(self, j, step):
        if self.sample != j:
            self.sample = j
            self.step = 0
            ic = self.scfg.ic
            self.u = ic if ic is not None else SpectralField.zero(self.scfg.grid)
            self.z = SpectralField.zero(self.scfg.grid)
            self.v = self.z + self.u
        while self.step < step:
            normals = self.stepper.draw_normals(j, self.step)
            z_prev, v_prev = self.z, self.v
            self.z = self.stepper.z_step(v_prev, z_prev, normals)
            Bv = (
                self.scfg.convection(v_prev, v_prev)
                if self.scfg.nonlinearity
                else None
            )
            self.u = self.stepper.u_update(self.u, Bv, z_prev, self.step)
            self.v = self.z + self.u
            self.step += 1
        return self.v


def cmd_zeta_alpha(args) -> int:
    overrides = {}
    if args.alphas:
        overrides["zeta.alphas"] = tuple(float(a) for a in args.alphas.split(","))
    cfg = _load(args, overrides)
    out = _outdir(args, cfg)
    grid = cfgmod.build_grid(cfg)
    model = cfgmod.build_noise(cfg, grid)
    t_probe = cfg["zeta.t_probe"]
    if t_probe <= 0:
        t_probe = 3.0 / cfg["gamma"]
    supplier = None
    if model.psi.lipschitz != 0.0:
        supplier = _CoupledVelocity(cfg)
    table = zeta_alpha_statistics(
        model,
        list(cfg["zeta.alphas"]),
        t_probe=t_probe,
        n_samples=cfg["zeta.samples"],
        dt=cfg["dt"],
        nu=cfg["nu"],
        gamma=cfg["gamma"],
        v_supplier=supplier,
        seed=cfg["seed"],
    )
    non_increasing = not flag_non_monotone(table)
    write_csv(
        out / "zeta_alpha.csv",
        ("alpha", "mean_sq_H", "se_sq_H", "mean_four_L4", "se_four_L4", "non_increasing"),
        [
            (r.alpha, r.mean_sq_H, r.se_sq_H, r.mean_four_L4, r.se_four_L4, non_increasing)
            for r in table.rows
        ],
    )
    _write_run_metadata(out, cfg, "zeta-alpha")
    return 0


def cmd_moll_limit(args) -> int:
    cfg = _load(args)
    if cfg["d"] != 3:
        raise cfgmod.ConfigError("the mollification sweep is a d=3 study: set d = 3")
    size = cfg["ensemble.size"]
    workers = _workers(args)
    out = _outdir(args, cfg)
    horizon = cfg["estimators.horizon"]
    if horizon <= 0:
        horizon = cfg["t_end"]
    panel = panel_for_dim(3)
    per_m = {}
    for m in cfg["moll.grid"]:
        cfg_m = dict(cfg)
        cfg_m["mollifier.m"] = float(m)
        trajs = _run_ensemble(cfg_m, size, workers, zero_ic=False, with_panel=True)
        per_m[float(m)] = np.array(
            [[kb_average(t, spec, horizon) for spec in panel] for t in trajs]
        )
    rows = mollification_gap_report(per_m, [spec.name for spec in panel])
    write_csv(
        out / "moll_gap.csv",
        ("m", "observable", "mean", "se", "gap_prev_mean", "gap_prev_se"),
        [(r.m, r.observable, r.mean, r.se, r.gap_prev_mean, r.gap_prev_se) for r in rows],
    )
    _write_run_metadata(out, cfg, "moll-limit", workers)
    return 0


def cmd_verify(args) -> int:
    cfg = _load(args)
    out = _outdir(args, cfg)
    rows = run_all(args.profile, seed=cfg["seed"])
    write_csv(
        out / "verify_ledger.csv",
        ("check_id", "anchor", "worst", "threshold", "passed", "samples", "digest", "note"),
        [
            (r.check_id, r.anchor, r.worst, r.threshold, r.passed, r.samples, r.digest, r.note)
            for r in rows
        ],
    )
    text = format_ledger(rows)
    (out / "verify_ledger.txt").write_text(text + "\n")
    print(text)
    _write_run_metadata(out, cfg, f"verify --profile {args.profile}")
    return 0 if all_passed(rows) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sdns",
        description="Stochastic damped Navier-Stokes lab: simulation and "
        "property verification on a periodic torus.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=str, default=None, help="config file path")
        p.add_argument("--seed", type=int, default=None, help="override the run seed")
        p.add_argument("--workers", type=int, default=None,
                       help="ensemble worker processes (or SDNS_WORKERS)")
        p.add_argument("--out", type=str, default=None, help="output directory")

    p = sub.add_parser("simulate", help="one trajectory to CSV + snapshots")
    common(p)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("invariant", help="ensemble time-average and exceedance study")
    common(p)
    p.set_defaults(fn=cmd_invariant)

    p = sub.add_parser("zeta-alpha", help="extra-damped convolution moment sweep")
    common(p)
    p.add_argument("--alphas", type=str, default=None, help="comma list of damping shifts")
    p.set_defaults(fn=cmd_zeta_alpha)

    p = sub.add_parser("moll-limit", help="mollifier-width sweep of time averages (d=3)")
    common(p)
    p.set_defaults(fn=cmd_moll_limit)

    p = sub.add_parser("verify", help="run the property-check battery")
    common(p)
    p.add_argument("--profile", choices=("quick", "full"), default="quick")
    p.set_defaults(fn=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (cfgmod.ConfigError, ConfigurationError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
