"""One-command property battery for every quantitative estimate in scope.

Each check measures a worst ratio or residual over a seeded random ensemble
and compares it against a fixed threshold.  Estimates with an explicit
constant (the trilinear exchange identity and the dual L4 bound on the
mollified term) are asserted absolutely; estimates with an unknown constant
are asserted as ratio boundedness plus stability under grid refinement.
Failures are recorded, never raised, so one run always yields a full ledger.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import nonlinearity as nl
from . import streams
from .integrator import (
    SolverConfig,
    norm_u_H_observable,
    gronwall_envelope_check,
    simulate,
    twin_run_contraction,
)
from .noise import NoiseModel, flag_non_monotone, zeta_alpha_statistics
from .nonlinearity import MollifierParam, NO_MOLLIFIER, TWO_THIRDS
from .spectral import (
    Grid,
    SpectralField,
    grad_l2_norm,
    holder_parts,
    inner_product,
    lp_norm,
    prolong,
    random_field,
    single_mode_field,
    sobolev_norm,
)

# Anchor strings name the estimate each check exercises; the meta check
# requires exactly this set to be covered (plus "plumbing" rows).
REQUIRED_ANCHORS = frozenset(
    {
        "trilinear exchange identity",
        "H1 norm pythagoras",
        "dual L4 bound",
        "rough dual bound",
        "mollified dual L4 bound, constant 1",
        "mollified kernel L2 bound",
        "mollified rough pair bounds",
        "mollifier removal limit",
        "extra damping moment decay",
        "energy balance residual",
        "gronwall sup envelope",
        "gradient budget",
        "L4 interpolation inequality",
        "weighted contraction",
        "convolution time integrability",
        "convolution hoelder growth",
    }
)


@dataclass
class CheckResult:
    check_id: str
    anchor: str
    worst: float
    threshold: float
    passed: bool
    samples: int
    digest: str = ""
    note: str = ""


@dataclass
class Profile:
    name: str
    n_small: int = 16
    n_big: int = 32
    n_pairs: int = 10
    n_seeds: int = 8
    zeta_samples: int = 32
    moll_pairs: int = 8
    twin_pairs: int = 3

    @staticmethod
    def by_name(name: str) -> "Profile":
        if name == "quick":
            return Profile("quick")
        if name == "full":
            return Profile(
                "full",
                n_pairs=100,
                n_seeds=50,
                zeta_samples=128,
                moll_pairs=20,
                twin_pairs=10,
            )
        raise ValueError(f"unknown profile {name!r}; choose quick or full")


def _pairs(grid, count, seed, lane=0, slope=3.0):
    out = []
    for i in range(count):
        rng = streams.stream(seed, lane, i)
        u = random_field(grid, rng, spectral_slope=slope, norm_H=float(rng.uniform(0.2, 2.0)))
        v = random_field(grid, rng, spectral_slope=slope, norm_H=float(rng.uniform(0.2, 2.0)))
        out.append((u, v))
    return out


def _with_degenerates(grid, samples):
    """Ensemble plus the degenerate cases every battery must include."""
    extra = [
        (SpectralField.zero(grid), samples[0][1]),
        (single_mode_field(grid, (1, 0) + (0,) * (grid.d - 2)), samples[0][0]),
    ]
    return samples + extra


# -- individual checks ---------------------------------------------------------


def check_exchange_identity(profile: Profile, seed: int) -> list[CheckResult]:
    worst_skew = 0.0
    worst_transp = 0.0
    count = 0
    for d in (2, 3):
        grid = Grid(d, profile.n_big)
        samples = _with_degenerates(grid, _pairs(grid, profile.n_pairs, seed, lane=d))
        for u, v in samples:
            denom = sobolev_norm(0.0, u) * sobolev_norm(1.0, v) ** 2
            if denom == 0.0:
                continue
            b = nl.bilinear_B(u, v, TWO_THIRDS)
            worst_skew = max(worst_skew, abs(inner_product(b, v)) / denom)
            bm = nl.bilinear_Bm(MollifierParam(10.0), u, v, TWO_THIRDS)
            worst_skew = max(worst_skew, abs(inner_product(bm, v)) / denom)
            z = random_field(grid, streams.stream(seed, 7, count))
            denom_t = (
                sobolev_norm(0.0, u)
                * sobolev_norm(1.0, v)
                * sobolev_norm(1.0, z)
            )
            if denom_t > 0:
                lhs = inner_product(nl.bilinear_B(u, v, TWO_THIRDS), z)
                rhs = -inner_product(nl.bilinear_B(u, z, TWO_THIRDS), v)
                worst_transp = max(worst_transp, abs(lhs - rhs) / denom_t)
            count += 1
    return [
        CheckResult(
            "skew_symmetry", "trilinear exchange identity", worst_skew, 1e-10,
            worst_skew <= 1e-10, count,
        ),
        CheckResult(
            "transposition", "trilinear exchange identity", worst_transp, 1e-10,
            worst_transp <= 1e-10, count,
        ),
    ]


def check_h1_pythagoras(profile: Profile, seed: int) -> list[CheckResult]:
    worst = 0.0
    count = 0
    for d in (2, 3):
        grid = Grid(d, profile.n_small)
        for i in range(profile.n_pairs):
            v = random_field(grid, streams.stream(seed, 10 + d, i))
            h1 = sobolev_norm(1.0, v) ** 2
            if h1 == 0.0:
                continue
            gap = abs(h1 - sobolev_norm(0.0, v) ** 2 - grad_l2_norm(v) ** 2) / h1
            worst = max(worst, gap)
            count += 1
    return [
        CheckResult(
            "h1_identity", "H1 norm pythagoras", worst, 1e-10, worst <= 1e-10, count
        )
    ]


def _dual_ratio(b_fn, samples):
    worst, count, skipped = 0.0, 0, 0
    for u, v in samples:
        denom = lp_norm(4, u) * lp_norm(4, v)
        if denom == 0.0:
            skipped += 1
            continue
        worst = max(worst, sobolev_norm(-1.0, b_fn(u, v)) / denom)
        count += 1
    return worst, count, skipped


def check_dual_L4(profile: Profile, seed: int) -> list[CheckResult]:
    results = []
    worst_plain = 0.0
    count = 0
    worst_moll = 0.0
    count_m = 0
    for d in (2, 3):
        grid = Grid(d, profile.n_big)
        samples = _with_degenerates(grid, _pairs(grid, profile.n_pairs, seed, lane=20 + d))
        w, c, _ = _dual_ratio(lambda u, v: nl.bilinear_B(u, v, TWO_THIRDS), samples)
        worst_plain, count = max(worst_plain, w), count + c
        for m in (MollifierParam(1.0), MollifierParam(10.0), NO_MOLLIFIER):
            w, c, _ = _dual_ratio(
                lambda u, v: nl.bilinear_Bm(m, u, v, TWO_THIRDS), samples
            )
            worst_moll, count_m = max(worst_moll, w), count_m + c
    results.append(
        CheckResult("dual_L4", "dual L4 bound", worst_plain, 1.05,
                    worst_plain <= 1.05, count)
    )
    results.append(
        CheckResult("mollified_dual_L4", "mollified dual L4 bound, constant 1",
                    worst_moll, 1.05, worst_moll <= 1.05, count_m)
    )
    return results


def _refinement_stability(fn, grid_small, grid_big, count, seed, lane) -> tuple:
    """Max sample ratio on a coarse grid and after prolongation to a fine one.

    The same trig-polynomial samples are evaluated on both grids, so the
    drift isolates quadrature and truncation effects; returns (worst, drift).
    """
    worst_small, worst_big = 0.0, 0.0
    for i in range(count):
        rng = streams.stream(seed, lane, i)
        u = random_field(grid_small, rng, spectral_slope=3.0)
        v = random_field(grid_small, rng, spectral_slope=3.0)
        r = fn(u, v)
        if r is not None:
            worst_small = max(worst_small, r)
        r_big = fn(prolong(u, grid_big), prolong(v, grid_big))
        if r_big is not None:
            worst_big = max(worst_big, r_big)
    drift = (
        abs(worst_big - worst_small) / worst_small if worst_small > 0 else 0.0
    )
    return max(worst_small, worst_big), drift


def check_rough_dual(profile: Profile, seed: int) -> list[CheckResult]:
    out = []
    for d, a in ((2, 2.5), (3, 3.0)):
        gs, gb = Grid(d, profile.n_small), Grid(d, profile.n_big)

        def ratio(u, v):
            denom = sobolev_norm(0.0, u) * sobolev_norm(0.0, v)
            if denom == 0.0:
                return None
            return sobolev_norm(-a, nl.bilinear_B(u, v, TWO_THIRDS)) / denom

        worst, drift = _refinement_stability(
            ratio, gs, gb, profile.n_pairs, seed, 30 + d
        )
        out.append(
            CheckResult(
                f"rough_dual_d{d}", "rough dual bound", drift, 0.20,
                drift <= 0.20, profile.n_pairs,
                note=f"worst ratio {worst:.4g} stable under refinement",
            )
        )
    return out


def check_mollified_kernel_and_pairs(profile: Profile, seed: int) -> list[CheckResult]:
    out = []
    d = 3
    gs, gb = Grid(d, profile.n_small), Grid(d, profile.n_big)
    m = MollifierParam(10.0)
    g_exp = 0.5

    def kernel_ratio(u, v):
        denom = nl.rho_lp_norm(m.m, 2.0) * sobolev_norm(0.0, u) * sobolev_norm(0.0, v)
        if denom == 0.0:
            return None
        return sobolev_norm(-1.0, nl.bilinear_Bm(m, u, v, TWO_THIRDS)) / denom

    worst, drift = _refinement_stability(kernel_ratio, gs, gb, profile.n_pairs, seed, 41)
    out.append(
        CheckResult(
            "mollified_kernel", "mollified kernel L2 bound", drift, 0.20,
            drift <= 0.20, profile.n_pairs,
            note=f"worst ratio {worst:.4g} stable under refinement",
        )
    )

    rho_g = nl.rho_lp_norm(m.m, 6.0 / (4.0 + g_exp))

    def pair_ratio(u, v):
        lhs = sobolev_norm(-1.0 - g_exp, nl.bilinear_Bm(m, u, v, TWO_THIRDS))
        d1 = rho_g * sobolev_norm(0.0, u) * sobolev_norm((1 - g_exp) / 2, v)
        d2 = rho_g * sobolev_norm((1 - g_exp) / 2, u) * sobolev_norm(0.0, v)
        if d1 == 0.0 or d2 == 0.0:
            return None
        return max(lhs / d1, lhs / d2)

    worst, drift = _refinement_stability(pair_ratio, gs, gb, profile.n_pairs, seed, 42)
    out.append(
        CheckResult(
            "mollified_rough_pairs", "mollified rough pair bounds", drift, 0.20,
            drift <= 0.20, profile.n_pairs,
            note=f"worst ratio {worst:.4g} stable under refinement",
        )
    )
    return out


def check_mollifier_limit(profile: Profile, seed: int) -> list[CheckResult]:
    grid = Grid(3, profile.n_small)
    ms = [1.0, 4.0, 16.0, 64.0]
    worst_final = 0.0
    monotone = True
    for i in range(profile.moll_pairs):
        rng = streams.stream(seed, 50, i)
        u = random_field(grid, rng, spectral_slope=6.0)
        v = random_field(grid, rng, spectral_slope=6.0)
        base = nl.bilinear_B(u, v, TWO_THIRDS)
        gaps = [
            sobolev_norm(-3.0, nl.bilinear_Bm(MollifierParam(m), u, v, TWO_THIRDS) - base)
            for m in ms
        ]
        if any(b >= a for a, b in zip(gaps, gaps[1:])):
            monotone = False
        if gaps[0] > 0:
            worst_final = max(worst_final, gaps[-1] / gaps[0])
    passed = monotone and worst_final <= 0.05
    return [
        CheckResult(
            "mollifier_limit", "mollifier removal limit", worst_final, 0.05,
            passed, profile.moll_pairs,
            note="strictly decreasing" if monotone else "NOT monotone",
        )
    ]


def check_zeta_decay(profile: Profile, seed: int) -> list[CheckResult]:
    grid = Grid(2, 8)
    model = NoiseModel(grid, g=0.5, c0=0.3, r=2.0, seed=seed)
    alphas = [0.0, 1.0, 4.0, 16.0, 64.0, 256.0]
    table = zeta_alpha_statistics(
        model, alphas, t_probe=2.5, n_samples=profile.zeta_samples, dt=0.02, seed=seed
    )
    ratio = table.rows[-1].mean_sq_H / table.rows[0].mean_sq_H
    increased = flag_non_monotone(table)
    return [
        CheckResult(
            "zeta_alpha_decay", "extra damping moment decay", ratio, 0.05,
            (not increased) and ratio <= 0.05, profile.zeta_samples,
            note="non-increasing" if not increased else "INCREASE detected",
        )
    ]


def _base_noise(grid, seed, c0=0.15) -> NoiseModel:
    return NoiseModel(grid, g=0.5, c0=c0, r=2.0, seed=seed)


def check_energy_residual(profile: Profile, seed: int) -> list[CheckResult]:
    # Band-limited IC keeps dt*lambda small so the defect scales cleanly.
    grid = Grid(2, profile.n_small)
    ic = random_field(grid, streams.stream(seed, 60), norm_H=1.0, max_mode=1)
    forcing = single_mode_field(grid, (1, 0), amplitude=0.4)
    out = []
    for regime, nonlin in (("linear", False), ("nonlinear", True)):
        rates = []
        prev = None
        for dt in (0.01, 0.005, 0.0025):
            cfg = SolverConfig(
                grid=grid, dt=dt, t_end=1.0, noise=None, ic=ic,
                forcing=forcing, nonlinearity=nonlin, seed=seed,
            )
            traj = simulate(cfg)
            res = float(np.max(np.abs(traj.column("energy_residual")[1:])))
            if prev is not None:
                rates.append(math.log2(prev / res))
            prev = res
        worst_rate = min(rates)
        out.append(
            CheckResult(
                f"energy_residual_{regime}", "energy balance residual",
                worst_rate, 0.9, worst_rate >= 0.9, 3,
                note="halving dt halves the residual",
            )
        )
    return out


def check_gronwall(profile: Profile, seed: int) -> list[CheckResult]:
    grid = Grid(2, profile.n_small)
    model = _base_noise(grid, seed)
    ic = random_field(grid, streams.stream(seed, 61), norm_H=1.0)
    forcing = single_mode_field(grid, (1, 0), amplitude=0.2)
    worst_sup, worst_grad = 0.0, 0.0
    for s in range(profile.n_seeds):
        cfg = SolverConfig(
            grid=grid, dt=0.02, t_end=5.0, noise=model, ic=ic, forcing=forcing,
            seed=seed + s,
        )
        traj = simulate(cfg, extra_observables={"norm_u_H": norm_u_H_observable})
        rep = gronwall_envelope_check(traj, C5=10.0, C6=10.0)
        worst_sup = max(worst_sup, rep.sup_u_sq / rep.envelope)
        worst_grad = max(worst_grad, rep.grad_budget / rep.grad_budget_bound)
    return [
        CheckResult("gronwall_sup", "gronwall sup envelope", worst_sup, 1.0,
                    worst_sup <= 1.0, profile.n_seeds),
        CheckResult("gradient_budget", "gradient budget", worst_grad, 1.0,
                    worst_grad <= 1.0, profile.n_seeds),
    ]


def check_interpolation_L4(profile: Profile, seed: int) -> list[CheckResult]:
    out = []
    for d, exps in ((2, (0.5, 0.5)), (3, (0.25, 0.75))):
        gs, gb = Grid(d, profile.n_small), Grid(d, profile.n_big)
        a, b = exps

        def ratio(u, v):
            gu = grad_l2_norm(u)
            if gu == 0.0:
                return None
            return lp_norm(4, u) / (sobolev_norm(0.0, u) ** a * gu**b)

        worst, drift = _refinement_stability(ratio, gs, gb, profile.n_pairs, seed, 70 + d)
        out.append(
            CheckResult(
                f"interpolation_L4_d{d}", "L4 interpolation inequality",
                drift, 0.15, drift <= 0.15, profile.n_pairs,
                note=f"worst ratio {worst:.4g} stable under refinement",
            )
        )
    return out


def check_contraction(profile: Profile, seed: int) -> list[CheckResult]:
    grid = Grid(3, 8)
    model = _base_noise(grid, seed)
    worst = 0.0
    for i in range(profile.twin_pairs):
        ic = random_field(grid, streams.stream(seed, 80, i), norm_H=1.0)
        pert = random_field(grid, streams.stream(seed, 81, i), norm_H=1.0)
        cfg = SolverConfig(
            grid=grid, dt=0.02, t_end=1.0, noise=model, ic=ic,
            mollifier=MollifierParam(10.0), seed=seed + i,
        )
        series = twin_run_contraction(cfg, ic, ic + 1e-3 * pert, trajectory_index=i)
        inc = float(np.max(np.diff(series.weighted)))
        worst = max(worst, inc / series.weighted[0])
    return [
        CheckResult(
            "weighted_contraction", "weighted contraction", worst, 1e-3,
            worst <= 1e-3, profile.twin_pairs,
            note="max per-step increase relative to the initial gap",
        )
    ]


def check_z_integrability(profile: Profile, seed: int) -> list[CheckResult]:
    grid = Grid(2, 8)
    model = _base_noise(grid, seed, c0=0.3)
    horizons = [2.0, 4.0, 8.0]
    cfg = SolverConfig(
        grid=grid, dt=0.02, t_end=horizons[-1], noise=model, nonlinearity=False,
        seed=seed,
    )
    out = []
    for p in (8.0 / 3.0, 4.0):
        ratios = {T: [] for T in horizons}
        for s in range(profile.n_seeds):
            traj = simulate(replace(cfg, seed=seed + s))
            t = traj.times
            z4 = traj.column("z_L4")
            for T in horizons:
                cut = np.searchsorted(t, T + 1e-12)
                val = float(np.trapezoid(z4[:cut] ** p, t[:cut]))
                ratios[T].append(val / (1.0 + T))
        means = [float(np.mean(ratios[T])) for T in horizons]
        spread = max(means) / min(means) if min(means) > 0 else math.inf
        out.append(
            CheckResult(
                f"z_integrability_p{p:.3g}", "convolution time integrability",
                spread, 2.0, spread <= 2.0, profile.n_seeds,
                note="E int ||z||_L4^p grows at most linearly in T",
            )
        )
    return out


def check_z_holder_growth(profile: Profile, seed: int) -> list[CheckResult]:
    grid = Grid(2, 8)
    horizons = [1.0, 2.0, 4.0, 8.0]
    out = []
    for g_exp in (0.25, 0.75):
        beta, delta = 0.05, 0.1
        e = (1.0 - g_exp) / 2.0 - beta - delta / 2.0
        model = NoiseModel(grid, g=g_exp, c0=0.3, r=2.0, seed=seed)
        cfg = SolverConfig(
            grid=grid, dt=0.02, t_end=horizons[-1], noise=model,
            nonlinearity=False, snapshot_cadence=5, snapshot_fields=("z",),
            seed=seed,
        )
        means = {T: [] for T in horizons}
        for s in range(profile.n_seeds):
            traj = simulate(replace(cfg, seed=seed + 100 + s))
            st = traj.snapshot_times
            zs = traj.snapshots["z"]
            for T in horizons:
                cut = np.searchsorted(st, T + 1e-12)
                sup_part, quot = holder_parts(beta, delta, st[:cut], zs[:cut])
                means[T].append(sup_part + quot)
        ratios = [float(np.mean(means[T])) / (1.0 + T**e) for T in horizons]
        spread = max(ratios) / min(ratios) if min(ratios) > 0 else math.inf
        out.append(
            CheckResult(
                f"z_holder_growth_g{g_exp:g}", "convolution hoelder growth",
                spread, 2.0, spread <= 2.0, profile.n_seeds,
                note=f"growth consistent with exponent {e:g}",
            )
        )
    return out


_CHECKS = [
    check_exchange_identity,
    check_h1_pythagoras,
    check_dual_L4,
    check_rough_dual,
    check_mollified_kernel_and_pairs,
    check_mollifier_limit,
    check_zeta_decay,
    check_energy_residual,
    check_gronwall,
    check_interpolation_L4,
    check_contraction,
    check_z_integrability,
    check_z_holder_growth,
]


def run_all(profile: str = "quick", seed: int = 2026) -> list[CheckResult]:
    """Run the whole battery; failures are recorded, never raised."""
    prof = Profile.by_name(profile)
    digest = f"{profile}-n{prof.n_small}/{prof.n_big}-seed{seed}"
    rows: list[CheckResult] = []
    for fn in _CHECKS:
        try:
            results = fn(prof, seed)
        except Exception as exc:  # a crashed check is a failed check
            results = [
                CheckResult(fn.__name__, "plumbing", math.nan, math.nan, False, 0,
                            note=f"crashed: {exc}")
            ]
        rows.extend(results)
    covered = {r.anchor for r in rows if r.anchor != "plumbing"}
    missing = REQUIRED_ANCHORS - covered
    rows.append(
        CheckResult(
            "ledger_completeness", "plumbing", float(len(missing)), 0.0,
            not missing, len(rows),
            note="missing: " + ", ".join(sorted(missing)) if missing else "all anchors covered",
        )
    )
    for r in rows:
        r.digest = digest
    rows.sort(key=lambda r: r.check_id)
    return rows


def all_passed(rows: list[CheckResult]) -> bool:
    return all(r.passed for r in rows)


def format_ledger(rows: list[CheckResult]) -> str:
    lines = []
    width = max(len(r.check_id) for r in rows)
    for r in rows:
        status = "PASS" if r.passed else "FAIL"
        lines.append(
            f"{status}  {r.check_id:<{width}}  worst={r.worst:<12.6g} "
            f"threshold={r.threshold:<10.4g} samples={r.samples:<4d} [{r.anchor}]"
            + (f"  {r.note}" if r.note else "")
        )
    return "\n".join(lines)
