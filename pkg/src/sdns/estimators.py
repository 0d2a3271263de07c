"""Invariant-measure statistics: time averages, exceedance, tightness norms.

All estimators are pure folds over recorded trajectories.  Ensemble
reductions sum in a fixed seed order with pairwise (numpy) summation, so
results do not depend on worker scheduling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .integrator import Trajectory
from .spectral import (
    SpectralField,
    ZTNormParams,
    _grid_arrays,
    holder_parts,
    inner_product,
    single_mode_field,
    sobolev_norm,
)


@dataclass(frozen=True)
class ObservableSpec:
    """A bounded or norm-type observable of the velocity field.

    kinds: ``norm_H_squared`` and ``norm_L4`` read the standard columns;
    ``energy_spectrum_band`` sums modal energy over k_lo <= |k| < k_hi;
    ``bounded_test_fn`` evaluates tanh(<v, h>_H / radius) against a fixed
    unit-H single-mode probe h -- bounded, Lipschitz, and weakly
    sequentially continuous by construction.
    """

    kind: str
    k_lo: float = 0.0
    k_hi: float = 0.0
    radius: float = 1.0
    mode: tuple = (1, 0)

    def __post_init__(self):
        if self.kind not in (
            "norm_H_squared",
            "norm_L4",
            "energy_spectrum_band",
            "bounded_test_fn",
        ):
            raise ValueError(f"unknown observable kind {self.kind!r}")

    @property
    def name(self) -> str:
        if self.kind == "energy_spectrum_band":
            return f"band_{self.k_lo:g}_{self.k_hi:g}"
        if self.kind == "bounded_test_fn":
            return "testfn_" + "_".join(str(int(m)) for m in self.mode)
        return self.kind

    @property
    def needs_fields(self) -> bool:
        return self.kind in ("energy_spectrum_band", "bounded_test_fn")

    def field_fn(self, grid):
        """Callable (v, u, z) -> float for the field-based kinds."""
        if self.kind == "energy_spectrum_band":
            k2 = _grid_arrays(grid)["k2"]
            band = (k2 >= self.k_lo**2) & (k2 < self.k_hi**2)

            def fn(v, u, z):
                return float(
                    grid.volume * np.sum(np.abs(v.coeffs[:, band]) ** 2)
                )

            return fn
        if self.kind == "bounded_test_fn":
            probe = single_mode_field(grid, self.mode)
            scale = sobolev_norm(0.0, probe)
            probe = probe * (1.0 / scale)
            radius = self.radius

            def fn(v, u, z):
                return float(np.tanh(inner_product(v, probe) / radius))

            return fn
        if self.kind == "norm_H_squared":
            return lambda v, u, z: sobolev_norm(0.0, v) ** 2
        return None

    def series(self, traj: Trajectory) -> np.ndarray:
        """Observable values along the trajectory."""
        if self.kind == "norm_H_squared":
            return traj.column("norm_H") ** 2
        if self.kind == "norm_L4":
            return traj.column("norm_L4")
        return traj.column(self.name)


DEFAULT_PANEL = (
    ObservableSpec("norm_H_squared"),
    ObservableSpec("norm_L4"),
    ObservableSpec("bounded_test_fn", mode=(1, 0)),
    ObservableSpec("bounded_test_fn", mode=(0, 1)),
    ObservableSpec("bounded_test_fn", mode=(1, 1)),
)


def panel_for_dim(d: int):
    """Default test-functional panel with d-component probe modes."""
    pad = (0,) * (d - 2)
    return (
        ObservableSpec("norm_H_squared"),
        ObservableSpec("norm_L4"),
        ObservableSpec("bounded_test_fn", mode=(1, 0) + pad),
        ObservableSpec("bounded_test_fn", mode=(0, 1) + pad),
        ObservableSpec("bounded_test_fn", mode=(1, 1) + pad),
    )


def panel_observables(panel, grid):
    """extra_observables dict for simulate() covering field-based entries."""
    out = {}
    for spec in panel:
        if spec.needs_fields:
            out[spec.name] = spec.field_fn(grid)
    return out


# -- time averaging -----------------------------------------------------------


def kb_average(traj: Trajectory, phi: ObservableSpec, T: float) -> float:
    """(1/T) integral of phi(v(t)) over [0, T], trapezoidal."""
    times = traj.times
    if T > times[-1] + 1e-12:
        raise ValueError(f"horizon {T} exceeds trajectory end {times[-1]}")
    if T <= 0:
        raise ValueError("horizon must be positive")
    series = phi.series(traj)
    cut = np.searchsorted(times, T + 1e-12)
    return float(np.trapezoid(series[:cut], times[:cut]) / times[cut - 1])


@dataclass
class KBRow:
    observable: str
    horizon: float
    mean: float
    se: float
    gap_mean: float
    gap_se: float


def build_kb_report(trajs, panel, horizons) -> list[KBRow]:
    """Ensemble Krylov-Bogoliubov table over doubling horizons.

    ``gap_mean`` at horizon T_j is the ensemble mean of the per-seed
    Cauchy gap |A_{T_j} - A_{T_{j-1}}| (zero at the first horizon).
    """
    horizons = list(horizons)
    for a, b in zip(horizons, horizons[1:]):
        if not math.isclose(b, 2.0 * a, rel_tol=1e-9):
            raise ValueError("horizons must double")
    rows = []
    n = len(trajs)
    for spec in panel:
        table = np.array(
            [[kb_average(traj, spec, T) for T in horizons] for traj in trajs]
        )
        gaps = np.abs(np.diff(table, axis=1))
        for j, T in enumerate(horizons):
            se = float(np.std(table[:, j], ddof=1) / math.sqrt(n)) if n > 1 else 0.0
            if j == 0:
                gm, gs = 0.0, 0.0
            else:
                gm = float(np.mean(gaps[:, j - 1]))
                gs = (
                    float(np.std(gaps[:, j - 1], ddof=1) / math.sqrt(n))
                    if n > 1
                    else 0.0
                )
            rows.append(
                KBRow(spec.name, T, float(np.mean(table[:, j])), se, gm, gs)
            )
    return rows


def exceedance_fraction(traj: Trajectory, R: float, T: float) -> float:
    """Fraction of time in [0, T] with ||v||_H > R; path must start at 0."""
    if R < 0:
        raise ValueError("radius must be nonnegative")
    if T < 1.0:
        raise ValueError("horizon must be at least 1")
    if traj.column("norm_H")[0] != 0.0:
        raise ValueError("exceedance statistics require a zero initial state")
    times = traj.times
    if T > times[-1] + 1e-12:
        raise ValueError(f"horizon {T} exceeds trajectory end {times[-1]}")
    cut = np.searchsorted(times, T + 1e-12)
    ind = (traj.column("norm_H")[:cut] > R).astype(float)
    return float(np.trapezoid(ind, times[:cut]) / times[cut - 1])


# -- tightness norm -----------------------------------------------------------


def zt_norm(traj: Trajectory, params: ZTNormParams) -> float:
    """Four-part path norm: sup-H + L2-H^delta + L^p-L4 + Hoelder-H^{-1}.

    The Hoelder part needs v snapshots; with finitely many samples it is a
    lower bound of the true path norm.
    """
    t = traj.times
    sup_H = float(np.max(traj.column("norm_H")))
    l2_Hdelta = math.sqrt(float(np.trapezoid(traj.column("norm_Hdelta") ** 2, t)))
    lp_L4 = float(np.trapezoid(traj.column("norm_L4") ** params.p, t)) ** (1.0 / params.p)
    if "v" not in traj.snapshots or len(traj.snapshots["v"]) < 2:
        raise ValueError("Hoelder part needs v snapshots at the pair cadence")
    sup_m1, quot = holder_parts(
        params.beta, -1.0, traj.snapshot_times, traj.snapshots["v"]
    )
    return sup_H + l2_Hdelta + lp_L4 + (sup_m1 + quot)


# -- stationarity diagnostics --------------------------------------------------


def integrated_autocorr_time(x: np.ndarray, c: float = 5.0) -> float:
    """Integrated autocorrelation time 1 + 2 sum rho_k, at least 1.

    Uses the self-consistent truncation M >= c * tau(M), which is far less
    noisy than summing until the first negative estimate.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 3:
        return 1.0
    x = x - x.mean()
    var = np.dot(x, x) / n
    if var == 0.0:
        return 1.0
    tau = 1.0
    for lag in range(1, n - 1):
        rho = np.dot(x[:-lag], x[lag:]) / ((n - lag) * var)
        tau += 2.0 * rho
        if lag >= c * tau:
            break
    return max(tau, 1.0)


@dataclass
class StationarityResult:
    statistic: float
    pvalue: float
    n_eff: tuple
    verdict: str  # stationary | nonstationary | inconclusive


def _is_disjoint_trend(a: np.ndarray, b: np.ndarray) -> bool:
    """Strictly monotone windows with separated ranges: a trend signature.

    For stationary stochastic windows of any length >= 5 this has
    vanishing probability, so it is decisive even when the effective
    sample counts are tiny (a smooth trend inflates the autocorrelation
    time and would otherwise always read as inconclusive).
    """
    if len(a) < 5 or len(b) < 5:
        return False
    da, db = np.diff(a), np.diff(b)
    monotone = (np.all(da < 0) and np.all(db < 0)) or (np.all(da > 0) and np.all(db > 0))
    separated = np.min(a) > np.max(b) or np.min(b) > np.max(a)
    return bool(monotone and separated)


def ks_two_window(
    samples_a: np.ndarray, samples_b: np.ndarray, level: float = 0.01
) -> StationarityResult:
    """Kolmogorov-Smirnov comparison of two windows, thinned to near
    independence by each window's integrated autocorrelation time."""
    samples_a = np.asarray(samples_a, dtype=float)
    samples_b = np.asarray(samples_b, dtype=float)
    taus = integrated_autocorr_time(samples_a), integrated_autocorr_time(samples_b)
    n_eff = tuple(int(len(w) / t) for w, t in zip((samples_a, samples_b), taus))
    if _is_disjoint_trend(samples_a, samples_b):
        return StationarityResult(1.0, 0.0, n_eff, "nonstationary")
    if min(n_eff) < 20:
        return StationarityResult(float("nan"), float("nan"), n_eff, "inconclusive")
    thin_a = samples_a[:: max(1, int(round(taus[0])))]
    thin_b = samples_b[:: max(1, int(round(taus[1])))]
    stat, pvalue = stats.ks_2samp(thin_a, thin_b)
    verdict = "nonstationary" if pvalue < level else "stationary"
    return StationarityResult(float(stat), float(pvalue), n_eff, verdict)


def stationarity_diagnostic(
    traj: Trajectory,
    observable: ObservableSpec,
    burn_in: float | None = None,
    level: float = 0.01,
) -> StationarityResult:
    """Two-window KS diagnostic on one observable of a trajectory.

    The post-burn-in stretch is halved into two windows; burn-in defaults
    to half the horizon.
    """
    series = observable.series(traj)
    t = traj.times
    T = t[-1]
    if burn_in is None or burn_in < 0:
        burn_in = 0.5 * T
    if burn_in >= T:
        raise ValueError("burn-in swallows the whole trajectory")
    mid = burn_in + 0.5 * (T - burn_in)
    w1 = series[(t >= burn_in) & (t < mid)]
    w2 = series[(t >= mid) & (t <= T)]
    return ks_two_window(w1, w2, level)


# -- mollification sweep --------------------------------------------------------


@dataclass
class MollRow:
    m: float
    observable: str
    mean: float
    se: float
    gap_prev_mean: float
    gap_prev_se: float


def mollification_gap_report(per_m_averages: dict, observables) -> list[MollRow]:
    """Summarise KB averages over an m-grid with per-seed paired gaps.

    ``per_m_averages[m]`` holds an (n_seeds, n_observables) array computed
    with identical driving noise across the m-grid.
    """
    ms = sorted(per_m_averages)
    rows = []
    for j, name in enumerate(observables):
        prev = None
        for m in ms:
            table = per_m_averages[m]
            n = table.shape[0]
            mean = float(np.mean(table[:, j]))
            se = float(np.std(table[:, j], ddof=1) / math.sqrt(n)) if n > 1 else 0.0
            if prev is None:
                gm = gs = 0.0
            else:
                gap = np.abs(table[:, j] - prev[:, j])
                gm = float(np.mean(gap))
                gs = float(np.std(gap, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
            rows.append(MollRow(m, name, mean, se, gm, gs))
            prev = table
    return rows
