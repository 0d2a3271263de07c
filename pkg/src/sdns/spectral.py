"""Fourier grid, divergence-free fields, and the Sobolev norm toolbox.

Everything downstream (convection term, noise, time stepping, estimators)
manipulates velocity fields through the two types defined here: a periodic
``Grid`` and a ``SpectralField`` holding the Fourier coefficients of each
velocity component.  Coefficients follow the convention

    v(x) = sum_k  c_k  exp(i k . x),       k = (2*pi/L) * m,

with ``m`` the integer lattice in numpy fftfreq order, so that a field is
real in physical space iff ``c(-m) = conj(c(m))``.  With this convention the
L2 norm is ``sqrt(L^d * sum |c_k|^2)`` (Plancherel) and all the Sobolev-scale
operators are plain per-mode multipliers.

Fields are treated as immutable: operations return new instances and the
coefficient arrays are marked read-only, so values are safe to share across
threads.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

HERMITIAN_RTOL = 1e-12
DIVFREE_RTOL = 1e-10

_MAGIC = b"SDNS"
_SNAPSHOT_VERSION = 1


class FieldError(ValueError):
    """Raised for malformed fields or incompatible grids."""


@dataclass(frozen=True)
class Grid:
    """Periodic torus [0, L]^d sampled with n points per axis.

    n must be even and >= 8; the Nyquist row (index -n/2) is not a usable
    degree of freedom for real fields and is zeroed after every multiplier
    application.
    """

    d: int
    n: int
    length: float = 2.0 * np.pi

    def __post_init__(self):
        if self.d not in (2, 3):
            raise FieldError(f"dimension must be 2 or 3, got {self.d}")
        if self.n < 8 or self.n % 2 != 0:
            raise FieldError(f"n must be even and >= 8, got {self.n}")
        if self.length <= 0:
            raise FieldError("torus side must be positive")

    @property
    def shape(self):
        return (self.n,) * self.d

    @property
    def ncells(self) -> int:
        return self.n**self.d

    @property
    def cell_volume(self) -> float:
        return (self.length / self.n) ** self.d

    @property
    def volume(self) -> float:
        return self.length**self.d

    def modes(self) -> np.ndarray:
        """Integer mode lattice, shape (d, n, ..., n), fftfreq order."""
        m = np.fft.fftfreq(self.n, d=1.0 / self.n)
        axes = np.meshgrid(*([m] * self.d), indexing="ij")
        return np.stack(axes).astype(np.float64)

    def wavenumbers(self) -> np.ndarray:
        """Physical wavenumbers k = (2*pi/L) * m."""
        return (2.0 * np.pi / self.length) * self.modes()

    def k_squared(self) -> np.ndarray:
        k = self.wavenumbers()
        return np.sum(k * k, axis=0)

    def nyquist_mask(self) -> np.ndarray:
        """True where any mode index equals -n/2 (the unpaired Nyquist row)."""
        m = self.modes()
        return np.any(m == -(self.n // 2), axis=0)

    def dealias_mask(self, fraction: float = 1.0 / 3.0) -> np.ndarray:
        """True on modes kept by the sharp cutoff |m_i| <= floor(fraction*n)."""
        cutoff = int(np.floor(fraction * self.n))
        m = self.modes()
        return np.all(np.abs(m) <= cutoff, axis=0)

    def __hash__(self):
        return hash((self.d, self.n, self.length))


# Per-grid cache of the geometric arrays above; grids are tiny and few.
_GRID_CACHE: dict = {}


def _grid_arrays(grid: Grid):
    key = (grid.d, grid.n, grid.length)
    hit = _GRID_CACHE.get(key)
    if hit is None:
        k = grid.wavenumbers()
        hit = {
            "k": k,
            "k2": np.sum(k * k, axis=0),
            "nyquist": grid.nyquist_mask(),
            "pow": {},
            "dealias": {},
        }
        _GRID_CACHE[key] = hit
    return hit


def _sobolev_weight(grid: Grid, s: float) -> np.ndarray:
    """(1 + |k|^2)^s, cached per grid and exponent."""
    g = _grid_arrays(grid)
    w = g["pow"].get(s)
    if w is None:
        w = (1.0 + g["k2"]) ** s
        g["pow"][s] = w
    return w


def _dealias_mask_cached(grid: Grid, fraction: float) -> np.ndarray:
    g = _grid_arrays(grid)
    m = g["dealias"].get(fraction)
    if m is None:
        m = grid.dealias_mask(fraction)
        g["dealias"][fraction] = m
    return m


@dataclass(frozen=True)
class SpectralField:
    """Fourier coefficients of a d-component velocity field on a Grid."""

    grid: Grid
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        expected = (self.grid.d,) + self.grid.shape
        if self.coeffs.shape != expected:
            raise FieldError(
                f"coefficient shape {self.coeffs.shape} != expected {expected}"
            )
        if self.coeffs.dtype != np.complex128:
            object.__setattr__(self, "coeffs", self.coeffs.astype(np.complex128))
        self.coeffs.flags.writeable = False

    # -- constructors ------------------------------------------------------

    @staticmethod
    def zero(grid: Grid) -> "SpectralField":
        return SpectralField(grid, np.zeros((grid.d,) + grid.shape, np.complex128))

    @staticmethod
    def from_physical(grid: Grid, values: np.ndarray) -> "SpectralField":
        """Forward transform of real physical-space samples, shape (d, n, ..)."""
        coeffs = np.fft.fftn(values, axes=tuple(range(1, grid.d + 1))) / grid.ncells
        return SpectralField(grid, coeffs)

    def to_physical(self) -> np.ndarray:
        """Real physical-space samples; imaginary residue is dropped."""
        axes = tuple(range(1, self.grid.d + 1))
        return np.real(np.fft.ifftn(self.coeffs * self.grid.ncells, axes=axes))

    # -- structure checks --------------------------------------------------

    def hermitian_defect(self) -> float:
        """Relative size of c(-m) - conj(c(m)); 0 for real fields."""
        mirrored = _reflect(self.coeffs, self.grid.d)
        scale = np.max(np.abs(self.coeffs))
        if scale == 0.0:
            return 0.0
        return float(np.max(np.abs(mirrored.conj() - self.coeffs)) / scale)

    def is_hermitian(self, rtol: float = HERMITIAN_RTOL) -> bool:
        return self.hermitian_defect() <= rtol

    def divergence_defect(self) -> float:
        """max_k |k.c(k)| / max|c|; 0 for divergence-free fields."""
        g = _grid_arrays(self.grid)
        div = np.sum(g["k"] * self.coeffs, axis=0)
        scale = np.max(np.abs(self.coeffs))
        if scale == 0.0:
            return 0.0
        return float(np.max(np.abs(div)) / scale)

    def is_divergence_free(self, rtol: float = DIVFREE_RTOL) -> bool:
        return self.divergence_defect() <= rtol

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other: "SpectralField") -> "SpectralField":
        _check_same_grid(self, other)
        return SpectralField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _check_same_grid(self, other)
        return SpectralField(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, scalar: float) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralField":
        return SpectralField(self.grid, -self.coeffs)


def _check_same_grid(a: SpectralField, b: SpectralField):
    if a.grid != b.grid:
        raise FieldError("fields live on different grids")


def _reflect(coeffs: np.ndarray, d: int) -> np.ndarray:
    """coeffs evaluated at -m (mod n) on every lattice axis."""
    out = coeffs
    for axis in range(1, d + 1):
        out = np.roll(np.flip(out, axis=axis), 1, axis=axis)
    return out


def zero_nyquist(v: SpectralField) -> SpectralField:
    g = _grid_arrays(v.grid)
    coeffs = v.coeffs.copy()
    coeffs[:, g["nyquist"]] = 0.0
    return SpectralField(v.grid, coeffs)


def apply_multiplier(v: SpectralField, factor: np.ndarray) -> SpectralField:
    """Apply a scalar per-mode multiplier and re-zero the Nyquist row."""
    g = _grid_arrays(v.grid)
    coeffs = v.coeffs * factor
    coeffs[:, g["nyquist"]] = 0.0
    return SpectralField(v.grid, coeffs)


# -- core operators ---------------------------------------------------------


def leray_project(v: SpectralField) -> SpectralField:
    """Remove the gradient part: c(k) -> c(k) - k (k.c(k)) / |k|^2.

    The k=0 (mean-flow) mode is untouched; output is divergence-free and the
    map is idempotent.
    """
    g = _grid_arrays(v.grid)
    k, k2 = g["k"], g["k2"]
    inv_k2 = np.where(k2 == 0.0, 0.0, 1.0 / np.where(k2 == 0.0, 1.0, k2))
    kdotv = np.sum(k * v.coeffs, axis=0)
    coeffs = v.coeffs - k * (kdotv * inv_k2)[None]
    coeffs[:, g["nyquist"]] = 0.0
    return SpectralField(v.grid, coeffs)


def apply_Js(s: float, v: SpectralField) -> SpectralField:
    """Sobolev-scale isomorphism: per-mode factor (1 + |k|^2)^(s/2)."""
    if s == 0.0:
        return v
    return apply_multiplier(v, _sobolev_weight(v.grid, s / 2.0))


def sobolev_norm(s: float, v: SpectralField) -> float:
    """Discrete H^s norm: sqrt(L^d * sum_k (1+|k|^2)^s |c_k|^2).

    s=0 agrees with the physical-space L2 quadrature (Plancherel).
    """
    weights = _sobolev_weight(v.grid, s) if s != 0.0 else 1.0
    total = np.sum(weights * np.sum(np.abs(v.coeffs) ** 2, axis=0))
    return float(np.sqrt(v.grid.volume * total))


def grad_l2_norm(v: SpectralField) -> float:
    """sqrt(L^d * sum_k |k|^2 |c_k|^2) = ||grad v||_{L2} summed over components."""
    g = _grid_arrays(v.grid)
    total = np.sum(g["k2"] * np.sum(np.abs(v.coeffs) ** 2, axis=0))
    return float(np.sqrt(v.grid.volume * total))


def inner_product(v: SpectralField, w: SpectralField) -> float:
    """Real L2 pairing L^d * Re sum_k v_k . conj(w_k).

    Doubles as the H^{-s}/H^{s} duality bracket since all scale operators
    are self-adjoint Fourier multipliers.
    """
    _check_same_grid(v, w)
    return float(v.grid.volume * np.real(np.sum(v.coeffs * np.conj(w.coeffs))))


def lp_norm(p: float, v: SpectralField) -> float:
    """L^p norm by rectangle-rule quadrature on the physical grid.

    Components combine as (sum_i ||v^i||_p^p)^(1/p); for p = inf the vector
    norm is the sum of component sup norms.
    """
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    phys = v.to_physical()
    if np.isinf(p):
        return float(np.sum(np.max(np.abs(phys), axis=tuple(range(1, v.grid.d + 1)))))
    cell = v.grid.cell_volume
    comp = np.sum(np.abs(phys) ** p, axis=tuple(range(1, v.grid.d + 1))) * cell
    return float(np.sum(comp) ** (1.0 / p))


def semigroup_multiplier(
    t: float, gamma_eff: float, nu: float, v: SpectralField
) -> SpectralField:
    """Heat-plus-drag semigroup: per-mode factor exp(-t (nu |k|^2 + gamma))."""
    if t < 0:
        raise ValueError("time must be nonnegative")
    if t == 0.0:
        return v
    g = _grid_arrays(v.grid)
    return apply_multiplier(v, np.exp(-t * (nu * g["k2"] + gamma_eff)))


def holder_parts(beta: float, s: float, times, fields) -> tuple[float, float]:
    """(sup-in-time, Hoelder quotient) of a sampled H^s-valued trajectory.

    The quotient is the max over sample pairs of
    ||v(t_i) - v(t_j)||_{H^s} / |t_i - t_j|^beta.  With finitely many
    samples both parts are lower bounds of the true path quantities.
    """
    times = np.asarray(times, dtype=float)
    if len(times) < 2:
        raise ValueError("need at least 2 samples")
    if np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing")
    if len(fields) != len(times):
        raise ValueError("times and fields length mismatch")

    grid = fields[0].grid
    weights = _sobolev_weight(grid, s)
    space_axes = tuple(range(1, grid.d + 1))
    stack = np.stack([f.coeffs for f in fields])  # (T, d, n, ..)

    energies = np.sqrt(
        grid.volume * np.sum(weights * np.sum(np.abs(stack) ** 2, axis=1), axis=space_axes)
    )
    sup_part = float(np.max(energies))

    quot = 0.0
    for i in range(1, len(times)):
        diff = stack[i] - stack[:i]
        norms = np.sqrt(
            grid.volume * np.sum(weights * np.sum(np.abs(diff) ** 2, axis=1), axis=space_axes)
        )
        gaps = (times[i] - times[:i]) ** beta
        quot = max(quot, float(np.max(norms / gaps)))
    return sup_part, quot


def holder_seminorm(beta: float, s: float, times, fields) -> float:
    """Discrete C^beta([0,T]; H^s) norm: sup norm plus Hoelder quotient."""
    sup_part, quot = holder_parts(beta, s, times, fields)
    return sup_part + quot


@dataclass(frozen=True)
class ZTNormParams:
    """(beta, delta, p) exponents of the four-part tightness norm."""

    beta: float
    delta: float
    p: float
    g: float = 0.5

    def __post_init__(self):
        if not (0.0 < self.beta <= 0.25):
            raise ValueError(f"beta must lie in (0, 1/4], got {self.beta}")
        if not (0.0 < self.delta <= 1.0):
            raise ValueError(f"delta must lie in (0, 1], got {self.delta}")
        if self.p <= 1.0:
            raise ValueError(f"p must exceed 1, got {self.p}")
        if self.beta + self.delta / 2.0 >= (1.0 - self.g) / 2.0:
            raise ValueError(
                "exponents too large: need beta + delta/2 < (1-g)/2, got "
                f"beta={self.beta}, delta={self.delta}, g={self.g}"
            )


# -- random band-limited fields ---------------------------------------------


def random_field(
    grid: Grid,
    rng: np.random.Generator,
    spectral_slope: float = 2.0,
    norm_H: float = 1.0,
    divergence_free: bool = True,
    dealias_fraction: float | None = 1.0 / 3.0,
    max_mode: int | None = None,
) -> SpectralField:
    """Gaussian field with power spectrum (1+|k|^2)^(-slope), zero mean mode.

    Used throughout the test batteries; the default slope keeps ||v||_{H^1}
    finite under refinement.  Normalised to the requested H norm unless the
    draw is identically zero.
    """
    g = _grid_arrays(grid)
    shape = (grid.d,) + grid.shape
    raw = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    envelope = (1.0 + g["k2"]) ** (-spectral_slope / 2.0)
    coeffs = raw * envelope
    coeffs[:, g["nyquist"]] = 0.0
    coeffs[(slice(None),) + (0,) * grid.d] = 0.0
    if max_mode is not None:
        m = grid.modes()
        coeffs[:, ~np.all(np.abs(m) <= max_mode, axis=0)] = 0.0
    if dealias_fraction is not None:
        keep = grid.dealias_mask(dealias_fraction)
        coeffs[:, ~keep] = 0.0
    # Hermitian-symmetrise so the field is real in physical space.
    sym = 0.5 * (coeffs + _reflect(coeffs, grid.d).conj())
    out = SpectralField(grid, sym)
    if divergence_free:
        out = leray_project(out)
    current = sobolev_norm(0.0, out)
    if current > 0 and norm_H is not None:
        out = out * (norm_H / current)
    return out


def single_mode_field(
    grid: Grid, mode, amplitude: float = 1.0, component: int | None = None
) -> SpectralField:
    """Real divergence-free field supported on one conjugate mode pair."""
    coeffs = np.zeros((grid.d,) + grid.shape, np.complex128)
    mode = tuple(int(m) for m in mode)
    idx = tuple(m % grid.n for m in mode)
    neg = tuple((-m) % grid.n for m in mode)
    direction = np.zeros(grid.d)
    if component is not None:
        direction[component] = 1.0
    else:
        direction[:] = unit_tangent(grid.d, mode)
    for c in range(grid.d):
        coeffs[(c,) + idx] = 0.5 * amplitude * direction[c]
        coeffs[(c,) + neg] = 0.5 * amplitude * direction[c]
    return SpectralField(grid, coeffs)


def unit_tangent(d: int, mode) -> np.ndarray:
    """Deterministic unit vector orthogonal to the lattice vector ``mode``.

    Even in mode -> -mode so conjugate pairs share one polarisation, which
    keeps noise fields real.  Undefined (raises) at the zero mode.
    """
    m = np.asarray(mode, dtype=float)
    if np.all(m == 0):
        raise ValueError("no tangent direction at the zero mode")
    axis = int(np.argmin(np.abs(m)))
    e = np.zeros(d)
    e[axis] = 1.0
    proj = e - m * (np.dot(m, e) / np.dot(m, m))
    return proj / np.linalg.norm(proj)


def prolong(v: SpectralField, target: Grid) -> SpectralField:
    """Embed a field into a finer grid by copying matching Fourier modes.

    Both grids must share the torus side; the target must resolve every
    source mode.  The prolonged field represents the same trig polynomial,
    so norms and products computed on the finer grid refine the quadrature
    without changing the field.
    """
    src = v.grid
    if target.length != src.length:
        raise FieldError("prolongation requires matching torus sides")
    if target.n < src.n:
        raise FieldError("target grid is coarser than the source")
    modes = np.fft.fftfreq(src.n, d=1.0 / src.n).astype(int)
    dest = modes % target.n
    coeffs = np.zeros((src.d,) + target.shape, np.complex128)
    coeffs[np.ix_(range(src.d), *([dest] * src.d))] = v.coeffs
    # Source Nyquist rows are unpaired; drop them on the finer lattice.
    nyq = modes == -(src.n // 2)
    keep = ~np.any(np.stack(np.meshgrid(*([nyq] * src.d), indexing="ij")), axis=0)
    sel = np.ix_(range(src.d), *([dest] * src.d))
    coeffs[sel] = np.where(keep, coeffs[sel], 0.0)
    return SpectralField(target, coeffs)


# -- snapshot file format ----------------------------------------------------

_HEADER = struct.Struct("<4sIIIdd")


def write_snapshot(path, v: SpectralField, time: float = 0.0):
    """Binary field snapshot: SDNS header + little-endian complex doubles."""
    with open(path, "wb") as fh:
        fh.write(
            _HEADER.pack(_MAGIC, _SNAPSHOT_VERSION, v.grid.d, v.grid.n, v.grid.length, time)
        )
        fh.write(np.ascontiguousarray(v.coeffs, dtype="<c16").tobytes())


def read_snapshot(path):
    """Inverse of write_snapshot; returns (field, time)."""
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
        magic, version, d, n, length, time = _HEADER.unpack(raw)
        if magic != _MAGIC:
            raise FieldError(f"not a field snapshot: bad magic {magic!r}")
        if version != _SNAPSHOT_VERSION:
            raise FieldError(f"unsupported snapshot version {version}")
        grid = Grid(d=d, n=n, length=length)
        count = d * grid.ncells
        data = np.frombuffer(fh.read(count * 16), dtype="<c16").astype(np.complex128)
        coeffs = data.reshape((d,) + grid.shape)
    return SpectralField(grid, coeffs), time
