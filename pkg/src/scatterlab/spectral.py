"""Periodic grids, spectral transforms, the free Schrödinger flow and norms.

The free flow solves i u_t + Δu = 0, so e^{itΔ} is the Fourier multiplier
exp(-i |k|^2 t).  R^d is replaced by a periodic box [-L/2, L/2)^d; for
times where the box would wrap, the flow can instead be evaluated through
the factorisation e^{itΔ} = M(t) D(t) 𝓕 M(t) with the chirp
M(t) = exp(i|x|^2/(4t)), which only needs the initial profile to fit the
box.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .fitting import FitResult, fit_power_law

SUPPORT_FRACTION = 0.9999


class WrapAroundWarning(UserWarning):
    """The periodic box is too small for the requested propagation time."""


class NonIntegrableTailError(ValueError):
    """A time integrand does not decay fast enough to extrapolate its tail."""


@dataclass(frozen=True)
class Grid:
    d: int
    n: int
    L: float

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValueError(f"only d = 1 or 2 is supported numerically, got d={self.d}")
        if self.n < 8 or self.n & (self.n - 1):
            raise ValueError(f"n must be a power of two >= 8, got {self.n}")
        if not self.L > 0:
            raise ValueError(f"box length must be positive, got {self.L}")

    @property
    def h(self) -> float:
        return self.L / self.n

    @property
    def shape(self):
        return (self.n,) * self.d

    @property
    def cell(self) -> float:
        """Quadrature weight h^d."""
        return self.h ** self.d

    @property
    def dual_cell(self) -> float:
        return (2 * math.pi / self.L) ** self.d

    @property
    def k_nyquist(self) -> float:
        return math.pi / self.h

    def axis(self) -> np.ndarray:
        return -self.L / 2 + self.h * np.arange(self.n)

    def k_axis(self) -> np.ndarray:
        """Angular wavenumbers in FFT order."""
        return 2 * math.pi * np.fft.fftfreq(self.n, d=self.h)

    def coords(self):
        return np.meshgrid(*([self.axis()] * self.d), indexing="ij")

    def wavenumbers(self):
        return np.meshgrid(*([self.k_axis()] * self.d), indexing="ij")

    def r2(self) -> np.ndarray:
        return sum(c * c for c in self.coords())

    def k2(self) -> np.ndarray:
        return sum(k * k for k in self.wavenumbers())

    def _sign(self) -> np.ndarray:
        # exp(-i xi x0) with x0 = -L/2 and xi = 2 pi m / L is (-1)^m
        m = np.rint(np.fft.fftfreq(self.n, d=1.0 / self.n)).astype(int)
        s1 = np.where(m % 2 == 0, 1.0, -1.0)
        return s1 if self.d == 1 else np.multiply.outer(s1, s1)


@dataclass(frozen=True)
class Field:
    """Complex samples of a function on a Grid; immutable."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=complex)
        if v.shape != self.grid.shape:
            raise ValueError(f"values of shape {v.shape} do not match grid shape {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field contains NaN or Inf")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def with_values(self, values) -> "Field":
        return Field(self.grid, values)

    def __add__(self, other: "Field") -> "Field":
        _same_grid(self, other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        _same_grid(self, other)
        return self.with_values(self.values - other.values)

    def __mul__(self, c) -> "Field":
        return self.with_values(self.values * c)

    __rmul__ = __mul__

    def __neg__(self) -> "Field":
        return self.with_values(-self.values)

    def norm(self) -> float:
        return l2_norm(self)


def _same_grid(a: Field, b: Field):
    if a.grid != b.grid:
        raise ValueError("fields live on different grids")


def zeros(grid: Grid) -> Field:
    return Field(grid, np.zeros(grid.shape, dtype=complex))


# --- transforms -----------------------------------------------------------

def fourier_transform(f: Field, direction: str = "forward") -> Field:
    """Unitary DFT; the returned samples are in FFT (not centred) order."""
    if f.values.shape != f.grid.shape:
        raise ValueError("size mismatch with grid")
    if direction == "forward":
        return f.with_values(np.fft.fftn(f.values, norm="ortho"))
    if direction == "inverse":
        return f.with_values(np.fft.ifftn(f.values, norm="ortho"))
    raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")


def cft(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Continuous Fourier transform (2π)^{-d/2} ∫ e^{-iξx} g dx sampled on the ξ lattice."""
    c = (2 * math.pi) ** (-grid.d / 2) * grid.cell
    return c * grid._sign() * np.fft.fftn(values)


def icft(values: np.ndarray, grid: Grid) -> np.ndarray:
    c = (2 * math.pi) ** (-grid.d / 2) * grid.dual_cell * grid.n ** grid.d
    return c * np.fft.ifftn(grid._sign() * values)


def chirp(grid: Grid, t: float) -> np.ndarray:
    return np.exp(1j * grid.r2() / (4.0 * t))


def gradient(f: Field):
    fh = np.fft.fftn(f.values)
    return [np.fft.ifftn(1j * k * fh) for k in f.grid.wavenumbers()]


# --- support diagnostics ---------------------------------------------------

def _radius_containing(weights: np.ndarray, radii: np.ndarray, frac: float) -> float:
    w = weights.ravel()
    total = w.sum()
    if total <= 0:
        return 0.0
    order = np.argsort(radii.ravel())
    cum = np.cumsum(w[order])
    idx = int(np.searchsorted(cum, frac * total))
    return float(radii.ravel()[order][min(idx, w.size - 1)])


def support_radius(f: Field, frac: float = SUPPORT_FRACTION) -> float:
    """Radius about the box centre holding ``frac`` of the mass."""
    return _radius_containing(np.abs(f.values) ** 2, np.sqrt(f.grid.r2()), frac)


def spectral_radius(f: Field, frac: float = SUPPORT_FRACTION) -> float:
    """Wavenumber below which ``frac`` of the Fourier mass lies."""
    fh = np.fft.fftn(f.values)
    return _radius_containing(np.abs(fh) ** 2, np.sqrt(f.grid.k2()), frac)


def wrap_safe_time(f: Field) -> float:
    """Largest |t| with L >= 2R + 4 k_max |t| (group velocity 2k)."""
    R, kmax = support_radius(f), spectral_radius(f)
    slack = f.grid.L - 2 * R
    if slack <= 0:
        return 0.0
    return math.inf if kmax == 0 else slack / (4 * kmax)


def lens_min_time(f: Field) -> float:
    """Smallest t for which the chirp M(t) f is resolved on the grid."""
    R, kmax = support_radius(f), spectral_radius(f)
    room = f.grid.k_nyquist - kmax
    if room <= 0:
        return math.inf
    return R / (2 * room)


# --- the free flow ---------------------------------------------------------

def free_propagate(f: Field, t: float, check: bool = True) -> Field:
    """e^{itΔ} f on the periodic box (exactly unitary)."""
    if not math.isfinite(t):
        raise ValueError("propagation time must be finite")
    if t == 0:
        return f
    if check and abs(t) > wrap_safe_time(f):
        warnings.warn(
            f"t={t:.4g} exceeds the wrap-around-safe time {wrap_safe_time(f):.4g} on L={f.grid.L}",
            WrapAroundWarning,
            stacklevel=2,
        )
    mult = np.exp(-1j * f.grid.k2() * t)
    return f.with_values(np.fft.ifftn(mult * np.fft.fftn(f.values)))


def lens_profile(values: np.ndarray, grid: Grid, t: float) -> np.ndarray:
    """𝓕[M(t) g] on the ξ lattice; e^{itΔ}g(x) = (2it)^{-d/2} M(t)(x) · that at ξ = x/(2t)."""
    return cft(chirp(grid, t) * values, grid)


def free_lp_norm(f: Field, t: float, r: float, method: str = "auto") -> float:
    """‖e^{itΔ} f‖_{L^r} using the periodic flow or the chirp factorisation."""
    if r < 1:
        raise ValueError(f"Lebesgue exponent must be >= 1, got {r}")
    g = f
    if t < 0:
        g, t = f.with_values(np.conj(f.values)), -t
    if method == "auto":
        method = "direct" if t <= wrap_safe_time(g) else "lens"
    if method == "direct" or t == 0:
        return lp_norm(free_propagate(g, t, check=False), r)
    if method != "lens":
        raise ValueError(f"unknown method {method!r}")
    ghat = lens_profile(g.values, g.grid, t)
    d = g.grid.d
    if math.isinf(r):
        return (2 * t) ** (-d / 2) * float(np.abs(ghat).max())
    integral = float(np.sum(np.abs(ghat) ** r) * g.grid.dual_cell)
    return (2 * t) ** (d / r - d / 2) * integral ** (1 / r)


def free_flow_sampler(f: Field, r: float) -> Callable[[float], float]:
    return lambda t: free_lp_norm(f, t, r)


# --- norms and functionals -------------------------------------------------

def lp_norm(f: Field, r: float) -> float:
    if r < 1:
        raise ValueError(f"Lebesgue exponent must be >= 1, got {r}")
    a = np.abs(f.values)
    if math.isinf(r):
        return float(a.max())
    return float((np.sum(a ** r) * f.grid.cell) ** (1.0 / r))


def l2_norm(f: Field) -> float:
    return math.sqrt(mass(f))


def mass(f: Field) -> float:
    """∫|f|^2 (the squared L^2 norm)."""
    return float(np.sum(np.abs(f.values) ** 2) * f.grid.cell)


def gradient_norm_sq(f: Field) -> float:
    fh = np.fft.fftn(f.values)
    # spectral Parseval: sum |k fh|^2 h^d / n^d
    return float(np.sum(f.grid.k2() * np.abs(fh) ** 2) * f.grid.cell / f.grid.n ** f.grid.d)


def moment_norm_sq(f: Field) -> float:
    """‖x f‖_2^2 with x centred on the box."""
    return float(np.sum(f.grid.r2() * np.abs(f.values) ** 2) * f.grid.cell)


def sigma_norm(f: Field) -> float:
    return math.sqrt(mass(f) + gradient_norm_sq(f) + moment_norm_sq(f))


def potential_energy(f: Field, p: float) -> float:
    return float(np.sum(np.abs(f.values) ** (p + 2)) * f.grid.cell) / (p + 2)


def energy(f: Field, p: float) -> float:
    """E(v) = ∫ |∇v|^2/2 + |v|^{p+2}/(p+2), the defocusing energy."""
    return 0.5 * gradient_norm_sq(f) + potential_energy(f, p)


def natural_time_scale(f: Field) -> float:
    """‖f‖^2 / ‖∇f‖^2, the dispersive time scale of the profile."""
    g = gradient_norm_sq(f)
    if g == 0:
        raise ValueError("profile has no gradient; time scale undefined")
    return mass(f) / g


# --- profiles --------------------------------------------------------------

def gaussian(grid: Grid, width: float = 1.0, amplitude: float = None, center=0.0) -> Field:
    """exp(-|x-c|^2 / (2 width^2)); unit L^2 norm unless ``amplitude`` is given."""
    c = np.broadcast_to(np.asarray(center, dtype=float), (grid.d,))
    r2 = sum((x - ci) ** 2 for x, ci in zip(grid.coords(), c))
    v = np.exp(-r2 / (2 * width ** 2)).astype(complex)
    if amplitude is None:
        v /= math.sqrt(np.sum(np.abs(v) ** 2) * grid.cell)
    else:
        v *= amplitude
    return Field(grid, v)


def sech(grid: Grid, width: float = 1.0, amplitude: float = None) -> Field:
    r = np.sqrt(grid.r2()) / width
    v = (1.0 / np.cosh(r)).astype(complex)
    if amplitude is None:
        v /= math.sqrt(np.sum(np.abs(v) ** 2) * grid.cell)
    else:
        v *= amplitude
    return Field(grid, v)


PROFILES = {"gaussian": gaussian, "sech": sech}


def make_profile(name: str, grid: Grid, **params) -> Field:
    try:
        builder = PROFILES[name]
    except KeyError:
        raise ValueError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}") from None
    return builder(grid, **params)


# --- scaling family --------------------------------------------------------

def _interp_axis(F: np.ndarray, grid: Grid, y: np.ndarray, axis: int, chunk: int = 512) -> np.ndarray:
    """Evaluate the trigonometric interpolant (Fourier coefficients F along ``axis``) at points y."""
    n = grid.n
    k = grid.k_axis()
    nyq = n // 2
    F = np.moveaxis(F, axis, -1)
    out = np.empty(F.shape[:-1] + (y.size,), dtype=complex)
    for start in range(0, y.size, chunk):
        yy = y[start:start + chunk] + grid.L / 2
        E = np.exp(1j * np.outer(yy, k))
        E[:, nyq] = np.cos(k[nyq] * yy)
        out[..., start:start + chunk] = F @ E.T / n
    return np.moveaxis(out, -1, axis)


def scale_family(f: Field, eps: float, sigma: float) -> Field:
    """eps sigma^{-d/2} f(x / sigma), resampled by spectral interpolation."""
    if not (eps > 0 and sigma > 0):
        raise ValueError("eps and sigma must be positive")
    grid = f.grid
    if sigma == 1:
        return f * eps
    R = support_radius(f)
    if sigma * R > grid.L / 2:
        raise ValueError(f"scaled support {sigma * R:.4g} exceeds the half box {grid.L / 2:.4g}")
    kmax = spectral_radius(f)
    if kmax / sigma > grid.k_nyquist:
        raise ValueError("scaled profile is not resolved by the grid")
    vals = _separable_resample(f, sigma)
    return Field(grid, eps * sigma ** (-grid.d / 2) * vals)


def _separable_resample(f: Field, sigma: float) -> np.ndarray:
    grid = f.grid
    y = grid.axis() / sigma
    # preimages outside the box would pick up periodic copies
    inside = (y >= -grid.L / 2) & (y < grid.L / 2)
    v = f.values
    for ax in range(grid.d):
        F = np.fft.fft(v, axis=ax)
        v = _interp_axis(F, grid, y, ax)
        shape = [1] * grid.d
        shape[ax] = grid.n
        v = v * inside.reshape(shape)
    return v


# --- space-time norms ------------------------------------------------------

@dataclass(frozen=True)
class NormSpec:
    """L^q_t L^r_x over [t0, t1]; t1 = inf requires a tail policy.

    The mesh is composite Simpson: uniform on [t0, t_uniform], then
    log-uniform with ``per_decade`` intervals up to ``t_max`` (or t1).
    ``tail`` is "powerlaw" (fit the last decade and integrate the fit) or
    "cutoff" (stop at t_max and report the fitted tail as an error bound).
    """

    q: float
    r: float
    t0: float = 0.0
    t1: float = math.inf
    t_uniform: float = 1.0
    n_uniform: int = 64
    per_decade: int = 64
    t_max: float = 1e5
    tail: str = "powerlaw"

    def __post_init__(self):
        if self.q < 1 or self.r < 1:
            raise ValueError("Lebesgue exponents must be >= 1")
        if not self.t1 > self.t0:
            raise ValueError("empty time interval")
        if math.isinf(self.t1) and self.tail not in ("powerlaw", "cutoff"):
            raise ValueError("an infinite interval needs tail='powerlaw' or 'cutoff'")

    def mesh(self) -> np.ndarray:
        end = min(self.t1, self.t_max)
        tu = min(max(self.t_uniform, self.t0), end)
        parts = []
        if tu > self.t0:
            parts.append(np.linspace(self.t0, tu, 2 * self.n_uniform + 1))
        if end > tu:
            start = max(tu, 1e-12)
            m = max(2, 2 * math.ceil(self.per_decade * math.log10(end / start) / 2))
            parts.append(np.geomspace(start, end, m + 1))
        return np.unique(np.concatenate(parts))


@dataclass(frozen=True)
class SpacetimeNorm:
    value: float
    integral: float
    tail: float
    tail_fraction: float
    tail_slope: float


def _simpson_segments(t: np.ndarray, g: np.ndarray) -> float:
    from scipy.integrate import simpson

    return float(simpson(g, x=t))


def spacetime_norm(sampler: Callable[[float], Union[float, Field]], spec: NormSpec) -> SpacetimeNorm:
    """(∫ ‖u(t)‖_r^q dt)^{1/q} by composite Simpson plus a power-law tail."""
    t = spec.mesh()

    def spatial(tt):
        val = sampler(tt)
        return lp_norm(val, spec.r) if isinstance(val, Field) else float(val)

    norms = np.array([spatial(tt) for tt in t])
    if math.isinf(spec.q):
        return SpacetimeNorm(float(norms.max()), float(norms.max()), 0.0, 0.0, float("nan"))
    g = norms ** spec.q
    tu = min(max(spec.t_uniform, spec.t0), t[-1])
    lin = t <= tu
    integral = 0.0
    if lin.sum() >= 3:
        integral += _simpson_segments(t[lin], g[lin])
    log = t >= tu
    if log.sum() >= 3:
        s = np.log(t[log])
        integral += _simpson_segments(s, g[log] * t[log])
    tail, slope = 0.0, float("nan")
    if math.isinf(spec.t1):
        last = t >= t[-1] / 10
        if last.sum() < 4 or np.any(g[last] <= 0):
            raise NonIntegrableTailError("cannot fit the tail: too few positive samples in the last decade")
        fit = fit_power_law(t[last], g[last], min_span=0.99)
        slope = fit.slope
        if slope >= -1:
            raise NonIntegrableTailError(f"integrand tail decays like t^{slope:.3f}; not integrable")
        tail = float(fit.predict(t[-1]) * t[-1] / (-slope - 1))
    total = integral + (tail if spec.tail == "powerlaw" else 0.0)
    frac = tail / (integral + tail) if (integral + tail) > 0 else 0.0
    return SpacetimeNorm(total ** (1.0 / spec.q), integral, tail, frac, slope)


# --- dispersive decay ------------------------------------------------------

def dispersive_decay_check(f: Field, r: float, times, method: str = "auto") -> FitResult:
    """Fit log ‖e^{itΔ}f‖_r against log t; the expected slope is -(d/2 - d/r)."""
    times = np.asarray(times, dtype=float)
    if np.any(times <= 0):
        raise ValueError("decay fit needs positive times")
    if times.size < 4 or np.log10(times.max() / times.min()) < 1 - 1e-12:
        raise ValueError("decay fit needs at least 4 times spanning one decade")
    if method != "lens":
        tmax = float(times.max())
        if tmax > wrap_safe_time(f) and method == "direct":
            warnings.warn(f"t={tmax:.4g} exceeds the wrap-around-safe time", WrapAroundWarning, stacklevel=2)
    norms = [free_lp_norm(f, t, r, method=method) for t in times]
    return fit_power_law(times, norms, min_span=1.0)


def expected_decay_slope(d: int, r: float) -> float:
    return -(d / 2 - (0.0 if math.isinf(r) else d / r))
