"""Strang split-step integration of i u_t + Δu = |u|^p u with diagnostics."""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .exponents import PhysParams
from .fitting import FitResult, fit_power_law
from .spectral import Field, Grid, energy, l2_norm, mass, wrap_safe_time, WrapAroundWarning

log = logging.getLogger(__name__)


class BlowupError(FloatingPointError):
    """The integrator produced non-finite values."""


class PhaseStepWarning(UserWarning):
    """The nonlinear phase rotation per step exceeded the configured limit."""


# --- the nonlinearity ------------------------------------------------------

def abs_power(u: np.ndarray, p: float) -> np.ndarray:
    """|u|^p via exp(p log|u|), with 0^p = 0."""
    a = np.abs(u)
    out = np.zeros_like(a)
    nz = a > 0
    out[nz] = np.exp(p * np.log(a[nz]))
    return out


def power_nonlinearity(u: np.ndarray, p: float) -> np.ndarray:
    """F(u) = |u|^p u."""
    return abs_power(u, p) * u


def nonlinearity_difference(a: np.ndarray, eta: np.ndarray, p: float) -> np.ndarray:
    """F(a + eta) - F(a) without cancellation when |eta| << |a|."""
    a2 = np.abs(a) ** 2
    d2 = 2 * np.real(np.conj(a) * eta) + np.abs(eta) ** 2  # |a+eta|^2 - |a|^2
    out = np.empty(np.broadcast(a, eta).shape, dtype=complex)
    nz = a2 > 0
    ratio = d2[nz] / a2[nz]
    small = np.abs(ratio) < 0.5
    diff_pow = np.empty(ratio.shape)
    ap = np.exp(0.5 * p * np.log(a2[nz]))
    diff_pow[small] = ap[small] * np.expm1(0.5 * p * np.log1p(ratio[small]))
    big = ~small
    diff_pow[big] = abs_power(a[nz][big] + eta[nz][big], p) - ap[big]
    out[nz] = diff_pow * (a[nz] + eta[nz]) + ap * eta[nz]
    out[~nz] = power_nonlinearity(eta[~nz], p)
    return out


def phase_rotation(u: np.ndarray, p: float, tau: float) -> np.ndarray:
    """Exact flow of i u_t = |u|^p u over time tau: u exp(-i |u|^p tau)."""
    return u * np.exp(-1j * abs_power(u, p) * tau)


def nonlinear_phase_step(f: Field, p: float, tau: float) -> Field:
    return f.with_values(phase_rotation(f.values, p, tau))


def expm1_i(theta: np.ndarray) -> np.ndarray:
    """exp(-i theta) - 1, accurate for small theta."""
    return -2.0 * np.sin(theta / 2) ** 2 - 1j * np.sin(theta)


def expm1_i_second(theta: np.ndarray) -> np.ndarray:
    """exp(-i theta) - 1 + i theta, accurate for small theta."""
    out = np.empty(theta.shape, dtype=complex)
    small = np.abs(theta) < 1e-2
    t = theta[small]
    t2 = t * t
    # theta - sin(theta) by its Taylor series
    tms = t * t2 / 6 * (1 - t2 / 20 * (1 - t2 / 42))
    out[small] = -2.0 * np.sin(t / 2) ** 2 + 1j * tms
    t = theta[~small]
    out[~small] = -2.0 * np.sin(t / 2) ** 2 + 1j * (t - np.sin(t))
    return out


# --- configuration and outputs ---------------------------------------------

@dataclass
class SolverConfig:
    """Uniform-step Strang integration to time T.

    ``sample_times`` default to t=0 plus log-uniform times from 1 to T with
    16 per decade. ``nonlinear=False`` switches the |u|^p u term off.
    """

    dt: float
    T: float
    params: PhysParams
    grid: Grid
    sample_times: Optional[Sequence[float]] = None
    nonlinear: bool = True
    phase_limit: float = 0.1
    smallness: float = 0.1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.T > 0:
            raise ValueError("T must be positive")
        if self.sample_times is None:
            self.sample_times = default_sample_times(self.T)
        st = np.asarray(self.sample_times, dtype=float)
        if st.size == 0 or np.any(np.diff(st) <= 0) or st[0] < 0 or st[-1] > self.T + 1e-12:
            raise ValueError("sample times must be strictly increasing within [0, T]")
        self.sample_times = [float(s) for s in st]


def default_sample_times(T: float, per_decade: int = 16) -> List[float]:
    times = [0.0]
    if T > 1:
        m = max(1, math.ceil(per_decade * math.log10(T)))
        times += list(np.geomspace(1.0, T, m + 1))
    else:
        times.append(T)
    return times


@dataclass
class Trajectory:
    times: List[float]
    snapshots: List[Field]
    config: SolverConfig
    max_phase: float = 0.0

    def __post_init__(self):
        if len(self.times) != len(self.snapshots):
            raise ValueError("times and snapshots differ in length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must increase")

    def __iter__(self):
        return iter(zip(self.times, self.snapshots))

    def __len__(self):
        return len(self.times)

    @property
    def final(self) -> Field:
        return self.snapshots[-1]


def evolve(phi: Field, cfg: SolverConfig) -> Trajectory:
    """Strang splitting L(dt/2) N(dt) L(dt/2) with exact sub-flows.

    Each interval between sample times is split into equal steps no longer
    than ``cfg.dt``; consecutive half linear steps are merged.
    """
    grid = phi.grid
    if grid != cfg.grid:
        raise ValueError("initial field does not live on the configured grid")
    safe = wrap_safe_time(phi)
    if cfg.T > safe:
        warnings.warn(f"T={cfg.T:.4g} exceeds the wrap-around-safe time {safe:.4g}", WrapAroundWarning, stacklevel=2)
    p = cfg.params.p
    k2 = grid.k2()
    u = np.array(phi.values)
    t = 0.0
    times, snaps = [], []
    max_phase = 0.0
    warned = False
    for target in cfg.sample_times:
        span = target - t
        if span > 0:
            nsteps = max(1, math.ceil(span / cfg.dt - 1e-9))
            h = span / nsteps
            half = np.exp(-1j * k2 * h / 2)
            full = half * half
            uh = np.fft.fftn(u) * half
            for step in range(nsteps):
                u = np.fft.ifftn(uh)
                if cfg.nonlinear:
                    ap = abs_power(u, p)
                    phase = float(ap.max()) * h
                    max_phase = max(max_phase, phase)
                    if phase > cfg.phase_limit and not warned:
                        warnings.warn(f"nonlinear phase per step {phase:.3g} rad exceeds {cfg.phase_limit}", PhaseStepWarning, stacklevel=2)
                        warned = True
                    u = u * np.exp(-1j * ap * h)
                uh = np.fft.fftn(u) * (full if step + 1 < nsteps else half)
            u = np.fft.ifftn(uh)
            t = target
            if not np.all(np.isfinite(u)):
                raise BlowupError(f"non-finite values at t={t:.6g}")
        times.append(t)
        snaps.append(Field(grid, u))
    return Trajectory(times, snaps, cfg, max_phase)


def self_convergence_order(phi: Field, cfg: SolverConfig, levels: int = 3) -> dict:
    """Richardson self-convergence at dt, dt/2, dt/4, ... on the final state."""
    finals = []
    for lev in range(levels):
        c = SolverConfig(cfg.dt / 2 ** lev, cfg.T, cfg.params, cfg.grid, [0.0, cfg.T], cfg.nonlinear, math.inf)
        finals.append(evolve(phi, c).final)
    diffs = [l2_norm(finals[i] - finals[i + 1]) for i in range(levels - 1)]
    orders = [math.log2(diffs[i] / diffs[i + 1]) for i in range(len(diffs) - 1)]
    return {"differences": diffs, "orders": orders}


# --- conservation and pseudoconformal diagnostics ---------------------------

def galilean_vector_norm_sq(f: Field, t: float) -> float:
    """‖J(t) f‖_2^2 with J(t) = x + 2it∇, the operator that commutes with i∂_t + Δ."""
    grid = f.grid
    fh = np.fft.fftn(f.values)
    total = 0.0
    for x, k in zip(grid.coords(), grid.wavenumbers()):
        grad = np.fft.ifftn(1j * k * fh)
        comp = x * f.values + 2j * t * grad
        total += float(np.sum(np.abs(comp) ** 2))
    return total * grid.cell


@dataclass
class ConservationReport:
    times: List[float]
    mass: List[float]
    energy: List[float]
    J_norm_sq: List[float]
    potential: List[float]  # ‖u(t)‖_{p+2}^{p+2}
    e: List[float]
    U: List[float]
    mass_drift: float
    energy_drift: float
    decay_fit: Optional[FitResult] = None
    decay_expected: float = float("nan")
    gronwall_ok: bool = True
    notes: List[str] = field(default_factory=list)

    def as_dict(self):
        out = asdict(self)
        out["decay_fit"] = self.decay_fit.as_dict() if self.decay_fit else None
        return out

    def rows(self):
        for i, t in enumerate(self.times):
            yield {
                "t": t,
                "mass": self.mass[i],
                "energy": self.energy[i],
                "e": self.e[i],
                "U": self.U[i],
                "potential": self.potential[i],
            }


def pseudoconformal_report(traj: Trajectory, fit_from: float = 1.0) -> ConservationReport:
    """Mass/energy drift and e(t), U(t) at every sample.

    e(t) = ‖J(t)u‖^2 + 8t^2/(p+2) ‖u‖_{p+2}^{p+2} and U(t) is the second
    term. The decay exponent of ‖u(t)‖_{p+2}^{p+2} is fitted on t >= fit_from.
    """
    cfg = traj.config
    params = cfg.params
    p, d = params.p, params.d
    sigma_phi = None
    masses, energies, Js, pots, es, Us = [], [], [], [], [], []
    nonlinear = cfg.nonlinear
    for t, u in traj:
        m = mass(u)
        pot = float(np.sum(np.abs(u.values) ** (p + 2)) * u.grid.cell)
        E = energy(u, p) if nonlinear else energy(u, p) - pot / (p + 2)
        J2 = galilean_vector_norm_sq(u, t)
        U = 8 * t * t / (p + 2) * pot
        masses.append(m)
        energies.append(E)
        Js.append(J2)
        pots.append(pot)
        Us.append(U)
        es.append(J2 + U)
    m0, E0 = masses[0], energies[0]
    mass_drift = max(abs(m - m0) for m in masses) / m0 if m0 > 0 else 0.0
    energy_drift = max(abs(E - E0) for E in energies) / abs(E0) if E0 != 0 else 0.0
    notes = []
    from .spectral import sigma_norm

    sigma_phi = sigma_norm(traj.snapshots[0])
    if sigma_phi > cfg.smallness:
        notes.append(f"initial Sigma norm {sigma_phi:.3g} exceeds the smallness threshold {cfg.smallness}")
    t_arr = np.asarray(traj.times)
    sel = t_arr >= fit_from
    fit = None
    if sel.sum() >= 4 and t_arr[sel].max() / t_arr[sel].min() >= 10 * (1 - 1e-12):
        fit = fit_power_law(t_arr[sel], np.asarray(pots)[sel], min_span=1.0)
    else:
        notes.append("decay fit rejected: fewer than one decade of times >= %g" % fit_from)
    gronwall = all(U <= e * (1 + 1e-12) for U, e in zip(Us, es))
    return ConservationReport(
        times=list(traj.times),
        mass=masses,
        energy=energies,
        J_norm_sq=Js,
        potential=pots,
        e=es,
        U=Us,
        mass_drift=mass_drift,
        energy_drift=energy_drift,
        decay_fit=fit,
        decay_expected=-d * p / 2,
        gronwall_ok=gronwall,
        notes=notes,
    )


def e_dot(report: ConservationReport, params: PhysParams) -> np.ndarray:
    """Predicted de/dt = (2 - dp/2)/t · U(t) at the report's sample times (t > 0)."""
    t = np.asarray(report.times)
    U = np.asarray(report.U)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(t > 0, (2 - params.d * params.p / 2) / t * U, 0.0)
