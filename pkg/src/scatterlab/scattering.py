"""Scattering state, wave operator, Born term and expansion error.

All maps are computed in the interaction picture w(t) = e^{-itΔ}u(t), which
solves w' = -i e^{-itΔ} F(e^{itΔ} w) and tends to the scattering state.
Each step freezes a representation R in which the nonlinear flow is an
exact phase rotation:

* near field (t <= t_switch): R = e^{i t_m Δ} on the periodic box, weight Δt;
* far field (t > t_switch): R = 𝓕 M(t_m) with the chirp M(t) = e^{i|x|^2/4t},
  weight Δc where dc = (2t)^{-dp/2} dt.  The far field is stepped uniformly
  in c, which maps t = ∞ to c = 0, so no time cutoff is needed.

The increments T(φ) - φ, the Born term and the expansion error are summed
separately, so none of them is formed by subtracting nearly equal fields.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .dynamics import abs_power, expm1_i, expm1_i_second, nonlinearity_difference, power_nonlinearity
from .exponents import PhysParams, unsharpened_error_exponent
from .spectral import (
    Field,
    Grid,
    NonIntegrableTailError,
    cft,
    chirp,
    free_lp_norm,
    icft,
    l2_norm,
    lens_min_time,
    natural_time_scale,
    sigma_norm,
    wrap_safe_time,
)

log = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    """An iteration or time limit did not converge; the data are likely too large."""


class GridTooSmallError(ValueError):
    """No switch time is both wrap-around safe and resolved in the chirp frame."""


class SmallnessWarning(UserWarning):
    """The input exceeds the configured small-data threshold."""


@dataclass
class ScatteringConfig:
    """Discretisation of [0, ∞) for the scattering maps.

    ``steps`` sets the resolution: the near field uses ``steps`` uniform
    steps per natural time scale of the data, then steps of t/steps; the
    far field uses ``far_steps`` uniform clock steps (default
    steps/(dp/2 - 1)).  ``t_switch`` overrides the automatic switch time.
    """

    params: PhysParams
    grid: Grid
    steps: int = 64
    far_steps: Optional[int] = None
    t_switch: Optional[float] = None
    nonlinear: bool = True
    smallness: float = 0.1
    tol: float = 1e-12
    max_iter: int = 60
    t_end: float = math.inf

    def __post_init__(self):
        if self.grid.d != self.params.d:
            raise ValueError("grid and params disagree on the dimension")
        if self.steps < 2:
            raise ValueError("steps must be >= 2")
        if not self.tol > 0:
            raise ValueError("tol must be positive")


@dataclass
class TimeMesh:
    t_a: np.ndarray
    t_b: np.ndarray
    t_m: np.ndarray  # freezing time of each step
    kappa: np.ndarray  # Δt (lab) or Δc (lens)
    lens: np.ndarray  # bool per step
    t_switch: float
    exponent: float  # dp/2

    def __len__(self):
        return self.t_a.size

    @property
    def time_weights(self) -> np.ndarray:
        """Weights w_m with Σ w_m g(t_m) approximating ∫ g dt."""
        return np.where(self.lens, self.kappa * (2 * self.t_m) ** self.exponent, self.kappa)


def clock(t, dp2: float):
    """c(t) = ∫_t^∞ (2s)^{-dp/2} ds."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(np.isinf(t), 0.0, 2.0 ** (-dp2) * t ** (1 - dp2) / (dp2 - 1))


def clock_inverse(c, dp2: float):
    c = np.asarray(c, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(c == 0, np.inf, (c * (dp2 - 1) * 2.0 ** dp2) ** (1.0 / (1 - dp2)))


def choose_switch_time(phi: Field) -> float:
    lo, hi = lens_min_time(phi), wrap_safe_time(phi)
    if not lo < hi:
        raise GridTooSmallError(
            f"grid cannot host the data: chirp frame needs t >= {lo:.4g} but the box wraps after t = {hi:.4g}; "
            "increase n (resolution) or L (box)"
        )
    if lo == 0:
        return hi / 4
    return math.sqrt(lo * hi)


def build_mesh(phi: Field, cfg: ScatteringConfig) -> TimeMesh:
    d, p = cfg.params.d, cfg.params.p
    dp2 = d * p / 2
    if dp2 <= 1:
        raise NonIntegrableTailError(f"dp/2 = {dp2:.4g} <= 1: the nonlinear interaction is not integrable in time")
    N = cfg.steps
    t0 = cfg.t_switch if cfg.t_switch is not None else choose_switch_time(phi)
    try:
        tau = natural_time_scale(phi)
    except ValueError:
        tau = t0
    t0 = min(t0, cfg.t_end)
    tau = min(tau, t0)
    nodes = [np.linspace(0.0, tau, N + 1)]
    if t0 > tau:
        m = max(1, math.ceil(N * math.log(t0 / tau)))
        nodes.append(np.geomspace(tau, t0, m + 1)[1:])
    near = np.concatenate(nodes)
    ta, tb = near[:-1], near[1:]
    if t0 >= cfg.t_end:
        return TimeMesh(ta, tb, (ta + tb) / 2, tb - ta, np.zeros(ta.size, bool), float(t0), dp2)
    K = cfg.far_steps or max(4, math.ceil(N / (dp2 - 1)))
    c = np.linspace(float(clock(t0, dp2)), float(clock(cfg.t_end, dp2)), K + 1)
    fa = clock_inverse(c[:-1], dp2)
    fa[0] = t0
    fb = clock_inverse(c[1:], dp2)
    dc = c[:-1] - c[1:]
    with np.errstate(divide="ignore"):
        inv_tm = 2.0 ** (-dp2) * (fa ** (-dp2) - np.where(np.isinf(fb), 0.0, fb ** (-dp2))) / dp2 / dc
    return TimeMesh(
        t_a=np.concatenate([ta, fa]),
        t_b=np.concatenate([tb, fb]),
        t_m=np.concatenate([(ta + tb) / 2, 1.0 / inv_tm]),
        kappa=np.concatenate([tb - ta, dc]),
        lens=np.concatenate([np.zeros(ta.size, bool), np.ones(K, bool)]),
        t_switch=float(t0),
        exponent=dp2,
    )


# --- representations -------------------------------------------------------

class _Frame:
    """Forward/back maps for one step; R acts on stacked arrays along axis 0."""

    def __init__(self, grid: Grid, t: float, lens: bool, k2: np.ndarray):
        self.grid, self.lens = grid, lens
        self.axes = tuple(range(1, grid.d + 1))
        if lens:
            self.M = chirp(grid, t)
        else:
            self.mult = np.exp(-1j * k2 * t)

    def fwd(self, v: np.ndarray) -> np.ndarray:
        if self.lens:
            return _cft_stack(self.M * v, self.grid, self.axes)
        return np.fft.ifftn(self.mult * np.fft.fftn(v, axes=self.axes), axes=self.axes)

    def back(self, g: np.ndarray) -> np.ndarray:
        if self.lens:
            return np.conj(self.M) * _icft_stack(g, self.grid, self.axes)
        return np.fft.ifftn(np.conj(self.mult) * np.fft.fftn(g, axes=self.axes), axes=self.axes)


def _cft_stack(v, grid, axes):
    c = (2 * math.pi) ** (-grid.d / 2) * grid.cell
    return c * grid._sign() * np.fft.fftn(v, axes=axes)


def _icft_stack(v, grid, axes):
    c = (2 * math.pi) ** (-grid.d / 2) * grid.dual_cell * grid.n ** grid.d
    return c * np.fft.ifftn(grid._sign() * v, axes=axes)


# --- the core march --------------------------------------------------------

@dataclass
class MarchResult:
    increment: np.ndarray  # T_-(φ) - φ
    born: np.ndarray  # B(φ)
    error: np.ndarray  # e_-(φ)
    born_shift: Optional[np.ndarray]  # B(base + offset) - B(base)
    checkpoints: List[float]
    cauchy: List[float]
    max_phase: float


def _march(base: np.ndarray, offset: Optional[np.ndarray], mesh: TimeMesh, grid: Grid, p: float,
           nonlinear: bool = True, want_error: bool = True) -> MarchResult:
    """Integrate the interaction-picture flow from φ = base + offset to t = ∞."""
    shape = grid.shape
    delta = np.zeros(shape, complex)
    born = np.zeros(shape, complex)
    err = np.zeros(shape, complex)
    shift = None if offset is None else np.zeros(shape, complex)
    if not nonlinear:
        return MarchResult(delta, born, err, shift, [], [], 0.0)
    k2 = grid.k2()
    phi = base if offset is None else base + offset
    # Cauchy increments of the pullback across doubling times
    t_first = mesh.t_b[0]
    next_mark = t_first
    window = np.zeros(shape, complex)
    checkpoints, cauchy = [], []
    max_phase = 0.0
    for m in range(len(mesh)):
        fr = _Frame(grid, mesh.t_m[m], bool(mesh.lens[m]), k2)
        kappa = mesh.kappa[m]
        stack = [phi, delta] if offset is None else [base, offset, delta]
        R = fr.fwd(np.stack(stack))
        if offset is None:
            a0, eta = R[0], R[1]
            a = a0
        else:
            a0, o, eta = R[0], R[1], R[2]
            a = a0 + o
        v = a + eta
        theta = kappa * abs_power(v, p)
        max_phase = max(max_phase, float(theta.max()))
        outs = [expm1_i(theta) * v, kappa * power_nonlinearity(a, p)]
        if want_error:
            outs.append(expm1_i_second(theta) * v - 1j * kappa * nonlinearity_difference(a, eta, p))
        if offset is not None:
            outs.append(kappa * nonlinearity_difference(a0, o, p))
        back = fr.back(np.stack(outs))
        delta += back[0]
        window += back[0]
        born += back[1]
        if want_error:
            err += back[2]
        if offset is not None:
            shift += back[-1]
        if mesh.t_b[m] >= next_mark:
            checkpoints.append(float(mesh.t_b[m]))
            cauchy.append(float(np.sqrt(np.sum(np.abs(window) ** 2) * grid.cell)))
            window[...] = 0
            next_mark = 2 * mesh.t_b[m]
    if not (np.all(np.isfinite(delta)) and np.all(np.isfinite(err))):
        raise FloatingPointError("non-finite values in the scattering integrator")
    return MarchResult(delta, born, err, shift, checkpoints, cauchy, max_phase)


def _check_small(phi: Field, cfg: ScatteringConfig):
    s = sigma_norm(phi)
    if s > cfg.smallness:
        warnings.warn(f"Sigma norm {s:.3g} exceeds the small-data threshold {cfg.smallness}", SmallnessWarning, stacklevel=3)
    return s


def _check_cauchy(cauchy: List[float]):
    """Fail if the pullback increments stop decaying over the last three doublings."""
    if len(cauchy) >= 4 and cauchy[-4] > 0 and not cauchy[-1] < cauchy[-4]:
        raise ConvergenceError(
            "pullback increments do not decay across three time doublings; data too large or grid too small"
        )


# --- public maps -----------------------------------------------------------

@dataclass
class MapResult:
    value: Field
    increment: Field  # value minus input, summed without cancellation
    meta: dict = field(default_factory=dict)


def born_term(phi: Field, cfg: ScatteringConfig, mesh: Optional[TimeMesh] = None) -> Field:
    """B(φ) = ∫_0^∞ e^{-isΔ} F(e^{isΔ} φ) ds on the scattering mesh."""
    if not cfg.nonlinear or not np.any(phi.values):
        return phi.with_values(np.zeros(phi.grid.shape, complex))
    mesh = mesh or build_mesh(phi, cfg)
    k2 = phi.grid.k2()
    acc = np.zeros(phi.grid.shape, complex)
    for m in range(len(mesh)):
        fr = _Frame(phi.grid, mesh.t_m[m], bool(mesh.lens[m]), k2)
        a = fr.fwd(phi.values[None])[0]
        acc += fr.back((mesh.kappa[m] * power_nonlinearity(a, cfg.params.p))[None])[0]
    return phi.with_values(acc)


def mesh_spacetime_norm(phi: Field, mesh: TimeMesh, r: float) -> float:
    """Σ_m w_m ‖e^{i t_m Δ} φ‖_r^r with the scattering mesh's nodes and weights."""
    total = 0.0
    for tm, w, lens in zip(mesh.t_m, mesh.time_weights, mesh.lens):
        total += w * free_lp_norm(phi, float(tm), r, method="lens" if lens else "direct") ** r
    return float(total)


def scattering_state(phi: Field, cfg: ScatteringConfig, tol: Optional[float] = None) -> MapResult:
    """S(φ) = lim e^{-itΔ}u(t) for the solution with u(0) = φ."""
    tol = cfg.tol if tol is None else tol
    if not np.any(phi.values) or not cfg.nonlinear:
        return MapResult(phi, phi.with_values(np.zeros(phi.grid.shape, complex)), {"cauchy": [], "checkpoints": []})
    _check_small(phi, cfg)
    mesh = build_mesh(phi, cfg)
    res = _march(phi.values, None, mesh, phi.grid, cfg.params.p, want_error=False)
    _check_cauchy(res.cauchy)
    meta = _mesh_meta(mesh, res)
    meta["converged_time"] = _converged_time(res.checkpoints, res.cauchy, tol)
    inc = phi.with_values(res.increment)
    return MapResult(phi + inc, inc, meta)


def _converged_time(checkpoints, cauchy, tol):
    """Earliest checkpoint after which the summed remaining increments stay below tol."""
    tail = np.cumsum(cauchy[::-1])[::-1]
    for i in range(len(checkpoints) - 1):
        if tail[i + 1] < tol:
            return checkpoints[i]
    return None


def _mesh_meta(mesh: TimeMesh, res: MarchResult) -> dict:
    return {
        "steps": len(mesh),
        "t_switch": mesh.t_switch,
        "final_time": float(mesh.t_b[-1]),
        "max_phase": res.max_phase,
        "checkpoints": res.checkpoints,
        "cauchy": res.cauchy,
    }


def _wave_iterate(psi: Field, cfg: ScatteringConfig, tol: float):
    """Fixed point of φ ↦ ψ - (S(φ) - φ); returns the last two iterates' data."""
    mesh = build_mesh(psi, cfg)
    grid, p = psi.grid, cfg.params.p
    offset = np.zeros(grid.shape, complex)  # current iterate minus ψ
    residuals = []
    prev = None
    for it in range(cfg.max_iter):
        res = _march(psi.values, offset, mesh, grid, p, want_error=True)
        new_offset = -res.increment
        r = float(np.sqrt(np.sum(np.abs(new_offset - offset) ** 2) * grid.cell))
        residuals.append(r)
        if not np.isfinite(r):
            break
        if len(residuals) >= 4 and residuals[-1] >= residuals[-4] and residuals[-1] > tol:
            raise ConvergenceError(f"Picard residuals stopped contracting: {residuals[-4:]}")
        prev = (offset, res)
        offset = new_offset
        if r <= tol:
            return offset, prev, residuals, mesh
    raise ConvergenceError(f"Picard iteration did not reach tol={tol:g} in {cfg.max_iter} iterations (last {residuals[-1]:.3g})")


def wave_operator(psi: Field, cfg: ScatteringConfig, tol: Optional[float] = None) -> MapResult:
    """W(ψ): the initial datum whose solution scatters to ψ.

    Solved as the fixed point φ = ψ - (S(φ) - φ) with S discretised on a
    fixed mesh, so S(W(ψ)) = ψ up to ``tol`` for the discrete maps.
    """
    tol = cfg.tol if tol is None else tol
    if not np.any(psi.values) or not cfg.nonlinear:
        return MapResult(psi, psi.with_values(np.zeros(psi.grid.shape, complex)), {"picard_residuals": []})
    _check_small(psi, cfg)
    offset, (_, res), residuals, mesh = _wave_iterate(psi, cfg, tol)
    meta = _mesh_meta(mesh, res)
    meta["picard_residuals"] = residuals
    inc = psi.with_values(offset)
    return MapResult(psi + inc, inc, meta)


# --- expansion reports -----------------------------------------------------

@dataclass
class ExpansionReport:
    map: str  # "S" (minus branch) or "W" (plus branch)
    phi: Field
    value: Field
    born: Field
    error: Field
    increment_norm: float
    born_norm: float
    error_norm: float
    phi_l2: float
    phi_sigma: float
    comparison_exponent: float
    sign: int
    convention: str
    meta: dict = field(default_factory=dict)

    def reconstruction_defect(self) -> float:
        """‖T(φ) - (φ ± iB + e)‖_2; zero up to rounding by construction."""
        rebuilt = self.phi.values + self.sign * 1j * self.born.values + self.error.values
        return float(np.sqrt(np.sum(np.abs(self.value.values - rebuilt) ** 2) * self.phi.grid.cell))

    def lower_bounds(self, spacetime: float) -> dict:
        """The chain ‖T-φ‖ >= ‖B‖ - ‖e‖ and ‖B‖ >= ‖e^{itΔ}φ‖^{p+2}_{p+2,p+2} / ‖φ‖."""
        return {
            "increment_vs_born_minus_error": self.increment_norm >= self.born_norm - self.error_norm - 1e-14 * self.born_norm,
            "born_vs_duality": self.born_norm >= spacetime / self.phi_l2 * (1 - 1e-12) if self.phi_l2 > 0 else True,
        }

    def summary(self) -> dict:
        return {
            "map": self.map,
            "convention": self.convention,
            "increment_norm": self.increment_norm,
            "born_norm": self.born_norm,
            "error_norm": self.error_norm,
            "phi_l2": self.phi_l2,
            "phi_sigma": self.phi_sigma,
            "comparison_exponent": self.comparison_exponent,
            "reconstruction_defect": self.reconstruction_defect(),
            **{k: v for k, v in self.meta.items()},
        }


def expansion_error(phi: Field, which: str, cfg: ScatteringConfig, tol: Optional[float] = None) -> ExpansionReport:
    """T(φ), B(φ) and e(φ) with S(φ) = φ - iB + e_- and W(φ) = φ + iB + e_+."""
    which = which.upper()
    if which not in ("S", "W"):
        raise ValueError(f"map must be 'S' or 'W', got {which!r}")
    tol = cfg.tol if tol is None else tol
    grid, p = phi.grid, cfg.params.p
    zero = np.zeros(grid.shape, complex)
    sign = -1 if which == "S" else 1
    convention = "S(phi) = phi - iB + e_-" if which == "S" else "W(phi) = phi + iB + e_+"
    if not np.any(phi.values) or not cfg.nonlinear:
        inc, born, err, meta = zero, zero, zero, {}
    else:
        _check_small(phi, cfg)
        if which == "S":
            mesh = build_mesh(phi, cfg)
            res = _march(phi.values, None, mesh, grid, p)
            _check_cauchy(res.cauchy)
            inc, born, err = res.increment, res.born, res.error
            meta = _mesh_meta(mesh, res)
        else:
            offset, (prev_offset, res), residuals, mesh = _wave_iterate(phi, cfg, tol)
            # W - ψ = -(S(φ') - φ') at the previous iterate φ' = ψ + prev_offset, so
            # e_+ = i(B(φ') - B(ψ)) - e_-(φ') without cancellation.
            inc = offset
            born = born_term(phi, cfg, mesh).values
            err = 1j * res.born_shift - res.error
            meta = _mesh_meta(mesh, res)
            meta["picard_residuals"] = residuals
    return ExpansionReport(
        map=which,
        phi=phi,
        value=phi.with_values(phi.values + inc),
        born=phi.with_values(born),
        error=phi.with_values(err),
        increment_norm=_l2(inc, grid),
        born_norm=_l2(born, grid),
        error_norm=_l2(err, grid),
        phi_l2=l2_norm(phi),
        phi_sigma=sigma_norm(phi),
        comparison_exponent=unsharpened_error_exponent(p),
        sign=sign,
        convention=convention,
        meta=meta,
    )


def _l2(v: np.ndarray, grid: Grid) -> float:
    return float(np.sqrt(np.sum(np.abs(v) ** 2) * grid.cell))
