"""Scaling sweeps along eps = sigma^-j, quotient fits and the Hölder probe."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .exponents import PhysParams, l2_quotient_growth_exponent, quotient_growth_exponent
from .fitting import FitResult, fit_power_law
from .scattering import ScatteringConfig, build_mesh, expansion_error, mesh_spacetime_norm
from .spectral import Field, Grid, l2_norm, make_profile, scale_family, sigma_norm

log = logging.getLogger(__name__)

WORKERS_ENV = "NLSLAB_WORKERS"
SLOPE_TOLERANCE = 0.2


@dataclass
class SweepConfig:
    """One sweep over sigma with eps = sigma^-j.

    ``s`` is the Hölder order for the Sigma-quotient and ``beta`` the
    exponent for the L^2 quotient ‖T(φ)-φ‖/‖φ‖^{1+beta}.
    """

    d: int = 1
    p: float = 3.0
    profile: str = "gaussian"
    profile_params: Dict[str, float] = field(default_factory=lambda: {"width": 4.0})
    n: int = 2048
    L: float = 1024.0
    j: float = 9.0
    sigmas: List[float] = field(default_factory=lambda: [2.0, 4.0, 8.0, 16.0])
    s: float = 4.5
    beta: Optional[float] = None
    map: str = "S"
    steps: int = 64
    smallness: float = 0.1
    tol: float = 1e-12
    output: Optional[str] = None

    def __post_init__(self):
        self.sigmas = [float(s) for s in self.sigmas]
        self.params  # validates d, p
        if not self.j > 1:
            raise ValueError(f"scaling link j must exceed 1, got {self.j}")
        if not self.sigmas:
            raise ValueError("empty sigma list")
        if any(s <= 1 for s in self.sigmas) or any(b <= a for a, b in zip(self.sigmas, self.sigmas[1:])):
            raise ValueError("sigma values must exceed 1 and increase")
        for sig in self.sigmas:
            eps = sig ** (-self.j)
            if not (eps < 1 and eps * sig < 1):
                raise ValueError(f"sigma={sig} violates eps < 1, eps*sigma < 1")
        if self.map.upper() not in ("S", "W"):
            raise ValueError("map must be S or W")
        self.map = self.map.upper()

    @property
    def params(self) -> PhysParams:
        return PhysParams(self.d, self.p)

    @property
    def grid(self) -> Grid:
        return Grid(self.d, self.n, self.L)

    def scattering_config(self) -> ScatteringConfig:
        return ScatteringConfig(self.params, self.grid, steps=self.steps, smallness=self.smallness, tol=self.tol)

    def as_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        blob = json.dumps({k: v for k, v in self.as_dict().items() if k != "output"}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class SweepRecord:
    eps: float
    sigma: float
    l2: float
    sigma_norm: float
    spacetime: float  # ‖e^{itΔ}φ‖_{p+2,p+2}^{p+2}
    main_term: float  # spacetime / ‖φ‖_2
    increment_norm: float  # ‖T(φ) - φ‖_2
    born_norm: float
    error_norm: float
    sigma_quotient: float
    l2_quotient: float
    main_dominates: bool
    status: str = "ok"

    @classmethod
    def failed(cls, eps: float, sigma: float, reason: str) -> "SweepRecord":
        nan = float("nan")
        return cls(eps, sigma, nan, nan, nan, nan, nan, nan, nan, nan, nan, False, f"failed: {reason}")

    @property
    def ok(self) -> bool:
        return self.status == "ok"


RECORD_FIELDS = [f.name for f in fields(SweepRecord)]


def sweep_point(cfg: SweepConfig, sigma: float) -> SweepRecord:
    """Evaluate one (eps, sigma) point; failures become records."""
    eps = sigma ** (-cfg.j)
    try:
        base = make_profile(cfg.profile, cfg.grid, **cfg.profile_params)
        phi = scale_family(base, eps, sigma)
        scfg = cfg.scattering_config()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rep = expansion_error(phi, cfg.map, scfg)
        mesh = build_mesh(phi, scfg)
        st = mesh_spacetime_norm(phi, mesh, cfg.p + 2)
        l2 = l2_norm(phi)
        sn = sigma_norm(phi)
        beta = cfg.p if cfg.beta is None else cfg.beta
        main = st / l2
        return SweepRecord(
            eps=eps,
            sigma=sigma,
            l2=l2,
            sigma_norm=sn,
            spacetime=st,
            main_term=main,
            increment_norm=rep.increment_norm,
            born_norm=rep.born_norm,
            error_norm=rep.error_norm,
            sigma_quotient=rep.increment_norm / sn ** cfg.s,
            l2_quotient=rep.increment_norm / l2 ** (1 + beta),
            main_dominates=main > rep.error_norm,
        )
    except Exception as exc:  # one bad point must not sink the sweep
        log.warning("sweep point sigma=%g failed: %s", sigma, exc)
        return SweepRecord.failed(eps, sigma, f"{type(exc).__name__}: {exc}")


def _point_job(args):
    cfg_dict, sigma = args
    return sweep_point(SweepConfig(**cfg_dict), sigma)


def worker_count(default: int = 1) -> int:
    raw = os.environ.get(WORKERS_ENV)
    if not raw:
        return default
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    return max(1, n)


def run_scaling_sweep(cfg: SweepConfig, output: Optional[str] = None, workers: Optional[int] = None) -> List[SweepRecord]:
    """One record per sigma, written to CSV as soon as it is available.

    Points run on a process pool of ``workers`` (default from NLSLAB_WORKERS);
    records are written in sigma order either way.
    """
    output = output or cfg.output
    workers = worker_count() if workers is None else workers
    writer = None
    fh = None
    chash = cfg.config_hash()
    if output:
        Path(output).parent.mkdir(parents=True, exist_ok=True)
        fh = open(output, "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(RECORD_FIELDS + ["config_hash"])
        fh.flush()
    records = []
    try:
        if workers > 1 and len(cfg.sigmas) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                jobs = [(cfg.as_dict(), s) for s in cfg.sigmas]
                stream = pool.map(_point_job, jobs)
                for rec in stream:
                    records.append(rec)
                    _write(writer, fh, rec, chash)
        else:
            for s in cfg.sigmas:
                rec = sweep_point(cfg, s)
                records.append(rec)
                _write(writer, fh, rec, chash)
    finally:
        if fh:
            fh.close()
    return records


def _write(writer, fh, rec: SweepRecord, chash: str):
    if writer is None:
        return
    row = asdict(rec)
    writer.writerow([repr(row[k]) if isinstance(row[k], float) else row[k] for k in RECORD_FIELDS] + [chash])
    fh.flush()


def read_sweep_csv(path: str) -> List[SweepRecord]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            kw = {}
            for f in fields(SweepRecord):
                v = row[f.name]
                if f.name == "status":
                    kw[f.name] = v
                elif f.name == "main_dominates":
                    kw[f.name] = v == "True"
                else:
                    kw[f.name] = float(v)
            out.append(SweepRecord(**kw))
    return out


# --- quotient blowup -------------------------------------------------------

@dataclass
class BlowupVerdict:
    kind: str  # "sigma" or "l2"
    order: float  # s or beta
    fit: FitResult
    predicted: float
    within_tolerance: bool
    monotone_increasing: bool
    blowup: bool
    quotients: List[float]

    def as_dict(self):
        d = asdict(self)
        d["fit"] = self.fit.as_dict()
        return d


def quotient_blowup_test(records: Sequence[SweepRecord], params: PhysParams, j: float, s: Optional[float] = None,
                         beta: Optional[float] = None, tolerance: float = SLOPE_TOLERANCE) -> BlowupVerdict:
    """Fit the quotient against sigma and compare with the predicted exponent.

    Give ``s`` for the Sigma-quotient ‖T-φ‖/‖φ‖_Σ^s or ``beta`` for the L^2
    quotient ‖T-φ‖/‖φ‖_2^{1+beta}.  ``blowup`` requires a positive slope
    within ``tolerance`` of the prediction and a strictly increasing quotient.
    """
    if (s is None) == (beta is None):
        raise ValueError("give exactly one of s or beta")
    good = [r for r in records if r.ok]
    if len(good) < 4:
        raise ValueError(f"need at least 4 successful sweep points, got {len(good)}")
    sig = np.array([r.sigma for r in good])
    inc = np.array([r.increment_norm for r in good])
    if s is not None:
        q = inc / np.array([r.sigma_norm for r in good]) ** s
        predicted = quotient_growth_exponent(params, s, j)
        kind, order = "sigma", s
    else:
        q = inc / np.array([r.l2 for r in good]) ** (1 + beta)
        predicted = l2_quotient_growth_exponent(params, beta, j)
        kind, order = "l2", beta
    fit = fit_power_law(sig, q, min_span=0.5)
    within = abs(fit.slope - predicted) <= tolerance * abs(predicted)
    monotone = bool(np.all(np.diff(q) > 0))
    return BlowupVerdict(kind, order, fit, predicted, bool(within), monotone, bool(within and monotone and fit.slope > 0), q.tolist())


# --- pointwise Hölder probe ------------------------------------------------

@dataclass
class HolderFit:
    base: str
    direction: str
    s: float
    degree: int
    coefficients: list  # a_1..a_n, as arrays or scalars
    remainder_exponent: float
    remainders: List[float]
    eps: List[float]
    coefficient_change: float
    stable: bool
    member: bool
    fit: Optional[FitResult] = None

    def as_dict(self):
        d = asdict(self)
        d["coefficients"] = [_jsonable(c) for c in self.coefficients]
        d["fit"] = self.fit.as_dict() if self.fit else None
        return d


def _jsonable(c):
    a = np.asarray(c)
    if a.ndim == 0:
        return [float(np.real(a)), float(np.imag(a))] if np.iscomplexobj(a) else float(a)
    return {"norm": float(np.linalg.norm(a))}


def _as_array(x):
    return x.values if isinstance(x, Field) else np.asarray(x)


def _default_norm(x0):
    if isinstance(x0, Field):
        cell = x0.grid.cell
        return lambda v: float(np.sqrt(np.sum(np.abs(v) ** 2) * cell))
    return lambda v: float(np.linalg.norm(np.ravel(v)))


def _stencil(degree: int) -> np.ndarray:
    m = degree + 2
    c = np.arange(1, m + 1) / m
    return np.concatenate([-c[::-1], c])


def _local_fit(Y: np.ndarray, c: np.ndarray, degree: int):
    """Least squares Y ≈ Σ_{k=1}^n c^k b_k on the unit stencil c."""
    V = np.column_stack([c ** k for k in range(1, degree + 1)])
    cond = np.linalg.cond(V)
    if not np.isfinite(cond) or cond > 1e10:
        raise ValueError(f"Vandermonde system ill-conditioned (cond={cond:.3g})")
    b, *_ = np.linalg.lstsq(V, Y, rcond=None)
    return b, Y - V @ b


def holder_probe(G: Callable, x0, h, s: float, eps: Sequence[float], norm: Optional[Callable] = None,
                 base: str = "x0", direction: str = "h", slack: float = 0.02) -> HolderFit:
    """Test pointwise C^s membership of G at x0 along the direction h.

    At each scale ε, G(x0 + cεh) - G(x0) is sampled on a symmetric stencil
    c ∈ [-1, 1] and fitted by a polynomial of degree n = floor(s) in cε with
    no constant term.  The largest residual norm is the remainder at that
    scale; its power of ε is the measured order.  A polynomial part of degree
    <= n leaves no residual, so the order reflects only what the expansion
    cannot absorb.  Membership evidence means the order is at least s (within
    ``slack`` relative); the coefficients reported are those at the smallest ε.
    """
    eps = np.asarray(sorted(eps), dtype=float)
    if np.any(eps <= 0):
        raise ValueError("eps values must be positive")
    if eps.size < 4 or math.log10(eps.max() / eps.min()) < 1.5 - 1e-12:
        raise ValueError("eps list must have >= 4 values spanning at least 1.5 decades")
    degree = max(1, int(math.floor(s)))
    norm = norm or _default_norm(x0)
    g0 = _as_array(G(x0))
    shape = np.shape(g0)
    X0, H = _as_array(x0), _as_array(h)
    c = _stencil(degree)

    def sample(e):
        x = x0.with_values(X0 + e * H) if isinstance(x0, Field) else x0 + e * h
        return np.ravel(_as_array(G(x)) - g0)

    def at_scale(e):
        Y = np.stack([sample(ci * e) for ci in c])
        b, R = _local_fit(Y, c, degree)
        rem = max(norm(r.reshape(shape)) for r in R)
        size = max(norm(y.reshape(shape)) for y in Y)
        return b, rem, size, Y - R

    results = [at_scale(e) for e in eps]
    rem = np.array([r[1] for r in results])
    scale = max(r[2] for r in results)
    b0, _, _, P0 = results[0]
    _, _, _, P_half = at_scale(eps[0] / 2)
    # stability: the fitted polynomial on the half-size stencil, re-evaluated at scale eps[0]
    b_half, *_ = _local_fit(P_half, c, degree)
    k = np.arange(1, degree + 1)[:, None]
    P_from_half = np.column_stack([c ** j for j in range(1, degree + 1)]) @ (b_half * 2.0 ** k)
    denom = max(norm(p.reshape(shape)) for p in P0)
    change = max(norm((a - b).reshape(shape)) for a, b in zip(P_from_half, P0)) / denom if denom > 0 else 0.0
    coefficients = [(b0[i] / eps[0] ** (i + 1)).reshape(shape) if shape else complex((b0[i] / eps[0] ** (i + 1))[0]) for i in range(degree)]
    floor = 1e-13 * max(scale, np.finfo(float).tiny)
    fit = None
    if np.all(rem <= floor):
        exponent = math.inf
    else:
        keep = rem > floor
        if keep.sum() < 4:
            raise ValueError("too few nonzero remainders to fit an exponent")
        fit = fit_power_law(eps[keep], rem[keep], min_span=1.0)
        exponent = fit.slope
    return HolderFit(
        base=base,
        direction=direction,
        s=s,
        degree=degree,
        coefficients=coefficients,
        remainder_exponent=float(exponent),
        remainders=rem.tolist(),
        eps=eps.tolist(),
        coefficient_change=float(change),
        stable=bool(change < 0.05),
        member=bool(exponent >= s * (1 - slack)),
        fit=fit,
    )


def scalar_model(p: float) -> Callable:
    """x ↦ x + x|x|^p, the one-dimensional model of the scattering map near 0."""
    return lambda x: x + x * np.abs(x) ** p
