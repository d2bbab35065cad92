"""Closed-form exponents and thresholds for the defocusing mass-subcritical NLS.

Everything here is plain double-precision arithmetic on value inputs.
Lebesgue exponents equal to infinity are passed as ``math.inf``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

TOL = 1e-12


@dataclass(frozen=True)
class PhysParams:
    """Spatial dimension ``d`` and nonlinearity power ``p`` of |u|^p u."""

    d: int
    p: float

    def __post_init__(self):
        if isinstance(self.d, bool) or int(self.d) != self.d or self.d < 1:
            raise ValueError(f"dimension must be a positive integer, got {self.d!r}")
        if not (self.p > 0 and math.isfinite(self.p)):
            raise ValueError(f"nonlinearity power must be positive, got {self.p!r}")
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "p", float(self.p))

    @property
    def mass_critical_power(self) -> float:
        return 4.0 / self.d

    @property
    def mass_subcritical(self) -> bool:
        return self.p < 4.0 / self.d

    @property
    def scattering_regime(self) -> bool:
        """True iff alpha(d) < p < 4/d."""
        return strauss_exponent(self.d) < self.p < 4.0 / self.d

    def require_subcritical(self):
        if not self.mass_subcritical:
            raise ValueError(f"p={self.p} is not mass-subcritical for d={self.d} (need p < {4.0 / self.d})")

    def require_scattering(self):
        if not self.scattering_regime:
            raise ValueError(
                f"p={self.p} outside the scattering window "
                f"({strauss_exponent(self.d):.6g}, {4.0 / self.d:.6g}) for d={self.d}"
            )


def strauss_exponent(d: int) -> float:
    """alpha(d) = (2 - d + sqrt((d-2)^2 + 16 d)) / (2 d)."""
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    return (2.0 - d + math.sqrt((d - 2.0) ** 2 + 16.0 * d)) / (2.0 * d)


def canonical_q(params: PhysParams) -> float:
    """Time exponent q = 4(p+2)/(dp) pairing with r = p+2."""
    params.require_subcritical()
    return 4.0 * (params.p + 2.0) / (params.d * params.p)


def _inv(x: float) -> float:
    return 0.0 if math.isinf(x) else 1.0 / x


def is_admissible_pair(d: int, q: float, r: float) -> bool:
    """Schrödinger-admissible: 2/q + d/r = d/2, q, r in [2, inf], excluding (2, 2, inf)."""
    if not (2.0 <= q <= math.inf and 2.0 <= r <= math.inf):
        return False
    if d == 2 and q == 2.0 and math.isinf(r):
        return False
    return abs(2.0 * _inv(q) + d * _inv(r) - d / 2.0) <= TOL


def is_dual_admissible_pair(d: int, a: float, b: float) -> bool:
    """(a, b) is dual admissible when the Hölder conjugates (a', b') are admissible."""
    return is_admissible_pair(d, holder_conjugate(a), holder_conjugate(b))


def holder_conjugate(r: float) -> float:
    if r < 1:
        raise ValueError(f"Lebesgue exponent must be >= 1, got {r}")
    if r == 1:
        return math.inf
    if math.isinf(r):
        return 1.0
    return r / (r - 1.0)


def theta(params: PhysParams) -> float:
    """Gagliardo-Nirenberg interpolation weight 1 - dp/(2(p+2))."""
    return 1.0 - params.d * params.p / (2.0 * (params.p + 2.0))


def unsharpened_error_exponent(p: float) -> float:
    """2(2p+1)/(p+2): exponent of the Sigma-norm in the basic error bound."""
    return 2.0 * (2.0 * p + 1.0) / (p + 2.0)


def eta_lower(params: PhysParams) -> float:
    """Open lower end (q-2)/(2p) of the eta range.

    It is below 1 exactly when dp^2 + (d-2)p - 4 > 0, i.e. p > alpha(d).
    """
    return (canonical_q(params) - 2.0) / (2.0 * params.p)


def q_exponent_formula(p: float, eta: float, nu: float) -> float:
    """Unchecked evaluation of 2p(1-eta) + (1-nu) + 2(2 eta p + nu)/(p+2)."""
    return 2.0 * p * (1.0 - eta) + (1.0 - nu) + 2.0 / (p + 2.0) * (2.0 * eta * p + nu)


def sharpened_Q(params: PhysParams, eta: float, nu: float) -> float:
    """Sharpened error exponent, valid for (q-2)/(2p) < eta <= 1 and 1/2 < nu <= 1."""
    lo = eta_lower(params)
    if not (lo < eta <= 1.0):
        raise ValueError(f"eta={eta} outside ({lo}, 1]")
    if not (0.5 < nu <= 1.0):
        raise ValueError(f"nu={nu} outside (1/2, 1]")
    return q_exponent_formula(params.p, eta, nu)


def sup_sharpened_Q(params: PhysParams) -> float:
    """Supremum of Q over the admissible rectangle.

    Q decreases in both eta and nu, so the supremum sits at the (excluded)
    corner eta = (q-2)/(2p), nu = 1/2.
    """
    return q_exponent_formula(params.p, eta_lower(params), 0.5)


def low_dim_polynomial(params: PhysParams) -> float:
    d, p = params.d, params.p
    return 2.0 * d * p * p + (11.0 * d - 8.0) * p + (8.0 * d - 16.0)


def corner_condition_polynomial(params: PhysParams) -> float:
    """2d p^2 + (7d-8) p - 16, which is positive iff sup Q > 1+p.

    Obtained by clearing the denominator 2d(p+2) from sup Q - (1+p).
    """
    d, p = params.d, params.p
    return 2.0 * d * p * p + (7.0 * d - 8.0) * p - 16.0


@dataclass(frozen=True)
class PolynomialCheck:
    value: float
    positive: bool


def low_dim_condition(params: PhysParams) -> PolynomialCheck:
    value = low_dim_polynomial(params)
    return PolynomialCheck(value=value, positive=value > 0)


def positive_root(a: float, b: float, c: float) -> Optional[float]:
    """Largest real root of a x^2 + b x + c, or None."""
    disc = b * b - 4 * a * c
    if disc < 0:
        return None
    return (-b + math.sqrt(disc)) / (2 * a)


def quotient_growth_exponent(params: PhysParams, s: float, j: float) -> float:
    """Exponent of sigma in the Sigma-quotient lower bound along eps = sigma^-j."""
    if not j > 1:
        raise ValueError(f"scaling link j must exceed 1, got {j}")
    d, p = params.d, params.p
    return j * (s - (p + 1.0)) + 2.0 - d * p / 2.0 - s


def l2_quotient_growth_exponent(params: PhysParams, beta: float, j: float) -> float:
    if not j > 1:
        raise ValueError(f"scaling link j must exceed 1, got {j}")
    d, p = params.d, params.p
    return j * (beta - p) + 2.0 - d * p / 2.0


def beta_threshold(params: PhysParams, j: float) -> float:
    """p - (2 - dp/2)/j; the L^2 quotient blows up for beta above this."""
    if not j > 1:
        raise ValueError(f"scaling link j must exceed 1, got {j}")
    if params.d * params.p >= 4:
        raise ValueError("beta threshold needs dp < 4")
    return params.p - (2.0 - params.d * params.p / 2.0) / j


def min_scaling_link(params: PhysParams, error_exponent: float) -> Optional[float]:
    """Infimum of j > 1 for which the main term beats the error term.

    Main term ~ sigma^{-j(p+1) + 2 - dp/2}, error ~ sigma^{Q(1-j)}; the main
    term wins iff j (Q - p - 1) > Q - 2 + dp/2. Returns None if no j works.
    """
    d, p, Q = params.d, params.p, error_exponent
    gap = Q - p - 1.0
    if gap <= 0:
        return None
    return max(1.0, (Q - 2.0 + d * p / 2.0) / gap)


def min_link_for_growth(params: PhysParams, s: float) -> Optional[float]:
    """Infimum j with positive Sigma-quotient exponent at order s (None if s <= 1+p)."""
    d, p = params.d, params.p
    if s <= p + 1.0:
        return None
    return max(1.0, (s - 2.0 + d * p / 2.0) / (s - p - 1.0))


@dataclass(frozen=True)
class CornerConditionCheck:
    sup_Q: float
    one_plus_p: float
    sup_exceeds: bool
    low_dim_polynomial: float
    low_dim_positive: bool
    agree: bool
    corner_polynomial: float
    unsharpened_Q: float
    unsharpened_exceeds: bool

    def as_dict(self):
        return asdict(self)


def corner_condition_check(params: PhysParams) -> CornerConditionCheck:
    """Compare the corner value of Q with the low-dimension polynomial criterion.

    Only reports; at d=1, p=3 the two criteria disagree.
    """
    params.require_scattering()
    supQ = sup_sharpened_Q(params)
    poly = low_dim_polynomial(params)
    exceeds = supQ > 1.0 + params.p
    Qu = unsharpened_error_exponent(params.p)
    return CornerConditionCheck(
        sup_Q=supQ,
        one_plus_p=1.0 + params.p,
        sup_exceeds=exceeds,
        low_dim_polynomial=poly,
        low_dim_positive=poly > 0,
        agree=exceeds == (poly > 0),
        corner_polynomial=corner_condition_polynomial(params),
        unsharpened_Q=Qu,
        unsharpened_exceeds=Qu > 1.0 + params.p,
    )


# alias under the original operation name
consistency_check_appendix_A = corner_condition_check


@dataclass
class ExponentReport:
    d: int
    p: float
    scattering_regime: bool
    alpha_d: float
    q: Optional[float]
    theta: float
    Q_unsharp: float
    eta: Optional[float]
    nu: Optional[float]
    Q: Optional[float]
    sup_Q: Optional[float]
    j_min: dict
    beta_min: dict
    corner_check: Optional[dict]

    def as_dict(self):
        return asdict(self)


def exponent_report(params: PhysParams, eta: float = 1.0, nu: float = 1.0) -> ExponentReport:
    """Collect every exponent for (d, p).

    ``j_min``/``beta_min`` are given for two readings of the error exponent:
    ``"sup_Q"`` uses sup Q over the admissible rectangle, and
    ``"formal_order"`` uses 2p+1, the order of the next Picard term.
    """
    sub = params.mass_subcritical
    q = canonical_q(params) if sub else None
    has_range = sub and eta_lower(params) < 1.0
    Q = sharpened_Q(params, eta, nu) if has_range else None
    supQ = sup_sharpened_Q(params) if has_range else None
    readings = {}
    if supQ is not None:
        readings["sup_Q"] = supQ
    readings["formal_order"] = 2.0 * params.p + 1.0
    j_min, beta_min = {}, {}
    for name, Qe in readings.items():
        j = min_scaling_link(params, Qe)
        j_min[name] = j
        if j is not None and params.d * params.p < 4:
            beta_min[name] = params.p - (2.0 - params.d * params.p / 2.0) / j
        else:
            beta_min[name] = None
    check = corner_condition_check(params).as_dict() if params.scattering_regime else None
    return ExponentReport(
        d=params.d,
        p=params.p,
        scattering_regime=params.scattering_regime,
        alpha_d=strauss_exponent(params.d),
        q=q,
        theta=theta(params),
        Q_unsharp=unsharpened_error_exponent(params.p),
        eta=eta if has_range else None,
        nu=nu if has_range else None,
        Q=Q,
        sup_Q=supQ,
        j_min=j_min,
        beta_min=beta_min,
        corner_check=check,
    )
