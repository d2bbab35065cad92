"""Least-squares power-law fits in log-log coordinates."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    r2: float
    n: int
    residual_max: float

    def predict(self, x):
        return np.exp(self.intercept) * np.asarray(x, dtype=float) ** self.slope

    def as_dict(self):
        return asdict(self)


def fit_power_law(x, y, min_points: int = 4, min_span: float = 0.5) -> FitResult:
    """Fit y = C x^slope by least squares on (log x, log y).

    ``min_span`` is the required spread of x in decades.
    ``intercept`` is log C (natural log).
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise ValueError("x and y must have the same length")
    if x.size < min_points:
        raise ValueError(f"need at least {min_points} points, got {x.size}")
    if np.any(~np.isfinite(x)) or np.any(~np.isfinite(y)):
        raise ValueError("non-finite input")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("power-law fit needs strictly positive data")
    span = np.log10(x.max() / x.min())
    if span < min_span - 1e-12:
        raise ValueError(f"x spans {span:.3g} decades, need {min_span}")
    lx, ly = np.log(x), np.log(y)
    A = np.column_stack([lx, np.ones_like(lx)])
    (slope, intercept), *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - (slope * lx + intercept)
    ss_res = float(resid @ resid)
    centered = ly - ly.mean()
    ss_tot = float(centered @ centered)
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res <= 1e-24 * max(1.0, ly @ ly) else 0.0)
    return FitResult(float(slope), float(intercept), float(r2), int(x.size), float(np.abs(resid).max()))
