"""Finite-size fits: corrected power law, exponential decay, plain power law."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats

from .errors import FitError

NO_LOCALIZATION = "no localization detected"


@dataclass
class FitResult:
    model: str
    params: dict
    stderr: dict
    cov: np.ndarray
    fit_range: tuple
    residual_norm: float
    extra: dict = field(default_factory=dict)
    note: str = ""

    def __getitem__(self, key):
        return self.params[key]


def _as_xy(x, y, sigma=None):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise FitError("x and y must be 1-d arrays of equal length")
    order = np.argsort(x)
    sig = None if sigma is None else np.asarray(sigma, dtype=float)[order]
    return x[order], y[order], sig


def log_derivative(L, S) -> np.ndarray:
    """``d ln S / d ln L`` by centered (second-order, non-uniform) differences."""
    return np.gradient(np.log(np.asarray(S, float)), np.log(np.asarray(L, float)))


def fit_corrected_power_law(L, S, sigma=None, alpha_grid=None) -> FitResult:
    """Least-squares fit of ``S = s (L^alpha - b)``.

    A scan over ``alpha`` in [0.1, 1.0] (step 0.005) solves the linear problem
    for ``(s, s b)`` at each grid point; the best point seeds a nonlinear
    refinement of all three parameters.
    """
    L, S, sig = _as_xy(L, S, sigma)
    if np.unique(L).size < 4:
        raise FitError("need at least 4 distinct L values")
    if np.any(S <= 0) or np.any(np.diff(S) <= 0):
        raise FitError("S must be positive and increasing in L")
    w = np.ones_like(S) if sig is None else 1 / sig
    grid = np.round(np.arange(0.1, 1.0 + 1e-12, 0.005), 10) if alpha_grid is None else np.asarray(alpha_grid)

    best = None
    for a in grid:
        X = np.column_stack([L**a, -np.ones_like(L)])
        coef, *_ = np.linalg.lstsq(X * w[:, None], S * w, rcond=None)
        rss = float(np.sum(((X @ coef - S) * w) ** 2))
        if best is None or rss < best[0]:
            best = (rss, a, coef)
    _, a0, (s0, sb0) = best
    b0 = sb0 / s0 if s0 != 0 else 0.0

    def resid(p):
        s, a, b = p
        return (s * (L**a - b) - S) * w

    sol = optimize.least_squares(resid, [s0, a0, b0], method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=20000)
    s, a, b = sol.x
    r = sol.fun
    n, k = len(S), 3
    JtJ = sol.jac.T @ sol.jac
    try:
        cov = np.linalg.inv(JtJ)
        if sig is None:
            cov = cov * (float(r @ r) / (n - k) if n > k else np.nan)
    except np.linalg.LinAlgError:
        cov = np.full((3, 3), np.nan)
    err = np.sqrt(np.abs(np.diag(cov)))
    return FitResult(
        model="corrected_power_law",
        params={"s": float(s), "alpha": float(a), "b": float(b)},
        stderr={"s": float(err[0]), "alpha": float(err[1]), "b": float(err[2])},
        cov=cov,
        fit_range=(float(L[0]), float(L[-1])),
        residual_norm=float(np.linalg.norm(r)),
        extra={"L": L, "log_derivative": log_derivative(L, S), "grid_alpha": float(a0)},
    )


def fit_exponential_decay(L, G, L_min: float = 0.0) -> FitResult:
    """Linear regression of ``ln G`` against ``L``; ``l_loc = -1 / (4 slope)``.

    A nonnegative slope gives ``l_loc = inf`` with the note ``"no localization detected"``.
    """
    L, G, _ = _as_xy(L, G)
    keep = L >= L_min
    L, G = L[keep], G[keep]
    if L.size < 3:
        raise FitError(f"need at least 3 points with L >= {L_min}")
    if np.any(G <= 0):
        raise FitError("G_AB must be positive")
    res = stats.linregress(L, np.log(G))
    slope, se = float(res.slope), float(res.stderr)
    resid = np.log(G) - (res.intercept + slope * L)
    cov = np.array([[se**2, 0.0], [0.0, float(res.intercept_stderr) ** 2]])
    if slope >= 0:
        ell, ell_err, note = math.inf, math.nan, NO_LOCALIZATION
    else:
        ell = -1 / (4 * slope)
        ell_err = se / (4 * slope**2)
        note = ""
    return FitResult(
        model="exponential_decay",
        params={"ell_loc": ell, "slope": slope, "intercept": float(res.intercept)},
        stderr={"ell_loc": ell_err, "slope": se, "intercept": float(res.intercept_stderr)},
        cov=cov,
        fit_range=(float(L[0]), float(L[-1])),
        residual_norm=float(np.linalg.norm(resid)),
        note=note,
    )


def fit_power_law(x, y) -> FitResult:
    """``y = A x^p`` by linear regression in log-log coordinates."""
    x, y, _ = _as_xy(x, y)
    if x.size < 2:
        raise FitError("need at least 2 points")
    if np.any(x <= 0) or np.any(y <= 0):
        raise FitError("power-law fit needs positive data")
    lx, ly = np.log(x), np.log(y)
    res = stats.linregress(lx, ly)
    resid = ly - (res.intercept + res.slope * lx)
    se = float(res.stderr) if x.size > 2 else math.nan
    return FitResult(
        model="power_law",
        params={"exponent": float(res.slope), "prefactor": float(math.exp(res.intercept))},
        stderr={"exponent": se, "log_prefactor": float(res.intercept_stderr) if x.size > 2 else math.nan},
        cov=np.array([[se**2]]),
        fit_range=(float(x[0]), float(x[-1])),
        residual_norm=float(np.linalg.norm(resid)),
    )
