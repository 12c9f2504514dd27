"""Conditional density of the increment at a Brownian minimum.

Given a = B(tau+eps) - B(tau) and b = B(tau+3 eps) - B(tau) at the global
minimizer tau, the middle increment x = B(tau+2 eps) - B(tau) has density

    p(x) = (1 - e^{-2ax/eps})(1 - e^{-2bx/eps}) / (1 - e^{-ab/eps})
           * (pi eps)^{-1/2} exp(-(x - (a+b)/2)^2 / eps),   x > 0.

Also: epsilon-goodness of densities and the margin scan over (a, b).
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .errors import NormalizationError, QuadratureError
from .kernels import _density_vec, density_log_norm

TAIL_SIGMAS = 12.0


class SaturationWarning(RuntimeWarning):
    """The density formula under/overflowed and was saturated to 0."""


@dataclass(frozen=True)
class DensityParams:
    a: float
    b: float
    epsilon: float

    def __post_init__(self):
        for name in ("a", "b", "epsilon"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val > 0):
                raise ValueError(f"{name} must be finite and > 0, got {val!r}")

    @property
    def center(self):
        return 0.5 * (self.a + self.b)

    @property
    def upper(self):
        """Right end of the quadrature range; beyond it only the tail bound is used."""
        return self.center + TAIL_SIGMAS * math.sqrt(self.epsilon)

    def scaled(self):
        """Parameters of the eps = 1 density under x -> x / sqrt(eps)."""
        s = math.sqrt(self.epsilon)
        return DensityParams(self.a / s, self.b / s, 1.0)


def bridge_minimum_density(params: DensityParams, x):
    """Evaluate p_{a,b,eps}(x); zero for x <= 0.

    Scalar in, float out; array in, array out. If the normalizer underflows
    (ab/eps tiny enough that 1 - e^{-ab/eps} == 0), the result is saturated
    to 0 and a SaturationWarning is issued instead of returning NaN.
    """
    a, b, eps = params.a, params.b, params.epsilon
    with np.errstate(over="ignore", under="ignore", divide="ignore", invalid="ignore"):
        z = -math.expm1(-a * b / eps)
        if z <= 0.0 or not math.isfinite(z):
            warnings.warn(f"density normalizer saturated for {params}", SaturationWarning, stacklevel=2)
            out = np.zeros_like(np.asarray(x, dtype=np.float64))
            return float(out) if np.ndim(x) == 0 else out
        out = _density_vec(x, a, b, eps, density_log_norm(a, b, eps))
    bad = ~np.isfinite(out)
    if np.any(bad):
        warnings.warn(f"density value saturated for {params}", SaturationWarning, stacklevel=2)
        out = np.where(bad, 0.0, out)
    return float(out) if np.ndim(x) == 0 else out


def tail_bound(params: DensityParams, x0=None):
    """Upper bound on the mass of p beyond x0 (default: ``params.upper``).

    Both factors in the numerator of the prefactor are below 1, so the
    prefactor is at most 1/(1-e^{-ab/eps}); the Gaussian factor integrates to
    erfc((x0-m)/sqrt eps)/2 over (x0, inf).
    """
    p = params
    x0 = p.upper if x0 is None else float(x0)
    z = -math.expm1(-p.a * p.b / p.epsilon)
    return 0.5 * special.erfc((x0 - p.center) / math.sqrt(p.epsilon)) / z


def normalize_check(params: DensityParams, tol: float = 1e-6, quad_tol: float = 1e-9):
    """Integral of p over (0, upper) by adaptive quadrature; raises if |I - 1| > tol.

    The tail beyond ``params.upper`` is bounded analytically and folded into
    the comparison (it is below 1e-30 for the default 12-sigma cutoff).
    """
    if tol <= 0:
        raise ValueError("tol must be > 0")
    fn = lambda x: bridge_minimum_density(params, x)
    pts = [params.center] if params.center < params.upper else None
    val, err, info = _quad(fn, 0.0, params.upper, pts, quad_tol)
    tail = tail_bound(params)
    if err > tol:
        raise QuadratureError(err, tol, context=f"normalize_check{params}")
    if abs(val - 1.0) > tol + tail:
        raise NormalizationError(val, tol)
    return val


def _quad(fn, lo, hi, points, tol):
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(fn, lo, hi, points=points, epsabs=tol, epsrel=tol, limit=500)
        except integrate.IntegrationWarning as exc:
            raise QuadratureError(float("nan"), tol, context=str(exc)) from exc
    return val, err, None


def quadrature_cdf(params: DensityParams, n_grid: int = 40001):
    """CDF of p tabulated on a uniform grid over [0, upper] (cumulative Simpson)."""
    x = np.linspace(0.0, params.upper, n_grid)
    y = bridge_minimum_density(params, x)
    cdf = integrate.cumulative_simpson(y, x=x, initial=0.0)
    return x, np.clip(cdf, 0.0, None)


def ks_distance(samples, params: DensityParams, n_grid: int = 40001):
    """Kolmogorov distance between samples and p, via the tabulated CDF."""
    from scipy import stats

    x, cdf = quadrature_cdf(params, n_grid)
    res = stats.kstest(np.asarray(samples, dtype=np.float64), lambda s: np.interp(s, x, cdf, left=0.0, right=1.0))
    return float(res.statistic)


# ---------------------------------------------------------------------------
# epsilon-goodness

def epsilon_goodness(density, eps: float, window_search, grid: int = 2000, refine: int = 8):
    """True iff some window [x, x+eps] inside ``window_search`` has density >= eps.

    Window starts are tried on ``grid`` equally spaced positions; each window
    is sampled at ``grid`` points. Guard: the winning window is re-checked on
    a ``refine``-times denser sampling before answering True.
    """
    if eps <= 0:
        raise ValueError("eps must be > 0")
    lo, hi = map(float, window_search)
    if hi - lo < eps:
        return False
    starts = np.linspace(lo, hi - eps, max(grid, 1)) if hi - lo > eps else np.array([lo])
    pts = np.linspace(0.0, eps, grid + 1)
    for x0 in starts:
        vals = np.asarray(density(x0 + pts), dtype=np.float64)
        if np.min(vals) >= eps:
            fine = np.asarray(density(x0 + np.linspace(0.0, eps, refine * grid + 1)), dtype=np.float64)
            if np.min(fine) >= eps:
                return True
    return False


@dataclass
class GoodnessReport:
    epsilon_star: float
    witness_x: float
    margin: float
    a_star: float
    b_star: float
    rows: list = field(default_factory=list, repr=False)  # (a, b, window_lo, window_hi, margin)


def windowed_infimum(a: float, b: float, n_x: int = 4001):
    """Minimum of p_{a,b,1} sampled on [(a+b)/2 + 1, (a+b)/2 + 2]; returns (value, x)."""
    p = DensityParams(a, b, 1.0)
    xs = np.linspace(p.center + 1.0, p.center + 2.0, n_x)
    vals = bridge_minimum_density(p, xs)
    i = int(np.argmin(vals))
    return float(vals[i]), float(xs[i])


def goodness_margin_scan(a_grid, b_grid, n_x: int = 4001):
    """Infimum over (a, b) of the windowed infimum of p_{a,b,1}.

    epsilon_star = min(margin, 1): the window has length 1 >= epsilon_star and
    the density is >= margin >= epsilon_star on it, so every p_{a,b,1} on the
    grid is epsilon_star-good with a witness window inside the search range.
    """
    a_grid = [float(v) for v in a_grid]
    b_grid = [float(v) for v in b_grid]
    if not a_grid or not b_grid or min(a_grid + b_grid) <= 0:
        raise ValueError("grids must be nonempty with positive entries")
    rows = []
    best = None
    for a in a_grid:
        for b in b_grid:
            val, x = windowed_infimum(a, b, n_x)
            m = 0.5 * (a + b)
            rows.append((a, b, m + 1.0, m + 2.0, val))
            if best is None or val < best[0]:
                best = (val, x, a, b)
    margin, x, a, b = best
    return GoodnessReport(epsilon_star=min(margin, 1.0), witness_x=0.5 * (a + b) + 1.0,
                          margin=margin, a_star=a, b_star=b, rows=rows)


def write_scan_csv(report: GoodnessReport, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["a", "b", "window_lo", "window_hi", "margin"])
        for row in report.rows:
            w.writerow([repr(float(v)) for v in row])
