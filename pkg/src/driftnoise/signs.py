"""Square-wave sign rules f_n and their correlation functionals.

sigma(x) = +1 on [k, k+1/2), -1 on [k-1/2, k). A SignRule stores, per level
n >= 1, a time scale eps_n, a frequency lam_n and a shift delta_n, with
f_n(x) = sigma(lam_n (x + delta_n)). ``custom_table`` rules replace sigma by a
right-continuous step function.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate

from . import kernels
from .errors import QuadratureError

KINDS = ("constant_one", "square_wave", "square_wave_shifted", "custom_table")
SQRT2 = math.sqrt(2.0)


def square_wave(x):
    """sigma(x): +1 if frac(x) < 1/2 else -1. Scalar or array."""
    y = np.asarray(x, dtype=np.float64)
    out = np.where(y - np.floor(y) < 0.5, 1, -1).astype(np.int8)
    return int(out) if out.ndim == 0 else out


def autocorrelation(a: float) -> float:
    """R(a) = int_0^1 sigma(u) sigma(u+a) du = 1 - 4 d, d = distance of a to Z."""
    r = a - math.floor(a)
    d = min(r, 1.0 - r)
    return 1.0 - 4.0 * d


def autocorrelation_numeric(a: float, tol: float = 1e-13) -> float:
    """R(a) by quadrature of sigma(u) sigma(u+a), split at the jumps."""
    r = a - math.floor(a)
    jumps = sorted({0.5, (-r) % 1.0, (0.5 - r) % 1.0} - {0.0, 1.0})
    edges = [0.0] + [j for j in jumps if 0.0 < j < 1.0] + [1.0]
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi <= lo:
            continue
        val, _ = integrate.quad(lambda u: float(square_wave(u) * square_wave(u + a)), lo, hi,
                                epsabs=tol, epsrel=tol)
        total += val
    return total


# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StepTable:
    """Right-continuous step function: values[i] on [breaks[i-1], breaks[i])."""

    breaks: tuple
    values: tuple

    def __post_init__(self):
        if len(self.values) != len(self.breaks) + 1:
            raise ValueError("need len(values) == len(breaks) + 1")
        if any(v not in (-1, 1) for v in self.values):
            raise ValueError("step values must be +1 or -1")
        if list(self.breaks) != sorted(self.breaks):
            raise ValueError("breaks must be sorted")

    def __call__(self, y):
        idx = np.searchsorted(np.asarray(self.breaks, dtype=np.float64), y, side="right")
        return np.asarray(self.values, dtype=np.int8)[idx]


@dataclass(frozen=True)
class SignRule:
    """Levels n = 1..n_max of (eps_n, lam_n, delta_n); see module docstring."""

    kind: str
    epsilon: tuple
    lam: tuple
    delta: tuple
    tables: tuple | None = None
    meta: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown rule kind {self.kind!r}")
        n = len(self.epsilon)
        if n < 1 or len(self.lam) != n or len(self.delta) != n:
            raise ValueError("epsilon, lam and delta must have one entry per level")
        if any(e2 >= e1 for e1, e2 in zip(self.epsilon[:-1], self.epsilon[1:])):
            raise ValueError("epsilon_n must be strictly decreasing")
        if self.kind == "custom_table" and (self.tables is None or len(self.tables) != n):
            raise ValueError("custom_table rules need one StepTable per level")

    @property
    def n_max(self) -> int:
        return len(self.epsilon)

    @property
    def levels(self):
        return range(1, self.n_max + 1)

    def level(self, n: int):
        self._check(n)
        return self.epsilon[n - 1], self.lam[n - 1], self.delta[n - 1]

    def _check(self, n):
        if not 1 <= n <= self.n_max:
            raise IndexError(f"level {n} outside 1..{self.n_max}")

    def evaluate(self, n: int, x):
        """f_n(x) in {-1, +1} (int8 for arrays, int for scalars)."""
        self._check(n)
        y = np.asarray(x, dtype=np.float64)
        if self.kind == "constant_one":
            out = np.ones(y.shape, dtype=np.int8)
        elif self.kind == "custom_table":
            out = self.tables[n - 1](y + self.delta[n - 1])
        else:
            z = self.lam[n - 1] * (y + self.delta[n - 1])
            out = np.where(z - np.floor(z) < 0.5, 1, -1).astype(np.int8)
        return int(out) if out.ndim == 0 else out

    def breakpoints(self, n: int, lo: float, hi: float) -> np.ndarray:
        """Discontinuities of f_n inside (lo, hi), sorted."""
        self._check(n)
        _, lam, delta = self.level(n)
        if self.kind == "constant_one":
            return np.empty(0)
        if self.kind == "custom_table":
            b = np.asarray(self.tables[n - 1].breaks, dtype=np.float64) - delta
            return b[(b > lo) & (b < hi)]
        k0 = math.floor(2.0 * lam * (lo + delta)) + 1
        k1 = math.ceil(2.0 * lam * (hi + delta)) - 1
        xs = np.arange(k0, max(k1, k0 - 1) + 1) / (2.0 * lam) - delta
        return xs[(xs > lo) & (xs < hi)]

    def is_square_wave(self) -> bool:
        return self.kind in ("square_wave", "square_wave_shifted")

    @property
    def tag(self) -> str:
        """Content hash; noise elements record it to pin their composition rule."""
        h = hashlib.sha1()
        h.update(self.kind.encode())
        for arr in (self.epsilon, self.lam, self.delta):
            h.update(np.asarray(arr, dtype=np.float64).tobytes())
        if self.tables is not None:
            for t in self.tables:
                h.update(repr((t.breaks, t.values)).encode())
        return f"{self.kind}/{self.n_max}/{h.hexdigest()[:12]}"

    def to_config(self) -> dict:
        """Plain-dict form used in experiment configs."""
        if self.kind == "custom_table":
            raise ValueError("custom_table rules are not expressible in the config format")
        d = {"kind": self.kind, "n_max": self.n_max}
        d.update({k: v for k, v in self.meta.items() if k in ("c", "drift_lambda", "odd", "even")})
        return d


def canonical_epsilon(n: int) -> float:
    """eps_n = 2 3^{-n-1}."""
    return 2.0 / 3 ** (n + 1)


def build_drift_sensitive_rule(n_max: int, odd: float = 1.0, even: float = SQRT2) -> SignRule:
    """f_n(x) = sigma(lam_n x), lam_n 3^{-n} = 1 for odd n and sqrt(2) for even n."""
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    eps = tuple(canonical_epsilon(n) for n in range(1, n_max + 1))
    lam = tuple((odd if n % 2 else even) * 3 ** n for n in range(1, n_max + 1))
    return SignRule("square_wave", eps, lam, (0.0,) * n_max, meta={"odd": odd, "even": even})


def build_constant_rule(n_max: int) -> SignRule:
    eps = tuple(canonical_epsilon(n) for n in range(1, n_max + 1))
    return SignRule("constant_one", eps, (0.0,) * n_max, (0.0,) * n_max)


def build_custom_rule(epsilon, tables) -> SignRule:
    n = len(tables)
    return SignRule("custom_table", tuple(float(e) for e in epsilon), (0.0,) * n, (0.0,) * n, tuple(tables))


def shift_rule(rule: SignRule, offsets, **meta) -> SignRule:
    """g_n(x) = f_n(x + offsets[n-1])."""
    off = tuple(float(o) for o in offsets)
    if len(off) != rule.n_max:
        raise ValueError(f"expected {rule.n_max} offsets, got {len(off)}")
    delta = tuple(d + o for d, o in zip(rule.delta, off))
    kind = "square_wave_shifted" if rule.kind == "square_wave" and any(delta) else rule.kind
    m = dict(rule.meta)
    m.update(meta)
    return replace(rule, kind=kind, delta=delta, meta=m)


def obstruction_shift(rule: SignRule, c: float) -> SignRule:
    """Shift by delta_n = c 3^{-n}."""
    return shift_rule(rule, [c / 3 ** n for n in rule.levels], c=c)


def drift_shift(rule: SignRule, lam: float) -> SignRule:
    """Shift by delta_n = 2 lam eps_n (the rule that makes drift commute with composition)."""
    return shift_rule(rule, [2.0 * lam * e for e in rule.epsilon], drift_lambda=lam)


def rule_from_config(d: dict) -> SignRule:
    kind = d.get("kind", "square_wave")
    n_max = int(d["n_max"])
    if kind == "constant_one":
        return build_constant_rule(n_max)
    if kind not in ("square_wave", "square_wave_shifted"):
        raise ValueError(f"rule kind {kind!r} not available from config")
    rule = build_drift_sensitive_rule(n_max, d.get("odd", 1.0), d.get("even", SQRT2))
    if d.get("c"):
        rule = obstruction_shift(rule, float(d["c"]))
    if d.get("drift_lambda"):
        rule = drift_shift(rule, float(d["drift_lambda"]))
    return rule


# ---------------------------------------------------------------------------
# mean value int f_n g_n dnu

@dataclass(frozen=True)
class Quadrature:
    """Integration range, target absolute error and refinement budget.

    ``breaks`` are extra points where the density is not smooth (e.g. the
    ends of a uniform density's support).
    """

    lo: float
    hi: float
    tol: float = 1e-9
    breaks: tuple = ()
    max_width: float | None = None
    max_rounds: int = 12


@dataclass
class MeanValue:
    value: float
    error: float
    mass: float  # integral of the density itself over the range


def _gk15_pieces(fn, x0, x1):
    c = 0.5 * (x0 + x1)
    hw = 0.5 * (x1 - x0)
    vals = np.asarray(fn(c[:, None] + hw[:, None] * kernels.GK15_NODES), dtype=np.float64)
    k = (vals @ kernels.GK15_WK) * hw
    g = (vals @ kernels.GK15_WG) * hw
    return k, np.abs(k - g)


def mean_value(f: SignRule, g: SignRule, n: int, density, quad: Quadrature, normalize: bool = False) -> MeanValue:
    """int_lo^hi f_n(x) g_n(x) density(x) dx by piecewise Gauss-Kronrod.

    Pieces are split at every jump of f_n and g_n (so the integrand is smooth
    on each), at ``quad.breaks``, and bisected adaptively until the summed
    Kronrod-Gauss difference is below ``quad.tol``. With ``normalize`` the
    result is divided by the density mass on the same nodes.
    """
    lo, hi = float(quad.lo), float(quad.hi)
    if not hi > lo:
        raise ValueError("empty integration range")
    pts = [np.array([lo, hi]), f.breakpoints(n, lo, hi), g.breakpoints(n, lo, hi),
           np.asarray([b for b in quad.breaks if lo < b < hi], dtype=np.float64)]
    if quad.max_width:
        m = int(math.ceil((hi - lo) / quad.max_width))
        pts.append(lo + np.arange(1, m) * ((hi - lo) / m))
    edges = np.unique(np.concatenate(pts))
    x0, x1 = edges[:-1], edges[1:]
    for _ in range(quad.max_rounds + 1):
        mid = 0.5 * (x0 + x1)
        sgn = f.evaluate(n, mid).astype(np.float64) * g.evaluate(n, mid)
        k, err = _gk15_pieces(density, x0, x1)
        total_err = float(np.sum(err))
        if total_err <= quad.tol:
            break
        # bisect the pieces carrying the error
        bad = err > quad.tol / max(len(err), 1)
        if not np.any(bad):
            bad = err >= np.max(err)
        m = 0.5 * (x0[bad] + x1[bad])
        x0 = np.concatenate([x0[~bad], x0[bad], m])
        x1 = np.concatenate([x1[~bad], m, x1[bad]])
        order = np.argsort(x0, kind="stable")
        x0, x1 = x0[order], x1[order]
    else:
        raise QuadratureError(total_err, quad.tol, context=f"mean_value level {n}")
    num = float(np.sum(sgn * k))
    mass = float(np.sum(k))
    if normalize:
        return MeanValue(num / mass, total_err / mass, mass)
    return MeanValue(num, total_err, mass)
