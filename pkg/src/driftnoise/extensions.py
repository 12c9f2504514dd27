"""Inductive systems, binary extensions, cocycles and obstruction distances.

Finite model: level n (1..N) is A^{N-n+1} with coordinates (x_n, ..., x_N);
the map beta from level n to level n+1 drops x_n. A binary extension with sign
sequence X steps (omega, s) -> (beta omega, s X_n(x_n)).

Two such extensions (by X and by Y) are isomorphic iff there are sign
functions U_n with U_{n+1}(beta omega) X_n(omega) = U_n(omega) Y_n(omega).
``cocycle_solve`` decides this within the class where U_n sees only the
coordinates x_n .. x_{n+K-1}.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .brownian import TimeGrid, global_min, sample_path
from .density import DensityParams, bridge_minimum_density
from .errors import AcceptanceStarvation, QuadratureError
from .rng import map_replicas, master_seed_of
from .signs import Quadrature, SignRule, mean_value


# ---------------------------------------------------------------------------
# inductive systems

@dataclass(frozen=True)
class FiniteShiftSystem:
    """Product of N iid coordinates on {0..A-1}; beta drops the first coordinate."""

    alphabet: int
    depth: int
    probs: tuple | None = None  # per-letter probabilities, uniform if None

    def __post_init__(self):
        if self.alphabet < 1 or self.depth < 2:
            raise ValueError("need alphabet >= 1 and depth >= 2")
        if self.probs is not None:
            p = np.asarray(self.probs, dtype=np.float64)
            if p.shape != (self.alphabet,) or np.any(p < 0) or abs(p.sum() - 1) > 1e-12:
                raise ValueError("probs must be a distribution over the alphabet")

    @property
    def letter_probs(self) -> np.ndarray:
        if self.probs is None:
            return np.full(self.alphabet, 1.0 / self.alphabet)
        return np.asarray(self.probs, dtype=np.float64)

    def level_size(self, n: int) -> int:
        return self.depth - n + 1

    def points(self, n: int) -> np.ndarray:
        """All points of level n, shape (A^{N-n+1}, N-n+1), lexicographic."""
        k = self.level_size(n)
        return np.array(list(itertools.product(range(self.alphabet), repeat=k)), dtype=np.int64).reshape(-1, k)

    def measure(self, n: int, points: np.ndarray | None = None) -> np.ndarray:
        pts = self.points(n) if points is None else points
        return np.prod(self.letter_probs[pts], axis=1)

    def beta(self, omega: np.ndarray) -> np.ndarray:
        return omega[..., 1:]

    def sample(self, gen, size: int, n: int = 1) -> np.ndarray:
        return gen.choice(self.alphabet, size=(size, self.level_size(n)), p=self.letter_probs)


@dataclass(frozen=True)
class IIDRealSystem:
    """N iid real coordinates with law ``marginal`` (a frozen scipy.stats distribution)."""

    marginal: object
    depth: int

    def level_size(self, n: int) -> int:
        return self.depth - n + 1

    def beta(self, omega: np.ndarray) -> np.ndarray:
        return omega[..., 1:]

    def sample(self, gen, size: int, n: int = 1) -> np.ndarray:
        return self.marginal.rvs(size=(size, self.level_size(n)), random_state=gen)


@dataclass(frozen=True)
class BrownianTailSystem:
    """Level n is the path restricted to [0, tau + 3^{-n}], tau the global minimizer."""

    grid_depth: int
    depth: int

    def cutoff_index(self, path, n: int):
        """Grid index of tau + 3^{-n}, or None when it is not below t_end."""
        tau = global_min(path).index
        j = tau + 3 ** (path.grid.depth - n)
        return j if j < path.grid.n_cells else None


def inductive_system(kind: str, depth: int, **kw):
    if kind == "iid_real":
        return IIDRealSystem(kw["marginal"], depth)
    if kind == "finite":
        return FiniteShiftSystem(kw["alphabet"], depth, kw.get("probs"))
    if kind == "brownian_tail":
        return BrownianTailSystem(kw.get("grid_depth", 12), depth)
    raise ValueError(f"unknown system kind {kind!r}")


# ---------------------------------------------------------------------------
# binary extensions

class BinaryExtension:
    """Step map (omega, s) -> (beta omega, s X_n(omega)) on a shift system.

    ``X`` is either an integer table of shape (N, A) (finite systems; row n-1
    holds X_n on the letters), a SignRule (X_n = f_n of the first coordinate)
    or a sequence of callables acting on the first coordinate.
    """

    def __init__(self, system, X):
        self.system = system
        if isinstance(X, SignRule):
            self._x = [lambda y, n=n: X.evaluate(n, y) for n in range(1, min(X.n_max, system.depth) + 1)]
        elif callable(X[0]) if len(X) else False:
            self._x = list(X)
        else:
            tab = np.asarray(X)
            if not np.all(np.isin(tab, (-1, 1))):
                raise ValueError("X must take values in {-1, +1}")
            tab = tab.astype(np.int8)
            self._x = [lambda y, row=row: row[np.asarray(y, dtype=np.int64)] for row in tab]

    def sign(self, n: int, omega) -> np.ndarray:
        omega = np.asarray(omega)
        return np.asarray(self._x[n - 1](omega[..., 0]), dtype=np.int8)

    def step(self, n: int, omega, s):
        return self.system.beta(np.asarray(omega)), np.asarray(s, dtype=np.int8) * self.sign(n, omega)

    def steps(self, n: int, k: int, omega, s):
        """k consecutive steps starting at level n."""
        for m in range(n, n + k):
            omega, s = self.step(m, omega, s)
        return omega, s

    def sign_law(self, n: int, k: int, p_plus: float = 0.5) -> float:
        """Exact P(s = +1) after k steps from level n (finite systems only)."""
        sys_ = self.system
        pts = sys_.points(n)
        w = sys_.measure(n, pts)
        _, s_plus = self.steps(n, k, pts, np.ones(len(pts), dtype=np.int8))
        # start sign +1 w.p. p_plus, -1 otherwise; final sign = start * product
        prob_prod_plus = float(np.sum(w[s_plus == 1]))
        return p_plus * prob_prod_plus + (1 - p_plus) * (1 - prob_prod_plus)


def build_binary_extension(system, X) -> BinaryExtension:
    return BinaryExtension(system, X)


# ---------------------------------------------------------------------------
# cocycle equation

@dataclass(frozen=True)
class CocycleProblem:
    """Sign tables X, Y of shape (N, A) on a finite shift system; U_n sees K coordinates."""

    alphabet: int
    depth: int
    window: int
    X: np.ndarray = field(compare=False)
    Y: np.ndarray = field(compare=False)

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window K must be >= 1")
        for name in ("X", "Y"):
            t = np.asarray(getattr(self, name))
            if t.shape != (self.depth, self.alphabet) or not np.all(np.isin(t, (-1, 1))):
                raise ValueError(f"{name} must be a +-1 table of shape (depth, alphabet)")

    @property
    def system(self):
        return FiniteShiftSystem(self.alphabet, self.depth)

    def width(self, n: int) -> int:
        return min(self.window, self.depth - n + 1)

    def h(self) -> np.ndarray:
        return np.asarray(self.X, dtype=np.int8) * np.asarray(self.Y, dtype=np.int8)

    def with_window(self, k: int) -> "CocycleProblem":
        return CocycleProblem(self.alphabet, self.depth, k, self.X, self.Y)


@dataclass
class CocycleResult:
    status: str  # "found" | "inconclusive" | "absent"
    U: list | None = None  # U[n-1]: int8 array of shape (A,) * width(n)
    witness: list | None = None  # full-window solution when status == "inconclusive"

    @property
    def found(self):
        return self.status == "found"


def verify_cocycle(problem: CocycleProblem, U) -> bool:
    """Check U_{n+1}(beta omega) X_n(omega) == U_n(omega) Y_n(omega) at every point."""
    A, N = problem.alphabet, problem.depth
    X = np.asarray(problem.X)
    Y = np.asarray(problem.Y)
    for n in range(1, N):
        pts = problem.system.points(n)
        un = np.asarray(U[n - 1])
        un1 = np.asarray(U[n])
        lhs = un1[tuple(pts[:, 1:1 + un1.ndim].T)] * X[n - 1][pts[:, 0]]
        rhs = un[tuple(pts[:, :un.ndim].T)] * Y[n - 1][pts[:, 0]]
        if not np.array_equal(lhs, rhs):
            return False
    return True


def _gf2_solve(rows, nvars):
    """Solve a GF(2) system; rows are (bitmask, rhs). Returns a bit list or None.

    Free variables are set to 0, so a homogeneous system returns all zeros.
    """
    pivots = {}  # pivot bit -> (mask, rhs)
    for mask, rhs in rows:
        for bit, (pm, pr) in pivots.items():
            if mask >> bit & 1:
                mask ^= pm
                rhs ^= pr
        if mask == 0:
            if rhs:
                return None
            continue
        bit = mask.bit_length() - 1
        # keep the pivot table fully reduced
        for b2, (pm, pr) in list(pivots.items()):
            if pm >> bit & 1:
                pivots[b2] = (pm ^ mask, pr ^ rhs)
        pivots[bit] = (mask, rhs)
    sol = [0] * nvars
    for bit, (mask, rhs) in pivots.items():
        sol[bit] = rhs  # all other bits in mask are free (=0) after full reduction
    return sol


def _solve_in_class(problem: CocycleProblem):
    A, N = problem.alphabet, problem.depth
    h = problem.h()
    widths = [problem.width(n) for n in range(1, N + 1)]
    offsets = np.concatenate([[0], np.cumsum([A ** w for w in widths])]).astype(int)
    nvars = int(offsets[-1])

    def var(n, coords):  # coords: tuple of letters x_n, x_{n+1}, ...
        idx = 0
        for c in coords:
            idx = idx * A + c
        return int(offsets[n - 1]) + idx

    rows = set()
    for n in range(1, N):
        wn, wn1 = widths[n - 1], widths[n]
        span = max(wn, 1 + wn1)
        for xs in itertools.product(range(A), repeat=span):
            rhs = 1 if h[n - 1][xs[0]] == -1 else 0
            mask = (1 << var(n, xs[:wn])) ^ (1 << var(n + 1, xs[1:1 + wn1]))
            rows.add((mask, rhs))
    sol = _gf2_solve(sorted(rows), nvars)
    if sol is None:
        return None
    U = []
    for n in range(1, N + 1):
        bits = np.array(sol[offsets[n - 1]:offsets[n]], dtype=np.int8)
        U.append((1 - 2 * bits).reshape((A,) * widths[n - 1]))
    return U


def _full_window_solution(problem: CocycleProblem):
    """U_n(x_n..x_N) = prod_{m=n}^{N-1} h_m(x_m), the solution with U_N = 1."""
    A, N = problem.alphabet, problem.depth
    h = problem.h()
    U = [np.ones((A,), dtype=np.int8)]
    for n in range(N - 1, 0, -1):
        U.insert(0, (h[n - 1].reshape((A,) + (1,) * U[0].ndim) * U[0][None, ...]).astype(np.int8))
    return U


def cocycle_solve(problem: CocycleProblem) -> CocycleResult:
    """Decide the cocycle equation in the K-window class by GF(2) elimination.

    Writing U = (-1)^u, the equation is linear over GF(2):
    u_{n+1}(x_{n+1}..) + u_n(x_n..) = [h_n(x_n) = -1] with h_n = X_n Y_n.
    If the window class has no solution, the fully visible class is tried:
    a solution there means the truncation K was too small ("inconclusive");
    none at all means "absent".
    """
    U = _solve_in_class(problem)
    if U is not None:
        return CocycleResult("found", U)
    full = _full_window_solution(problem)
    if verify_cocycle(problem.with_window(problem.depth), full):
        return CocycleResult("inconclusive", None, full)
    return CocycleResult("absent")


def cocycle_brute_force(problem: CocycleProblem, max_table: int = 16):
    """Exhaustive search: try every U_1 on its window, propagate, check each step.

    U_{n+1}(x_{n+1}..) = U_n(x_n..) h_n(x_n) must not depend on x_n; when
    the window slides right the new coordinate is unconstrained only if U_{n+1}
    is constant in it, which forces U_{n+1} to be the propagated function.
    Returns the first surviving U list, or None.
    """
    A, N = problem.alphabet, problem.depth
    w1 = problem.width(1)
    size = A ** w1
    if size > max_table:
        raise ValueError(f"brute force limited to A^K <= {max_table} (got {size})")
    h = problem.h().astype(np.int8)
    ncand = 1 << size
    bits = ((np.arange(ncand)[:, None] >> np.arange(size)) & 1).astype(np.int8)
    cur = (1 - 2 * bits).reshape((ncand,) + (A,) * w1)
    alive = np.ones(ncand, dtype=bool)
    trail = [cur]
    for n in range(1, N):
        wn1 = problem.width(n + 1)
        prod = cur * h[n - 1].reshape((1, A) + (1,) * (cur.ndim - 2))
        # must be independent of x_n (axis 1)
        alive &= np.all(prod == prod[:, :1], axis=tuple(range(1, prod.ndim)))
        v = prod[:, 0]  # function of x_{n+1} .. x_{n+w_n-1}
        if v.ndim - 1 < wn1:
            v = np.broadcast_to(v[..., None], v.shape + (A,))
        cur = np.ascontiguousarray(v)
        trail.append(cur)
    idx = np.flatnonzero(alive)
    if idx.size == 0:
        return None
    i = idx[0]
    return [t[i].astype(np.int8) for t in trail]


# ---------------------------------------------------------------------------
# finite extensions and their product

@dataclass
class FiniteExtension:
    """Extension of a finite space: atoms with probabilities and a projection gamma."""

    base_probs: np.ndarray
    probs: np.ndarray
    gamma: np.ndarray
    labels: list

    def is_measure_preserving(self, tol=1e-12) -> bool:
        push = np.bincount(self.gamma, weights=self.probs, minlength=len(self.base_probs))
        return bool(np.allclose(push, self.base_probs, atol=tol, rtol=0))

    def is_binary(self, tol=1e-12) -> bool:
        """Every fiber of a positive-mass point has two atoms of equal mass."""
        for w, pw in enumerate(self.base_probs):
            fib = np.flatnonzero(self.gamma == w)
            if pw > 0 and (len(fib) != 2 or not np.allclose(self.probs[fib], pw / 2, atol=tol, rtol=0)):
                return False
        return self.is_measure_preserving(tol)

    def involution(self) -> np.ndarray:
        """Index map swapping the two atoms of each fiber."""
        out = np.arange(len(self.probs))
        for w in range(len(self.base_probs)):
            fib = np.flatnonzero(self.gamma == w)
            if len(fib) == 2:
                out[fib[0]], out[fib[1]] = fib[1], fib[0]
        return out

    def canonical(self, decimals=15):
        return sorted((int(g), tuple(l), round(float(p), decimals))
                      for g, l, p in zip(self.gamma, self.labels, self.probs))


def trivial_binary_extension(base_probs) -> FiniteExtension:
    """Omega x {-1, +1} with the uniform sign."""
    p = np.asarray(base_probs, dtype=np.float64)
    m = len(p)
    labels = [(w, s) for w in range(m) for s in (-1, 1)]
    return FiniteExtension(p, np.repeat(p / 2, 2), np.repeat(np.arange(m), 2), labels)


def lift_extension(ext: FiniteExtension, other_probs, position: int) -> FiniteExtension:
    """ext x Omega' (position 2: Omega' x ext), indices row-major over (first, second)."""
    q = np.asarray(other_probs, dtype=np.float64)
    m, mq = len(ext.base_probs), len(q)
    probs, gamma, labels = [], [], []
    if position == 1:
        for i, (p, g) in enumerate(zip(ext.probs, ext.gamma)):
            for w in range(mq):
                probs.append(p * q[w]); gamma.append(g * mq + w); labels.append((ext.labels[i], w))
        base = np.outer(ext.base_probs, q).ravel()
    else:
        for w in range(mq):
            for i, (p, g) in enumerate(zip(ext.probs, ext.gamma)):
                probs.append(q[w] * p); gamma.append(w * m + g); labels.append((w, ext.labels[i]))
        base = np.outer(q, ext.base_probs).ravel()
    return FiniteExtension(base, np.array(probs), np.array(gamma, dtype=np.int64), labels)


def product_extension(ext1: FiniteExtension, ext2: FiniteExtension, A) -> FiniteExtension:
    """Binary extension of Omega_1 x Omega_2: the sign lives on factor 1 over A, on factor 2 off A.

    Atoms are (w1~, w2) with gamma_1(w1~), w2) in A, mass p1~ p2, and
    (w1, w2~) with (w1, gamma_2(w2~)) not in A, mass p1 p2~.
    """
    A = np.asarray(A, dtype=bool)
    p1, p2 = ext1.base_probs, ext2.base_probs
    m2 = len(p2)
    if A.shape != (len(p1), m2):
        raise ValueError("A must be a boolean table over Omega_1 x Omega_2")
    probs, gamma, labels = [], [], []
    for i, (pt, g1) in enumerate(zip(ext1.probs, ext1.gamma)):
        for w2 in range(m2):
            if A[g1, w2]:
                probs.append(pt * p2[w2]); gamma.append(g1 * m2 + w2); labels.append((ext1.labels[i], w2))
    for w1 in range(len(p1)):
        for j, (pt, g2) in enumerate(zip(ext2.probs, ext2.gamma)):
            if not A[w1, g2]:
                probs.append(p1[w1] * pt); gamma.append(w1 * m2 + g2); labels.append((w1, ext2.labels[j]))
    return FiniteExtension(np.outer(p1, p2).ravel(), np.array(probs), np.array(gamma, dtype=np.int64), labels)


# ---------------------------------------------------------------------------
# obstruction distances

@dataclass
class ObstructionReport:
    n: int
    D_hat: float
    stderr: float
    replicas: int
    acceptance_rate: float = 1.0
    c: float | None = None

    @property
    def parity(self) -> str:
        return "odd" if self.n % 2 else "even"

    @property
    def significance(self) -> float:
        if self.stderr == 0:
            return math.inf if self.D_hat > 0 else 0.0
        return self.D_hat / self.stderr


def obstruction_distance_iid(f: SignRule, g: SignRule, n: int, marginal, quad: Quadrature | None = None,
                             tail: float = 1e-15) -> ObstructionReport:
    """D = 1 - (int f_n g_n dmu)^2 for iid coordinates with law mu.

    ``marginal`` is a frozen continuous scipy.stats distribution or a pair
    (values, probs) for a finite alphabet (exact sum). The stderr field
    carries the propagated quadrature error 2 |I| err.
    """
    if isinstance(marginal, tuple):
        vals, probs = (np.asarray(v, dtype=np.float64) for v in marginal)
        I = float(np.sum(probs * f.evaluate(n, vals) * g.evaluate(n, vals)))
        return ObstructionReport(n, 1.0 - I * I, 0.0, 1)
    lo, hi = marginal.support()
    if not math.isfinite(lo):
        lo = float(marginal.ppf(tail))
    if not math.isfinite(hi):
        hi = float(marginal.isf(tail))
    q = quad or Quadrature(lo, hi, tol=1e-10, breaks=(lo, hi))
    mv = mean_value(f, g, n, marginal.pdf, q)
    I = mv.value
    return ObstructionReport(n, max(0.0, 1.0 - I * I), 2.0 * abs(I) * mv.error, 1)


def conditional_mean_value(f: SignRule, g: SignRule, n: int, params: DensityParams, tol: float = 1e-9) -> float:
    """int h_n dnu / int dnu with nu the conditional density at the minimum.

    Square-wave rules go through the compiled kernel; other kinds use the
    generic adaptive quadrature. Numerator and denominator share nodes, so
    f == g gives exactly 1. The range is (a+b)/2 -+ 8 sqrt(eps) clipped at 0;
    the Gaussian factor leaves a relative mass below e^-64 outside it.
    """
    root = math.sqrt(params.epsilon)
    width = root / 4.0
    lower = max(0.0, params.center - WINDOW_SIGMAS * root)
    upper = params.center + WINDOW_SIGMAS * root
    if f.is_square_wave() and g.is_square_wave():
        _, lf, df = f.level(n)
        _, lg, dg = g.level(n)
        num, den, err = kernels.square_wave_integral(params.a, params.b, params.epsilon,
                                                     lf, df, lg, dg, lower, upper, width)
        if not err <= tol * den:
            raise QuadratureError(err / den, tol, context=f"level {n} {params}")
        return num / den
    q = Quadrature(lower, upper, tol=tol, max_width=width)
    return mean_value(f, g, n, lambda x: bridge_minimum_density(params, x), q, normalize=True).value


WINDOW_SIGMAS = 8.0
MAX_RESAMPLES = 10_000


def obstruction_scan(f: SignRule, gs: Sequence[SignRule], levels: Sequence[int], replicas: int, rng,
                     depth: int = 12, workers: int = 1, tol: float = 1e-9, labels=None):
    """Brownian obstruction estimates for several shifted rules and levels at once.

    Replica i uses stream (seed, i). It draws paths on [0, 1] until the
    global minimizer tau satisfies tau + 3^{-n} < 1; each level uses the first
    such path (so the paths are shared across rules and, where possible,
    across levels). With eps = 3^{-n-1}, a = B(tau+eps) - B(tau) and
    b = B(tau+3 eps) - B(tau), the replica contributes 1 - I^2 where
    I = int f_n g_n p_{a,b,eps}.

    Returns {(label, n): ObstructionReport}; labels default to rule indices.
    """
    levels = sorted(int(n) for n in levels)
    gs = list(gs)
    named = labels is not None
    labels = list(labels) if named else list(range(len(gs)))
    if min(levels) < 1:
        raise ValueError("levels start at 1")
    if depth < max(levels) + 2:
        raise ValueError(f"depth {depth} too small for level {max(levels)} (need n + 2)")
    grid = TimeGrid.unit(depth)
    seed = master_seed_of(rng)
    nl, ng = len(levels), len(gs)

    def one(i, gen):
        out = np.empty(ng * nl + nl)
        pending = list(range(nl))
        draws = 0
        while pending:
            path = sample_path(grid, gen)
            draws += 1
            if draws > MAX_RESAMPLES:
                raise AcceptanceStarvation(1.0 / MAX_RESAMPLES, draws, context=f"replica {i}: tau + 3^-n < 1")
            v = path.values
            tau = global_min(path).index
            still = []
            for li in pending:
                n = levels[li]
                e = 3 ** (depth - n - 1)
                if tau + 3 * e >= grid.n_cells:
                    still.append(li)
                    continue
                a = v[tau + e] - v[tau]
                b = v[tau + 3 * e] - v[tau]
                if not (a > 0 and b > 0):  # exact ties only
                    still.append(li)
                    continue
                params = DensityParams(a, b, 1.0 / 3 ** (n + 1))
                for gi, g in enumerate(gs):
                    I = conditional_mean_value(f, g, n, params, tol)
                    out[gi * nl + li] = 1.0 - I * I
                out[ng * nl + li] = draws
            pending = still
        return out

    vals = map_replicas(one, replicas, seed, workers, width=ng * nl + nl)
    vals = vals.reshape(replicas, -1)
    reports = {}
    for li, n in enumerate(levels):
        rate = replicas / float(np.sum(vals[:, ng * nl + li]))
        for gi in range(ng):
            col = vals[:, gi * nl + li]
            se = float(np.std(col, ddof=1) / math.sqrt(replicas)) if replicas > 1 else float("inf")
            reports[(labels[gi], n)] = ObstructionReport(n, float(np.mean(col)), se, replicas, rate,
                                                         c=labels[gi] if named else None)
    return reports


def obstruction_distance_brownian(f: SignRule, g: SignRule, n: int, replicas: int, rng, depth: int = 12,
                                  workers: int = 1, tol: float = 1e-9) -> ObstructionReport:
    """Single-level, single-rule form of ``obstruction_scan``."""
    return obstruction_scan(f, [g], [n], replicas, rng, depth, workers, tol)[(0, n)]
