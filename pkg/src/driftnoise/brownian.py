"""Brownian paths on triadic grids.

Sampling and bridge refinement, drift and change-of-measure transforms,
minima detection with the recursive-halving enumeration, and the
conditioned-bridge sampler for the increment at a minimum.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from . import kernels
from .density import DensityParams
from .errors import AcceptanceStarvation, GridAlignmentError, NonFiniteFunctional
from .rng import as_generator, map_replicas, master_seed_of


@dataclass(frozen=True)
class TimeGrid:
    """Grid {k 3^-depth : 0 <= k <= n_cells}; t_end = n_cells 3^-depth exactly."""

    depth: int
    n_cells: int

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.n_cells < 1:
            raise ValueError("n_cells must be >= 1")

    @classmethod
    def unit(cls, depth: int) -> "TimeGrid":
        return cls(depth, 3 ** depth)

    @classmethod
    def covering(cls, t_end: float, depth: int) -> "TimeGrid":
        return cls(depth, cells_for(t_end, depth))

    @property
    def denominator(self) -> int:
        return 3 ** self.depth

    @property
    def step(self) -> float:
        return 1.0 / self.denominator

    @property
    def t_end(self) -> float:
        return self.n_cells / self.denominator

    @property
    def n_points(self) -> int:
        return self.n_cells + 1

    def times(self) -> np.ndarray:
        return np.arange(self.n_points) / self.denominator

    def time_of(self, index) -> float:
        return index / self.denominator

    def index_of(self, t: float) -> int:
        i = cells_for(t, self.depth)
        if not 0 <= i <= self.n_cells:
            raise GridAlignmentError(f"time {t!r} outside [0, {self.t_end!r}]")
        return i


def cells_for(t: float, depth: int, rtol: float = 1e-9) -> int:
    """Number of 3^-depth cells in duration t; t must be a grid multiple."""
    x = float(t) * 3 ** depth
    k = round(x)
    if abs(x - k) > rtol * max(1.0, abs(x)):
        raise GridAlignmentError(f"time {t!r} is not a multiple of 3^-{depth}")
    return int(k)


def snap_cells(t: float, depth: int) -> int:
    """Nearest whole number of 3^-depth cells to duration t (at least 1)."""
    return max(1, int(round(float(t) * 3 ** depth)))


class DiscretePath:
    """Brownian sample values on a TimeGrid, values[0] == 0."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: TimeGrid, values):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 1 or values.shape[0] != grid.n_points:
            raise ValueError(f"expected {grid.n_points} values, got shape {values.shape}")
        if values[0] != 0.0:
            raise ValueError("path must start at 0")
        values.setflags(write=False)
        self.grid = grid
        self.values = values

    def __len__(self):
        return self.values.shape[0]

    def __repr__(self):
        return f"DiscretePath(depth={self.grid.depth}, n_cells={self.grid.n_cells}, end={self.end:.6g})"

    @property
    def end(self) -> float:
        return float(self.values[-1])

    @property
    def t_end(self) -> float:
        return self.grid.t_end

    def times(self):
        return self.grid.times()

    def at(self, t: float) -> float:
        return float(self.values[self.grid.index_of(t)])

    def restrict(self, depth: int) -> "DiscretePath":
        """Subsample to a coarser triadic grid."""
        k = self.grid.depth - depth
        if k < 0:
            raise ValueError("restrict can only coarsen")
        f = 3 ** k
        if self.grid.n_cells % f:
            raise GridAlignmentError("path length is not a multiple of the coarse step")
        return DiscretePath(TimeGrid(depth, self.grid.n_cells // f), self.values[::f])

    def head(self, n_cells: int) -> "DiscretePath":
        """Path restricted to its first n_cells cells."""
        return DiscretePath(TimeGrid(self.grid.depth, n_cells), self.values[: n_cells + 1])


def sample_path(grid: TimeGrid, rng) -> DiscretePath:
    """Brownian path with iid Normal(0, step) increments."""
    gen = as_generator(rng)
    vals = np.empty(grid.n_points)
    vals[0] = 0.0
    np.cumsum(gen.standard_normal(grid.n_cells) * math.sqrt(grid.step), out=vals[1:])
    return DiscretePath(grid, vals)


# Each cell [x0, x1] of length h splits in three; given the endpoints, the two
# interior points (at h/3, 2h/3) have bridge covariance
#   h * [[2/9, 1/9], [1/9, 2/9]]  ->  Cholesky  sqrt(h) * [[sqrt(2)/3, 0], [1/(3 sqrt 2), 1/sqrt 6]].
_L11 = math.sqrt(2.0) / 3.0
_L21 = 1.0 / (3.0 * math.sqrt(2.0))
_L22 = 1.0 / math.sqrt(6.0)


def refine_path(path: DiscretePath, extra_depth: int, rng) -> DiscretePath:
    """Interpolate onto a grid ``extra_depth`` levels finer by Brownian bridges."""
    if extra_depth < 1:
        raise ValueError("extra_depth must be >= 1")
    gen = as_generator(rng)
    vals = path.values
    depth = path.grid.depth
    for _ in range(extra_depth):
        h = 1.0 / 3 ** depth
        x0, x1 = vals[:-1], vals[1:]
        d = x1 - x0
        z = gen.standard_normal((x0.shape[0], 2)) * math.sqrt(h)
        y1 = x0 + d / 3.0 + _L11 * z[:, 0]
        y2 = x0 + 2.0 * d / 3.0 + _L21 * z[:, 0] + _L22 * z[:, 1]
        new = np.empty(3 * x0.shape[0] + 1)
        new[0:-1:3] = x0
        new[1::3] = y1
        new[2::3] = y2
        new[-1] = vals[-1]
        vals = new
        depth += 1
    return DiscretePath(TimeGrid(depth, path.grid.n_cells * 3 ** extra_depth), vals)


# ---------------------------------------------------------------------------
# drift and change of measure

def drift_transform(path: DiscretePath, lam: float) -> DiscretePath:
    """(theta^lam b)(s) = b(s) - 2 lam s."""
    if lam == 0:
        return path
    return DiscretePath(path.grid, path.values - 2.0 * lam * path.times())


def rn_derivative(path: DiscretePath, lam: float) -> float:
    """D_t = exp(2 lam B_t - 2 lam^2 t): density of the drifted Wiener law."""
    t = path.t_end
    return math.exp(2.0 * lam * path.end - 2.0 * lam * lam * t)


def shift_automorphism_apply(functional, path: DiscretePath, lam: float) -> complex:
    """(Theta^lam X)(b) = exp(lam b(t) - lam^2 t) X(theta^lam b)."""
    t = path.t_end
    return math.exp(lam * path.end - lam * lam * t) * functional(drift_transform(path, lam))


def imaginary_shift_apply(functional, path: DiscretePath, mu: float) -> complex:
    """(Theta^{i mu} X)(b) = exp(i mu b(t)) X(b)."""
    return complex(math.cos(mu * path.end), math.sin(mu * path.end)) * functional(path)


def shift_operator(lam: float):
    """Theta^lam as a map functional -> functional (for composing operators)."""
    return lambda functional: (lambda path: shift_automorphism_apply(functional, path, lam))


def imaginary_shift_operator(mu: float):
    return lambda functional: (lambda path: imaginary_shift_apply(functional, path, mu))


@dataclass
class GirsanovReport:
    lam: float
    replicas: int
    lhs: float
    rhs: float
    lhs_stderr: float
    rhs_stderr: float
    diff_stderr: float  # stderr of the paired difference, both sides share paths

    @property
    def stderr(self):
        return self.diff_stderr

    @property
    def z(self):
        d = self.lhs - self.rhs
        return 0.0 if d == 0 else d / self.diff_stderr


def girsanov_pushforward_check(functional: Callable[[DiscretePath], float], lam: float, replicas: int,
                               rng, grid: TimeGrid | None = None, workers: int = 1) -> GirsanovReport:
    """Monte Carlo E[X(theta^lam B) D] against E[X(B)], on shared paths.

    Clipping policy: none. The functional must return a finite real for every
    sampled path; a non-finite value aborts with NonFiniteFunctional naming
    the replica.
    """
    grid = grid or TimeGrid.unit(4)
    seed = master_seed_of(rng)

    def one(i, gen):
        p = sample_path(grid, gen)
        x_drift = float(functional(drift_transform(p, lam)))
        x_plain = float(functional(p))
        if not (math.isfinite(x_drift) and math.isfinite(x_plain)):
            raise NonFiniteFunctional(i, x_drift if not math.isfinite(x_drift) else x_plain)
        return x_drift * rn_derivative(p, lam), x_plain

    vals = map_replicas(one, replicas, seed, workers, width=2)
    lhs, rhs = vals[:, 0], vals[:, 1]
    n = replicas
    se = lambda v: float(np.std(v, ddof=1) / math.sqrt(n)) if n > 1 else float("inf")
    return GirsanovReport(lam, n, float(np.mean(lhs)), float(np.mean(rhs)), se(lhs), se(rhs), se(lhs - rhs))


# ---------------------------------------------------------------------------
# minima

class Minimum(NamedTuple):
    index: int
    time: float
    value: float


def global_min(path: DiscretePath) -> Minimum:
    """Earliest interior grid point attaining the minimum over interior points."""
    v = path.values
    if v.shape[0] < 3:
        raise ValueError("path has no interior points")
    i = int(np.argmin(v[1:-1])) + 1
    return Minimum(i, path.grid.time_of(i), float(v[i]))


def strict_minima_mask(values) -> np.ndarray:
    v = np.asarray(values)
    mask = np.zeros(v.shape[0], dtype=bool)
    mask[1:-1] = (v[:-2] > v[1:-1]) & (v[2:] > v[1:-1])
    return mask


def sharpness(values, idx) -> np.ndarray:
    """min of the two neighbour gaps at each index."""
    v = np.asarray(values)
    idx = np.asarray(idx, dtype=np.int64)
    return np.minimum(v[idx - 1] - v[idx], v[idx + 1] - v[idx])


class MinimaList:
    """Enumerated strict local minima in halving order (grid indices)."""

    __slots__ = ("grid", "indices", "values", "sharpness")

    def __init__(self, grid: TimeGrid, indices, values, sharp):
        self.grid = grid
        self.indices = np.asarray(indices, dtype=np.int64)
        self.values = np.asarray(values, dtype=np.float64)
        self.sharpness = np.asarray(sharp, dtype=np.float64)

    @classmethod
    def from_path(cls, path: DiscretePath, indices) -> "MinimaList":
        idx = np.asarray(indices, dtype=np.int64)
        return cls(path.grid, idx, path.values[idx], sharpness(path.values, idx))

    def __len__(self):
        return self.indices.shape[0]

    def __iter__(self):
        for i, v, s in zip(self.indices, self.values, self.sharpness):
            yield Minimum(int(i), self.grid.time_of(int(i)), float(v)), float(s)

    def __repr__(self):
        return f"MinimaList({self.times().tolist()})"

    def times(self) -> np.ndarray:
        return self.indices / self.grid.denominator


def enumerate_local_minima(path: DiscretePath, max_count: int) -> MinimaList:
    """Strict local minima by recursive halving.

    Level k splits [0, t_end] into 2^k equal intervals; interval j covers grid
    indices ceil(j N / 2^k) .. ceil((j+1) N / 2^k) - 1 (endpoints excluded), so
    a grid point on a cut belongs to the right-hand interval. Visiting the
    intervals left to right, each one containing no earlier pick contributes
    its earliest argmin, provided that argmin is a strict local minimum.
    """
    if max_count < 1:
        raise ValueError("max_count must be >= 1")
    idx = kernels.enumerate_minima(path.values, int(max_count))
    return MinimaList.from_path(path, idx)


# ---------------------------------------------------------------------------
# conditioned bridge at a minimum

@dataclass
class BridgeSample:
    samples: np.ndarray  # the first ``size`` accepted midpoints
    proposals: int
    accepted: int  # all accepted proposals, including surplus in the last batch

    @property
    def acceptance_rate(self):
        return self.accepted / self.proposals if self.proposals else float("nan")

    @property
    def rate_stderr(self):
        p = self.acceptance_rate
        return math.sqrt(p * (1 - p) / self.proposals)


STARVATION_RATE = 1e-4
# starvation is only declared once this many proposals have been made
STARVATION_WINDOW = 100_000


def _bridge_batch(params: DensityParams, fine_depth: int, gen, batch: int):
    ncell = 2 * 3 ** fine_depth
    h = 2.0 * params.epsilon / ncell
    z = gen.standard_normal((batch, ncell))
    u = gen.random(batch)
    return kernels.bridge_accept(params.a, params.b, h, z, u)


def sample_conditioned_min_increments(params: DensityParams, size: int, rng, fine_depth: int = 4,
                                      batch: int = 4096, max_proposals: int | None = None) -> BridgeSample:
    """``size`` draws of B(tau+2eps)-B(tau) given a, b, by bridge rejection.

    A Brownian bridge from a to b over time 2 eps is simulated on 2 3^fine_depth
    cells; it is accepted if every grid value is positive and a uniform falls
    below prod_i (1 - exp(-2 x_i x_{i+1} / h)), the probability that no cell's
    bridge dips below 0. The midpoint of accepted bridges is returned.
    """
    gen = as_generator(rng)
    out = np.empty(size)
    got = 0
    accepted = 0
    proposals = 0
    while got < size:
        acc, mid = _bridge_batch(params, fine_depth, gen, batch)
        proposals += batch
        hits = mid[acc]
        accepted += hits.shape[0]
        take = hits[: size - got]
        out[got: got + take.shape[0]] = take
        got += take.shape[0]
        if got < size and proposals >= STARVATION_WINDOW and accepted / proposals < STARVATION_RATE:
            raise AcceptanceStarvation(accepted / proposals, proposals, context=f"conditioned bridge {params}")
        if max_proposals is not None and proposals >= max_proposals and got < size:
            raise AcceptanceStarvation(accepted / proposals, proposals, context=f"conditioned bridge {params}")
    return BridgeSample(out, proposals, accepted)


def bridge_acceptance(params: DensityParams, proposals: int, rng, fine_depth: int = 4, batch: int = 4096) -> BridgeSample:
    """Run exactly ``proposals`` proposals; returns all accepted midpoints."""
    gen = as_generator(rng)
    kept = []
    done = 0
    while done < proposals:
        m = min(batch, proposals - done)
        acc, mid = _bridge_batch(params, fine_depth, gen, m)
        kept.append(mid[acc])
        done += m
    samples = np.concatenate(kept) if kept else np.empty(0)
    return BridgeSample(samples, proposals, samples.shape[0])


def sample_conditioned_min_increment(params: DensityParams, fine_depth: int, rng) -> float:
    """One draw of the middle increment at a minimum (see the batch version)."""
    return float(sample_conditioned_min_increments(params, 1, rng, fine_depth, batch=64).samples[0])
