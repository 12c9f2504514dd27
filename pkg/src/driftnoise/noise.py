"""Discretized noise elements and their twisted composition.

A NoiseElement over [0, t] is a Brownian path plus a fair sign attached to
each of its first K enumerated local minima. Composition concatenates paths;
a sign at a left minimum tau is multiplied by f_n(B(tau+eps_n) - B(tau)) for
every level n whose evaluation time tau + eps_n falls in (s, s+t].
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .brownian import DiscretePath, MinimaList, TimeGrid, cells_for, snap_cells, drift_transform, enumerate_local_minima, \
    global_min, sample_path, strict_minima_mask
from .errors import DriftDestroyedMinima, GridAlignmentError, RuleMismatch, SeamCollisionError
from .rng import as_generator, map_replicas, master_seed_of
from .signs import SignRule, drift_shift


@dataclass(frozen=True, eq=False)
class NoiseElement:
    path: DiscretePath
    minima: np.ndarray  # grid indices, in enumeration order
    signs: np.ndarray  # int8, one per minimum
    rule_tag: str
    K: int
    short: bool = False  # fewer than K strict minima were available

    def __post_init__(self):
        if self.minima.shape != self.signs.shape:
            raise ValueError("one sign per tracked minimum")
        if not np.all(np.isin(self.signs, (-1, 1))):
            raise ValueError("signs must be +-1")

    @property
    def grid(self) -> TimeGrid:
        return self.path.grid

    @property
    def t(self) -> float:
        return self.path.t_end

    def times(self) -> np.ndarray:
        return self.minima / self.grid.denominator

    def sign_field(self) -> dict:
        """{grid index: sign}."""
        return {int(i): int(s) for i, s in zip(self.minima, self.signs)}

    def sign_at(self, index: int) -> int:
        hit = np.flatnonzero(self.minima == index)
        if hit.size == 0:
            raise KeyError(f"no tracked minimum at grid index {index}")
        return int(self.signs[hit[0]])

    def minima_list(self) -> MinimaList:
        return MinimaList.from_path(self.path, self.minima)

    def retag(self, rule: SignRule) -> "NoiseElement":
        return NoiseElement(self.path, self.minima, self.signs, rule.tag, self.K, self.short)


def sample_noise(t: float, rule: SignRule, grid: TimeGrid | int, K: int, rng) -> NoiseElement:
    """Path on [0, t], its first K enumerated minima and iid fair signs.

    ``grid`` is a TimeGrid covering [0, t] or just its depth. The path is drawn
    first, then the signs, from the same generator.
    """
    depth = grid if isinstance(grid, int) else grid.depth
    g = TimeGrid.covering(t, depth)
    if not isinstance(grid, int) and grid.n_cells != g.n_cells:
        raise GridAlignmentError(f"grid ends at {grid.t_end!r}, expected {t!r}")
    gen = as_generator(rng)
    path = sample_path(g, gen)
    mins = enumerate_local_minima(path, K)
    signs = (2 * gen.integers(0, 2, size=len(mins)) - 1).astype(np.int8)
    return NoiseElement(path, mins.indices, signs, rule.tag, K, short=len(mins) < K)


def merge_enumerations(left, right, s_cells: int | None = None) -> np.ndarray:
    """Interleave two enumerations: tau_{2k-1} = left_k, tau_{2k} = right_k.

    ``left``/``right`` are MinimaLists or index arrays; right indices are
    relative to the seam and get shifted by ``s_cells`` (default: the left
    grid length). The longer tail is appended once the shorter list runs out.
    """
    li = np.asarray(getattr(left, "indices", left), dtype=np.int64)
    ri = np.asarray(getattr(right, "indices", right), dtype=np.int64)
    if s_cells is None:
        s_cells = left.grid.n_cells
    ri = ri + s_cells
    if np.any(li >= s_cells) or np.any(li <= 0):
        raise SeamCollisionError("left minima must lie strictly inside (0, s)")
    if np.any(ri <= s_cells):
        raise SeamCollisionError("right minima must lie strictly after the seam")
    out = np.empty(li.size + ri.size, dtype=np.int64)
    k = min(li.size, ri.size)
    out[0:2 * k:2] = li[:k]
    out[1:2 * k:2] = ri[:k]
    out[2 * k:] = li[k:] if li.size > k else ri[k:]
    return out


def _level_cells(rule: SignRule, depth: int):
    """(level, cells) for every level whose eps_n is at least one grid step.

    Finer levels cannot reach across a seam: a left minimum sits at least one
    step before it.
    """
    out = []
    for n in rule.levels:
        eps = rule.epsilon[n - 1]
        if eps * 3 ** depth < 1 - 1e-9:
            continue
        out.append((n, cells_for(eps, depth)))
    return out


def seam_factors(values, taus, lo: int, hi: int, rule: SignRule, depth: int) -> np.ndarray:
    """prod over n with tau + e_n in (lo, hi] of f_n(v[tau + e_n] - v[tau])."""
    taus = np.asarray(taus, dtype=np.int64)
    fac = np.ones(taus.shape, dtype=np.int8)
    for n, e in _level_cells(rule, depth):
        j = taus + e
        hit = (j > lo) & (j <= hi)
        if np.any(hit):
            fac[hit] *= rule.evaluate(n, values[j[hit]] - values[taus[hit]])
    return fac


def _check_rule(rule: SignRule, *elements):
    for e in elements:
        if e.rule_tag != rule.tag:
            raise RuleMismatch(f"element tagged {e.rule_tag!r} composed under {rule.tag!r}")


def concatenate_paths(ps: DiscretePath, pt: DiscretePath) -> DiscretePath:
    if ps.grid.depth != pt.grid.depth:
        raise GridAlignmentError("paths live on grids of different depth")
    vals = np.concatenate([ps.values, ps.values[-1] + pt.values[1:]])
    return DiscretePath(TimeGrid(ps.grid.depth, ps.grid.n_cells + pt.grid.n_cells), vals)


def compose(ns: NoiseElement, nt: NoiseElement, rule: SignRule) -> NoiseElement:
    """Twisted composition over [0, s+t]."""
    _check_rule(rule, ns, nt)
    path = concatenate_paths(ns.path, nt.path)
    S, T = ns.grid.n_cells, nt.grid.n_cells
    fac = seam_factors(path.values, ns.minima, S, S + T, rule, path.grid.depth)
    left_signs = ns.signs * fac
    mins = merge_enumerations(ns.minima, nt.minima, S)
    signs = np.empty(mins.shape, dtype=np.int8)
    k = min(ns.minima.size, nt.minima.size)
    signs[0:2 * k:2] = left_signs[:k]
    signs[1:2 * k:2] = nt.signs[:k]
    signs[2 * k:] = left_signs[k:] if ns.minima.size > k else nt.signs[k:]
    return NoiseElement(path, mins, signs, rule.tag, ns.K + nt.K, ns.short or nt.short)


def split(ne: NoiseElement, s_cells: int, rule: SignRule):
    """Inverse of compose at the seam s: (element on [0, s], element on [0, t-s]).

    Left signs are divided by the seam products (the same products, since
    they are +-1). The seam point itself must not be tracked.
    """
    _check_rule(rule, ne)
    N = ne.grid.n_cells
    if not 0 < s_cells < N:
        raise ValueError("seam must be interior")
    if np.any(ne.minima == s_cells):
        raise SeamCollisionError(f"tracked minimum at the seam index {s_cells}")
    v = ne.path.values
    left = ne.minima < s_cells
    lm, rm = ne.minima[left], ne.minima[~left]
    fac = seam_factors(v, lm, s_cells, N, rule, ne.grid.depth)
    lp = DiscretePath(TimeGrid(ne.grid.depth, s_cells), v[: s_cells + 1])
    rp = DiscretePath(TimeGrid(ne.grid.depth, N - s_cells), v[s_cells:] - v[s_cells])
    a = NoiseElement(lp, lm, ne.signs[left] * fac, ne.rule_tag, int(lm.size), ne.short)
    b = NoiseElement(rp, rm - s_cells, ne.signs[~left], ne.rule_tag, int(rm.size), ne.short)
    return a, b


def restrict(ne: NoiseElement, s_cells: int, rule: SignRule) -> NoiseElement:
    """The element's restriction to [0, s] (left part of ``split``)."""
    return split(ne, s_cells, rule)[0]


def drift_map(ne: NoiseElement, lam: float, rule: SignRule | None = None) -> NoiseElement:
    """Drift the path by lam; keep the signs at the same times.

    Every tracked time must still be a strict local minimum of the drifted
    path, otherwise DriftDestroyedMinima lists the offending times. With
    ``rule`` the result is re-tagged for composition under that rule.
    """
    if lam == 0 and rule is None:
        return ne
    path = drift_transform(ne.path, lam)
    strict = strict_minima_mask(path.values)
    bad = ne.minima[~strict[ne.minima]]
    if bad.size:
        raise DriftDestroyedMinima(bad / ne.grid.denominator)
    tag = rule.tag if rule is not None else ne.rule_tag
    return NoiseElement(path, ne.minima, ne.signs, tag, ne.K, ne.short)


def same_element(x: NoiseElement, y: NoiseElement, rtol: float = 1e-12):
    """(sign fields equal, max relative path deviation)."""
    if x.grid != y.grid:
        return False, math.inf
    scale = max(1.0, float(np.max(np.abs(x.path.values))))
    dev = float(np.max(np.abs(x.path.values - y.path.values))) / scale
    return x.sign_field() == y.sign_field(), dev


@dataclass
class DiagramReport:
    lam: float
    replicas: int
    passed: int
    skipped: int
    sign_mismatches: int
    max_path_dev: float
    failures: list = field(default_factory=list)
    s: float = math.nan  # grid times actually used
    t: float = math.nan

    @property
    def checked(self):
        return self.replicas - self.skipped

    @property
    def skip_rate(self):
        return self.skipped / self.replicas if self.replicas else 0.0

    @property
    def pass_count(self):
        return self.passed


def check_drift_diagram(s: float, t: float, lam: float, rule_f: SignRule, replicas: int, rng,
                        depth: int = 12, K: int = 16, workers: int = 1, tol: float = 1e-12) -> DiagramReport:
    """Compare drift-then-compose (under g) with compose-then-drift (under f).

    g_n(x) = f_n(x + 2 lam eps_n). Replica i draws the s-element and then the
    t-element from stream (seed, i). A replica is skipped when the drift
    destroys a tracked minimum on either side. ``s`` and ``t`` are snapped to
    the nearest grid times (1/2 is not triadic); the report records them.
    """
    rule_g = drift_shift(rule_f, lam)
    s = snap_cells(s, depth) / 3 ** depth
    t = snap_cells(t, depth) / 3 ** depth
    seed = master_seed_of(rng)

    def one(i, gen):
        ws = sample_noise(s, rule_f, depth, K, gen)
        wt = sample_noise(t, rule_f, depth, K, gen)
        try:
            lhs = compose(drift_map(ws, lam, rule_g), drift_map(wt, lam, rule_g), rule_g)
            rhs = drift_map(compose(ws, wt, rule_f), lam, rule_g)
        except DriftDestroyedMinima:
            return 1.0, 0.0, 0.0
        eq, dev = same_element(lhs, rhs)
        return 0.0, float(eq and dev <= tol), dev

    vals = map_replicas(one, replicas, seed, workers, width=3)
    skipped = int(vals[:, 0].sum())
    passed = int(vals[:, 1].sum())
    checked = vals[:, 0] == 0
    mism = int(np.sum(checked & (vals[:, 1] == 0)))
    fails = [int(i) for i in np.flatnonzero(checked & (vals[:, 1] == 0))]
    return DiagramReport(lam, replicas, passed, skipped, mism, float(vals[:, 2].max(initial=0.0)), fails, s, t)


# ---------------------------------------------------------------------------
# sign process at the global minimum

@dataclass
class SignProcess:
    tau_index: int
    levels: np.ndarray  # n values with tau + 3^{-n} < t_end, ascending
    times: np.ndarray  # tau + 3^{-n}
    values: np.ndarray  # S(tau + 3^{-n})
    jump_times: np.ndarray  # tau + eps_m = tau + 2 3^{-m-1}, between consecutive times
    jump_factors: np.ndarray  # f_m(B(tau + eps_m) - B(tau)), m = levels[:-1]
    truncated: bool


def sign_process_at_global_min(ne: NoiseElement, rule: SignRule, n_range) -> SignProcess:
    """S(tau + 3^{-n}) = sign of tau in the restriction of ne to [0, tau + 3^{-n}].

    Restricting removes the seam factors of the levels m with
    tau + eps_m in (tau + 3^{-n}, t_end], i.e. m <= n-1, so
    S(tau + 3^{-n}) = eta(tau) prod_{m <= n-1, tau + eps_m <= t_end} f_m(...),
    and between tau + 3^{-n-1} and tau + 3^{-n} the process jumps once, at
    tau + eps_n, by f_n(B(tau + eps_n) - B(tau)).
    """
    _check_rule(rule, ne)
    d = ne.grid.depth
    N = ne.grid.n_cells
    v = ne.path.values
    tau = global_min(ne.path).index
    eta = ne.sign_at(tau)
    lo, hi = int(min(n_range)), int(max(n_range))
    if hi > d:
        raise GridAlignmentError(f"level {hi} needs grid depth >= {hi}")
    levels = [n for n in range(lo, hi + 1) if tau + 3 ** (d - n) < N]
    truncated = len(levels) < hi - lo + 1
    if not levels:
        return SignProcess(tau, np.empty(0, int), np.empty(0), np.empty(0, np.int8),
                           np.empty(0), np.empty(0, np.int8), True)
    cells = dict(_level_cells(rule, d))

    def factor(m):
        e = cells.get(m)
        if e is None or tau + e > N:
            return 1
        return rule.evaluate(m, v[tau + e] - v[tau])

    vals = []
    for n in levels:
        s = eta
        for m in range(1, min(n - 1, rule.n_max) + 1):
            s *= factor(m)
        vals.append(s)
    jm = levels[:-1]
    jt = [(tau + cells[m]) / 3 ** d if m in cells else math.nan for m in jm]
    jf = [factor(m) for m in jm]
    return SignProcess(tau, np.array(levels), np.array([(tau + 3 ** (d - n)) / 3 ** d for n in levels]),
                       np.array(vals, dtype=np.int8), np.array(jt), np.array(jf, dtype=np.int8), truncated)


# ---------------------------------------------------------------------------
# serialization
#
# Text header lines (UTF-8, '\n'-terminated), then raw little-endian float64 path values:
#   DRIFTNOISE-NOISE 1
#   depth=<d>,n_cells=<N>,K=<K>,short=<0|1>,rule_tag=<tag>
#   minima=<i1>,<i2>,...            grid indices in enumeration order
#   signs=<bits>                    '1' for +1, '0' for -1, aligned with minima
#   values=<N+1>
#   <8 (N+1) bytes>

MAGIC = "DRIFTNOISE-NOISE 1"


def dumps_noise(ne: NoiseElement) -> bytes:
    head = [
        MAGIC,
        f"depth={ne.grid.depth},n_cells={ne.grid.n_cells},K={ne.K},short={int(ne.short)},rule_tag={ne.rule_tag}",
        "minima=" + ",".join(str(int(i)) for i in ne.minima),
        "signs=" + "".join("1" if s > 0 else "0" for s in ne.signs),
        f"values={ne.path.values.shape[0]}",
    ]
    return ("\n".join(head) + "\n").encode() + ne.path.values.astype("<f8").tobytes()


def loads_noise(data: bytes) -> NoiseElement:
    buf = io.BytesIO(data)
    lines = [buf.readline().decode().rstrip("\n") for _ in range(5)]
    if lines[0] != MAGIC:
        raise ValueError("not a serialized noise element")
    meta = dict(kv.split("=", 1) for kv in lines[1].split(",", 4))
    mins = np.array([int(x) for x in lines[2][len("minima="):].split(",") if x], dtype=np.int64)
    signs = np.array([1 if c == "1" else -1 for c in lines[3][len("signs="):]], dtype=np.int8)
    count = int(lines[4][len("values="):])
    vals = np.frombuffer(buf.read(8 * count), dtype="<f8").astype(np.float64)
    grid = TimeGrid(int(meta["depth"]), int(meta["n_cells"]))
    return NoiseElement(DiscretePath(grid, vals), mins, signs, meta["rule_tag"], int(meta["K"]), meta["short"] == "1")


def save_noise(ne: NoiseElement, path):
    with open(path, "wb") as fh:
        fh.write(dumps_noise(ne))


def load_noise(path) -> NoiseElement:
    with open(path, "rb") as fh:
        return loads_noise(fh.read())
