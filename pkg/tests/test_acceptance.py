"""Acceptance suite: the ten primary criteria at their stated tolerances.

Each test records one PASS/FAIL line (printed in the pytest summary, or
directly when this file is run as a script) and then asserts.

    pytest tests/test_acceptance.py -v
    python3 tests/test_acceptance.py
"""
import cmath
import itertools
import math
import time

import numpy as np
import pytest
from scipy import stats

from driftnoise import brownian, cli, density, extensions, noise, signs
from driftnoise.config import ExperimentConfig
from driftnoise.density import DensityParams
from driftnoise.experiments import random_cocycle_problem
from driftnoise.extensions import CocycleProblem
from driftnoise.rng import RngStream

SQRT2 = math.sqrt(2)
RESULTS = []  # (criterion, ok, line)

# Derived goldens (first verified run; see tests/test_density.py for the margin oracle)
GOLDEN_MARGIN = 0.010333492677046023
# c -> (parity class carrying the obstruction, lower bound on D_hat over that class)
GOLDEN_OBSTRUCTION = {0.5: ("even", 0.9705), 1.0: ("even", 0.5685), SQRT2 / 2: ("odd", 0.9705)}
OBSTRUCTION_DEPTH = 9
OBSTRUCTION_SEEDS = (1, 2, 3)


def record(k, title, ok, detail, elapsed=None, limit=None):
    if limit is not None and elapsed is not None:
        ok = ok and elapsed < limit
    t = "" if elapsed is None else f" [{elapsed:.1f} s" + ("" if limit is None else f" < {limit:g} s") + "]"
    line = f"{'PASS' if ok else 'FAIL'}  criterion {k:2d}  {title}: {detail}{t}"
    RESULTS.append((k, ok, line))
    print(line)
    return ok


def test_c01_density_normalization():
    t0 = time.perf_counter()
    worst = 0.0
    for a, b, eps in itertools.product((0.1, 0.5, 1, 2, 5), (0.1, 0.5, 1, 2, 5), (1, 1 / 3, 1 / 9)):
        worst = max(worst, abs(density.normalize_check(DensityParams(a, b, eps), 1e-6) - 1.0))
    ok = record(1, "density normalization", worst <= 1e-6, f"max |integral - 1| = {worst:.2e} over 75 triples",
                time.perf_counter() - t0, 10)
    assert ok


def test_c02_density_vs_monte_carlo():
    t0 = time.perf_counter()
    parts, ok = [], True
    for j, (a, b, eps) in enumerate([(1, 1, 1), (0.5, 2, 1), (1, 1, 1 / 9)]):
        p = DensityParams(a, b, eps)
        res = brownian.sample_conditioned_min_increments(p, 100_000, RngStream(0, j))
        ks = density.ks_distance(res.samples, p)
        expect = -math.expm1(-a * b / eps)
        z = (res.acceptance_rate - expect) / math.sqrt(expect * (1 - expect) / res.proposals)
        ok &= ks <= 0.02 and abs(z) <= 3 and np.all(res.samples > 0)
        parts.append(f"({a},{b},{eps:.3g}) KS={ks:.4f} rate={res.acceptance_rate:.5f} z={z:+.2f}")
    ok = record(2, "density vs conditioned bridge", ok, "; ".join(parts), time.perf_counter() - t0, 120)
    assert ok


def test_c03_goodness_margin():
    t0 = time.perf_counter()
    g = [10.0 ** k for k in range(-3, 4)]
    rep = density.goodness_margin_scan(g, g)
    ok = rep.margin > 0 and math.isclose(rep.margin, GOLDEN_MARGIN, rel_tol=1e-12)
    ok = record(3, "goodness margin", ok, f"margin = {rep.margin:.15g} at (a, b) = ({rep.a_star:g}, {rep.b_star:g}), "
                f"golden {GOLDEN_MARGIN:.15g}", time.perf_counter() - t0, 30)
    assert ok


def test_c04_square_wave_correlation():
    a = np.linspace(0, 2, 1000)
    err = max(abs(signs.autocorrelation(x) - signs.autocorrelation_numeric(x)) for x in a)
    unit = [k for k in range(41) if abs(signs.autocorrelation(k / 20)) == 1.0]
    ok = err <= 1e-9 and unit == [k for k in range(41) if k % 10 == 0]
    ok = record(4, "square-wave correlation", ok,
                f"max |closed - numeric| = {err:.1e}; |R| = 1 exactly at a = {[k / 20 for k in unit]}")
    assert ok


def test_c05_girsanov_suite():
    t0 = time.perf_counter()
    lam = 0.3
    grid = brownian.TimeGrid.unit(4)
    fns = {
        "D_t": lambda b: 1.0,
        "B_t": lambda b: b.end,
        "1{B_t<0}": lambda b: 1.0 if b.end < 0 else 0.0,
        "tanh(max B)": lambda b: math.tanh(float(np.max(b.values))),
    }
    parts, ok = [], True
    for name, fn in fns.items():
        r = brownian.girsanov_pushforward_check(fn, lam, 100_000, 0, grid)
        ok &= abs(r.z) <= 3
        parts.append(f"{name} z={r.z:+.2f}")
    worst = 0.0
    lam_w, mu = 0.7, 1.3
    S, T = brownian.shift_operator(lam_w), brownian.imaginary_shift_operator(mu)
    X = lambda b: math.cos(3 * b.end) + float(np.min(b.values))
    for i in range(200):
        b = brownian.sample_path(grid, RngStream(1, i))
        lhs = S(T(X))(b)
        rhs = cmath.exp(-2j * lam_w * mu * b.t_end) * T(S(X))(b)
        worst = max(worst, abs(lhs - rhs) / abs(rhs))
    ok &= worst <= 1e-10
    parts.append(f"Weyl max rel diff {worst:.1e}")
    ok = record(5, "Girsanov suite (1e5 replicas)", ok, "; ".join(parts), time.perf_counter() - t0, 60)
    assert ok


def test_c06_cocycle_solver():
    agree = 0
    for i in range(100):
        prob = random_cocycle_problem(RngStream(6, i).generator())
        res = extensions.cocycle_solve(prob)
        bf = extensions.cocycle_brute_force(prob)
        agree += res.found == (bf is not None) and (not res.found or extensions.verify_cocycle(prob, res.U))
    gen = np.random.default_rng(6)
    X = gen.choice([-1, 1], size=(6, 4))
    same = extensions.cocycle_solve(CocycleProblem(4, 6, 2, X, X))
    neg = extensions.cocycle_solve(CocycleProblem(4, 6, 2, X, -X))
    same_ok = same.found and all(np.all(u == 1) for u in same.U)
    neg_ok = neg.found and all(np.all(neg.U[n] == -neg.U[n - 1].flat[0]) for n in range(1, 6)) \
        and all(np.unique(u).size == 1 for u in neg.U)
    ok = agree == 100 and same_ok and neg_ok
    ok = record(6, "cocycle solver vs brute force", ok,
                f"{agree}/100 agree; X=Y gives U=1: {same_ok}; Y=-X gives alternating constants: {neg_ok}")
    assert ok


def test_c07_composition_semigroup():
    t0 = time.perf_counter()
    depth = 7
    rule = signs.build_drift_sensitive_rule(depth - 1)
    const = signs.build_constant_rule(depth - 1)
    exact, worst = 0, 0.0
    for i in range(100):
        gen = RngStream(7, i).generator()
        cells = [int(k) * 81 for k in gen.integers(1, 5, size=3)]
        els = [noise.sample_noise(c / 3 ** depth, rule, depth, 16, gen) for c in cells]
        left = noise.compose(noise.compose(els[0], els[1], rule), els[2], rule)
        right = noise.compose(els[0], noise.compose(els[1], els[2], rule), rule)
        eq, dev = noise.same_element(left, right)
        exact += eq
        worst = max(worst, dev)
    untwisted = True
    for i in range(50):
        gen = RngStream(70, i).generator()
        a = noise.sample_noise(1 / 3, const, depth, 16, gen)
        b = noise.sample_noise(2 / 3, const, depth, 16, gen)
        c = noise.compose(a, b, const)
        untwisted &= c.sign_field() == {**a.sign_field(), **{k + 3 ** (depth - 1): v
                                                             for k, v in b.sign_field().items()}}
    counts = np.zeros((2, 2))
    for i in range(10_000):
        gen = RngStream(71, i).generator()
        a = noise.sample_noise(27 / 3 ** 5, signs.build_drift_sensitive_rule(4), 5, 2, gen)
        b = noise.sample_noise(27 / 3 ** 5, signs.build_drift_sensitive_rule(4), 5, 2, gen)
        c = noise.compose(a, b, signs.build_drift_sensitive_rule(4))
        counts[int(c.signs[0] > 0), int(c.signs[1] > 0)] += 1
    chi2 = float(np.sum((counts - 2500) ** 2 / 2500))
    crit = float(stats.chi2.ppf(0.99, 3))
    ok = exact == 100 and worst <= 1e-12 and untwisted and chi2 < crit
    ok = record(7, "composition semigroup", ok,
                f"associativity {exact}/100 sign-exact, max path rel dev {worst:.1e}; constant rule untwisted: "
                f"{untwisted}; chi2 = {chi2:.2f} < {crit:.2f}", time.perf_counter() - t0, 60)
    assert ok


def test_c08_drift_diagram():
    t0 = time.perf_counter()
    f = signs.build_drift_sensitive_rule(11)
    parts, ok = [], True
    for lam in (0.1, 0.3):
        r = noise.check_drift_diagram(0.5, 0.5, lam, f, 200, 8, depth=12, K=16)
        ok &= r.sign_mismatches == 0 and r.max_path_dev <= 1e-12 and r.skip_rate <= 0.05
        parts.append(f"lambda={lam}: {r.passed} passed, {r.skipped} skipped, {r.sign_mismatches} mismatches")
    ok = record(8, "drift diagram (depth 12)", ok, "; ".join(parts), time.perf_counter() - t0, 120)
    assert ok


def test_c09_drift_obstruction():
    t0 = time.perf_counter()
    f = signs.build_drift_sensitive_rule(5)
    cs = [0.0, 0.5, 1.0, SQRT2 / 2]
    gs = [signs.obstruction_shift(f, c) for c in cs]
    runs = [extensions.obstruction_scan(f, gs, [2, 3, 4, 5], 10_000, seed, depth=OBSTRUCTION_DEPTH, labels=cs)
            for seed in OBSTRUCTION_SEEDS]
    ok = all(r[(0.0, n)].D_hat == 0.0 for r in runs for n in range(2, 6))
    parts = [f"c=0: D_hat == 0 exactly at n=2..5 x 3 seeds: {ok}"]
    # stability across seeds, every (c, n)
    worst_z = 0.0
    for c, n in itertools.product(cs, range(2, 6)):
        for r1, r2 in itertools.combinations(runs, 2):
            x, y = r1[(c, n)], r2[(c, n)]
            pooled = math.hypot(x.stderr, y.stderr)
            if pooled == 0:
                ok &= x.D_hat == y.D_hat
            else:
                worst_z = max(worst_z, abs(x.D_hat - y.D_hat) / pooled)
    ok &= worst_z <= 3
    for c in cs[1:]:
        parity, bound = GOLDEN_OBSTRUCTION[c]
        levels = [n for n in range(2, 6) if (n % 2 == 1) == (parity == "odd")]
        reps = [r[(c, n)] for r in runs for n in levels]
        sig = all(x.D_hat > 5 * x.stderr for x in reps)
        low = min(x.D_hat for x in reps)
        ok &= sig and low >= bound
        parts.append(f"c={c:.4g}: {parity} levels D_hat >= {low:.6f} (golden >= {bound}), "
                     f"min z = {min(x.significance for x in reps):.1e}")
    parts.append(f"max cross-seed |diff|/pooled stderr = {worst_z:.2f}")
    ok = record(9, "drift-sensitivity obstruction (3 seeds x 1e4)", ok, "; ".join(parts),
                time.perf_counter() - t0, 600)
    assert ok


DETERMINISM = {
    "density-check": dict(replicas=2000),
    "goodness-scan": {},
    "correlation": {},
    "drift-obstruction": dict(replicas=200, depth=8),
    "compose-check": dict(replicas=30, depth=7),
    "drift-diagram": dict(replicas=30, depth=9),
    "cocycle-demo": dict(instances=50),
    "girsanov-check": dict(replicas=2000),
}


def test_c10_determinism(tmp_path):
    t0 = time.perf_counter()
    same = []
    for exp, over in DETERMINISM.items():
        blobs = []
        for w in (1, 4):
            cfg = ExperimentConfig(experiment=exp, seed=10, workers=w, output_dir=str(tmp_path / f"{exp}-{w}"),
                                   **over).validate()
            rep = cli.run(cfg)
            with open(rep.csv_path, "rb") as fh:
                blobs.append(fh.read())
        same.append(blobs[0] == blobs[1])
    ok = all(same)
    ok = record(10, "determinism across worker counts", ok,
                f"{sum(same)}/{len(same)} experiment CSVs byte-identical (workers 1 vs 4)",
                time.perf_counter() - t0)
    assert ok


if __name__ == "__main__":  # pragma: no cover
    import sys
    import tempfile
    from pathlib import Path

    for name, fn in sorted(globals().items()):
        if name.startswith("test_c") and callable(fn):
            try:
                fn(Path(tempfile.mkdtemp())) if "tmp_path" in fn.__code__.co_varnames else fn()
            except AssertionError:
                pass
    sys.exit(0 if all(ok for _, ok, _ in RESULTS) else 1)
