"""The eight CLI experiments. Each returns (header, rows, summary).

CSV schemas (version 1):
  density-check     a, b, epsilon, integral, ks_distance, acceptance_rate, expected_rate, proposals
  goodness-scan     a, b, margin
  correlation       a, R_closed, R_numeric, abs_err
  drift-obstruction n, parity, c, replicas, acceptance_rate, D_hat, stderr
  compose-check     trial, cells_r, cells_s, cells_t, n_minima, signs_equal, path_rel_dev, twisted_signs
  drift-diagram     lambda, s, t, replicas, passed, skipped, sign_mismatches, max_path_dev
  cocycle-demo      instance, alphabet, depth, window, status, brute_force, agree
  girsanov-check    functional, lambda, replicas, lhs, rhs, lhs_stderr, rhs_stderr, diff_stderr
"""
from __future__ import annotations

import math

import numpy as np

from . import brownian, density, extensions, noise, signs
from .errors import NumericalFailure
from .rng import RngStream

SCHEMA_VERSION = 1


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def format_row(row):
    return [_fmt(v) for v in row]


# ---------------------------------------------------------------------------

def density_check(cfg):
    header = ["a", "b", "epsilon", "integral", "ks_distance", "acceptance_rate", "expected_rate", "proposals"]
    rows, failures = [], []
    for j, (a, b, eps) in enumerate(cfg.density_params):
        p = density.DensityParams(a, b, eps)
        integral = density.normalize_check(p, 1e-6)
        try:
            res = brownian.sample_conditioned_min_increments(p, cfg.replicas, RngStream(cfg.seed, j), cfg.fine_depth)
        except NumericalFailure as exc:
            rows.append([a, b, eps, integral, math.nan, getattr(exc, "rate", math.nan),
                         -math.expm1(-a * b / eps), getattr(exc, "proposals", 0)])
            failures.append(f"{type(exc).__name__}: {exc}")
            continue
        ks = density.ks_distance(res.samples, p)
        rows.append([a, b, eps, integral, ks, res.acceptance_rate, -math.expm1(-a * b / eps), res.proposals])
    return header, rows, {"failures": failures}


def goodness_scan(cfg):
    grid = [10.0 ** k for k in range(-3, 4)]
    rep = density.goodness_margin_scan(grid, grid)
    rows = [[a, b, m] for a, b, _, _, m in rep.rows]
    return ["a", "b", "margin"], rows, {"margin": rep.margin, "epsilon_star": rep.epsilon_star,
                                        "argmin": [rep.a_star, rep.b_star], "witness_x": rep.witness_x}


def correlation(cfg):
    rows = []
    for k in range(1000):
        a = k / 500.0
        rc = signs.autocorrelation(a)
        rn = signs.autocorrelation_numeric(a)
        rows.append([a, rc, rn, abs(rc - rn)])
    return ["a", "R_closed", "R_numeric", "abs_err"], rows, {"max_abs_err": max(r[3] for r in rows)}


def drift_obstruction(cfg):
    lo, hi = cfg.n_range
    f = signs.build_drift_sensitive_rule(hi)
    gs = [signs.obstruction_shift(f, c) for c in cfg.c_list]
    header = ["n", "parity", "c", "replicas", "acceptance_rate", "D_hat", "stderr"]
    rows, failures = [], []
    for n in range(lo, hi + 1):
        try:
            reps = extensions.obstruction_scan(f, gs, [n], cfg.replicas, cfg.seed, cfg.depth, cfg.workers,
                                               labels=list(range(len(gs))))
        except NumericalFailure as exc:
            failures.append(f"level {n}: {type(exc).__name__}: {exc}")
            for c in cfg.c_list:
                rows.append([n, "odd" if n % 2 else "even", c, cfg.replicas, getattr(exc, "rate", math.nan),
                             math.nan, math.nan])
            continue
        for gi, c in enumerate(cfg.c_list):
            r = reps[(gi, n)]
            rows.append([n, r.parity, c, r.replicas, r.acceptance_rate, r.D_hat, r.stderr])
    return header, rows, {"failures": failures}


def compose_check(cfg):
    """Associativity on random triples; cells are multiples of 3^(depth-2)."""
    rule = signs.build_drift_sensitive_rule(max(cfg.depth - 1, 1))
    unit = 3 ** max(cfg.depth - 2, 0)
    header = ["trial", "cells_r", "cells_s", "cells_t", "n_minima", "signs_equal", "path_rel_dev", "twisted_signs"]
    rows = []
    for i in range(cfg.replicas):
        gen = RngStream(cfg.seed, i).generator()
        cells = [int(k) * unit for k in gen.integers(1, 5, size=3)]
        els = [noise.sample_noise(c / 3 ** cfg.depth, rule, cfg.depth, cfg.max_minima, gen) for c in cells]
        left = noise.compose(noise.compose(els[0], els[1], rule), els[2], rule)
        right = noise.compose(els[0], noise.compose(els[1], els[2], rule), rule)
        eq, dev = noise.same_element(left, right)
        base = {**els[0].sign_field(), **{k + cells[0]: v for k, v in els[1].sign_field().items()}}
        twisted = sum(1 for k, v in left.sign_field().items() if k in base and base[k] != v)
        rows.append([i, *cells, len(left.minima), eq, dev, twisted])
    return header, rows, {"all_equal": all(r[5] for r in rows)}


def drift_diagram(cfg):
    f = signs.build_drift_sensitive_rule(max(cfg.depth - 1, 1))
    r = noise.check_drift_diagram(0.5, 0.5, cfg.lam, f, cfg.replicas, cfg.seed, cfg.depth, cfg.max_minima,
                                  cfg.workers)
    header = ["lambda", "s", "t", "replicas", "passed", "skipped", "sign_mismatches", "max_path_dev"]
    rows = [[cfg.lam, r.s, r.t, r.replicas, r.passed, r.skipped, r.sign_mismatches, r.max_path_dev]]
    return header, rows, {"skip_rate": r.skip_rate, "failures": r.failures}


def random_cocycle_problem(gen, max_alphabet=4, max_depth=6, max_window=3, max_table=16):
    """Random instance; half of them have constant h_n from a random level on (solvable cases)."""
    A = int(gen.integers(2, max_alphabet + 1))
    windows = [k for k in range(1, max_window + 1) if A ** k <= max_table]
    K = int(gen.choice(windows))
    N = int(gen.integers(2, max_depth + 1))
    X = gen.choice([-1, 1], size=(N, A))
    Y = gen.choice([-1, 1], size=(N, A))
    if gen.random() < 0.5:
        cut = int(gen.integers(1, N + 1))
        for m in range(cut, N + 1):
            Y[m - 1] = X[m - 1] * gen.choice([-1, 1])
    return extensions.CocycleProblem(A, N, K, X, Y)


def cocycle_demo(cfg):
    header = ["instance", "alphabet", "depth", "window", "status", "brute_force", "agree"]
    rows = []
    for i in range(cfg.instances):
        prob = random_cocycle_problem(RngStream(cfg.seed, i).generator())
        res = extensions.cocycle_solve(prob)
        bf = extensions.cocycle_brute_force(prob)
        bf_status = "found" if bf is not None else "none"
        rows.append([i, prob.alphabet, prob.depth, prob.window, res.status, bf_status, res.found == (bf is not None)])
    return header, rows, {"all_agree": all(r[6] for r in rows)}


GIRSANOV_FUNCTIONALS = {
    "one": lambda p: 1.0,
    "endpoint": lambda p: p.end,
    "endpoint_negative": lambda p: 1.0 if p.end < 0 else 0.0,
    "tanh_running_max": lambda p: math.tanh(float(np.max(p.values))),
}


def girsanov_check(cfg):
    header = ["functional", "lambda", "replicas", "lhs", "rhs", "lhs_stderr", "rhs_stderr", "diff_stderr"]
    grid = brownian.TimeGrid.unit(min(cfg.depth, 6))
    rows = []
    for name, fn in GIRSANOV_FUNCTIONALS.items():
        # every functional sees the same paths: replica i uses stream (seed, i)
        r = brownian.girsanov_pushforward_check(fn, cfg.lam, cfg.replicas, cfg.seed, grid, cfg.workers)
        rows.append([name, cfg.lam, r.replicas, r.lhs, r.rhs, r.lhs_stderr, r.rhs_stderr, r.diff_stderr])
    return header, rows, {}


REGISTRY = {
    "density-check": density_check,
    "goodness-scan": goodness_scan,
    "correlation": correlation,
    "drift-obstruction": drift_obstruction,
    "compose-check": compose_check,
    "drift-diagram": drift_diagram,
    "cocycle-demo": cocycle_demo,
    "girsanov-check": girsanov_check,
}
