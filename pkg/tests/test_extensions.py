import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from driftnoise import extensions, signs
from driftnoise.density import DensityParams, bridge_minimum_density
from driftnoise.experiments import random_cocycle_problem
from driftnoise.extensions import CocycleProblem, FiniteShiftSystem
from driftnoise.rng import RngStream
from driftnoise.signs import Quadrature


# --- systems and binary extensions -------------------------------------------

@pytest.mark.parametrize("probs", [None, (0.2, 0.5, 0.3)])
def test_shift_maps_are_measure_preserving(probs):
    sys_ = FiniteShiftSystem(3, 4, probs)
    for n in range(1, 4):
        pts = sys_.points(n)
        w = sys_.measure(n, pts)
        img = sys_.beta(pts)
        nxt = sys_.points(n + 1)
        push = np.zeros(len(nxt))
        for row, p in zip(img, w):
            push[np.flatnonzero(np.all(nxt == row, axis=1))[0]] += p
        np.testing.assert_allclose(push, sys_.measure(n + 1, nxt), atol=1e-15)


def test_binary_extension_steps_and_sign_law():
    sys_ = FiniteShiftSystem(2, 5)
    X = np.array([[1, -1], [1, 1], [-1, -1], [1, -1], [1, 1]])
    ext = extensions.build_binary_extension(sys_, X)
    om = np.array([[0, 1, 1, 0, 1]])
    om2, s = ext.step(1, om, np.array([1]))
    assert om2.tolist() == [[1, 1, 0, 1]] and s.tolist() == [1]
    _, s = ext.steps(1, 3, om, np.array([1]))
    assert s.tolist() == [1 * 1 * -1]
    assert ext.sign_law(1, 3, 0.5) == pytest.approx(0.5)
    # deterministic start: P(+) is the mass of an even number of -1 factors
    assert ext.sign_law(1, 1, 1.0) == pytest.approx(0.5)
    assert ext.sign_law(2, 2, 1.0) == pytest.approx(0.0)  # X_2 = +1, X_3 = -1 everywhere


def test_binary_extension_from_rule():
    f = signs.build_drift_sensitive_rule(3)
    sys_ = extensions.inductive_system("iid_real", 3, marginal=stats.norm())
    ext = extensions.build_binary_extension(sys_, f)
    om = sys_.sample(np.random.default_rng(0), 5)
    np.testing.assert_array_equal(ext.sign(1, om), f.evaluate(1, om[:, 0]))


# --- cocycle equation ----------------------------------------------------------

def test_identical_extensions_give_trivial_cocycle():
    gen = np.random.default_rng(1)
    X = gen.choice([-1, 1], size=(5, 3))
    res = extensions.cocycle_solve(CocycleProblem(3, 5, 2, X, X))
    assert res.status == "found"
    assert all(np.all(u == 1) for u in res.U)


def test_negated_extension_gives_alternating_constants():
    gen = np.random.default_rng(2)
    X = gen.choice([-1, 1], size=(5, 2))
    prob = CocycleProblem(2, 5, 1, X, -X)
    res = extensions.cocycle_solve(prob)
    assert res.status == "found" and extensions.verify_cocycle(prob, res.U)
    consts = [int(np.unique(u)[0]) for u in res.U]
    assert all(np.unique(u).size == 1 for u in res.U)
    assert all(consts[i + 1] == -consts[i] for i in range(4))


def test_solver_matches_brute_force_on_random_instances():
    statuses = set()
    for i in range(100):
        prob = random_cocycle_problem(RngStream(31, i).generator())
        res = extensions.cocycle_solve(prob)
        bf = extensions.cocycle_brute_force(prob)
        assert res.found == (bf is not None), i
        if res.found:
            assert extensions.verify_cocycle(prob, res.U)
            assert extensions.verify_cocycle(prob, bf)
        statuses.add(res.status)
    assert statuses == {"found", "inconclusive"}


@settings(max_examples=150, deadline=None)
@given(A=st.integers(2, 3), N=st.integers(2, 5), K=st.integers(1, 2), seed=st.integers(0, 2 ** 32))
def test_cocycle_closed_form(A, N, K, seed):
    # a window-K solution exists iff h_m = X_m Y_m is constant for m = K+1 .. N-1
    gen = np.random.default_rng(seed)
    X = gen.choice([-1, 1], size=(N, A))
    Y = gen.choice([-1, 1], size=(N, A))
    if gen.random() < 0.5:
        for m in range(K + 1, N):
            Y[m - 1] = X[m - 1] * gen.choice([-1, 1])
    prob = CocycleProblem(A, N, K, X, Y)
    h = prob.h()
    expect = all(np.unique(h[m - 1]).size == 1 for m in range(K + 1, N))
    res = extensions.cocycle_solve(prob)
    assert res.found == expect
    assert res.status in ("found", "inconclusive")
    full = extensions.cocycle_solve(prob.with_window(N))
    assert full.status == "found"


def test_inconclusive_carries_full_window_witness():
    X = np.array([[1, 1], [1, -1], [1, 1]])
    Y = np.ones((3, 2), dtype=int)
    prob = CocycleProblem(2, 3, 1, X, Y)
    res = extensions.cocycle_solve(prob)
    assert res.status == "inconclusive"
    assert extensions.verify_cocycle(prob.with_window(3), res.witness)


def test_brute_force_limit():
    with pytest.raises(ValueError):
        extensions.cocycle_brute_force(CocycleProblem(4, 4, 3, np.ones((4, 4)), np.ones((4, 4))))


# --- finite extensions -----------------------------------------------------------

def random_binary_extension(gen, m):
    return extensions.trivial_binary_extension(gen.dirichlet(np.ones(m)))


@settings(max_examples=60, deadline=None)
@given(m1=st.integers(1, 4), m2=st.integers(1, 4), seed=st.integers(0, 2 ** 32))
def test_product_extension_is_binary(m1, m2, seed):
    gen = np.random.default_rng(seed)
    e1 = random_binary_extension(gen, m1)
    e2 = random_binary_extension(gen, m2)
    A = gen.random((m1, m2)) < 0.5
    prod = extensions.product_extension(e1, e2, A)
    assert prod.is_binary()
    inv = prod.involution()
    assert np.array_equal(inv[inv], np.arange(len(inv)))
    assert np.all(prod.gamma[inv] == prod.gamma)


def test_product_extension_reduces_to_lifts():
    gen = np.random.default_rng(3)
    e1, e2 = random_binary_extension(gen, 2), random_binary_extension(gen, 3)
    all_A = extensions.product_extension(e1, e2, np.ones((2, 3), bool))
    no_A = extensions.product_extension(e1, e2, np.zeros((2, 3), bool))
    assert all_A.canonical() == extensions.lift_extension(e1, e2.base_probs, 1).canonical()
    assert no_A.canonical() == extensions.lift_extension(e2, e1.base_probs, 2).canonical()
    assert extensions.lift_extension(e1, e2.base_probs, 1).is_measure_preserving()


# --- obstruction ----------------------------------------------------------------

def projection_distance_sq(h, probs):
    """dist^2 of h(x) from functions not depending on x, by weighted least squares onto constants."""
    w = np.sqrt(probs)
    coef, *_ = np.linalg.lstsq(w[:, None] * np.ones((len(h), 1)), w * h, rcond=None)
    return float(np.sum(probs * (h - coef[0]) ** 2))


@pytest.mark.parametrize("seed", range(10))
def test_iid_finite_alphabet_matches_projection(seed):
    gen = np.random.default_rng(seed)
    vals = gen.normal(size=6)
    probs = gen.dirichlet(np.ones(6))
    f = signs.build_drift_sensitive_rule(3)
    g = signs.obstruction_shift(f, float(gen.uniform(-1, 1)))
    n = int(gen.integers(1, 4))
    rep = extensions.obstruction_distance_iid(f, g, n, (vals, probs))
    h = f.evaluate(n, vals).astype(float) * g.evaluate(n, vals)
    assert rep.D_hat == pytest.approx(projection_distance_sq(h, probs), abs=1e-14)


@pytest.mark.parametrize("c", [0.25, 0.5, 1.0, math.sqrt(2) / 2])
def test_iid_uniform_period_gives_one_minus_R_squared(c):
    f = signs.build_drift_sensitive_rule(2)
    g = signs.obstruction_shift(f, c)
    for n in (1, 2):
        _, lam, _ = f.level(n)
        rep = extensions.obstruction_distance_iid(f, g, n, stats.uniform(0.1, 1 / lam))
        R = signs.autocorrelation(lam * c / 3 ** n)
        assert rep.D_hat == pytest.approx(1 - R * R, abs=1e-9)


def test_conditional_mean_value_kernel_vs_generic():
    f = signs.build_drift_sensitive_rule(3)
    g = signs.obstruction_shift(f, 0.7)
    p = DensityParams(0.3, 0.9, 1 / 27)
    fast = extensions.conditional_mean_value(f, g, 2, p)
    q = Quadrature(0.0, p.upper, tol=1e-11)
    slow = signs.mean_value(f, g, 2, lambda x: bridge_minimum_density(p, x), q, normalize=True).value
    assert fast == pytest.approx(slow, abs=1e-9)
    assert extensions.conditional_mean_value(f, f, 2, p) == 1.0


def test_brownian_obstruction_zero_shift_is_exactly_zero():
    f = signs.build_drift_sensitive_rule(4)
    g = signs.obstruction_shift(f, 0.0)
    for n in (2, 3, 4):
        rep = extensions.obstruction_distance_brownian(f, g, n, 200, 5, depth=7)
        assert rep.D_hat == 0.0 and rep.stderr == 0.0


def test_brownian_obstruction_matches_period_average():
    # level 2 has lam_2 = 9 sqrt 2 against a density of width ~ 1/sqrt 27: period averaging applies
    f = signs.build_drift_sensitive_rule(3)
    rep = extensions.obstruction_distance_brownian(f, signs.obstruction_shift(f, 1.0), 2, 300, 8, depth=7)
    R = signs.autocorrelation(math.sqrt(2))
    assert rep.D_hat == pytest.approx(1 - R * R, abs=2e-3)
    assert 0 <= rep.D_hat <= 1 + 3 * rep.stderr
    assert rep.parity == "even" and rep.significance > 5


def test_brownian_obstruction_stderr_scaling():
    f = signs.build_drift_sensitive_rule(3)
    g = signs.obstruction_shift(f, 1.0)
    se = {r: extensions.obstruction_distance_brownian(f, g, 2, r, 12, depth=7).stderr for r in (100, 1000, 10000)}
    for r in (100, 1000):
        ratio = se[r] / se[10 * r]
        assert math.sqrt(10) / 2 <= ratio <= 2 * math.sqrt(10)


def test_obstruction_scan_independent_of_workers():
    f = signs.build_drift_sensitive_rule(3)
    gs = [signs.obstruction_shift(f, c) for c in (0.5, 1.0)]
    a = extensions.obstruction_scan(f, gs, [2, 3], 40, 4, depth=6, workers=1)
    b = extensions.obstruction_scan(f, gs, [2, 3], 40, 4, depth=6, workers=3)
    assert {k: (v.D_hat, v.stderr) for k, v in a.items()} == {k: (v.D_hat, v.stderr) for k, v in b.items()}


def test_obstruction_scan_rejects_shallow_grid():
    f = signs.build_drift_sensitive_rule(5)
    with pytest.raises(ValueError):
        extensions.obstruction_scan(f, [f], [5], 10, 0, depth=6)
