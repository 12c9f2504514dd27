import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from driftnoise import density
from driftnoise.density import DensityParams, SaturationWarning, bridge_minimum_density
from driftnoise.errors import NormalizationError

# windowed infimum over {10^k : k = -3..3}^2, reproduced independently with mpmath below
GOLDEN_MARGIN = 0.010333492677046023


def p_mp(x, a, b, eps=1):
    """The conditional density in 40-digit arithmetic, straight from its formula."""
    with mp.workdps(40):
        x, a, b, eps = map(mp.mpf, (x, a, b, eps))
        pref = (1 - mp.exp(-2 * a * x / eps)) * (1 - mp.exp(-2 * b * x / eps)) / (1 - mp.exp(-a * b / eps))
        return pref / mp.sqrt(mp.pi * eps) * mp.exp(-(x - (a + b) / 2) ** 2 / eps)


def test_params_validated():
    with pytest.raises(ValueError):
        DensityParams(0.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        DensityParams(1.0, 1.0, math.nan)


@pytest.mark.parametrize("a,b,eps,x", [(1, 1, 1, 0.7), (0.5, 2, 1, 1.9), (1, 1, 1 / 9, 0.3), (0.01, 3, 0.2, 0.05)])
def test_density_matches_high_precision(a, b, eps, x):
    got = bridge_minimum_density(DensityParams(a, b, eps), x)
    assert got == pytest.approx(float(p_mp(x, a, b, eps)), rel=1e-13)


@settings(max_examples=200)
@given(a=st.floats(0.01, 10), b=st.floats(0.01, 10), eps=st.floats(0.01, 10), x=st.floats(1e-3, 10))
def test_scaling_identity(a, b, eps, x):
    p = DensityParams(a, b, eps)
    s = math.sqrt(eps)
    lhs = bridge_minimum_density(p, x)
    rhs = bridge_minimum_density(p.scaled(), x / s) / s
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-300)


def test_density_nonnegative_and_vanishes_at_ends():
    for a, b, eps in [(1, 1, 1), (0.5, 2, 1), (3, 0.2, 0.1)]:
        p = DensityParams(a, b, eps)
        xs = np.linspace(-1, p.upper, 2001)
        assert np.all(bridge_minimum_density(p, xs) >= 0)
        assert bridge_minimum_density(p, 1e-8) < 1e-6
        assert bridge_minimum_density(p, p.center + 10 * math.sqrt(eps)) < 1e-40
        assert bridge_minimum_density(p, -0.5) == 0.0


def test_saturation_warns_instead_of_nan():
    p = DensityParams(1e-200, 1e-200, 1.0)
    with pytest.warns(SaturationWarning):
        v = bridge_minimum_density(p, 1.0)
    assert v == 0.0


def test_normalization_on_acceptance_grid():
    for a in (0.1, 0.5, 1, 2, 5):
        for b in (0.1, 0.5, 1, 2, 5):
            for eps in (1, 1 / 3, 1 / 9):
                val = density.normalize_check(DensityParams(a, b, eps), 1e-6)
                assert abs(val - 1) <= 1e-6


def test_normalization_error_raised():
    # a density scaled by 2 is not normalized
    p = DensityParams(1, 1, 1)
    orig = density.bridge_minimum_density
    try:
        density.bridge_minimum_density = lambda params, x: 2 * orig(params, x)
        with pytest.raises(NormalizationError):
            density.normalize_check(p)
    finally:
        density.bridge_minimum_density = orig


def test_tail_bound_is_tiny_at_cutoff():
    assert density.tail_bound(DensityParams(1, 1, 1)) < 1e-30
    # and it really bounds the mass beyond x0
    p = DensityParams(1, 1, 1)
    from scipy import integrate

    mass, _ = integrate.quad(lambda x: bridge_minimum_density(p, x), 2.0, 50)
    assert mass <= density.tail_bound(p, 2.0)


def test_quadrature_cdf_monotone_to_one():
    x, cdf = density.quadrature_cdf(DensityParams(0.5, 2, 1))
    assert np.all(np.diff(cdf) >= -1e-15)
    assert cdf[-1] == pytest.approx(1.0, abs=1e-9)


def test_ks_distance_detects_wrong_samples():
    p = DensityParams(1, 1, 1)
    gen = np.random.default_rng(0)
    assert density.ks_distance(gen.normal(5, 1, 2000), p) > 0.5


# --- goodness ---------------------------------------------------------------

def test_epsilon_goodness_guard():
    p = DensityParams(1, 1, 1)
    dens = lambda x: bridge_minimum_density(p, x)
    assert density.epsilon_goodness(dens, 0.1, (0.0, 5.0))
    assert not density.epsilon_goodness(dens, 0.9, (0.0, 5.0))
    # a dip the coarse sampling misses: the refined re-check rejects it
    # (coarse samples at multiples of 1/8 miss the dip at 0.26, the 1/64 refinement hits it)
    dip = lambda x: np.where(np.abs(np.asarray(x) - 0.26) < 0.009, 0.0, 1.0)
    assert not density.epsilon_goodness(dip, 0.5, (0.0, 0.5), grid=4)
    assert density.epsilon_goodness(lambda x: np.ones_like(x), 0.5, (0.0, 0.5), grid=4)


def test_windowed_infimum_at_unit_parameters():
    val, x = density.windowed_infimum(1.0, 1.0)
    # the density decreases across [2, 3]: the infimum sits at the right end
    assert x == pytest.approx(3.0)
    assert val == pytest.approx(min(float(p_mp(2, 1, 1)), float(p_mp(3, 1, 1))), rel=1e-13)


def test_goodness_margin_golden_and_oracle():
    g = [10.0 ** k for k in range(-3, 4)]
    rep = density.goodness_margin_scan(g, g)
    assert rep.margin > 0
    assert rep.margin == pytest.approx(GOLDEN_MARGIN, rel=1e-12)
    assert rep.epsilon_star == rep.margin
    # independent oracle: 40-digit evaluation at the reported argmin
    m = 0.5 * (rep.a_star + rep.b_star)
    oracle = min(p_mp(m + 1 + k / 400, rep.a_star, rep.b_star) for k in range(401))
    assert rep.margin == pytest.approx(float(oracle), rel=1e-12)


def test_goodness_margin_symmetric():
    a = [0.01, 0.3, 4.0]
    b = [0.2, 7.0]
    assert density.goodness_margin_scan(a, b).margin == density.goodness_margin_scan(b, a).margin


def test_scan_csv(tmp_path):
    rep = density.goodness_margin_scan([1.0], [1.0, 2.0])
    density.write_scan_csv(rep, tmp_path / "scan.csv")
    lines = (tmp_path / "scan.csv").read_text().splitlines()
    assert lines[0] == "a,b,window_lo,window_hi,margin" and len(lines) == 3
