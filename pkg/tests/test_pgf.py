import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import long_division, sync_delay_pmf, tail_gt
from urllc_lab.channel import arq_service_model
from urllc_lab.errors import (
    ConfigError,
    InstabilityError,
    NormalizationError,
    OverflowCoefficientError,
    PoleError,
    WindowEmptyError,
)
from urllc_lab.pgf import (
    Polynomial,
    Rational,
    RationalPgf,
    TailCurve,
    b0_factor,
    compose_affine_power,
    convergence_radius,
    eval_pgf,
    golden_section,
    invert_ccdf,
    pgf_mean,
    q_function,
    saddlepoint_ccdf,
)
from urllc_lab.queueing import QueueConfig, delay_pgf_sync


def identity_pgf():
    return RationalPgf(Polynomial([0.0, 1.0]))


def cube_pgf():
    return RationalPgf(Polynomial([0.0, 0.0, 0.0, 1.0]))


# ---------------------------------------------------------------------------
# polynomial and rational algebra


def test_polynomial_trims_trailing_zeros():
    p = Polynomial([1.0, 2.0, 0.0, 0.0])
    assert p.degree == 1
    assert Polynomial([0.0]).is_zero()


def test_polynomial_arithmetic_matches_numpy():
    a = Polynomial([1.0, -2.0, 3.0])
    b = Polynomial([0.5, 4.0])
    s = 0.37
    assert (a * b)(s) == pytest.approx(a(s) * b(s), rel=1e-14)
    assert (a + b)(s) == pytest.approx(a(s) + b(s), rel=1e-14)
    assert (a - b)(s) == pytest.approx(a(s) - b(s), rel=1e-14)
    assert a.deriv()(s) == pytest.approx(-2.0 + 6.0 * s, rel=1e-14)


def test_substitute_power_and_shift():
    p = Polynomial([1.0, 2.0])
    assert np.allclose(p.substitute_power(3).coef, [1.0, 0, 0, 2.0])
    assert np.allclose(p.shift(2).coef, [0, 0, 1.0, 2.0])
    with pytest.raises(ValueError):
        p.shift(-1)


def test_deflate_at_one():
    # (s - 1)(2 + 3 s) = -2 - s + 3 s^2
    q, rem = Polynomial([-2.0, -1.0, 3.0]).deflate_at_one()
    assert np.allclose(q.coef, [2.0, 3.0])
    assert abs(rem) < 1e-15


def test_rational_reduction_cancels_common_factor():
    # (s - 1) s / ((s - 1)(2 - s)) = s / (2 - s)
    r = Rational(Polynomial([0.0, -1.0, 1.0]), Polynomial([-2.0, 3.0, -1.0])).reduced()
    assert r.denominator.degree == 1
    assert r(0.5) == pytest.approx(0.5 / 1.5, rel=1e-13)


def test_rational_zero_denominator():
    with pytest.raises(PoleError):
        Rational(Polynomial([1.0]), Polynomial([0.0]))


def test_overflow_coefficient_error():
    with pytest.raises(OverflowCoefficientError):
        Polynomial([1.0, math.inf])
    with pytest.raises(OverflowCoefficientError):
        compose_affine_power(RationalPgf(Polynomial([0.0, 1.0])), 1e30, 1e30, 12)


# ---------------------------------------------------------------------------
# construction and evaluation


def test_normalization_is_checked():
    with pytest.raises(NormalizationError):
        RationalPgf(Polynomial([0.5, 0.4]))


def test_denominator_at_origin_is_checked():
    # s / (s - s^2) has a common power of s, which is cancelled first
    g = RationalPgf(Polynomial([0.0, 0.5]), Polynomial([0.0, 1.0, -0.5]))
    assert g.denominator.coef[0] != 0.0


def test_eval_identity():
    assert eval_pgf(identity_pgf(), 0.5) == 0.5


def test_eval_geometric_normalized():
    assert eval_pgf(RationalPgf.geometric(0.5), 1.0) == pytest.approx(1.0, abs=1e-15)


def test_eval_pole_error():
    with pytest.raises(PoleError):
        eval_pgf(RationalPgf.geometric(0.5), 2.0)


def test_eval_sync_delay_against_series():
    g = delay_pgf_sync(arq_service_model(0.5), QueueConfig(5, 0.01))
    coef = np.array([float(c) for c in sync_delay_pmf(5, 0.01, 0.5, m=160)])
    series = np.polynomial.polynomial.polyval(0.9, coef)
    assert eval_pgf(g, 0.9) == pytest.approx(series, abs=1e-10)


# ---------------------------------------------------------------------------
# mean


@pytest.mark.parametrize(
    "g, mean",
    [
        (cube_pgf(), 3.0),
        (RationalPgf.geometric(0.5), 2.0),
        (RationalPgf.from_pmf([0.0, 0.2, 0.3, 0.5]), 2.3),
    ],
)
def test_pgf_mean_closed_forms(g, mean):
    assert pgf_mean(g) == pytest.approx(mean, rel=1e-12)


def test_pgf_mean_with_unreduced_factor():
    # geometric PGF multiplied through by (s - 1) / (s - 1)
    g = RationalPgf.geometric(0.25)
    f = Polynomial([-1.0, 1.0])
    assert pgf_mean(Rational(g.numerator * f, g.denominator * f)) == pytest.approx(4.0 / 3.0, rel=1e-10)


def test_pgf_mean_matches_central_difference():
    g = delay_pgf_sync(arq_service_model(0.5), QueueConfig(10, 0.01))
    h = 1e-6
    fd = (g(1 + h) - g(1 - h)) / (2 * h)
    assert pgf_mean(g) == pytest.approx(fd, rel=1e-5)


# ---------------------------------------------------------------------------
# exact inversion


def test_invert_deterministic():
    c = invert_ccdf(cube_pgf(), 6)
    assert np.array_equal(c.values, [1, 1, 1, 0, 0, 0, 0])


def test_invert_geometric_closed_form():
    c = invert_ccdf(RationalPgf.geometric(0.3), 30)
    assert np.allclose(c.values, 0.3 ** np.arange(31), rtol=1e-12, atol=0)


def test_invert_sync_delay_against_long_division():
    g = delay_pgf_sync(arq_service_model(0.5), QueueConfig(10, 0.01))
    pmf = long_division(g.numerator.coef, g.denominator.coef, 51)
    expected = np.clip(1.0 - np.cumsum(pmf), 0.0, 1.0)
    assert np.allclose(invert_ccdf(g, 50).values, expected, atol=1e-10)


def test_invert_sync_delay_against_model_series():
    g = delay_pgf_sync(arq_service_model(0.5), QueueConfig(10, 0.01))
    ref = tail_gt(sync_delay_pmf(10, 0.01, 0.5, m=51))
    assert np.allclose(invert_ccdf(g, 50).values, ref, atol=1e-10)


def test_invert_instability_is_reported():
    # normalized at s = 1 but with a negative coefficient: P[X > 1] = -1
    with pytest.raises(InstabilityError):
        invert_ccdf(Rational(Polynomial([0.0, 2.0, -1.0])), 5)


def test_invert_rejects_negative_horizon():
    with pytest.raises(ConfigError):
        invert_ccdf(RationalPgf.geometric(0.3), -1)


def test_tail_curve_invariants():
    with pytest.raises(ValueError):
        TailCurve(0, [0.5, 0.6], "exact")
    with pytest.raises(ValueError):
        TailCurve(0, [1.2], "exact")
    c = TailCurve(3, [0.5, 0.2], "exact")
    assert c.at(0) == 1.0 and c.at(4) == 0.2
    with pytest.raises(IndexError):
        c.at(5)


# ---------------------------------------------------------------------------
# saddlepoint


def test_b0_at_zero():
    assert b0_factor(0.0) == 0.0


@pytest.mark.parametrize("z", [0.3, 1.0, 4.0, 20.0])
def test_b0_matches_direct_formula(z):
    direct = z * math.exp(z * z / 2.0) * q_function(z)
    assert b0_factor(z) == pytest.approx(direct, rel=1e-12)


def test_b0_large_argument_tends_to_gaussian_constant():
    # z exp(z^2/2) Q(z) -> 1/sqrt(2 pi)
    assert b0_factor(1e6) == pytest.approx(1.0 / math.sqrt(2.0 * math.pi), rel=1e-9)


def _geometric_saddlepoint_mp(q, d):
    # the lattice formula evaluated in closed form for the geometric law
    q = mp.mpf(q)
    qe = mp.mpf(d - 1) / d
    theta = mp.log(qe / q)
    sigma = mp.sqrt(qe) / (1 - qe)
    kappa = mp.log((1 - q) * qe / q / (1 - qe))
    z = theta * sigma
    b0 = z * mp.e ** (z * z / 2) * mp.erfc(z / mp.sqrt(2)) / 2
    return float(b0 / (sigma * (1 - mp.e ** (-theta))) * mp.e ** (kappa - theta * d))


@pytest.mark.parametrize("q, d", [(0.5, 20), (0.3, 7), (0.9, 60)])
def test_saddlepoint_matches_closed_form_evaluation(q, d):
    assert saddlepoint_ccdf(RationalPgf.geometric(q), d) == pytest.approx(_geometric_saddlepoint_mp(q, d), rel=1e-8)


def test_saddlepoint_geometric_within_ten_percent():
    exact = 0.5**19
    approx = saddlepoint_ccdf(RationalPgf.geometric(0.5), 20)
    assert abs(approx - exact) / exact < 0.10


def test_saddlepoint_support_edges_are_exact():
    g = RationalPgf.from_pmf([0.0, 0.2, 0.3, 0.5])
    assert saddlepoint_ccdf(g, 1) == 1.0
    assert saddlepoint_ccdf(g, 3) == pytest.approx(0.5)
    assert saddlepoint_ccdf(g, 4) == 0.0


def test_saddlepoint_window_empty():
    # pole at s = 1: no exponential moments
    r = Rational(Polynomial([0.0, 0.5]), Polynomial([1.0, -1.0]))
    with pytest.raises(WindowEmptyError):
        convergence_radius(r)


def test_saddlepoint_short_frame_operating_point():
    # n = 100, lambda = 1e-3 with the 0 dB, k = 30 frame-error probability
    eps = 0.012868
    g = delay_pgf_sync(arq_service_model(eps), QueueConfig(100, 1e-3))
    exact = invert_ccdf(g, 4).at(4)
    approx = saddlepoint_ccdf(g, 5)
    assert abs(approx - exact) / exact < 0.10


def test_closed_form_radius_matches_denominator_roots():
    g = delay_pgf_sync(arq_service_model(0.3), QueueConfig(5, 0.01))
    assert g.radius == pytest.approx(convergence_radius(g), rel=1e-8)


def test_golden_section_minimizes_parabola():
    x, fx = golden_section(lambda x: (x - 0.3) ** 2, 0.0, 1.0)
    assert x == pytest.approx(0.3, abs=1e-8) and fx < 1e-15


# ---------------------------------------------------------------------------
# affine power


def test_compose_affine_power_identity():
    r = compose_affine_power(identity_pgf(), 0.0, 1.0, 4)
    assert r(0.7) == pytest.approx(0.7**4, rel=1e-14)


def test_compose_affine_power_constant():
    r = compose_affine_power(RationalPgf.geometric(0.4), 1.0, 0.0, 7)
    assert r(0.3) == pytest.approx(1.0, rel=1e-14)


def test_compose_affine_power_scalar_oracle():
    g = RationalPgf.geometric(0.5)
    r = compose_affine_power(g, 0.999, 0.001, 10)
    s = 0.7
    direct = (0.999 + 0.001 * (0.5 * s / (1 - 0.5 * s))) ** 10
    assert r(s) == pytest.approx(direct, abs=1e-12)


def test_compose_affine_power_rejects_zero_power():
    with pytest.raises(ConfigError):
        compose_affine_power(identity_pgf(), 0.5, 0.5, 0)


# ---------------------------------------------------------------------------
# properties

pmfs = st.lists(st.floats(0.0, 1.0), min_size=2, max_size=25).filter(lambda v: sum(v[1:]) > 1e-3)


def _normalize(v):
    p = np.array(v, dtype=float)
    p[0] = 0.0
    return p / p.sum()


@given(pmfs)
def test_polynomial_inversion_equals_cumulative_sums(v):
    p = _normalize(v)
    c = invert_ccdf(RationalPgf.from_pmf(p), p.size + 2)
    expected = np.clip(1.0 - np.cumsum(np.concatenate([p, [0.0, 0.0, 0.0]])), 0.0, 1.0)
    assert np.allclose(c.values, np.minimum.accumulate(expected), atol=1e-12)


@given(st.floats(0.0, 0.95), st.lists(st.floats(0.0, 1.0), min_size=2, max_size=6).filter(lambda v: sum(v[1:]) > 1e-3))
def test_inversion_of_products_is_a_valid_tail(q, v):
    # geometric times finite support: a PGF with both numerator and denominator
    g = RationalPgf.of(RationalPgf.geometric(q) * RationalPgf.from_pmf(_normalize(v)))
    assert abs(eval_pgf(g, 1.0) - 1.0) < 1e-9
    vals = invert_ccdf(g, 60).values
    assert np.all(np.diff(vals) <= 0.0)
    assert vals.min() >= 0.0 and vals.max() <= 1.0


@given(st.floats(0.01, 0.9), st.integers(2, 40))
def test_geometric_saddlepoint_is_positive_and_below_one(q, d):
    v = saddlepoint_ccdf(RationalPgf.geometric(q), d)
    assert 0.0 <= v <= 1.0


@given(st.floats(0.05, 0.9))
def test_mean_matches_central_difference(q):
    g = RationalPgf.of(RationalPgf.geometric(q) * RationalPgf.from_pmf([0.0, 0.5, 0.5]))
    h = 1e-6
    fd = (g(1 + h) - g(1 - h)) / (2 * h)
    assert pgf_mean(g) == pytest.approx(fd, rel=1e-5)
