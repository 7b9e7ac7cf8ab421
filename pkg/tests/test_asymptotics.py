"""Asymptotic-regime checks: wedge (Airy) side and oscillator side.

Oracles: Airy moments recomputed by composite Simpson on dense grids;
oscillator-side splittings cross-checked against the standard double-precision
solver where it can still resolve them, and against anchors frozen from the
extended-precision path (regression guards; the k=5 value is ~1.6e-10, far
below double-solver discretization error, so only the dedicated path sees it).
"""

import math

import numpy as np
import pytest
from scipy import special

from magbarrier import asymptotics as asym
from magbarrier import bands, fiber
from magbarrier.errors import ConfigurationError, NumericalError
from magbarrier.fiber import Parity
from magbarrier.specfun import AiryKind

KAPPA_1 = 0.768183653380
Z_AI_1 = -2.33810741045976704
Z_AIP_1 = -1.01879297164747219

# anchors frozen from the extended-precision path (stable across runs)
SPLITTING_K3 = 8.394999e-04
SPLITTING_K4 = 1.017089e-06
SPLITTING_K5 = 1.567989e-10


def simpson_moment(kind, m, power):
    """Independent moment oracle: composite Simpson against scipy's airy."""
    if kind is AiryKind.ZERO_OF_AI:
        z = special.ai_zeros(m)[0][m - 1]
    else:
        z = special.ai_zeros(m)[1][m - 1]
    v = np.linspace(0.0, 25.0 + abs(z), 40001)
    f = v ** power * special.airy(v + z)[0] ** 2
    h = v[1] - v[0]
    return h / 3.0 * (f[0] + f[-1] + 4.0 * f[1::2].sum() + 2.0 * f[2:-1:2].sum())


def test_airy_prediction_zero_selection_and_formula():
    p1 = asym.airy_prediction(1.0, -20.0, 1)
    assert p1.kind is AiryKind.ZERO_OF_AI_PRIME
    assert abs(p1.z - Z_AIP_1) < 1e-12
    sigma2 = (2.0 * 20.0) ** (2.0 / 3.0)
    assert abs(p1.predicted - (400.0 - sigma2 * Z_AIP_1)) < 1e-10
    p2 = asym.airy_prediction(1.0, -20.0, 2)
    assert p2.kind is AiryKind.ZERO_OF_AI
    assert abs(p2.z - Z_AI_1) < 1e-12
    assert asym.airy_prediction(1.0, -20.0, 3).kind is AiryKind.ZERO_OF_AI_PRIME
    assert asym.airy_prediction(1.0, -20.0, 4).kind is AiryKind.ZERO_OF_AI
    # interlacing of the predictions mirrors the band order
    preds = [asym.airy_prediction(1.0, -20.0, j).predicted for j in range(1, 5)]
    assert all(a < b for a, b in zip(preds, preds[1:]))


def test_airy_prediction_domain_errors():
    with pytest.raises(ConfigurationError):
        asym.airy_prediction(1.0, 3.0, 1)
    with pytest.raises(ConfigurationError):
        asym.airy_prediction(-1.0, -20.0, 1)


def test_airy_bound_constant_matches_simpson_oracle():
    for j, kind, m in ((1, AiryKind.ZERO_OF_AI_PRIME, 1), (2, AiryKind.ZERO_OF_AI, 1)):
        d_oracle = math.sqrt(simpson_moment(kind, m, 4) / simpson_moment(kind, m, 0))
        p = asym.airy_prediction(1.0, -20.0, j)
        bound_oracle = d_oracle * (2.0 * 20.0) ** (-2.0 / 3.0)
        assert abs(p.bound - bound_oracle) <= 1e-8 * bound_oracle


def test_airy_check_passes_for_first_bands():
    c1 = asym.airy_check(1.0, -20.0, 1)
    assert c1.passed
    assert 0.0 < c1.measured_error <= c1.prediction.bound
    c2 = asym.airy_check(1.0, -20.0, 2)
    assert c2.passed
    rec = c1.to_record()
    assert rec["pass"] is True and rec["j"] == 1 and rec["k"] == -20.0


def test_airy_error_scales_like_k_to_minus_two_thirds():
    e20 = asym.airy_check(1.0, -20.0, 1).measured_error
    e40 = asym.airy_check(1.0, -40.0, 1).measured_error
    ratio = e20 / e40
    target = 2.0 ** (2.0 / 3.0)
    assert abs(ratio - target) <= 0.25 * target


def test_airy_bound_honored_across_fields_and_bands():
    # |k| b^{-1/2} >= 10 entry threshold
    for b, k, j in ((1.0, -15.0, 3), (1.0, -15.0, 4), (4.0, -24.0, 1), (4.0, -24.0, 2)):
        assert asym.airy_check(b, k, j).passed


def test_airy_check_refuses_shallow_k():
    with pytest.raises(ConfigurationError):
        asym.airy_check(1.0, -0.05, 1)


def test_airy_residual_saturates_bound():
    for j in (1, 2):
        r = asym.airy_residual(1.0, -15.0, j)
        p = asym.airy_prediction(1.0, -15.0, j)
        assert abs(r / p.bound - 1.0) <= 1e-6
    r = asym.airy_residual(1.0, -15.0, 1)
    assert r > 0.0


def test_ho_check_signs_correct_at_k4():
    c = asym.ho_check(1.0, 4.0, 1, kappa=KAPPA_1)
    assert c.passed
    assert c.gap_plus > 0.0 and c.gap_minus > 0.0
    assert c.level == 1.0
    assert c.to_record()["pass"] is True


def test_ho_check_second_pair():
    c = asym.ho_check(1.0, 4.0, 2, kappa=1.623225000514)
    assert c.passed
    assert c.level == 3.0
    assert 0.0 < c.gap_plus < 1e-4 and 0.0 < c.gap_minus < 1e-4


def test_ho_check_deep_regime_gaps_below_1e10():
    c = asym.ho_check(1.0, 8.0, 1, kappa=KAPPA_1)
    assert abs(c.gap_plus) < 1e-10
    assert abs(c.gap_minus) < 1e-10


def test_ho_check_monotone_approach():
    c5 = asym.ho_check(1.0, 5.0, 1, kappa=KAPPA_1)
    c6 = asym.ho_check(1.0, 6.0, 1, kappa=KAPPA_1)
    assert c5.gap_plus > c6.gap_plus
    assert c5.gap_minus > c6.gap_minus


def test_ho_check_precondition():
    with pytest.raises(ConfigurationError):
        asym.ho_check(1.0, 0.5, 1, kappa=KAPPA_1)


def test_precise_path_agrees_with_standard_solver():
    # at k=3 the double-precision solver still resolves the pair cleanly
    omega_plus, omega_minus = asym.omega_pair_precise(1.0, 3.0, 1)
    pairs = fiber.first_levels(1.0, 3.0, 2, refine=True)
    assert abs(pairs[0].omega - omega_plus) <= 1e-8
    assert abs(pairs[1].omega - omega_minus) <= 1e-8
    assert pairs[0].parity is Parity.EVEN


def test_splitting_fit_rate_and_floor():
    fit = asym.splitting_fit(1.0, 1, np.arange(3.0, 6.01, 0.5), kappa=KAPPA_1)
    assert fit.passed
    assert fit.rate <= -0.20
    assert fit.r2 >= 0.99
    # the k=6 sample sits below the 1e-13 floor and is excluded
    assert len(fit.samples) == 7
    assert len(fit.retained) == 6
    assert fit.retained_window() == (3.0, 5.5)
    assert all(s.splitting >= 0.0 for s in fit.retained)
    by_k = {s.k: s.splitting for s in fit.samples}
    assert abs(by_k[3.0] - SPLITTING_K3) <= 1e-4 * SPLITTING_K3
    assert abs(by_k[4.0] - SPLITTING_K4) <= 1e-3 * SPLITTING_K4
    assert abs(by_k[5.0] - SPLITTING_K5) <= 1e-2 * SPLITTING_K5
    rec = fit.to_record()
    assert rec["n_retained"] == 6 and rec["pass"] is True


def test_splitting_fit_oscillator_sandwich():
    fit = asym.splitting_fit(1.0, 1, np.arange(3.0, 5.51, 0.5), kappa=KAPPA_1)
    env = [math.exp(-s.k * s.k / 4.0) for s in fit.retained]
    c_fit = max(max(s.gap_plus, s.gap_minus) / e
                for s, e in zip(fit.retained, env))
    for s, e in zip(fit.retained, env):
        assert 0.0 < s.gap_plus <= 2.0 * c_fit * e
        assert 0.0 < s.gap_minus <= 2.0 * c_fit * e


def test_splitting_fit_scaling_law():
    ks = np.arange(3.0, 5.01, 0.5)
    fit1 = asym.splitting_fit(1.0, 1, ks, kappa=KAPPA_1)
    # power-of-two field: the scaled matrices are exact multiples, so the
    # fit reproduces to the last bit
    fit4 = asym.splitting_fit(4.0, 1, 2.0 * ks, kappa=2.0 * KAPPA_1)
    assert fit4.rate == pytest.approx(fit1.rate, abs=1e-12)
    # irrational scale factor: reproduction is numerical, not structural
    fit2 = asym.splitting_fit(2.0, 1, math.sqrt(2.0) * ks,
                              kappa=math.sqrt(2.0) * KAPPA_1)
    assert abs(fit2.rate - fit1.rate) <= 1e-3
    assert fit2.passed


def test_splitting_fit_below_floor_raises_range_error():
    with pytest.raises(NumericalError):
        asym.splitting_fit(1.0, 1, [7.0, 7.5, 8.0], kappa=KAPPA_1)


def test_splitting_fit_preconditions():
    with pytest.raises(ConfigurationError):
        asym.splitting_fit(1.0, 1, [1.0, 1.2, 1.4], kappa=KAPPA_1)
    with pytest.raises(ConfigurationError):
        asym.splitting_fit(1.0, 1, [3.0, 3.5], kappa=KAPPA_1)


def test_kappa_cache_used_when_not_supplied():
    # exercises the find_minimum route once; cached for any later call
    c = asym.ho_check(1.0, 4.0, 1)
    assert c.passed
    assert abs(asym._kappa(1, 1.0) - KAPPA_1) <= 1e-6
