"""Eigenvalue counting: reduced potential, 1D/2D inertia counts, asymptotics."""

import math

import numpy as np
import pytest

from magbarrier import bands, counting, fiber
from magbarrier.counting import Grid2DSpec
from magbarrier.errors import ConfigurationError, InvariantViolation, NumericalError
from magbarrier.fiber import Parity

KAPPA_1 = 0.768183653380
BETA_1 = 0.5855127449
E_1 = 0.590106125320


@pytest.fixture(scope="module")
def ground_b1():
    return fiber.solve(
        fiber.build_problem(1.0, KAPPA_1, Parity.EVEN, requested_levels=1), 1)[0]


@pytest.fixture(scope="module")
def reduced_b1(ground_b1):
    V = counting.standard_potential(1.0)
    return counting.reduced_potential(V, ground_b1, np.linspace(0.0, 500.0, 4001))


# ---------------------------------------------------------------------------
# potentials


def test_decay_potential_guards():
    one = lambda t: np.ones_like(np.asarray(t, dtype=float))
    for alpha in (0.0, 2.0, 2.5, -1.0):
        with pytest.raises(ConfigurationError):
            counting.DecayPotential(alpha=alpha, C=1.0, v1=one, v2=one)
    with pytest.raises(ConfigurationError):
        counting.DecayPotential(alpha=1.0, C=0.0, v1=one, v2=one)
    with pytest.raises(ConfigurationError):
        counting.standard_potential(1.0, amplitude=-2.0)


def test_standard_potential_respects_decay_bound():
    xs = np.linspace(-30.0, 30.0, 301)
    ys = np.linspace(-50.0, 50.0, 401)
    for alpha in (0.5, 1.0, 1.5):
        counting.standard_potential(alpha).validate_condition(xs, ys)


def test_condition_check_catches_violations():
    # C = 1 is too small for the y-factor: (1+y^2)^{-1/2} vs (1+|y|)^{-1}
    # differ by a factor sqrt(2) at |y| = 1.
    bad = counting.DecayPotential(
        alpha=1.0, C=1.0,
        v1=lambda x: (1.0 + np.abs(x)) ** -1.0,
        v2=lambda y: (1.0 + np.asarray(y, dtype=float) ** 2) ** -0.5)
    with pytest.raises(InvariantViolation):
        bad.validate_condition(np.linspace(-2, 2, 21), np.linspace(-2, 2, 21))
    negative = counting.DecayPotential(
        alpha=1.0, C=1.0,
        v1=lambda x: -np.ones_like(np.asarray(x, dtype=float)),
        v2=lambda y: np.ones_like(np.asarray(y, dtype=float)))
    with pytest.raises(InvariantViolation):
        negative.validate_condition(np.linspace(-1, 1, 5), np.linspace(-1, 1, 5))


# ---------------------------------------------------------------------------
# reduced potential


def test_reduced_potential_matches_quadrature(ground_b1, reduced_b1):
    V = counting.standard_potential(1.0)
    transverse = fiber.expectation(
        ground_b1, np.asarray(V.v1(ground_b1.grid.x), dtype=float))
    # separability factors the x-integral out of every sample exactly
    expected = V.v2(reduced_b1.ys) * transverse
    assert np.allclose(reduced_b1.values, expected, rtol=1e-12, atol=0.0)
    assert (reduced_b1.values >= 0.0).all()
    # the fitted tail coefficient converges to the x-quadrature value
    assert reduced_b1.ell == pytest.approx(transverse, rel=1e-3)
    assert reduced_b1.ell == pytest.approx(0.617623248, rel=1e-4)
    assert reduced_b1.fit_spread < 0.05


def test_reduced_potential_tail_evaluation(reduced_b1):
    inside = reduced_b1.evaluate(3.7)
    assert inside == pytest.approx(
        np.interp(3.7, reduced_b1.ys, reduced_b1.values), rel=1e-14)
    far = 4000.0
    assert reduced_b1.evaluate(far) == pytest.approx(
        reduced_b1.ell / far, rel=1e-14)
    assert reduced_b1.evaluate(-far) == reduced_b1.evaluate(far)


def test_reduced_potential_needs_first_band(ground_b1):
    odd = fiber.solve(
        fiber.build_problem(1.0, KAPPA_1, Parity.ODD, requested_levels=1), 1)[0]
    V = counting.standard_potential(1.0)
    with pytest.raises(ConfigurationError):
        counting.reduced_potential(V, odd, np.linspace(0.0, 100.0, 801))
    with pytest.raises(ConfigurationError):
        counting.reduced_potential(V, ground_b1, np.linspace(0.0, 10.0, 5))


def test_oscillatory_tail_is_a_fit_error(ground_b1):
    V = counting.DecayPotential(
        alpha=1.0, C=2.0,
        v1=lambda x: (1.0 + np.abs(x)) ** -1.0,
        v2=lambda y: (1.0 + np.asarray(y, dtype=float) ** 2) ** -0.5
        * (0.75 + 0.25 * np.cos(np.asarray(y, dtype=float))))
    with pytest.raises(NumericalError, match="spread"):
        counting.reduced_potential(V, ground_b1, np.linspace(0.0, 500.0, 4001))


# ---------------------------------------------------------------------------
# closed-form constants


def test_counting_constant_1d_examples():
    assert counting.counting_constant_1d(1.0, 1.0, 1.0) == pytest.approx(1.0, rel=1e-12)
    assert counting.counting_constant_1d(1.0, 4.0, 1.0) == pytest.approx(4.0, rel=1e-12)
    assert counting.counting_constant_1d(1.0, 1.0, 2.0) == pytest.approx(0.5, rel=1e-12)
    for alpha in (2.0, 2.3, 0.0):
        with pytest.raises(ConfigurationError):
            counting.counting_constant_1d(alpha, 1.0, 1.0)
    with pytest.raises(ConfigurationError):
        counting.counting_constant_1d(1.0, -1.0, 1.0)
    with pytest.raises(ConfigurationError):
        counting.counting_constant_1d(1.0, 1.0, 0.0)


def test_counting_constant_2d_identity_and_scaling():
    for alpha, L in ((0.7, 0.3), (1.0, 1.0), (1.5, 2.0)):
        assert counting.counting_constant_2d(alpha, L, BETA_1) == \
            counting.counting_constant_1d(alpha, L, math.sqrt(BETA_1))
    assert counting.counting_constant_2d(1.0, 1.0, 1.0) == pytest.approx(1.0, rel=1e-12)
    halved = counting.counting_constant_2d(1.0, 1.0, 0.5 * BETA_1)
    full = counting.counting_constant_2d(1.0, 1.0, BETA_1)
    assert halved == pytest.approx(full * math.sqrt(2.0), rel=1e-12)
    with pytest.raises(ConfigurationError):
        counting.counting_constant_2d(1.0, 1.0, 0.0)


# ---------------------------------------------------------------------------
# 1D counts


def test_inertia_routes_agree_on_random_tridiagonals():
    rng = np.random.default_rng(17)
    for _ in range(50):
        n = int(rng.integers(5, 60))
        d = rng.normal(size=n) * 3.0
        e = rng.normal(size=n - 1)
        tau = float(rng.normal())
        matrix = np.diag(d) + np.diag(e, 1) + np.diag(e, -1)
        dense = int((np.linalg.eigvalsh(matrix) < tau).sum())
        assert counting.tridiagonal_inertia(d, e, tau) == dense
        assert counting.bisection_count(d, e, tau) == dense


def test_count_1d_trend_anchors():
    Q = lambda y: (1.0 + np.asarray(y, dtype=float) ** 2) ** -0.5
    anchors = {3e-3: 17, 1e-3: 31, 3e-4: 57, 1e-4: 99}
    scaled = []
    for lam, expected in anchors.items():
        n = counting.count_1d(1.0, Q, lam, half_width=3.0 / lam,
                              verify_width=False)
        assert n == expected
        scaled.append(math.sqrt(lam) * n)
    # the scaled counts approach the closed-form limit 1 from below
    ordered = [scaled[list(anchors).index(l)] for l in sorted(anchors, reverse=True)]
    assert all(b > a for a, b in zip(ordered, ordered[1:]))
    assert all(s < 1.0 for s in ordered)
    assert ordered[-1] == pytest.approx(0.990000, abs=1e-6)


def test_count_1d_free_operator_and_guards():
    zero = lambda y: np.zeros_like(np.asarray(y, dtype=float))
    for lam in (1e-3, 0.1, 2.0):
        assert counting.count_1d(1.0, zero, lam, half_width=50.0) == 0
    with pytest.raises(ConfigurationError):
        counting.count_1d(0.0, zero, 0.1, half_width=10.0)
    with pytest.raises(ConfigurationError):
        counting.count_1d(1.0, zero, 0.0, half_width=10.0)
    with pytest.raises(ConfigurationError):
        counting.count_1d(1.0, zero, 0.1)  # bare callable needs a width
    negative = lambda y: -np.ones_like(np.asarray(y, dtype=float))
    with pytest.raises(ConfigurationError):
        counting.count_1d(1.0, negative, 0.1, half_width=10.0)


def test_count_1d_narrow_grid_is_a_resolution_error():
    Q = lambda y: (1.0 + np.asarray(y, dtype=float) ** 2) ** -0.5
    with pytest.raises(NumericalError, match="grid-converged"):
        counting.count_1d(1.0, Q, 1e-3, half_width=30.0)


def test_count_1d_reduced_potential_path(reduced_b1):
    m = math.sqrt(BETA_1)
    n = counting.count_1d(m, reduced_b1, 1e-3)
    assert n == 25
    curve = counting.counting_curve_1d(m, reduced_b1, [3e-3, 1e-3, 3e-4, 1e-4])
    assert curve.counts == (14, 25, 46, 80)
    assert curve.fitted_exponent == pytest.approx(0.5, abs=0.05)


def test_birman_schwinger_integer_equality():
    rng = np.random.default_rng(20260817)
    for _ in range(20):
        n = int(rng.integers(120, 400))
        h = float(rng.uniform(0.05, 0.2))
        m = float(rng.uniform(0.5, 2.0))
        lam = float(rng.uniform(1e-3, 0.3))
        ys = (np.arange(n) - 0.5 * (n - 1)) * h
        q = np.zeros(n)
        for _ in range(int(rng.integers(1, 4))):
            amp = rng.uniform(0.2, 3.0)
            center = rng.uniform(-0.3, 0.3) * n * h
            width = rng.uniform(0.5, 3.0)
            q += amp * np.exp(-(((ys - center) / width) ** 2))
        d = 2.0 * m * m / (h * h) - q
        e = np.full(n - 1, -m * m / (h * h))
        direct = counting.tridiagonal_inertia(d, e, -lam)
        assert counting.bisection_count(d, e, -lam) == direct
        assert counting.birman_schwinger_count(m, q, lam, h) == direct


# ---------------------------------------------------------------------------
# curves and the fit


def test_curve_invariants():
    with pytest.raises(InvariantViolation):
        counting.CountingCurve(lambdas=(1e-3, 1e-2), counts=(3, 1),
                               fitted_exponent=0.5, fitted_prefactor=1.0)
    with pytest.raises(InvariantViolation):
        counting.CountingCurve(lambdas=(1e-2, 1e-3), counts=(3, 1),
                               fitted_exponent=0.5, fitted_prefactor=1.0)
    with pytest.raises(InvariantViolation):
        counting.CountingCurve(lambdas=(1e-2, 1e-3), counts=(1, 2.5),
                               fitted_exponent=0.5, fitted_prefactor=1.0)
    curve = counting.CountingCurve(lambdas=(1e-2, 1e-3), counts=(1, 3),
                                   fitted_exponent=0.5, fitted_prefactor=1.0)
    record = curve.to_record()
    assert record["counts"] == [1, 3]
    assert curve.to_csv().splitlines()[0] == "lambda,count"


def test_asymptotics_check_one_dimensional_example():
    Q = lambda y: (1.0 + np.asarray(y, dtype=float) ** 2) ** -0.5
    lams = [3e-3, 1e-3, 3e-4, 1e-4]
    counts = [counting.count_1d(1.0, Q, lam, half_width=3.0 / lam,
                                verify_width=False) for lam in lams]
    curve = counting.fit_curve(lams, counts)
    gap, ratio = counting.asymptotics_check(curve, 1.0, 1.0)
    assert gap < 0.05
    assert 0.85 <= ratio <= 1.15


def test_asymptotics_check_synthetic_power_law():
    ns = [4, 8, 16, 32, 64]
    amplitude, power = 2.0, 0.5
    lams = [(amplitude / n) ** (1.0 / power) for n in ns]
    curve = counting.fit_curve(lams, ns)
    gap, ratio = counting.asymptotics_check(curve, 1.0, amplitude)
    assert gap < 1e-12
    assert ratio == pytest.approx(1.0, rel=1e-12)


def test_asymptotics_check_degenerate_and_guards():
    with pytest.raises(NumericalError, match="degenerate"):
        counting.fit_curve([1e-2, 3e-3, 1e-3, 1e-4], [5, 5, 5, 5])
    with pytest.raises(ConfigurationError):
        counting.fit_curve([1e-2, 1e-3, 1e-4], [1, 2, 3])
    with pytest.raises(ConfigurationError):
        counting.fit_curve([1e-3, 8e-4, 6e-4, 4e-4], [1, 2, 3, 4])
    good = counting.fit_curve([1e-2, 3e-3, 1e-3, 1e-4], [2, 4, 7, 22])
    with pytest.raises(ConfigurationError):
        counting.asymptotics_check(good, 2.5, 1.0)
    with pytest.raises(ConfigurationError):
        counting.asymptotics_check(good, 1.0, 0.0)


# ---------------------------------------------------------------------------
# 2D counts


def test_count_2d_matches_dense_eigensolve():
    b, hx, hy = 1.0, 0.1, 0.4
    nx, ny = 18, 30
    lx, y_width = nx * hx, 0.5 * ny * hy
    V = counting.standard_potential(1.0, amplitude=3.0)
    threshold, _ = counting.discrete_threshold(b, lx, nx, hy)
    lam = 0.15
    spec = Grid2DSpec(hx=hx, hy=hy, lx=lx, y_width=y_width)
    block = counting.count_2d(b, V, lam, spec=spec, threshold=threshold)

    xs = np.arange(-(nx - 1), nx) * hx
    ys = (np.arange(ny) - 0.5 * (ny - 1)) * hy
    absx = np.abs(xs)
    n_full = len(xs) * ny
    H = np.zeros((n_full, n_full), dtype=complex)
    inv_hx2, inv_hy2 = 1.0 / hx ** 2, 1.0 / hy ** 2
    v1, v2 = V.v1(xs), V.v2(ys)
    for i in range(len(xs)):
        for j in range(ny):
            a = i * ny + j
            H[a, a] = 2.0 * inv_hx2 + (b * absx[i]) ** 2 \
                + 2.0 * inv_hy2 - v1[i] * v2[j]
            if i + 1 < len(xs):
                H[a, a + ny] = H[a + ny, a] = -inv_hx2
            if j + 1 < ny:
                H[a, a + 1] = -inv_hy2 + 1j * b * absx[i] / hy
                H[a + 1, a] = -inv_hy2 - 1j * b * absx[i] / hy
    dense = int((np.linalg.eigvalsh(H) < threshold - lam).sum())
    assert block == dense
    assert block > 0


def test_count_2d_zero_potential_and_monotone_coupling():
    zero = counting.DecayPotential(
        alpha=1.0, C=1.0,
        v1=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        v2=lambda y: np.ones_like(np.asarray(y, dtype=float)))
    spec = Grid2DSpec(hx=0.1, hy=0.4, lx=2.4, y_width=20.0)
    threshold, _ = counting.discrete_threshold(1.0, 2.4, 24, 0.4)
    for lam in (0.05, 0.2, 0.45):
        assert counting.count_2d(1.0, zero, lam, spec=spec,
                                 threshold=threshold) == 0
    single = counting.count_2d(
        1.0, counting.standard_potential(1.0, amplitude=3.0), 0.15,
        spec=Grid2DSpec(hx=0.1, hy=0.4, lx=2.4, y_width=8.0),
        threshold=threshold)
    doubled = counting.count_2d(
        1.0, counting.standard_potential(1.0, amplitude=6.0), 0.15,
        spec=Grid2DSpec(hx=0.1, hy=0.4, lx=2.4, y_width=8.0),
        threshold=threshold)
    assert 0 < single <= doubled


def test_count_2d_guards():
    V = counting.standard_potential(1.0)
    spec = Grid2DSpec(hx=0.1, hy=0.4, lx=2.4, y_width=8.0)
    with pytest.raises(ConfigurationError):
        counting.count_2d(1.0, V, 0.0, spec=spec)
    with pytest.raises(ConfigurationError):
        counting.count_2d(1.0, V, 0.7, spec=spec)  # above the band floor
    lopsided = counting.DecayPotential(
        alpha=1.0, C=2.0,
        v1=lambda x: (1.0 + np.abs(np.asarray(x, dtype=float) - 0.3)) ** -1.0,
        v2=lambda y: (1.0 + np.asarray(y, dtype=float) ** 2) ** -0.5)
    with pytest.raises(ConfigurationError, match="even"):
        counting.count_2d(1.0, lopsided, 0.15, spec=spec)
    tiny = Grid2DSpec(hx=0.1, hy=0.4, lx=2.4, y_width=8.0, max_unknowns=100)
    with pytest.raises(NumericalError, match="budget"):
        counting.count_2d(1.0, V, 0.15, spec=tiny)
    with pytest.raises(ConfigurationError):
        Grid2DSpec(hx=-0.1)


def test_count_2d_refinement_stability():
    V = counting.standard_potential(1.0)
    base, refined, stable = counting.count_2d_stability(1.0, V, 3e-2 * E_1)
    assert (base, refined, stable) == (5, 5, True)


def test_counting_curve_2d_small_ladder():
    V = counting.standard_potential(1.0)
    lams = [0.1 * E_1, 0.05 * E_1, 0.02 * E_1, 0.01 * E_1]
    curve, meta = counting.counting_curve_2d(1.0, V, lams)
    assert len(curve.counts) == 4
    assert all(b >= a for a, b in zip(curve.counts, curve.counts[1:]))
    assert meta["threshold"] == pytest.approx(E_1, abs=0.05)
    assert meta["unknowns"] <= Grid2DSpec().max_unknowns
    assert curve.fitted_exponent == pytest.approx(0.5, abs=0.25)
