"""Band tracing, derivative routes, minima, effective masses.

Frozen reference values were produced by an independent high-resolution
bisection solver with Richardson extrapolation (three grid levels) and
bracketed root refinement; they are good to the digit count shown.
"""

import json
import math

import numpy as np
import pytest

from magbarrier import bands, fiber
from magbarrier.errors import NumericalError
from magbarrier.fiber import Parity

KAPPA_1 = 0.768183653380
ENERGY_1 = 0.590106125320
KAPPA_2 = 1.623225000514
ENERGY_2 = 2.634859402292
ENERGY_3 = 4.644812754275
BETA_1 = 0.5855127449
PSI0_AT_KAPPA_1 = 0.61733464


@pytest.fixture(scope="module")
def figure_table():
    return bands.trace(1.0, -4.0, 6.0, n_bands=8, base_samples=81)


def test_trace_shape_matches_dispersion_picture(figure_table):
    t = figure_table
    assert t.n_bands() == 8
    # ordering at every k, read at the numerical floor: past the minima the
    # parity gaps die like exp(-k^2/b), far below eigensolver roundoff
    floor = 1e-9
    for i in range(len(t.ks)):
        ws = [t.bands[j][i].omega for j in range(8)]
        assert all(ws[a] < ws[a + 1] + floor for a in range(7))
    # all bands decreasing over the barrier side
    left = t.ks < -0.5
    for j in range(8):
        ws = np.array([s.omega for s in t.bands[j]])
        assert np.all(np.diff(ws[left]) < 0.0)
    # even bands turn upward after their minima, odd bands do not
    report = bands.monotonicity_report(t)
    assert report.violations == []
    for j, parity in enumerate(t.parities, start=1):
        if parity is Parity.EVEN:
            assert j in report.flip_ks
        else:
            assert j not in report.flip_ks
    assert abs(report.flip_ks[1] - KAPPA_1) <= 2.0 * (t.ks[1] - t.ks[0])


def test_trace_argmin_plateau_is_narrow(figure_table):
    for j, parity in enumerate(figure_table.parities):
        if parity is not Parity.EVEN:
            continue
        ws = np.array([s.omega for s in figure_table.bands[j]])
        ties = np.nonzero(ws <= ws.min())[0]
        assert len(ties) <= 2
        assert np.all(np.diff(ties) == 1)


def test_trace_odd_derivative_column_strictly_negative(figure_table):
    for j, parity in enumerate(figure_table.parities):
        if parity is Parity.ODD:
            assert all(s.domega_bd < 0.0 for s in figure_table.bands[j])


def test_trace_derivative_cross_check_on_table(figure_table):
    for band in figure_table.bands:
        for s in band:
            assert abs(s.domega_fh - s.domega_bd) <= 1e-5 * max(1.0, abs(s.domega_fh))


def test_trace_derivatives_match_finite_differences(figure_table):
    # Coarse-grid sanity over the whole figure: a wrong sign or factor in
    # either route would blow past this even where the stencil truncation
    # error peaks (the band knees).
    t = figure_table
    uniform = [i for i in range(len(t.ks))
               if i >= 2 and i + 2 < len(t.ks)
               and np.allclose(np.diff(t.ks[i - 2:i + 3]), t.ks[1] - t.ks[0])]
    dk = t.ks[1] - t.ks[0]
    checked = 0
    for j in range(4):
        for i in uniform[::3]:
            ws = [t.bands[j][i + m].omega for m in (-2, -1, 0, 1, 2)]
            fd = (ws[0] - 8.0 * ws[1] + 8.0 * ws[3] - ws[4]) / (12.0 * dk)
            s = t.bands[j][i]
            assert abs(s.domega_fh - fd) <= 5e-3 * max(1.0, abs(fd))
            assert abs(s.domega_bd - fd) <= 5e-3 * max(1.0, abs(fd))
            checked += 1
    assert checked > 20
    # At a converged stencil step the routes match finite differences to 1e-4,
    # including on the barrier side, near the first minimum, and at the knees.
    dk = 1e-2
    for k0 in (-3.0, -0.7, 0.3, 1.2, 2.0):
        t2 = bands.trace(1.0, k0 - 2 * dk, k0 + 2 * dk, n_bands=4,
                         base_samples=5, refine=True, refine_passes=0)
        for j in range(4):
            ws = [s.omega for s in t2.bands[j]]
            fd = (ws[0] - 8.0 * ws[1] + 8.0 * ws[3] - ws[4]) / (12.0 * dk)
            s = t2.bands[j][2]
            assert abs(s.domega_fh - fd) <= 1e-4 * max(1.0, abs(fd))
            assert abs(s.domega_bd - fd) <= 1e-4 * max(1.0, abs(fd))


def test_trace_single_point_consistent_with_fiber():
    t = bands.trace(1.0, -5e-4, 5e-4, n_bands=6, base_samples=3, refine=True)
    mid = np.argmin(np.abs(t.ks))
    for j, want in enumerate((1.0, 3.0, 5.0, 7.0, 9.0, 11.0)):
        assert t.bands[j][mid].omega == pytest.approx(want, abs=1e-6)


def test_derivative_routes_on_random_states():
    rng = np.random.default_rng(17)
    checked = 0
    for _ in range(13):
        k = float(rng.uniform(-5.0, 5.0))
        pairs = fiber.first_levels(1.0, k, 4, refine=True)
        for pair in pairs:
            fh = bands.derivative_fh(pair)
            bd = bands.derivative_boundary(pair)
            assert abs(fh - bd) <= 1e-5 * max(1.0, abs(fh))
            checked += 1
    assert checked >= 50


def test_derivative_fh_against_fd_oracle_on_barrier_side():
    delta = 1e-2
    w = {}
    for m in (-2, -1, 0, 1, 2):
        pair = fiber.first_levels(1.0, -5.0 + m * delta, 1, refine=True)[0]
        w[m] = pair.omega
        if m == 0:
            fh = bands.derivative_fh(pair)
    fd = (w[-2] - 8.0 * w[-1] + 8.0 * w[1] - w[2]) / (12.0 * delta)
    assert fh < 0.0
    assert fh == pytest.approx(fd, rel=1e-5)


def test_derivative_positive_past_minimum():
    pair = fiber.first_levels(1.0, 5.0, 1, refine=True)[0]
    assert bands.derivative_fh(pair) > 0.0
    assert bands.derivative_boundary(pair) > 0.0


def test_derivative_at_k0_negative_and_consistent():
    delta = 1e-2
    w = {}
    for m in (-2, -1, 0, 1, 2):
        pairs = fiber.first_levels(1.0, m * delta, 3, refine=True)
        w[m] = [p.omega for p in pairs]
        if m == 0:
            fhs = [bands.derivative_fh(p) for p in pairs]
    for j in range(3):
        fd = (w[-2][j] - 8.0 * w[-1][j] + 8.0 * w[1][j] - w[2][j]) / (12.0 * delta)
        assert fhs[j] < 0.0
        # The potential's |x| corner puts an O(h^2) trapezoid term in the
        # quadrature route that the extrapolated band values do not carry.
        assert abs(fhs[j] - fd) <= 1e-6 * max(1.0, abs(fd))


def test_find_minimum_first_band():
    rec = bands.find_minimum(1, 1.0)
    assert 0.0 < rec.kappa < 1.0
    assert 0.0 < rec.energy < 1.0
    assert rec.kappa == pytest.approx(KAPPA_1, abs=2e-7)
    assert rec.energy == pytest.approx(ENERGY_1, abs=2e-7)
    assert rec.psi0_at_kappa == pytest.approx(PSI0_AT_KAPPA_1, abs=1e-5)


def test_find_minimum_scales_like_sqrt_b():
    r1 = bands.find_minimum(1, 1.0)
    r4 = bands.find_minimum(1, 4.0)
    assert r4.kappa == pytest.approx(2.0 * r1.kappa, rel=1e-6)
    assert r4.energy == pytest.approx(4.0 * r1.energy, rel=1e-6)


def test_find_minimum_higher_bands_in_windows():
    r2 = bands.find_minimum(2, 1.0)
    assert 1.0 < r2.energy < 3.0
    assert r2.energy == pytest.approx(ENERGY_2, abs=2e-6)
    r3 = bands.find_minimum(3, 1.0, resolution=3000)
    assert 3.0 < r3.energy < 5.0
    assert r3.energy == pytest.approx(ENERGY_3, abs=1e-5)


def test_effective_mass_routes_agree():
    rec = bands.find_minimum(1, 1.0)
    beta = bands.effective_mass(rec, 1.0)
    assert beta == pytest.approx(BETA_1, abs=1e-4)
    assert beta == pytest.approx(rec.beta, rel=1e-6)


def test_effective_mass_is_b_independent():
    beta1 = bands.effective_mass(bands.find_minimum(1, 1.0), 1.0)
    beta4 = bands.effective_mass(bands.find_minimum(1, 4.0), 4.0)
    assert beta4 == pytest.approx(beta1, rel=1e-4)


def test_effective_mass_positive_first_four():
    for j in (1, 2, 3, 4):
        rec = bands.find_minimum(j, 1.0, resolution=2500)
        assert rec.beta > 0.0


def test_monotonicity_detector_catches_corruption(figure_table):
    t = figure_table
    broken = [list(band) for band in t.bands]
    # bump an odd band where it is flat, so the bump is the only rise
    idx = len(t.ks) - 2
    s = broken[1][idx]
    broken[1][idx] = bands.BandSample(k=s.k, omega=s.omega + 1e-3,
                                      domega_fh=s.domega_fh, domega_bd=s.domega_bd,
                                      psi0=s.psi0, dpsi0=s.dpsi0)
    corrupted = bands.BandTable(b=t.b, ks=t.ks, bands=broken, parities=t.parities)
    report = bands.monotonicity_report(corrupted)
    assert any(j == 2 for j, _ in report.violations)


def test_bottom_of_spectrum_from_table():
    t = bands.trace(1.0, KAPPA_1 - 0.25, KAPPA_1 + 0.25, n_bands=1,
                    base_samples=51, refine=True)
    _, w_star = bands.table_minimum(t, band=1)
    assert w_star == pytest.approx(ENERGY_1, abs=1e-8)


def test_serialization_roundtrip_and_determinism(figure_table):
    csv_text = bands.to_csv(figure_table)
    head = csv_text.splitlines()[0]
    assert head == "k,j,parity,omega,domega_fh,domega_bd,psi0,dpsi0"
    assert len(csv_text.splitlines()) == 1 + 8 * len(figure_table.ks)
    doc = json.loads(bands.to_json(figure_table))
    assert doc["b"] == 1.0
    assert len(doc["bands"]) == 8
    assert doc["bands"][0]["omega"][0] == figure_table.bands[0][0].omega
    again = bands.trace(1.0, -4.0, 6.0, n_bands=8, base_samples=81)
    assert bands.to_csv(again) == csv_text
