"""Band functions omega_j(k): tracing over a k-grid, derivatives by
independent routes, even-band minima, and effective masses.

Derivative routes: the quadrature route integrates 2(k - b|x|) psi^2 over the
line; the boundary route evaluates (-2/b) [(omega - k^2) psi(0)^2 + psi'(0)^2],
which collapses to one term per parity. They agree to discretization accuracy
and both match finite differences of the traced band.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import fiber
from .errors import InvariantViolation, NumericalError
from .fiber import DEFAULT_RESOLUTION, Parity

CROSS_CHECK_RTOL = 1e-5    # fh vs boundary route
MASS_CROSS_RTOL = 1e-3     # closed form vs finite-difference omega''
KAPPA_XTOL = 1e-10
REFINE_FACTOR = 10.0       # curvature threshold over median for k-grid splits


@dataclass(frozen=True)
class BandSample:
    """One band evaluated at one k."""

    k: float
    omega: float
    domega_fh: float
    domega_bd: float
    psi0: float
    dpsi0: float


@dataclass(frozen=True)
class BandTable:
    """Sampled band functions over a common k-grid."""

    b: float
    ks: np.ndarray = field(repr=False)
    bands: list = field(repr=False)      # per band: list of BandSample
    parities: list = None                # per band: Parity

    def n_bands(self):
        return len(self.bands)


@dataclass(frozen=True)
class MinimumRecord:
    """An even band's unique minimum: location, energy, effective mass."""

    j: int                 # even-band ordinal; global band index 2j-1
    kappa: float
    energy: float
    beta: float
    psi0_at_kappa: float

    def __post_init__(self):
        if self.beta <= 0.0:
            raise InvariantViolation(f"effective mass must be positive, got {self.beta}")


def derivative_fh(pair, b=None, k=None):
    """Quadrature route: integral of 2(k - b|x|) psi^2 over the line."""
    b = pair.b if b is None else b
    k = pair.k if k is None else k
    return float(fiber.expectation(pair, 2.0 * (k - b * pair.grid.x)))


def derivative_boundary(pair, b=None, k=None):
    """Boundary route; one term per parity by construction."""
    b = pair.b if b is None else b
    k = pair.k if k is None else k
    return float((-2.0 / b) * ((pair.omega - k * k) * pair.psi0 ** 2 + pair.dpsi0 ** 2))


def _sample(pair):
    return BandSample(k=pair.k, omega=pair.omega,
                      domega_fh=derivative_fh(pair),
                      domega_bd=derivative_boundary(pair),
                      psi0=pair.psi0, dpsi0=pair.dpsi0)


def _extrap(functional, coarse, fine):
    return float((4.0 * functional(fine) - functional(coarse)) / 3.0)


def _sample_refined(coarse, fine, refined):
    """Sample with every column extrapolated in h^2, not just the energy."""
    return BandSample(k=refined.k, omega=refined.omega,
                      domega_fh=_extrap(derivative_fh, coarse, fine),
                      domega_bd=_extrap(derivative_boundary, coarse, fine),
                      psi0=_extrap(lambda p: p.psi0, coarse, fine),
                      dpsi0=_extrap(lambda p: p.dpsi0, coarse, fine))


def _curvatures(ks, ws):
    """Second divided differences, usable on a nonuniform grid."""
    out = np.zeros(len(ks))
    for i in range(1, len(ks) - 1):
        s1 = (ws[i] - ws[i - 1]) / (ks[i] - ks[i - 1])
        s2 = (ws[i + 1] - ws[i]) / (ks[i + 1] - ks[i])
        out[i] = 2.0 * (s2 - s1) / (ks[i + 1] - ks[i - 1])
    return np.abs(out)


def trace(b, k_min, k_max, n_bands=8, base_samples=81, resolution=DEFAULT_RESOLUTION,
          refine=True, refine_passes=2):
    """Sample the lowest n_bands band functions on an adaptive k-grid.

    The base grid is uniform; each pass bisects the intervals around nodes
    whose curvature estimate exceeds REFINE_FACTOR times the median, which
    concentrates points near the even-band minima and k = 0.
    """
    if not k_min < k_max:
        raise InvariantViolation("need k_min < k_max")
    solutions = {}
    grids = {}

    def solve_at(k):
        if k not in solutions:
            if refine:
                coarse, fine, refined = fiber.first_levels_two_grids(
                    b, float(k), n_bands, resolution=resolution)
                solutions[k] = refined
                grids[k] = (coarse, fine)
            else:
                solutions[k] = fiber.first_levels(b, float(k), n_bands,
                                                  resolution=resolution, refine=False)
        return solutions[k]

    for k in np.linspace(k_min, k_max, base_samples):
        solve_at(float(k))
    for _ in range(refine_passes):
        ks = sorted(solutions)
        flagged = set()
        all_curv = []
        per_band = []
        for j in range(n_bands):
            ws = [solutions[k][j].omega for k in ks]
            curv = _curvatures(ks, ws)
            per_band.append(curv)
            all_curv.extend(curv[1:-1])
        cut = REFINE_FACTOR * float(np.median(all_curv))
        for curv in per_band:
            for i in np.nonzero(curv > cut)[0]:
                flagged.add(i)
        new_ks = set()
        for i in flagged:
            if i > 0:
                new_ks.add(0.5 * (ks[i - 1] + ks[i]))
            if i < len(ks) - 1:
                new_ks.add(0.5 * (ks[i] + ks[i + 1]))
        for k in sorted(new_ks - set(ks)):
            solve_at(k)
    ks = np.array(sorted(solutions))
    if refine:
        bands = [[_sample_refined(grids[k][0][j], grids[k][1][j], solutions[k][j])
                  for k in ks] for j in range(n_bands)]
    else:
        bands = [[_sample(solutions[k][j]) for k in ks] for j in range(n_bands)]
    parities = [solutions[ks[0]][j].parity for j in range(n_bands)]
    return BandTable(b=b, ks=ks, bands=bands, parities=parities)


def _even_band_omega(b, k, j, resolution, refine=True):
    """omega of global band 2j-1 (even class, local index j) with boundary data."""
    problem = fiber.build_problem(b, k, Parity.EVEN, requested_levels=j,
                                  resolution=resolution)
    return fiber.solve(problem, j, refine=refine)[j - 1]


def find_minimum(j, b, resolution=DEFAULT_RESOLUTION):
    """Locate the minimum of even band j as the root of omega(k) - k^2.

    The bracket is (0, sqrt of the band's oscillator limit); the minimum
    energy is the square of the root, cross-checked against the direct
    eigenvalue there.
    """
    limit = (2.0 * (2 * j - 1) - 1.0) * b      # oscillator level the band tends to
    lo, hi = 1e-6 * math.sqrt(b), math.sqrt(limit)

    def g(k):
        return _even_band_omega(b, k, j, resolution).omega - k * k

    g_lo, g_hi = g(lo), g(hi)
    if not (g_lo > 0.0 > g_hi):
        raise InvariantViolation(
            f"no sign change for band {2 * j - 1} minimum in ({lo:.3g}, {hi:.3g}): "
            f"g={g_lo:.3g}, {g_hi:.3g}"
        )
    kappa = brentq(g, lo, hi, xtol=KAPPA_XTOL * math.sqrt(b), rtol=8.0 * np.finfo(float).eps)
    pair = _even_band_omega(b, kappa, j, resolution)
    energy = kappa * kappa
    if abs(pair.omega - energy) > 1e-8 * max(1.0, abs(energy)):
        raise NumericalError(
            f"minimum cross-check failed: omega({kappa})={pair.omega} vs kappa^2={energy}"
        )
    window_lo = (2.0 * (j - 1) - 1.0) * b if j > 1 else 0.0
    window_hi = (2.0 * j - 1.0) * b
    if not (window_lo < energy < window_hi):
        raise InvariantViolation(
            f"band {2 * j - 1} minimum {energy} outside ({window_lo}, {window_hi})"
        )
    if not 0.0 < kappa < math.sqrt(limit):
        raise InvariantViolation(f"kappa {kappa} outside (0, sqrt({limit}))")
    beta = (2.0 * kappa / b) * pair.psi0 ** 2
    return MinimumRecord(j=j, kappa=kappa, energy=energy, beta=beta,
                         psi0_at_kappa=pair.psi0)


def effective_mass(record, b, resolution=DEFAULT_RESOLUTION):
    """beta_j by the closed form and by finite differences; both must agree.

    Closed form: (2 kappa_j / b) psi(0, kappa_j)^2. The check differentiates
    the band twice with a five-point stencil at scale-aware step.
    """
    closed = (2.0 * record.kappa / b) * record.psi0_at_kappa ** 2
    hk = 1e-2 * math.sqrt(b)
    w = [_even_band_omega(b, record.kappa + m * hk, record.j, resolution).omega
         for m in (-2, -1, 0, 1, 2)]
    second = (-w[0] + 16.0 * w[1] - 30.0 * w[2] + 16.0 * w[3] - w[4]) / (12.0 * hk * hk)
    fd = 0.5 * second
    if abs(fd - closed) > MASS_CROSS_RTOL * abs(closed):
        raise NumericalError(f"effective mass disagreement: closed {closed} vs FD {fd}")
    if closed <= 0.0:
        raise InvariantViolation(f"effective mass must be positive, got {closed}")
    return closed


@dataclass(frozen=True)
class MonotonicityReport:
    """Violations of the decreasing/one-flip band shape, if any."""

    violations: list
    checked: int
    flip_ks: dict          # even band global index -> k where the sign flips


def monotonicity_report(table, tol=None):
    """Check odd bands strictly decreasing, even bands single-sign-flip.

    Monotonicity is read at tolerance `tol` (default 1e-8 * b): past the
    minima the true slopes decay like exp(-k^2 / 4b) and soon drop below any
    floating-point resolution, so a zero tolerance would report solver noise
    as band shape. Violations are (band index, k) pairs.
    """
    if tol is None:
        tol = 1e-8 * table.b
    violations = []
    flip_ks = {}
    checked = 0
    for j_idx, samples in enumerate(table.bands):
        parity = table.parities[j_idx]
        diffs = np.diff([s.omega for s in samples])
        checked += len(diffs)
        if parity is Parity.ODD:
            for i in np.nonzero(diffs > tol)[0]:
                violations.append((j_idx + 1, samples[i + 1].k))
        else:
            pos = np.nonzero(diffs > tol)[0]
            flip = pos[0] if len(pos) else len(diffs)
            if flip < len(diffs):
                flip_ks[j_idx + 1] = 0.5 * (samples[flip].k + samples[flip + 1].k)
            for i in range(flip, len(diffs)):
                if diffs[i] < -tol:
                    violations.append((j_idx + 1, samples[i + 1].k))
    return MonotonicityReport(violations=violations, checked=checked, flip_ks=flip_ks)


def table_minimum(table, band=1):
    """(k*, omega*) of one band from the table, parabola-refined at the argmin."""
    samples = table.bands[band - 1]
    ws = np.array([s.omega for s in samples])
    ks = np.array([s.k for s in samples])
    i = int(np.argmin(ws))
    if i == 0 or i == len(ws) - 1:
        return float(ks[i]), float(ws[i])
    # parabola through the three samples around the discrete argmin
    p = np.polyfit(ks[i - 1:i + 2] - ks[i], ws[i - 1:i + 2], 2)
    k_star = -p[1] / (2.0 * p[0])
    w_star = np.polyval(p, k_star)
    return float(k_star + ks[i]), float(w_star)


def to_csv(table):
    """CSV rows (k, j, parity, omega, domega_fh, domega_bd, psi0, dpsi0)."""
    lines = ["k,j,parity,omega,domega_fh,domega_bd,psi0,dpsi0"]
    for i, k in enumerate(table.ks):
        for j_idx, samples in enumerate(table.bands):
            s = samples[i]
            lines.append(",".join([
                f"{k:.12g}", str(j_idx + 1), table.parities[j_idx].value,
                f"{s.omega:.12g}", f"{s.domega_fh:.12g}", f"{s.domega_bd:.12g}",
                f"{s.psi0:.12g}", f"{s.dpsi0:.12g}",
            ]))
    return "\n".join(lines) + "\n"


def to_json(table):
    """JSON document with full-precision floats."""
    doc = {
        "b": table.b,
        "ks": [float(k) for k in table.ks],
        "bands": [
            {
                "j": j_idx + 1,
                "parity": table.parities[j_idx].value,
                "omega": [s.omega for s in samples],
                "domega_fh": [s.domega_fh for s in samples],
                "domega_bd": [s.domega_bd for s in samples],
                "psi0": [s.psi0 for s in samples],
                "dpsi0": [s.dpsi0 for s in samples],
            }
            for j_idx, samples in enumerate(table.bands)
        ],
    }
    return json.dumps(doc, indent=2)
