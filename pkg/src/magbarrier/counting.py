"""Eigenvalue counting below the first band minimum.

A decaying potential V >= 0 pulls infinitely many eigenvalues below the
continuum threshold; their number N grows like a power of the distance to
the threshold, with exponent 1/alpha - 1/2 and an explicit prefactor built
from the effective mass and the reduced 1D potential. This module computes
the reduced potential, counts 1D and 2D eigenvalues exactly by matrix
inertia, and compares the measured growth against the closed-form constant.

The 2D count measures the gap from the discrete operator's own threshold
(the lattice band minimum, found by a fiber scan with the lattice
dispersion), so the comparison is self-consistent at any resolution instead
of being swamped by the O(h^2) shift of the continuum threshold.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import minimize_scalar
from scipy.special import betaln

from . import fiber
from .errors import ConfigurationError, InvariantViolation, NumericalError
from .fiber import Parity

DEFAULT_H_1D = 0.05
DEFAULT_HX_2D = 0.05
DEFAULT_HY_2D = 0.4
TURNING_FACTOR = 3.0
MAX_UNKNOWNS_2D = 10_000_000
SINGULAR_RETRIES = 3
FIT_SPREAD_TOL = 0.05


# ---------------------------------------------------------------------------
# potentials


@dataclass(frozen=True)
class DecayPotential:
    """Separable nonnegative potential v1(x) v2(y) with power-law decay.

    Separability is a module convention (it gives the reduced potential a
    closed-form tail coefficient); the decay bound
    0 <= V <= C (1+|x|)^{-alpha} (1+|y|)^{-alpha} is the real requirement.
    """

    alpha: float
    C: float
    v1: object = field(repr=False)
    v2: object = field(repr=False)

    def __post_init__(self):
        if not 0.0 < self.alpha < 2.0:
            raise ConfigurationError("decay exponent alpha must lie in (0, 2)")
        if not self.C > 0.0:
            raise ConfigurationError("decay constant C must be positive")

    def value(self, x, y):
        return self.v1(x) * self.v2(y)

    def validate_condition(self, xs, ys):
        """Check the decay bound and nonnegativity on sample points."""
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        w1 = np.asarray(self.v1(xs), dtype=float)
        w2 = np.asarray(self.v2(ys), dtype=float)
        if (w1 < 0.0).any() or (w2 < 0.0).any():
            raise InvariantViolation("potential factors must be nonnegative")
        bound = self.C * np.outer((1.0 + np.abs(xs)) ** -self.alpha,
                                  (1.0 + np.abs(ys)) ** -self.alpha)
        if (np.outer(w1, w2) > bound * (1.0 + 1e-12) + 1e-300).any():
            raise InvariantViolation("potential exceeds its stated decay bound")


def standard_potential(alpha, amplitude=1.0):
    """The default test family v1 = A (1+|x|)^{-a}, v2 = (1+y^2)^{-a/2}.

    The y-factor has |y|^a v2 -> 1 exactly, and its sharp constant against
    (1+|y|)^{-a} is 2^{a/2}, attained at |y| = 1.
    """
    if amplitude <= 0.0:
        raise ConfigurationError("amplitude must be positive")

    def v1(x):
        return amplitude * (1.0 + np.abs(x)) ** -alpha

    def v2(y):
        return (1.0 + np.asarray(y, dtype=float) ** 2) ** (-alpha / 2.0)

    return DecayPotential(alpha=alpha, C=amplitude * 2.0 ** (alpha / 2.0),
                          v1=v1, v2=v2)


@dataclass(frozen=True)
class ReducedPotential:
    """Q(y) = int V(x, y) psi_1(x, kappa_1)^2 dx, sampled, with its tail law.

    Outside the sampled range the tail model ell |y|^{-alpha} extends the
    samples; ell is the fitted limit of |y|^alpha Q(y).
    """

    alpha: float
    ys: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    ell: float
    fit_spread: float

    def __post_init__(self):
        if (self.values < 0.0).any():
            raise InvariantViolation("reduced potential must be nonnegative")
        if not self.ell > 0.0:
            raise InvariantViolation("tail coefficient ell must be positive")

    def evaluate(self, y):
        y = np.abs(np.asarray(y, dtype=float))
        inside = np.interp(y, self.ys, self.values)
        tail = np.where(y > 0.0, self.ell * np.maximum(y, 1e-300) ** -self.alpha,
                        np.inf)
        return np.where(y <= self.ys[-1], inside, tail)


def reduced_potential(V, ground, y_grid, fit_tol=FIT_SPREAD_TOL):
    """ReducedPotential of V against a solved transverse ground state.

    The fit takes the largest sampled |y| decade; a spread of |y|^alpha Q
    beyond fit_tol there means the tail has not settled (or oscillates) and
    is reported as a fit error with the measured spread.
    """
    if ground.j != 1:
        raise ConfigurationError("the reduction needs the first band's state")
    ys = np.unique(np.abs(np.asarray(y_grid, dtype=float)))
    if len(ys) < 8:
        raise ConfigurationError("y_grid needs at least 8 distinct moduli")
    transverse = fiber.expectation(ground, np.asarray(V.v1(ground.grid.x),
                                                      dtype=float))
    values = np.asarray(V.v2(ys), dtype=float) * transverse
    decade = ys >= ys[-1] / 10.0
    scaled = ys[decade] ** V.alpha * values[decade]
    ell = float(np.mean(scaled))
    if ell <= 0.0:
        raise NumericalError("tail coefficient came out nonpositive")
    spread = float((scaled.max() - scaled.min()) / ell)
    if spread > fit_tol:
        raise NumericalError(
            f"tail fit has not settled: relative spread {spread:.3g} over the "
            f"last decade (residuals {scaled.min():.6g}..{scaled.max():.6g})"
        )
    return ReducedPotential(alpha=V.alpha, ys=ys, values=values, ell=ell,
                            fit_spread=spread)


# ---------------------------------------------------------------------------
# closed-form constants


def counting_constant_1d(alpha, ell, m):
    """(2 ell^{1/alpha} / (pi alpha m)) B(3/2, 1/alpha - 1/2) via log-beta."""
    if not 0.0 < alpha < 2.0:
        raise ConfigurationError("alpha must lie in (0, 2) for the Beta factor")
    if not (ell > 0.0 and m > 0.0):
        raise ConfigurationError("ell and m must be positive")
    log_b = betaln(1.5, 1.0 / alpha - 0.5)
    return (2.0 / (math.pi * alpha * m)) * ell ** (1.0 / alpha) * math.exp(log_b)


def counting_constant_2d(alpha, L, beta1):
    """The 2D prefactor; the 1D constant at effective mass m = sqrt(beta1)."""
    if not beta1 > 0.0:
        raise ConfigurationError("effective mass beta1 must be positive")
    return counting_constant_1d(alpha, L, math.sqrt(beta1))


# ---------------------------------------------------------------------------
# 1D counts


def tridiagonal_inertia(d, e, tau):
    """Eigenvalues of tridiag(d, e) below tau, by the scalar LDL recurrence.

    Exact in the Sturm sense: each pivot sign is computed from the shifted
    recurrence, a zero pivot counting as negative (the LAPACK convention).
    """
    d = np.asarray(d, dtype=float)
    e = np.asarray(e, dtype=float)
    if len(e) != len(d) - 1:
        raise ConfigurationError("need len(e) == len(d) - 1")
    count = 0
    pivot = d[0] - tau
    if pivot <= 0.0:
        count += 1
    for i in range(1, len(d)):
        if pivot == 0.0:
            pivot = -1e-300
        pivot = (d[i] - tau) - e[i - 1] * e[i - 1] / pivot
        if pivot <= 0.0:
            count += 1
    return count


def bisection_count(d, e, tau):
    """The same count through the library's bisection eigensolver."""
    d = np.asarray(d, dtype=float)
    e = np.asarray(e, dtype=float)
    floor = float(d.min() - 2.0 * np.abs(e).max() - 1.0) if len(e) else float(d.min() - 1.0)
    w = eigh_tridiagonal(d, e, select="v", select_range=(floor, tau),
                         eigvals_only=True, check_finite=False)
    return int(len(w))


def _line_grid(half_width, h):
    n = int(math.ceil(2.0 * half_width / h))
    ys = (np.arange(n) - 0.5 * (n - 1)) * h
    return ys


def _q_values(Q, ys):
    if isinstance(Q, ReducedPotential):
        return Q.evaluate(ys)
    return np.asarray(Q(ys), dtype=float)


def count_1d(m, Q, lam, half_width=None, h=DEFAULT_H_1D, verify_width=True):
    """Eigenvalues of -m^2 d^2/dy^2 - Q below -lam on an auto-sized line grid.

    The grid spans 3x the classical turning point (ell/lam)^{1/alpha} each
    side, so every bound state is enclosed with margin; verify_width recounts
    on a widened grid and raises when the count is still moving.
    """
    if not (m > 0.0 and lam > 0.0):
        raise ConfigurationError("need m > 0 and lam > 0")
    if half_width is None:
        if not isinstance(Q, ReducedPotential):
            raise ConfigurationError(
                "half_width is required when Q is a bare callable"
            )
        half_width = TURNING_FACTOR * (Q.ell / lam) ** (1.0 / Q.alpha)

    def count_at(width):
        ys = _line_grid(width, h)
        q = _q_values(Q, ys)
        if (q < 0.0).any():
            raise ConfigurationError("Q must be nonnegative")
        d = 2.0 * m * m / (h * h) - q
        e = np.full(len(ys) - 1, -m * m / (h * h))
        return tridiagonal_inertia(d, e, -lam)

    n = count_at(half_width)
    if verify_width and count_at(1.5 * half_width) != n:
        raise NumericalError(
            f"count at half-width {half_width:g} is not grid-converged; widen"
        )
    return n


def birman_schwinger_count(m, q_values, lam, h):
    """Eigenvalues > 1 of Q^{1/2} (-m^2 d^2/dy^2 + lam)^{-1} Q^{1/2}.

    Dense on the given grid; by the Birman-Schwinger principle this equals
    the count of eigenvalues of -m^2 d^2/dy^2 - Q below -lam as an exact
    integer on the same grid.
    """
    q = np.asarray(q_values, dtype=float)
    if (q < 0.0).any():
        raise ConfigurationError("Q must be nonnegative")
    if not lam > 0.0:
        raise ConfigurationError("lam must be positive")
    n = len(q)
    t = np.zeros((n, n))
    idx = np.arange(n)
    t[idx, idx] = 2.0 * m * m / (h * h) + lam
    t[idx[:-1], idx[:-1] + 1] = -m * m / (h * h)
    t[idx[:-1] + 1, idx[:-1]] = -m * m / (h * h)
    root = np.sqrt(q)
    kernel = root[:, None] * np.linalg.solve(t, np.diag(root))
    kernel = 0.5 * (kernel + kernel.T)
    eigs = np.linalg.eigvalsh(kernel)
    return int((eigs > 1.0).sum())


# ---------------------------------------------------------------------------
# counting curves and the asymptotic fit


@dataclass(frozen=True)
class CountingCurve:
    """Counts along a decreasing lambda ladder with its power-law fit."""

    lambdas: tuple
    counts: tuple
    fitted_exponent: float
    fitted_prefactor: float

    def __post_init__(self):
        lams = np.asarray(self.lambdas, dtype=float)
        if (lams <= 0.0).any() or (np.diff(lams) >= 0.0).any():
            raise InvariantViolation("lambdas must be positive and decreasing")
        if any(c != int(c) or c < 0 for c in self.counts):
            raise InvariantViolation("counts must be nonnegative integers")
        if (np.diff(np.asarray(self.counts)) < 0).any():
            raise InvariantViolation("counts must not decrease as lambda does")

    def to_record(self):
        return {"lambdas": list(self.lambdas),
                "counts": [int(c) for c in self.counts],
                "fitted_exponent": self.fitted_exponent,
                "fitted_prefactor": self.fitted_prefactor}

    def to_csv(self):
        lines = ["lambda,count"]
        for lam, c in zip(self.lambdas, self.counts):
            lines.append(f"{lam:.12g},{int(c)}")
        return "\n".join(lines) + "\n"


def fit_curve(lambdas, counts):
    """CountingCurve with N ~ A lambda^{-p} fitted in log-log least squares."""
    lams = np.asarray(lambdas, dtype=float)
    cnts = np.asarray(counts, dtype=float)
    mask = cnts > 0
    if mask.sum() < 4:
        raise ConfigurationError("need at least 4 lambdas with nonzero counts")
    if lams[mask].max() / lams[mask].min() < 10.0:
        raise ConfigurationError("lambda ladder must span at least one decade")
    if np.all(cnts[mask] == cnts[mask][0]):
        raise NumericalError("degenerate curve: all counts equal; widen the ladder")
    slope, intercept = np.polyfit(np.log(lams[mask]), np.log(cnts[mask]), 1)
    return CountingCurve(lambdas=tuple(float(v) for v in lambdas),
                         counts=tuple(int(c) for c in counts),
                         fitted_exponent=float(-slope),
                         fitted_prefactor=float(math.exp(intercept)))


def counting_curve_1d(m, Q, lambdas, h=DEFAULT_H_1D):
    """1D counts for a decreasing ladder, all on the widest grid.

    One grid (sized for the smallest lambda) serves every rung, so the
    monotonicity of the counts is the exact spectral statement rather than a
    statement about varying grids.
    """
    lambdas = sorted((float(v) for v in lambdas), reverse=True)
    if not isinstance(Q, ReducedPotential):
        raise ConfigurationError("the curve builder needs a ReducedPotential")
    width = TURNING_FACTOR * (Q.ell / lambdas[-1]) ** (1.0 / Q.alpha)
    ys = _line_grid(width, h)
    q = Q.evaluate(ys)
    d = 2.0 * m * m / (h * h) - q
    e = np.full(len(ys) - 1, -m * m / (h * h))
    counts = [tridiagonal_inertia(d, e, -lam) for lam in lambdas]
    return fit_curve(lambdas, counts)


def asymptotics_check(curve, alpha, constant):
    """(exponent_gap, prefactor_ratio) of a curve against the theory.

    The expected exponent is 1/alpha - 1/2 and the expected prefactor the
    closed-form constant; callers assert their own tolerances.
    """
    if not 0.0 < alpha < 2.0:
        raise ConfigurationError("alpha must lie in (0, 2)")
    if not constant > 0.0:
        raise ConfigurationError("the comparison constant must be positive")
    gap = abs(curve.fitted_exponent - (1.0 / alpha - 0.5))
    return gap, curve.fitted_prefactor / constant


# ---------------------------------------------------------------------------
# 2D counts by block inertia


@dataclass(frozen=True)
class Grid2DSpec:
    """Discretization of the half-plane-folded 2D counting problem."""

    hx: float = DEFAULT_HX_2D
    hy: float = DEFAULT_HY_2D
    lx: float = None
    y_width: float = None
    y_factor: float = TURNING_FACTOR
    max_unknowns: int = MAX_UNKNOWNS_2D

    def __post_init__(self):
        if not (self.hx > 0.0 and self.hy > 0.0):
            raise ConfigurationError("grid steps must be positive")


def discrete_threshold(b, lx, nx, hy, k_samples=161):
    """(threshold, k_star): the lattice operator's own band-1 minimum.

    Scans the even-sector fiber at the lattice momentum s(k) = sin(k hy)/hy
    with the dispersion correction mu(k) - s(k)^2, then polishes the scan
    minimum with a bounded 1D minimizer. Every evaluation sits on or above
    the true lattice infimum, and the 2D box spectrum sits above that, so
    this is the correct zero point for lattice eigenvalue counts.
    """

    def value(k):
        s = math.sin(k * hy) / hy
        mu = 2.0 * (1.0 - math.cos(k * hy)) / (hy * hy)
        d, e = fiber.stencil(b, s, Parity.EVEN, lx, nx)
        w = eigh_tridiagonal(d, e, select="i", select_range=(0, 0),
                             eigvals_only=True, check_finite=False)
        return float(w[0]) + (mu - s * s)

    ks = np.linspace(0.0, math.pi / hy, k_samples)
    vals = np.array([value(k) for k in ks])
    i = int(np.argmin(vals))
    if i == 0 or i == len(ks) - 1:
        return float(vals[i]), float(ks[i])
    res = minimize_scalar(value, bounds=(ks[i - 1], ks[i + 1]),
                          method="bounded", options={"xatol": 1e-9})
    if res.fun <= vals[i]:
        return float(res.fun), float(res.x)
    return float(vals[i]), float(ks[i])


def _sector_inertia(d_x, e_x, xs, b, v1_vals, v2_vals, hy, tau):
    """Negative-eigenvalue count of one x-parity sector by block LDL.

    The sector operator is block tridiagonal over y-slices with constant
    diagonal coupling beta = -1/hy^2 + i b x / hy, so each Schur complement
    is the previous one inverted and scaled on both sides; the inertia is
    the sum of the block inertias.
    """
    n = len(d_x)
    base = d_x + 2.0 / (hy * hy) - tau
    beta = -1.0 / (hy * hy) + 1j * b * xs / hy
    idx = np.arange(n - 1)
    negatives = 0
    prev_inv = None
    for j, v2j in enumerate(v2_vals):
        block = np.zeros((n, n), dtype=complex)
        block[np.arange(n), np.arange(n)] = base - v1_vals * v2j
        block[idx, idx + 1] = e_x
        block[idx + 1, idx] = e_x
        if prev_inv is not None:
            block -= np.conj(beta)[:, None] * prev_inv * beta[None, :]
        eigs = np.linalg.eigvalsh(block)
        scale = np.abs(eigs).max()
        if scale == 0.0 or np.abs(eigs).min() < 1e-12 * scale:
            raise NumericalError("near-singular pivot block in the inertia sweep")
        negatives += int((eigs < 0.0).sum())
        if j != len(v2_vals) - 1:
            prev_inv = np.linalg.inv(block)
    return negatives


def count_2d(b, V, lam, spec=Grid2DSpec(), ell_hint=None, threshold=None):
    """N(threshold - lam) of the lattice H0 - V by x-parity block inertia.

    The x-line folds into even (Neumann) and odd (Dirichlet) half-line
    sectors sharing the fiber module's stencils, which requires v1 even; the
    y-extent covers y_factor times the classical turning point of the
    reduced tail ell |y|^{-alpha}.
    """
    if not lam > 0.0:
        raise ConfigurationError("lam must be positive")
    root_b = math.sqrt(b)
    hx, hy = spec.hx, spec.hy
    lx = spec.lx
    if lx is None:
        lx = (1.0 + math.sqrt(2.0) + 5.0) / root_b  # orbit + envelope room
    nx = int(round(lx / hx))
    lx = nx * hx
    probe = np.linspace(0.0, lx, 7)
    if not np.allclose(V.v1(probe), V.v1(-probe), rtol=1e-12, atol=0.0):
        raise ConfigurationError("the x-parity split needs an even v1")
    if threshold is None:
        threshold, _ = discrete_threshold(b, lx, nx, hy)
    if not lam < threshold:
        raise ConfigurationError(
            f"lam must sit inside (0, {threshold:g}), the gap below the band"
        )
    y_width = spec.y_width
    if y_width is None:
        if ell_hint is None:
            ground = fiber.solve(
                fiber.build_problem(b, 0.768 * root_b, Parity.EVEN,
                                    requested_levels=1), 1)[0]
            ell_hint = fiber.expectation(
                ground, np.asarray(V.v1(ground.grid.x), dtype=float))
        y_width = spec.y_factor * (ell_hint / lam) ** (1.0 / V.alpha)
    ny = int(math.ceil(2.0 * y_width / hy))
    ys = (np.arange(ny) - 0.5 * (ny - 1)) * hy
    if (2 * nx - 1) * ny > spec.max_unknowns:
        raise NumericalError(
            f"grid {2 * nx - 1} x {ny} exceeds the budget of "
            f"{spec.max_unknowns} unknowns; raise lam or coarsen"
        )
    V.validate_condition(np.linspace(0.0, lx, 33), np.linspace(ys[0], ys[-1], 65))
    v2_vals = np.asarray(V.v2(ys), dtype=float)
    tau = threshold - lam
    total = 0
    for parity in (Parity.EVEN, Parity.ODD):
        d_x, e_x = fiber.stencil(b, 0.0, parity, lx, nx)
        xs = np.arange(nx, dtype=float) * (lx / nx) if parity is Parity.EVEN \
            else np.arange(1, nx, dtype=float) * (lx / nx)
        v1_vals = np.asarray(V.v1(xs), dtype=float)
        for attempt in range(SINGULAR_RETRIES):
            try:
                total += _sector_inertia(d_x, e_x, xs, b, v1_vals, v2_vals,
                                         hy, tau * (1.0 + attempt * 1e-9))
                break
            except NumericalError:
                if attempt == SINGULAR_RETRIES - 1:
                    raise
    return total


def count_2d_stability(b, V, lam, spec=Grid2DSpec(), ell_hint=None,
                       refine=1.25):
    """(count, refined_count, stable): the count and its refinement probe.

    Recounts on a grid with both steps divided by `refine` (each grid using
    its own discrete threshold); a drift beyond one count flags the result
    as grid-limited rather than raising, so callers can report it.
    """
    base = count_2d(b, V, lam, spec=spec, ell_hint=ell_hint)
    finer = Grid2DSpec(hx=spec.hx / refine, hy=spec.hy / refine, lx=spec.lx,
                       y_width=spec.y_width, y_factor=spec.y_factor,
                       max_unknowns=spec.max_unknowns)
    refined = count_2d(b, V, lam, spec=finer, ell_hint=ell_hint)
    return base, refined, abs(refined - base) <= 1


def counting_curve_2d(b, V, lambdas, spec=Grid2DSpec(), ell_hint=None, jobs=1):
    """2D counts over a ladder on one shared grid, plus the fitted curve.

    Returns (curve, meta) where meta records the shared threshold and grid;
    the shared grid keeps count monotonicity an exact spectral fact. Counts
    at distinct lambdas are independent; jobs > 1 runs them on a thread pool
    (the factorizations release the interpreter lock), with results always
    assembled in ladder order.
    """
    lambdas = sorted((float(v) for v in lambdas), reverse=True)
    root_b = math.sqrt(b)
    lx = spec.lx if spec.lx is not None else (1.0 + math.sqrt(2.0) + 5.0) / root_b
    nx = int(round(lx / spec.hx))
    lx = nx * spec.hx
    threshold, k_star = discrete_threshold(b, lx, nx, spec.hy)
    if ell_hint is None:
        ground = fiber.solve(
            fiber.build_problem(b, 0.768 * root_b, Parity.EVEN,
                                requested_levels=1), 1)[0]
        ell_hint = fiber.expectation(
            ground, np.asarray(V.v1(ground.grid.x), dtype=float))
    y_width = spec.y_factor * (ell_hint / lambdas[-1]) ** (1.0 / V.alpha)
    shared = Grid2DSpec(hx=spec.hx, hy=spec.hy, lx=lx, y_width=y_width,
                        y_factor=spec.y_factor, max_unknowns=spec.max_unknowns)

    def one(lam):
        return count_2d(b, V, lam, spec=shared, ell_hint=ell_hint,
                        threshold=threshold)

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            counts = list(pool.map(one, lambdas))
    else:
        counts = [one(lam) for lam in lambdas]
    curve = fit_curve(lambdas, counts)
    meta = {"threshold": threshold, "k_star": k_star, "lx": lx,
            "y_width": y_width, "hx": spec.hx, "hy": spec.hy,
            "unknowns": (2 * nx - 1) * int(math.ceil(2.0 * y_width / spec.hy))}
    return curve, meta
