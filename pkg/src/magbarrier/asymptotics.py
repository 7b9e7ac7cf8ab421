"""Asymptotic regimes of the band functions.

Deep on the barrier side (k << 0) the effective potential straightens into a
linear wedge and the bands follow Airy-zero predictions with an explicit,
(k,b)-independent error constant. On the open side (k >> 0) each even/odd
pair collapses onto a Landau level with exponentially small parity splitting.
The open-side gaps fall below double precision within a few magnetic lengths
past the minima, so that regime runs a dedicated high-precision path:
an Agmon-sized box, extended-precision Sturm bisection, and two-step
Richardson extrapolation.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal

from . import bands, fiber, specfun
from .errors import ConfigurationError, NumericalError
from .fiber import Parity
from .specfun import AiryKind
from .tridiag import bisect_eigenvalue, richardson3

RESIDUAL_SLACK = 1e-7        # quadrature slack on residual == bound
NORM_TOL = 1e-6              # grid norm of the model state
IDENTITY_TOL = 1e-8          # operator-difference identity
SPLITTING_FLOOR_FACTOR = 1e-13   # times b: below this a splitting is noise
RATE_SLACK = 0.05            # on the -1/4 upper-bound slope
R2_MIN = 0.99
AGMON_BUDGET = 22.0          # weight in the wall placement for precise solves
PRECISE_LEVELS = (1500, 3000, 6000)


def _airy_kind_for_band(j):
    """Even-parity bands probe zeros of Ai', odd-parity bands zeros of Ai."""
    if j % 2 == 1:
        return AiryKind.ZERO_OF_AI_PRIME, (j + 1) // 2, Parity.EVEN
    return AiryKind.ZERO_OF_AI, j // 2, Parity.ODD


@dataclass(frozen=True)
class AiryPrediction:
    """Wedge-model level and its error budget for one band at one k."""

    j: int
    k: float
    b: float
    kind: AiryKind
    z: float
    predicted: float
    bound: float

    def __post_init__(self):
        if not self.bound > 0.0:
            raise ConfigurationError("airy error bound must be positive")


@dataclass(frozen=True)
class AiryCheck:
    """Measured band energy against the wedge-model prediction."""

    prediction: AiryPrediction
    omega: float
    measured_error: float
    passed: bool

    def to_record(self):
        p = self.prediction
        return {"b": p.b, "k": p.k, "j": p.j, "kind": p.kind.value,
                "predicted": p.predicted, "measured": self.omega,
                "measured_error": self.measured_error, "bound": p.bound,
                "pass": self.passed}


@dataclass(frozen=True)
class HOCheck:
    """Signed gaps of one even/odd pair to its Landau level."""

    j: int
    k: float
    b: float
    level: float
    gap_plus: float      # level - omega_plus, positive in theory
    gap_minus: float     # omega_minus - level, positive in theory
    passed: bool

    def to_record(self):
        return {"b": self.b, "k": self.k, "j": self.j, "level": self.level,
                "gap_plus": self.gap_plus, "gap_minus": self.gap_minus,
                "pass": self.passed}


@dataclass(frozen=True)
class SplitSample:
    """One high-precision sample of a pair's gaps."""

    k: float
    gap_plus: float
    gap_minus: float
    splitting: float


@dataclass(frozen=True)
class SplittingFit:
    """Log-linear decay fit of the parity splitting against k^2/b."""

    j: int
    b: float
    rate: float
    r2: float
    passed: bool
    floor: float
    samples: tuple          # every SplitSample, retained or not
    retained: tuple         # the SplitSamples above the floor

    def retained_window(self):
        return (self.retained[0].k, self.retained[-1].k)

    def to_record(self):
        return {"b": self.b, "j": self.j, "rate": self.rate, "r2": self.r2,
                "pass": self.passed, "floor": self.floor,
                "k_retained": list(self.retained_window()),
                "n_retained": len(self.retained),
                "splittings": [[s.k, s.splitting] for s in self.samples]}


def airy_prediction(b, k, j):
    """Wedge-model prediction k^2 - (2b|k|)^{2/3} z and its error bound.

    The bound is D * b^{4/3} (2|k|)^{-2/3} with D^2 the fourth moment of the
    squared Airy eigenfunction over its normalization — independent of (k,b).
    """
    if not k < 0.0:
        raise ConfigurationError("the wedge regime needs k < 0")
    if b <= 0.0:
        raise ConfigurationError("field strength must be positive")
    kind, m, _ = _airy_kind_for_band(j)
    consts = specfun.airy_constants(kind, m)
    sigma2 = (2.0 * b * abs(k)) ** (2.0 / 3.0)
    predicted = k * k - sigma2 * consts.z
    bound = consts.D * b ** (4.0 / 3.0) * (2.0 * abs(k)) ** (-2.0 / 3.0)
    return AiryPrediction(j=j, k=float(k), b=float(b), kind=kind, z=consts.z,
                          predicted=predicted, bound=bound)


def _neighbor_spacing(pred):
    """Distance from this prediction to the nearest neighbor band's."""
    j, k, b = pred.j, pred.k, pred.b
    gaps = []
    if j > 1:
        gaps.append(abs(pred.predicted - airy_prediction(b, k, j - 1).predicted))
    gaps.append(abs(airy_prediction(b, k, j + 1).predicted - pred.predicted))
    return min(gaps)


def _band_pair(b, k, j, resolution=None):
    """Solve just the parity class that owns global band j."""
    _, m, parity = _airy_kind_for_band(j)
    if resolution is None:
        resolution = max(fiber.DEFAULT_RESOLUTION,
                         fiber.minimum_resolution(b, k, requested_levels=m))
    problem = fiber.build_problem(b, k, parity, requested_levels=m,
                                  resolution=resolution)
    return fiber.solve(problem, m, refine=True)[m - 1]


def airy_check(b, k, j, resolution=None):
    """Measure |omega_j(k) - prediction| against the wedge-model bound.

    Requires the bound to be smaller than the spacing to the neighboring
    predictions; otherwise the bound says nothing about this band and the
    check refuses to run.
    """
    pred = airy_prediction(b, k, j)
    spacing = _neighbor_spacing(pred)
    if not pred.bound < spacing:
        raise ConfigurationError(
            f"|k|={abs(k):g} is not deep enough in the wedge regime: bound "
            f"{pred.bound:.3g} >= neighbor spacing {spacing:.3g}"
        )
    pair = _band_pair(b, k, j, resolution)
    measured = abs(pair.omega - pred.predicted)
    return AiryCheck(prediction=pred, omega=pair.omega,
                     measured_error=measured, passed=bool(measured <= pred.bound))


def airy_residual(b, k, j, resolution=None):
    """|| (h(k) - prediction) Psi || for the normalized wedge-model state.

    The kinetic term is applied analytically through the Airy equation, so
    the residual carries no stencil error; it must equal ||b^2 x^2 Psi||
    because the full and wedge operators differ by exactly that multiplier.
    """
    pred = airy_prediction(b, k, j)
    kind, m, parity = _airy_kind_for_band(j)
    consts = specfun.airy_constants(kind, m)
    if resolution is None:
        resolution = max(fiber.DEFAULT_RESOLUTION,
                         fiber.minimum_resolution(b, k, requested_levels=m))
    problem = fiber.build_problem(b, k, parity, requested_levels=m,
                                  resolution=resolution)
    x = problem.grid.x
    h = problem.grid.h
    sigma = (2.0 * b * abs(k)) ** (1.0 / 3.0)
    norm_c = math.sqrt(sigma / (2.0 * consts.c))
    t = sigma * x + consts.z
    ai = np.array([specfun.airy_ai(ti) for ti in t])
    psi = norm_c * ai

    def half_line_norm(values):
        w = values * values
        return math.sqrt(2.0 * h * (0.5 * w[0] + w[1:].sum()))

    norm = half_line_norm(psi)
    if abs(norm - 1.0) > NORM_TOL:
        raise NumericalError(
            f"wedge-model state norm {norm} off unity beyond {NORM_TOL:g}"
        )
    v = (k - b * x) ** 2
    residual_samples = -norm_c * sigma * sigma * t * ai + (v - pred.predicted) * psi
    residual = half_line_norm(residual_samples)
    direct = half_line_norm(b * b * x * x * psi)
    if abs(residual - direct) > IDENTITY_TOL * max(1.0, direct):
        raise NumericalError(
            f"operator-difference identity broken: {residual} vs {direct}"
        )
    if not residual <= pred.bound * (1.0 + RESIDUAL_SLACK):
        raise NumericalError(
            f"residual {residual} exceeds bound {pred.bound}"
        )
    return residual


def _precise_box(b, k, pair_j):
    """Wall placement for the open-side high-precision solve.

    The pair's states sit in a well centered at k/b; the wall goes far enough
    past the turning point that the Agmon weight kills the truncation error
    below extended-precision resolution.
    """
    if not k > 0.0:
        raise ConfigurationError("the open-side path needs k > 0")
    center = k / b
    width = (math.sqrt(2.0 * AGMON_BUDGET) + math.sqrt(2.0 * pair_j + 1.0))
    return center + width / math.sqrt(b)


def _precise_eigenvalue(b, k, parity, index, L, N, seed):
    """Eigenvalue `index` of the parity sector in extended precision."""
    ld = np.longdouble
    h = ld(L) / ld(N)
    inv_h2 = ld(1.0) / (h * h)
    bt, kt = ld(b), ld(k)
    if Parity(parity) is Parity.EVEN:
        x = np.arange(N, dtype=ld) * h
        d = 2.0 * inv_h2 + (kt - bt * x) ** 2
        e2 = np.full(N - 1, inv_h2 * inv_h2, dtype=ld)
        e2[0] = 2.0 * inv_h2 * inv_h2
    else:
        x = np.arange(1, N, dtype=ld) * h
        d = 2.0 * inv_h2 + (kt - bt * x) ** 2
        e2 = np.full(N - 2, inv_h2 * inv_h2, dtype=ld)
    lo = ld(seed) - ld(1e-6) * max(1.0, abs(seed))
    hi = ld(seed) + ld(1e-6) * max(1.0, abs(seed))
    return bisect_eigenvalue(d, e2, index, lo, hi)


def omega_pair_precise(b, k, j, levels=PRECISE_LEVELS):
    """(omega_plus, omega_minus) of pair j in extended precision.

    Solves both parity sectors on an Agmon-sized box at three grid steps and
    extrapolates twice, so gap structure is resolved down to the extended
    floating-point floor rather than double roundoff.
    """
    L = _precise_box(b, k, j)
    out = []
    for parity in (Parity.EVEN, Parity.ODD):
        values = []
        for N in levels:
            d, e = fiber.stencil(b, k, parity, L, N)
            seed = eigh_tridiagonal(d, e, select="i", select_range=(j - 1, j - 1),
                                    check_finite=False, eigvals_only=True)[0]
            values.append(_precise_eigenvalue(b, k, parity, j - 1, L, N, seed))
        out.append(float(richardson3(*values)))
    return out[0], out[1]


_KAPPA_CACHE = {}


def _kappa(j, b):
    key = (j, float(b))
    if key not in _KAPPA_CACHE:
        _KAPPA_CACHE[key] = bands.find_minimum(j, b).kappa
    return _KAPPA_CACHE[key]


def ho_check(b, k, j, kappa=None):
    """Signed gaps of pair j to its Landau level at one k >= kappa_j.

    gap_plus = level - omega_plus and gap_minus = omega_minus - level; both
    are positive in exact arithmetic and `passed` reports whether the signs
    came out right. Past a few magnetic lengths the true gaps undercut even
    the extended-precision floor, where the signs are no longer meaningful;
    the magnitudes still are.
    """
    kappa = _kappa(j, b) if kappa is None else kappa
    if k < kappa:
        raise ConfigurationError(
            f"open-side check needs k >= kappa_{j} = {kappa:.6g}, got {k:g}"
        )
    level = (2.0 * j - 1.0) * b
    omega_plus, omega_minus = omega_pair_precise(b, k, j)
    gap_plus = level - omega_plus
    gap_minus = omega_minus - level
    return HOCheck(j=j, k=float(k), b=float(b), level=level,
                   gap_plus=gap_plus, gap_minus=gap_minus,
                   passed=bool(gap_plus > 0.0 and gap_minus > 0.0))


def splitting_fit(b, j, k_samples, kappa=None):
    """Least-squares decay rate of the parity splitting against k^2/b.

    Only the upper-bound consistency is asserted: the fitted slope must not
    exceed -1/4 + 0.05 (the claimed envelope decays like exp(-k^2/(4b));
    the actual splitting falls faster and no lower bound is claimed).
    Samples whose splitting sits below the floating floor carry no sign or
    magnitude information and are excluded, with the retained window kept
    in the result.
    """
    kappa = _kappa(j, b) if kappa is None else kappa
    ks = [float(k) for k in k_samples]
    if len(ks) < 3:
        raise ConfigurationError("need at least 3 samples for a decay fit")
    entry = kappa + math.sqrt(b)
    if min(ks) < entry:
        raise ConfigurationError(
            f"samples must start past kappa_{j} + b^(1/2) = {entry:.6g}"
        )
    floor = SPLITTING_FLOOR_FACTOR * b
    samples = []
    for k in sorted(ks):
        omega_plus, omega_minus = omega_pair_precise(b, k, j)
        level = (2.0 * j - 1.0) * b
        samples.append(SplitSample(k=k, gap_plus=level - omega_plus,
                                   gap_minus=omega_minus - level,
                                   splitting=omega_minus - omega_plus))
    retained = [s for s in samples if s.splitting > floor]
    if len(retained) < 3:
        raise NumericalError(
            f"splitting below the {floor:.3g} floor on all but "
            f"{len(retained)} samples; use smaller k"
        )
    xs = np.array([s.k * s.k / b for s in retained])
    ys = np.array([math.log(s.splitting / b) for s in retained])
    slope, intercept = np.polyfit(xs, ys, 1)
    fitted = slope * xs + intercept
    ss_res = float(((ys - fitted) ** 2).sum())
    ss_tot = float(((ys - ys.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot
    nonneg = all(s.splitting >= 0.0 for s in retained)
    passed = bool(slope <= -0.25 + RATE_SLACK and nonneg)
    return SplittingFit(j=j, b=float(b), rate=float(slope), r2=r2,
                        passed=passed, floor=floor, samples=tuple(samples),
                        retained=tuple(retained))
