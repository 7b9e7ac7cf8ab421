"""Special-function kernel: Airy values, zeros and moment integrals,
oscillator eigenfunctions, and log-Beta.

Point values delegate to scipy.special. What this module pins down is the
set of conventions everything downstream relies on: Airy zeros are negative
and strictly decreasing in j, the Ai' zeros belong to even states and the Ai
zeros to odd ones, half-line moments are taken against Ai(v + z)^2, and
oscillator eigenfunctions are L2-normalized over the full line.
"""

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import special
from scipy.integrate import quad

from .errors import ConfigurationError, NumericalError

AIRY_ZERO_MAX_J = 64
HERMITE_MAX_J = 60
AIRY_ARG_MIN = -1.0e6
MOMENT_POWERS = (0, 4)
MOMENT_REL_TOL = 1.0e-10


class AiryKind(enum.Enum):
    """Which Airy zero family a band belongs to."""

    ZERO_OF_AI = "ai"          # Dirichlet at 0: odd states
    ZERO_OF_AI_PRIME = "aip"   # Neumann at 0: even states


def _check_airy_arg(x):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ConfigurationError("airy argument must be finite")
    if np.any(arr < AIRY_ARG_MIN):
        raise ConfigurationError(f"airy argument below {AIRY_ARG_MIN:g} is out of domain")
    return arr


def airy_ai(x):
    """Ai(x), elementwise; scalar in gives scalar out."""
    arr = _check_airy_arg(x)
    val = special.airy(arr)[0]
    return float(val) if np.isscalar(x) else val


def airy_ai_prime(x):
    """Ai'(x), elementwise; scalar in gives scalar out."""
    arr = _check_airy_arg(x)
    val = special.airy(arr)[1]
    return float(val) if np.isscalar(x) else val


_ZERO_CACHE = {}


def airy_zero(kind, j):
    """j-th zero (j >= 1) of Ai or Ai'; negative, strictly decreasing in j."""
    if j < 1:
        raise ConfigurationError("airy zero index starts at 1")
    if j > AIRY_ZERO_MAX_J:
        raise ConfigurationError(f"airy zero index {j} exceeds capability {AIRY_ZERO_MAX_J}")
    kind = AiryKind(kind)
    if kind not in _ZERO_CACHE or len(_ZERO_CACHE[kind]) < j:
        a, ap, _, _ = special.ai_zeros(max(j, 16))
        # scipy's tables drift to ~1e-11 at larger j; two Newton polishes
        # bring every zero to machine precision (Ai'' = x Ai for the primes)
        for _ in range(2):
            ai, aip, _, _ = special.airy(a)
            a = a - ai / aip
            ai, aip, _, _ = special.airy(ap)
            ap = ap - aip / (ap * ai)
        _ZERO_CACHE[AiryKind.ZERO_OF_AI] = a
        _ZERO_CACHE[AiryKind.ZERO_OF_AI_PRIME] = ap
    return float(_ZERO_CACHE[kind][j - 1])


def airy_moment(kind, j, power):
    """Half-line moment integral(0, inf) v^power * Ai(v + z_{kind,j})^2 dv.

    power 0 is the normalization c_{X,j}; power 4 the numerator of D_{X,j}^2.
    Relative accuracy 1e-10 or a NumericalError carrying the achieved bound.
    """
    if power not in MOMENT_POWERS:
        raise ConfigurationError(f"moment power must be one of {MOMENT_POWERS}")
    z = airy_zero(kind, j)
    # Ai(s)^2 < 1e-21 beyond s = 20, so the tail past v = 25 + |z| is dead.
    upper = 25.0 + abs(z)

    def integrand(v):
        ai = special.airy(v + z)[0]
        return v ** power * ai * ai

    val, err = quad(integrand, 0.0, upper, epsabs=1e-15, epsrel=1e-12, limit=200)
    if not (val > 0.0) or err > MOMENT_REL_TOL * val:
        raise NumericalError(
            f"airy moment quadrature achieved {err:.3e} on value {val:.6e}, "
            f"needs rel {MOMENT_REL_TOL:g}"
        )
    return val


@dataclass(frozen=True)
class AiryConstants:
    """Zero, normalization, and error constant for one (kind, j)."""

    kind: AiryKind
    j: int
    z: float
    c: float
    D: float

    def __post_init__(self):
        if not (self.z < 0.0 and self.c > 0.0 and self.D > 0.0):
            raise ConfigurationError("airy constants must satisfy z < 0, c > 0, D > 0")


def airy_constants(kind, j):
    """Assemble (z, c, D) with D = sqrt(moment4 / moment0)."""
    kind = AiryKind(kind)
    z = airy_zero(kind, j)
    c = airy_moment(kind, j, 0)
    m4 = airy_moment(kind, j, 4)
    return AiryConstants(kind=kind, j=j, z=z, c=c, D=math.sqrt(m4 / c))


def hermite_eigenfunction(j, b, x, k=0.0):
    """Oscillator eigenfunction of p^2 + (k - b x)^2 at level j, evaluated at x.

    Centered at k/b, width b^{-1/2}, L2 norm 1 over the line. Uses the
    normalized three-term recurrence, stable for all admissible j.
    """
    if j < 0:
        raise ConfigurationError("oscillator level must be nonnegative")
    if j > HERMITE_MAX_J:
        raise ConfigurationError(f"oscillator level {j} exceeds capability {HERMITE_MAX_J}")
    if b <= 0.0:
        raise ConfigurationError("field strength must be positive")
    t = np.sqrt(b) * (np.asarray(x, dtype=float) - k / b)
    phi_prev = np.pi ** -0.25 * np.exp(-0.5 * t * t)
    if j == 0:
        out = b ** 0.25 * phi_prev
        return float(out) if np.isscalar(x) else out
    phi = np.sqrt(2.0) * t * phi_prev
    for n in range(2, j + 1):
        phi, phi_prev = t * np.sqrt(2.0 / n) * phi - np.sqrt((n - 1.0) / n) * phi_prev, phi
    out = b ** 0.25 * phi
    return float(out) if np.isscalar(x) else out


def log_beta(a, b):
    """ln B(a, b) through log-Gamma; exp of the result is accurate to 1e-12."""
    if a <= 0.0 or b <= 0.0:
        raise ConfigurationError("log_beta needs positive arguments")
    return float(special.gammaln(a) + special.gammaln(b) - special.gammaln(a + b))
