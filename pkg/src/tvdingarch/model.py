"""
Linear time-varying-dispersion NB-INGARCH(1,1,1,1) process.

    lam_t = beta0 + beta1 * y_{t-1} + beta2 * lam_{t-1}
    phi_t = alpha0 + alpha1 * y_{t-1} + alpha2 * phi_{t-1}
    y_t | past ~ NB(lam_t, phi_t)

Parameter vectors are always ordered (beta0, beta1, beta2, alpha0, alpha1,
alpha2).  Arrays are zero-based: index 0 holds t = 1.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from tvdingarch.errors import DegenerateDataError, DomainError, NumericError

__all__ = [
    "PARAM_NAMES",
    "ModelParams",
    "CountSeries",
    "LatentPath",
    "StationarityReport",
    "as_counts",
    "update_state",
    "check_stationarity",
    "latent_path",
    "simulate",
    "init_state",
    "PHI_CAP",
]

PARAM_NAMES = ("beta0", "beta1", "beta2", "alpha0", "alpha1", "alpha2")

# stand-in for the Poisson limit when the sample is not overdispersed
PHI_CAP = 1e4


@dataclass(frozen=True)
class ModelParams:
    beta0: float
    beta1: float = 0.0
    beta2: float = 0.0
    alpha0: float = 1.0
    alpha1: float = 0.0
    alpha2: float = 0.0

    def __post_init__(self):
        values = self.as_array()
        if not np.all(np.isfinite(values)):
            raise DomainError("model parameters must be finite")
        if self.beta0 <= 0 or self.alpha0 <= 0:
            raise DomainError("beta0 and alpha0 must be > 0")
        if min(self.beta1, self.beta2, self.alpha1, self.alpha2) < 0:
            raise DomainError("beta1, beta2, alpha1, alpha2 must be >= 0")

    def as_array(self):
        return np.array([getattr(self, k) for k in PARAM_NAMES], dtype=float)

    @classmethod
    def from_array(cls, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (6,):
            raise DomainError(f"expected 6 parameters, got shape {theta.shape}")
        return cls(*(float(v) for v in theta))

    def as_dict(self):
        return {k: float(getattr(self, k)) for k in PARAM_NAMES}

    @property
    def rate_sum(self):
        return self.beta1 + self.beta2 + self.alpha1 + self.alpha2


@dataclass
class CountSeries:
    counts: np.ndarray
    labels: list = None

    def __post_init__(self):
        self.counts = as_counts(self.counts)
        if self.labels is not None and len(self.labels) != len(self.counts):
            raise DomainError("labels and counts differ in length")

    def __len__(self):
        return len(self.counts)


@dataclass
class LatentPath:
    """Conditional means and dispersions aligned with the counts.

    ``dlam`` holds d lam_t / d(beta0, beta1, beta2) and ``dphi`` holds
    d phi_t / d(alpha0, alpha1, alpha2), both of shape (n, 3), when requested.
    """

    lam: np.ndarray
    phi: np.ndarray
    dlam: np.ndarray = None
    dphi: np.ndarray = None


@dataclass(frozen=True)
class StationarityReport:
    practical_sum: float
    norm_bound: float
    is_stationary_practical: bool
    is_stationary_theorem: bool
    A: np.ndarray = field(repr=False, compare=False, default=None)
    B: np.ndarray = field(repr=False, compare=False, default=None)


def as_counts(y):
    """Validated float64 copy of a count series (CountSeries or array-like)."""
    if isinstance(y, CountSeries):
        return y.counts
    arr = np.asarray(y, dtype=float).ravel()
    if arr.size and (not np.all(np.isfinite(arr)) or np.any(arr < 0) or np.any(arr != np.floor(arr))):
        raise DomainError("counts must be finite nonnegative integers")
    return arr


def update_state(p, y_prev, lambda_prev, phi_prev):
    """One step of the mean and dispersion recursions."""
    if lambda_prev <= 0 or phi_prev <= 0 or y_prev < 0:
        raise DomainError("update_state needs lambda_prev, phi_prev > 0 and y_prev >= 0")
    lam = p.beta0 + p.beta1 * y_prev + p.beta2 * lambda_prev
    phi = p.alpha0 + p.alpha1 * y_prev + p.alpha2 * phi_prev
    return lam, phi


def check_stationarity(p):
    """Report both the practical sum condition and the induced-norm condition.

    The practical check is ``beta1 + beta2 + alpha1 + alpha2 < 1``.  The norm
    condition takes A = diag(beta2, alpha2), B = diag(beta1, alpha1) and the
    minimum over p in {1, 2, inf} of ``||A||_p + 2**(1 - 1/p) ||B||_p``.
    """
    A = np.diag([p.beta2, p.alpha2])
    B = np.diag([p.beta1, p.alpha1])
    # every induced p-norm of a diagonal matrix is its largest |entry|
    norm_a = max(p.beta2, p.alpha2)
    norm_b = max(p.beta1, p.alpha1)
    norm_bound = min(norm_a + 2.0 ** (1.0 - 1.0 / order) * norm_b for order in (1.0, 2.0, math.inf))
    practical = p.rate_sum
    return StationarityReport(
        practical_sum=practical,
        norm_bound=norm_bound,
        is_stationary_practical=practical < 1.0,
        is_stationary_theorem=norm_bound < 1.0,
        A=A,
        B=B,
    )


@njit(cache=True)
def _path(theta, y, lam1, phi1):
    n = y.shape[0]
    lam = np.empty(n)
    phi = np.empty(n)
    lam[0] = lam1
    phi[0] = phi1
    b0, b1, b2, a0, a1, a2 = theta[0], theta[1], theta[2], theta[3], theta[4], theta[5]
    for t in range(1, n):
        lam[t] = b0 + b1 * y[t - 1] + b2 * lam[t - 1]
        phi[t] = a0 + a1 * y[t - 1] + a2 * phi[t - 1]
    return lam, phi


@njit(cache=True)
def _path_derivs(theta, y, lam1, phi1):
    n = y.shape[0]
    lam, phi = _path(theta, y, lam1, phi1)
    dlam = np.zeros((n, 3))
    dphi = np.zeros((n, 3))
    b2 = theta[2]
    a2 = theta[5]
    for t in range(1, n):
        dlam[t, 0] = 1.0 + b2 * dlam[t - 1, 0]
        dlam[t, 1] = y[t - 1] + b2 * dlam[t - 1, 1]
        dlam[t, 2] = lam[t - 1] + b2 * dlam[t - 1, 2]
        dphi[t, 0] = 1.0 + a2 * dphi[t - 1, 0]
        dphi[t, 1] = y[t - 1] + a2 * dphi[t - 1, 1]
        dphi[t, 2] = phi[t - 1] + a2 * dphi[t - 1, 2]
    return lam, phi, dlam, dphi


def latent_path(p, y, lambda1, phi1, with_derivatives=False):
    """Iterate the recursions over `y` from fixed starting values.

    Derivative sequences start at zero at t = 1 because the starting values
    do not depend on the parameters.
    """
    y = as_counts(y)
    if y.size < 1:
        raise DegenerateDataError("empty count series")
    if not (lambda1 > 0 and phi1 > 0):
        raise DomainError("initial lambda and phi must be > 0")
    theta = p.as_array()
    if with_derivatives:
        lam, phi, dlam, dphi = _path_derivs(theta, y, float(lambda1), float(phi1))
    else:
        lam, phi = _path(theta, y, float(lambda1), float(phi1))
        dlam = dphi = None
    if not (np.all(np.isfinite(lam)) and np.all(np.isfinite(phi))):
        raise NumericError("latent path overflowed")
    return LatentPath(lam, phi, dlam, dphi)


def simulate(p, n, lambda1, phi1, rng, burnin=0, enforce_stationarity=False):
    """Simulate `n` counts and the latent path that generated them.

    Parameters
    ----------
    p : ModelParams
    n : int
        Number of returned observations (>= 2).
    lambda1, phi1 : float
        State at the first simulated step.
    rng : numpy.random.Generator
    burnin : int, default 0
        Extra leading draws that are generated and discarded.
    enforce_stationarity : bool, default False
        Raise instead of warn when the practical condition fails.

    Returns
    -------
    counts : ndarray of int64
    path : LatentPath
    """
    if n < 2:
        raise DomainError("simulate needs n >= 2")
    if not (lambda1 > 0 and phi1 > 0):
        raise DomainError("initial lambda and phi must be > 0")
    report = check_stationarity(p)
    if not report.is_stationary_practical:
        msg = f"rate sum {report.practical_sum:.4g} >= 1; the process may not be stationary"
        if enforce_stationarity:
            raise DomainError(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    total = n + burnin
    y = np.empty(total, dtype=np.int64)
    lam = np.empty(total)
    phi = np.empty(total)
    b0, b1, b2, a0, a1, a2 = p.as_array()
    lt, ft = float(lambda1), float(phi1)
    gamma = rng.gamma
    poisson = rng.poisson
    for t in range(total):
        if t > 0:
            prev = y[t - 1]
            lt = b0 + b1 * prev + b2 * lt
            ft = a0 + a1 * prev + a2 * ft
        lam[t] = lt
        phi[t] = ft
        y[t] = poisson(lt * gamma(ft, 1.0 / ft))
    return y[burnin:], LatentPath(lam[burnin:], phi[burnin:])


def init_state(y):
    """Moment-based starting values (lambda1, phi1) for a count series.

    ``lambda1`` is the sample mean; ``phi1`` solves ``s2 = m + m**2 / phi``
    with the unbiased sample variance, or is ``PHI_CAP`` when the sample is not
    overdispersed.
    """
    y = as_counts(y)
    if y.size < 2:
        raise DegenerateDataError("init_state needs at least two observations")
    m = float(np.mean(y))
    if m <= 0:
        raise DegenerateDataError("all-zero count series")
    s2 = float(np.var(y, ddof=1))
    phi1 = m * m / (s2 - m) if s2 > m else PHI_CAP
    return m, min(phi1, PHI_CAP)
