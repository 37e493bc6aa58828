"""
Negative binomial law in the (mean, dispersion) parameterisation.

``Y ~ NB(lam, phi)`` has ``E[Y] = lam`` and ``Var[Y] = lam + lam**2 / phi`` and
arises as ``Y | Z ~ Poisson(lam * Z)`` with ``Z ~ Gamma(phi, rate=phi)``.
Everything is evaluated in log space; cdf and expectations walk outward from
the mode with the pmf ratio recurrence and stop on a geometric tail bound.
"""

import math
from dataclasses import dataclass

import numpy as np
from numba import njit, vectorize

from tvdingarch.errors import DomainError, NumericError, TruncationError
from tvdingarch.specfun import _digamma, _lgamma, _trigamma

__all__ = [
    "NbParams",
    "nb_log_pmf",
    "nb_pmf",
    "nb_cdf",
    "nb_quantile",
    "nb_mode",
    "nb_sample",
    "nb_moment",
    "nb_expected_trigamma",
    "nb_digamma_variance",
]

# absolute mass allowed to be dropped from cdf sums
_CDF_TAIL = 1e-18
_CAP = 1_000_000


@dataclass(frozen=True)
class NbParams:
    """Mean ``lam`` and dispersion ``phi`` of a negative binomial law."""

    lam: float
    phi: float

    def __post_init__(self):
        for name in ("lam", "phi"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise DomainError(f"NbParams.{name} must be finite and > 0, got {v!r}")

    @property
    def variance(self):
        return self.lam + self.lam**2 / self.phi


@njit(cache=True)
def _logpmf(y, lam, phi):
    out = -y * math.log1p(phi / lam) - phi * math.log1p(lam / phi)
    if y > 0:
        out += _lgamma(y + phi) - _lgamma(phi) - _lgamma(y + 1.0)
    return out


@vectorize(["float64(float64, float64, float64)"], cache=True)
def _logpmf_v(y, lam, phi):
    return _logpmf(y, lam, phi)


@njit(cache=True)
def _mode(lam, phi):
    c = lam * (1.0 - 1.0 / phi) - 1.0
    m = 0.0
    if c > 0.0:
        m = math.ceil(c)
    # guard against rounding in c; ties resolve to the smaller count
    while m > 0.0 and _logpmf(m - 1.0, lam, phi) >= _logpmf(m, lam, phi):
        m -= 1.0
    while _logpmf(m + 1.0, lam, phi) > _logpmf(m, lam, phi):
        m += 1.0
    return m


@njit(cache=True)
def _cdf(y, lam, phi):
    if y < 0.0:
        return 0.0
    p = lam / (lam + phi)
    m = _mode(lam, phi)
    sd = math.sqrt(lam + lam * lam / phi)
    if y - m > 40.0 * sd + 200.0:
        # far upper tail: complement of the (tiny) remaining mass
        term = math.exp(_logpmf(y + 1.0, lam, phi))
        tail = 0.0
        k = y + 1.0
        while term > 0.0:
            tail += term
            r = (k + phi) / (k + 1.0) * p
            rho = max(r, p)
            if rho < 1.0 and term * rho / (1.0 - rho) < _CDF_TAIL:
                break
            term *= r
            k += 1.0
        return max(0.0, 1.0 - tail)
    start = min(y, m)
    term = math.exp(_logpmf(start, lam, phi))
    total = _sum_down(start, term, m, lam, phi, p)
    # mass between the mode and y, built from the mode so nothing is subnormal
    k = m
    while k < y:
        r = (k + phi) / (k + 1.0) * p
        term *= r
        k += 1.0
        total += term
        rho = max(r, p)
        if rho < 1.0 and term * rho / (1.0 - rho) < _CDF_TAIL:
            break
    return min(1.0, total)


@njit(cache=True)
def _sum_down(k, term, m, lam, phi, p):
    total = 0.0
    while True:
        total += term
        if k <= 0.0:
            break
        q = k / ((k - 1.0 + phi) * p)
        if k <= m and q < 1.0 and term * q / (1.0 - q) < _CDF_TAIL:
            break
        term *= q
        k -= 1.0
    return total


@vectorize(["float64(float64, float64, float64)"], cache=True)
def _cdf_v(y, lam, phi):
    return _cdf(y, lam, phi)


@njit(cache=True)
def _support(lam, phi, tail, cap):
    """pmf weights on [lo, hi] with neglected mass below ``tail``.

    Returns (lo, weights, ok); ok is False when ``cap`` terms were not enough.
    """
    p = lam / (lam + phi)
    m = _mode(lam, phi)
    pm = math.exp(_logpmf(m, lam, phi))
    half = 0.5 * tail
    # upward extent
    term = 1.0
    k = m
    n_up = 0
    ok = True
    while True:
        r = (k + phi) / (k + 1.0) * p
        rho = max(r, p)
        if rho < 1.0 and pm * term * rho / (1.0 - rho) < half:
            break
        term *= r
        k += 1.0
        n_up += 1
        if n_up > cap:
            ok = False
            break
    # downward extent
    term = 1.0
    k = m
    n_down = 0
    while k > 0.0:
        q = k / ((k - 1.0 + phi) * p)
        if q < 1.0 and pm * term * q / (1.0 - q) < half:
            break
        term *= q
        k -= 1.0
        n_down += 1
        if n_down > cap:
            ok = False
            break
    lo = m - n_down
    w = np.empty(n_down + n_up + 1)
    w[n_down] = pm
    for i in range(n_down - 1, -1, -1):
        kk = lo + i + 1.0
        w[i] = w[i + 1] * kk / ((kk - 1.0 + phi) * p)
    for i in range(n_down + 1, n_down + n_up + 1):
        kk = lo + i - 1.0
        w[i] = w[i - 1] * (kk + phi) / (kk + 1.0) * p
    return lo, w, ok


@njit(cache=True)
def _expected_trigamma(lam, phi, tail, cap):
    lo, w, ok = _support(lam, phi, tail, cap)
    acc = 0.0
    for i in range(w.shape[0]):
        acc += w[i] * _trigamma(lo + i + phi)
    return acc, ok


@njit(cache=True)
def _digamma_variance(lam, phi, tail, cap):
    # centred at the closed-form mean Ψ(phi) + log1p(lam/phi)
    lo, w, ok = _support(lam, phi, tail, cap)
    centre = _digamma(phi) + math.log1p(lam / phi)
    acc = 0.0
    for i in range(w.shape[0]):
        d = _digamma(lo + i + phi) - centre
        acc += w[i] * d * d
    return acc, ok


def _as_counts(y):
    arr = np.asarray(y, dtype=float)
    if np.any(arr < 0) or np.any(arr != np.floor(arr)):
        raise DomainError("counts must be nonnegative integers")
    return arr


def nb_log_pmf(p, y):
    """Log probability of count(s) `y` under ``NB(p.lam, p.phi)``."""
    arr = _as_counts(y)
    out = _logpmf_v(arr, p.lam, p.phi)
    return float(out) if arr.ndim == 0 else out


def nb_pmf(p, y):
    return np.exp(nb_log_pmf(p, y))


def nb_cdf(p, y):
    """``P(Y <= y)``; negative `y` gives 0."""
    arr = np.floor(np.asarray(y, dtype=float))
    out = _cdf_v(arr, p.lam, p.phi)
    return float(out) if arr.ndim == 0 else out


def nb_quantile(p, q):
    """Smallest count ``y`` with ``nb_cdf(p, y) >= q``, for ``0 < q < 1``."""
    if not 0.0 < q < 1.0:
        raise DomainError(f"quantile level must lie in (0, 1), got {q!r}")
    if _cdf(0.0, p.lam, p.phi) >= q:
        return 0
    lo = 0
    hi = max(1, math.ceil(p.lam))
    while _cdf(float(hi), p.lam, p.phi) < q:
        lo = hi
        hi *= 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if _cdf(float(mid), p.lam, p.phi) >= q:
            hi = mid
        else:
            lo = mid
    return hi


def nb_mode(p):
    """Most probable count; ties go to the smaller value."""
    return int(_mode(p.lam, p.phi))


def nb_sample(p, rng, size=None):
    """Draw from the gamma-Poisson mixture.

    Parameters
    ----------
    p : NbParams
    rng : numpy.random.Generator
        Caller-owned stream; the only state this touches.
    size : int or tuple, optional
        Output shape.  ``None`` returns a single ``int``.
    """
    z = rng.gamma(p.phi, 1.0 / p.phi, size=size)
    y = rng.poisson(p.lam * z)
    return int(y) if size is None else y


def nb_moment(p, d):
    """d-th raw moment from the recursion seeded with ``E[Y] = lam``."""
    if d < 1 or int(d) != d:
        raise DomainError(f"moment order must be a positive integer, got {d!r}")
    moments = [p.lam]
    for order in range(2, int(d) + 1):
        acc = 1.0
        for j in range(1, order):
            coef = math.comb(order - 1, j) + math.comb(order - 1, j - 1) / p.phi
            acc += coef * moments[j - 1]
        value = p.lam * acc
        if not math.isfinite(value):
            raise OverflowError(f"moment recursion overflowed at order {order}")
        moments.append(value)
    return moments[-1]


def nb_expected_trigamma(p, tail=1e-12, cap=_CAP):
    """``E[Ψ'(Y + phi)]`` by truncated summation over the pmf."""
    value, ok = _expected_trigamma(p.lam, p.phi, tail, cap)
    if not ok:
        raise TruncationError(f"tail bound {tail} not met within {cap} terms")
    return value


def nb_digamma_variance(p, tail=1e-12, cap=_CAP):
    """``Var[Ψ(Y + phi)]`` by truncated summation over the pmf."""
    value, ok = _digamma_variance(p.lam, p.phi, tail, cap)
    if not ok:
        raise TruncationError(f"tail bound {tail} not met within {cap} terms")
    if not math.isfinite(value):
        raise NumericError("non-finite digamma variance")
    return value
