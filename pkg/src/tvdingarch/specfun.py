"""
Real special functions on the positive half-line.

log-gamma, digamma, trigamma and tetragamma are evaluated by shifting the
argument above ``_SHIFT`` with the usual recurrences and summing the
asymptotic (Stirling / Bernoulli) series there.  The ``_``-prefixed scalar
kernels are compiled with numba and are what the likelihood code calls in
its inner loops; the public wrappers validate input and broadcast over
arrays.
"""

import math

import numpy as np
from numba import njit, vectorize

from tvdingarch.errors import DomainError

__all__ = [
    "log_gamma",
    "digamma",
    "trigamma",
    "tetragamma",
    "tetragamma_bound",
]

_SHIFT = 10.0
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@njit(cache=True)
def _lgamma(x):
    if x == 1.0 or x == 2.0:
        return 0.0
    shift = 0.0
    prod = 1.0
    while x < _SHIFT:
        prod *= x
        x += 1.0
        # keep the running product in range for very small or large shifts
        if prod > 1e280 or prod < 1e-280:
            shift += math.log(prod)
            prod = 1.0
    shift += math.log(prod)
    z = 1.0 / x
    z2 = z * z
    series = z * (
        1.0 / 12.0
        + z2 * (-1.0 / 360.0
        + z2 * (1.0 / 1260.0
        + z2 * (-1.0 / 1680.0
        + z2 * (1.0 / 1188.0
        + z2 * (-691.0 / 360360.0
        + z2 * (1.0 / 156.0)))))))
    return (x - 0.5) * math.log(x) - x + _HALF_LOG_2PI + series - shift


@njit(cache=True)
def _digamma(x):
    acc = 0.0
    while x < _SHIFT:
        acc -= 1.0 / x
        x += 1.0
    z2 = 1.0 / (x * x)
    series = z2 * (
        1.0 / 12.0
        + z2 * (-1.0 / 120.0
        + z2 * (1.0 / 252.0
        + z2 * (-1.0 / 240.0
        + z2 * (1.0 / 132.0
        + z2 * (-691.0 / 32760.0
        + z2 * (1.0 / 12.0)))))))
    return acc + math.log(x) - 0.5 / x - series


@njit(cache=True)
def _trigamma(x):
    acc = 0.0
    while x < _SHIFT:
        acc += 1.0 / (x * x)
        x += 1.0
    z = 1.0 / x
    z2 = z * z
    series = z * (
        1.0
        + z * 0.5
        + z2 * (1.0 / 6.0
        + z2 * (-1.0 / 30.0
        + z2 * (1.0 / 42.0
        + z2 * (-1.0 / 30.0
        + z2 * (5.0 / 66.0
        + z2 * (-691.0 / 2730.0
        + z2 * (7.0 / 6.0))))))))
    return acc + series


@njit(cache=True)
def _tetragamma(x):
    acc = 0.0
    while x < _SHIFT:
        acc -= 2.0 / (x * x * x)
        x += 1.0
    z = 1.0 / x
    z2 = z * z
    series = -z2 * (
        1.0
        + z
        + z2 * (0.5
        + z2 * (-1.0 / 6.0
        + z2 * (1.0 / 6.0
        + z2 * (-3.0 / 10.0
        + z2 * (5.0 / 6.0
        + z2 * (-691.0 / 210.0)))))))
    return acc + series


@vectorize(["float64(float64)"], cache=True)
def _lgamma_v(x):
    return _lgamma(x)


@vectorize(["float64(float64)"], cache=True)
def _digamma_v(x):
    return _digamma(x)


@vectorize(["float64(float64)"], cache=True)
def _trigamma_v(x):
    return _trigamma(x)


@vectorize(["float64(float64)"], cache=True)
def _tetragamma_v(x):
    return _tetragamma(x)


def _checked(x, name):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise DomainError(f"{name} requires finite x > 0")
    return arr


def _out(arr, value):
    return float(value) if arr.ndim == 0 else value


def log_gamma(x):
    """Natural log of the gamma function for x > 0.

    Parameters
    ----------
    x : float or array_like
        Positive, finite argument(s).

    Returns
    -------
    float or ndarray
        ``log Γ(x)`` with the same shape as `x`.

    Raises
    ------
    DomainError
        If any element is non-finite or not strictly positive.
    """
    arr = _checked(x, "log_gamma")
    return _out(arr, _lgamma_v(arr))


def digamma(x):
    """Digamma function Ψ(x) = d log Γ(x) / dx for x > 0."""
    arr = _checked(x, "digamma")
    return _out(arr, _digamma_v(arr))


def trigamma(x):
    """Trigamma function Ψ'(x) for x > 0."""
    arr = _checked(x, "trigamma")
    return _out(arr, _trigamma_v(arr))


def tetragamma(x):
    """Tetragamma function Ψ''(x) for x > 0 (always negative)."""
    arr = _checked(x, "tetragamma")
    return _out(arr, _tetragamma_v(arr))


def tetragamma_bound(x):
    """Magnitude bound 1/x**2 + 2/x**3 on |Ψ''(x)|."""
    arr = _checked(x, "tetragamma_bound")
    return _out(arr, 1.0 / arr**2 + 2.0 / arr**3)
