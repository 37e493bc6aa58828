"""
Conditional likelihood of the NB tv-DINGARCH(1,1,1,1) model.

The log-likelihood conditions on y_1 and on fixed starting values
(lambda_1, phi_1); it sums t = 2..n and keeps the ``log y_t!`` term.  The
score at time t is

    U_t = (S1_t * dlam_t/dbeta, S2_t * dphi_t/dalpha)

    S1_t = phi (y - lam) / (lam (lam + phi))
    S2_t = -(y - lam)/(lam + phi) + log(phi/(lam + phi)) + Psi(y + phi) - Psi(phi)

and the conditional information is block diagonal with weights
b_t = phi / (lam (lam + phi)) and
d_t = Psi'(phi) - E[Psi'(Y + phi)] - lam / (phi (lam + phi)).
"""

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import special

from tvdingarch.errors import DegenerateDataError, DomainError, NumericError, SingularMatrixError, TruncationError
from tvdingarch.model import as_counts, init_state
from tvdingarch.nbdist import _digamma_variance, _expected_trigamma, _logpmf
from tvdingarch.specfun import _digamma, _lgamma, _trigamma

__all__ = [
    "ScoreTerms",
    "InfoMatrices",
    "CovarianceEstimate",
    "COV_METHODS",
    "loglik",
    "score",
    "observed_hessian",
    "info_matrices",
    "covariance",
    "info_weight_d",
    "info_weight_l",
]

COV_METHODS = ("J1_inverse", "OPG_inverse", "Hessian_inverse")
SINGULAR_COND = 1e12
EXPECTATION_TAIL = 1e-12
EXPECTATION_CAP = 1_000_000


@dataclass
class ScoreTerms:
    """Score pieces for t = 2..n (arrays have length n - 1)."""

    s1: np.ndarray
    s2: np.ndarray
    score: np.ndarray
    per_t_scores: np.ndarray


@dataclass
class InfoMatrices:
    """Information estimates, all scaled by 1/n.

    ``j1`` is the conditional information built from ``b_t`` and ``d_t``,
    ``s1_opg`` the outer product of per-t scores and ``s2_hess`` minus the
    (symmetrised) observed Hessian.
    """

    j1: np.ndarray
    s1_opg: np.ndarray
    s2_hess: np.ndarray
    b_t: np.ndarray
    d_t: np.ndarray
    n: int


@dataclass
class CovarianceEstimate:
    sigma: np.ndarray
    method: str
    standard_errors: np.ndarray
    condition_number: float


@njit(cache=True)
def _gamma_diffs(y, phi):
    """log Γ(y+phi) - log Γ(phi) and Ψ(y+phi) - Ψ(phi) for a count y."""
    if y <= 16.0 and phi < 1e15:
        prod = 1.0
        acc = 0.0
        for k in range(int(y)):
            prod *= phi + k
            acc += 1.0 / (phi + k)
        return math.log(prod), acc
    return _lgamma(y + phi) - _lgamma(phi), _digamma(y + phi) - _digamma(phi)


@njit(cache=True)
def _loglik_grad(theta, y, logfact, lam1, phi1):
    """Log-likelihood and its gradient in one pass; ok=False if the path degenerates."""
    n = y.shape[0]
    b0, b1, b2, a0, a1, a2 = theta[0], theta[1], theta[2], theta[3], theta[4], theta[5]
    grad = np.zeros(6)
    lam = lam1
    phi = phi1
    dl0 = dl1 = dl2 = 0.0
    dp0 = dp1 = dp2 = 0.0
    ll = 0.0
    for t in range(1, n):
        yp = y[t - 1]
        dl0 = 1.0 + b2 * dl0
        dl1 = yp + b2 * dl1
        dl2 = lam + b2 * dl2
        dp0 = 1.0 + a2 * dp0
        dp1 = yp + a2 * dp1
        dp2 = phi + a2 * dp2
        lam = b0 + b1 * yp + b2 * lam
        phi = a0 + a1 * yp + a2 * phi
        if not (lam > 0.0 and phi > 0.0) or not (math.isfinite(lam) and math.isfinite(phi)):
            return -np.inf, grad, False
        yt = y[t]
        lp = lam + phi
        log_ratio = -math.log1p(lam / phi)  # log(phi / (lam + phi))
        ll += -yt * math.log1p(phi / lam) + phi * log_ratio - logfact[t]
        s2 = log_ratio - (yt - lam) / lp
        if yt > 0.0:
            dlg, dpsi = _gamma_diffs(yt, phi)
            ll += dlg
            s2 += dpsi
        s1 = phi * (yt - lam) / (lam * lp)
        grad[0] += s1 * dl0
        grad[1] += s1 * dl1
        grad[2] += s1 * dl2
        grad[3] += s2 * dp0
        grad[4] += s2 * dp1
        grad[5] += s2 * dp2
    ok = math.isfinite(ll)
    return ll, grad, ok


@njit(cache=True)
def _score_terms(theta, y, lam1, phi1):
    n = y.shape[0]
    b0, b1, b2, a0, a1, a2 = theta[0], theta[1], theta[2], theta[3], theta[4], theta[5]
    lam = np.empty(n)
    phi = np.empty(n)
    dlam = np.zeros((n, 3))
    dphi = np.zeros((n, 3))
    s1 = np.zeros(n)
    s2 = np.zeros(n)
    lam[0] = lam1
    phi[0] = phi1
    ok = True
    for t in range(1, n):
        yp = y[t - 1]
        dlam[t, 0] = 1.0 + b2 * dlam[t - 1, 0]
        dlam[t, 1] = yp + b2 * dlam[t - 1, 1]
        dlam[t, 2] = lam[t - 1] + b2 * dlam[t - 1, 2]
        dphi[t, 0] = 1.0 + a2 * dphi[t - 1, 0]
        dphi[t, 1] = yp + a2 * dphi[t - 1, 1]
        dphi[t, 2] = phi[t - 1] + a2 * dphi[t - 1, 2]
        lt = b0 + b1 * yp + b2 * lam[t - 1]
        ft = a0 + a1 * yp + a2 * phi[t - 1]
        lam[t] = lt
        phi[t] = ft
        if not (lt > 0.0 and ft > 0.0):
            ok = False
            break
        yt = y[t]
        lp = lt + ft
        s1[t] = ft * (yt - lt) / (lt * lp)
        v = -math.log1p(lt / ft) - (yt - lt) / lp
        if yt > 0.0:
            v += _gamma_diffs(yt, ft)[1]
        s2[t] = v
    return lam, phi, dlam, dphi, s1, s2, ok


@njit(cache=True)
def _info_weights(lam, phi, tail, cap):
    n = lam.shape[0]
    b = np.zeros(n)
    d = np.zeros(n)
    ok = True
    for t in range(1, n):
        lt = lam[t]
        ft = phi[t]
        b[t] = ft / (lt * (lt + ft))
        et, good = _expected_trigamma(lt, ft, tail, cap)
        if not good:
            ok = False
        d[t] = _trigamma(ft) - et - lt / (ft * (lt + ft))
    return b, d, ok


def _prepare(p, y, init):
    y = as_counts(y)
    if y.size < 2:
        raise DegenerateDataError("likelihood needs at least two observations")
    if init is None:
        init = init_state(y)
    lam1, phi1 = (float(v) for v in init)
    if not (lam1 > 0 and phi1 > 0):
        raise DomainError("initial lambda and phi must be > 0")
    theta = p.as_array() if hasattr(p, "as_array") else np.asarray(p, dtype=float)
    return theta, y, lam1, phi1


def log_factorials(y):
    return special.gammaln(np.asarray(y, dtype=float) + 1.0)


def loglik(p, y, init=None):
    """Conditional log-likelihood of y_2..y_n given y_1 and the starting values.

    Parameters
    ----------
    p : ModelParams or array_like of length 6
    y : array_like or CountSeries
    init : (lambda1, phi1), optional
        Fixed starting values; moment-based ones from ``init_state`` when
        omitted.
    """
    theta, y, lam1, phi1 = _prepare(p, y, init)
    ll, _, ok = _loglik_grad(theta, y, log_factorials(y), lam1, phi1)
    if not ok:
        raise NumericError("latent path left the positive orthant or produced a non-finite likelihood")
    return float(ll)


def score(p, y, init=None):
    theta, y, lam1, phi1 = _prepare(p, y, init)
    lam, phi, dlam, dphi, s1, s2, ok = _score_terms(theta, y, lam1, phi1)
    if not ok:
        raise NumericError("latent path left the positive orthant")
    per_t = np.hstack([s1[:, None] * dlam, s2[:, None] * dphi])[1:]
    if not np.all(np.isfinite(per_t)):
        raise NumericError("non-finite score contribution")
    return ScoreTerms(s1=s1[1:], s2=s2[1:], score=per_t.sum(axis=0), per_t_scores=per_t)


def observed_hessian(p, y, init=None, rel_step=1e-5):
    """Hessian of the log-likelihood by central differences of the analytic score.

    Rate parameters closer to zero than the step use a forward difference so
    the latent path is never evaluated at negative coefficients.
    """
    theta, y, lam1, phi1 = _prepare(p, y, init)
    logfact = log_factorials(y)
    H = np.empty((6, 6))
    for i in range(6):
        h = rel_step * max(abs(theta[i]), 1e-2)
        up = theta.copy()
        up[i] += h
        _, g_up, ok_up = _loglik_grad(up, y, logfact, lam1, phi1)
        down = theta.copy()
        down[i] -= h
        if down[i] >= 0.0 and (i not in (0, 3) or down[i] > 0.0):
            _, g_down, ok_down = _loglik_grad(down, y, logfact, lam1, phi1)
            H[:, i] = (g_up - g_down) / (2.0 * h)
        else:
            _, g0, ok_down = _loglik_grad(theta, y, logfact, lam1, phi1)
            H[:, i] = (g_up - g0) / h
        if not (ok_up and ok_down):
            raise NumericError("score evaluation failed while differencing")
    return H


def info_weight_d(lam, phi, tail=EXPECTATION_TAIL, cap=EXPECTATION_CAP):
    """Hessian-form dispersion weight Psi'(phi) - E Psi'(Y+phi) - lam/(phi(lam+phi))."""
    et, ok = _expected_trigamma(float(lam), float(phi), tail, cap)
    if not ok:
        raise TruncationError(f"tail bound {tail} not met within {cap} terms")
    return _trigamma(float(phi)) - et - lam / (phi * (lam + phi))


def info_weight_l(lam, phi, tail=EXPECTATION_TAIL, cap=EXPECTATION_CAP):
    """Variance-form dispersion weight Var[Psi(Y+phi)] - lam/(phi(lam+phi))."""
    v, ok = _digamma_variance(float(lam), float(phi), tail, cap)
    if not ok:
        raise TruncationError(f"tail bound {tail} not met within {cap} terms")
    return v - lam / (phi * (lam + phi))


def info_matrices(p, y, init=None, hessian=True):
    """Conditional information J1, outer-product S1 and Hessian S2, each / n."""
    theta, y, lam1, phi1 = _prepare(p, y, init)
    n = y.size
    lam, phi, dlam, dphi, s1, s2, ok = _score_terms(theta, y, lam1, phi1)
    if not ok:
        raise NumericError("latent path left the positive orthant")
    b, d, ok = _info_weights(lam, phi, EXPECTATION_TAIL, EXPECTATION_CAP)
    if not ok:
        raise TruncationError("expected trigamma series hit the truncation cap")
    j1 = np.zeros((6, 6))
    j1[:3, :3] = (dlam[1:].T * b[1:]) @ dlam[1:] / n
    j1[3:, 3:] = (dphi[1:].T * d[1:]) @ dphi[1:] / n
    per_t = np.hstack([s1[:, None] * dlam, s2[:, None] * dphi])[1:]
    opg = per_t.T @ per_t / n
    if hessian:
        H = observed_hessian(theta, y, (lam1, phi1))
        s2_hess = -0.5 * (H + H.T) / n
    else:
        s2_hess = np.full((6, 6), np.nan)
    return InfoMatrices(j1=j1, s1_opg=opg, s2_hess=s2_hess, b_t=b[1:], d_t=d[1:], n=n)


def covariance(im, n=None, method="J1_inverse", free=None):
    """Asymptotic covariance of sqrt(n)(theta_hat - theta) and standard errors.

    Parameters
    ----------
    im : InfoMatrices or ndarray
        Either the bundle from :func:`info_matrices` or a bare square matrix.
    n : int, optional
        Sample size used for ``se = sqrt(diag(sigma) / n)``; defaults to
        ``im.n``.
    method : {"J1_inverse", "OPG_inverse", "Hessian_inverse"}
    free : sequence of int, optional
        Indices of free parameters (e.g. ``[0, 1, 2, 3]`` for the
        constant-dispersion model); the matrix is restricted to them before
        inversion.

    Raises
    ------
    SingularMatrixError
        If the condition number exceeds 1e12.
    """
    if method not in COV_METHODS:
        raise ValueError(f"unknown covariance method {method!r}")
    if isinstance(im, InfoMatrices):
        mat = {"J1_inverse": im.j1, "OPG_inverse": im.s1_opg, "Hessian_inverse": im.s2_hess}[method]
        n = im.n if n is None else n
    else:
        mat = np.asarray(im, dtype=float)
    if n is None or n < 1:
        raise ValueError("sample size n must be a positive integer")
    if free is not None:
        idx = np.asarray(free)
        mat = mat[np.ix_(idx, idx)]
    if not np.all(np.isfinite(mat)):
        raise SingularMatrixError(f"{method}: matrix has non-finite entries")
    cond = float(np.linalg.cond(mat))
    if not np.isfinite(cond) or cond > SINGULAR_COND:
        raise SingularMatrixError(f"{method}: condition number {cond:.3g} exceeds {SINGULAR_COND:.0e}", cond)
    sigma = np.linalg.inv(mat)
    sigma = 0.5 * (sigma + sigma.T)
    diag = np.diag(sigma)
    se = np.sqrt(np.where(diag > 0, diag, np.nan) / n)
    return CovarianceEstimate(sigma=sigma, method=method, standard_errors=se, condition_number=cond)


def path_log_pmf(y, lam, phi):
    """Per-t NB log-probabilities along a given path (t = 2..n)."""
    return np.array([_logpmf(float(y[t]), float(lam[t]), float(phi[t])) for t in range(1, len(y))])
