"""
Conditional maximum likelihood under the stationarity constraint.

The optimiser works on an unconstrained vector ``u``: the intercepts are
``exp(u)`` and the rate coefficients are a scaled softmax with a slack
coordinate pinned at zero, so that every ``u`` maps to a parameter vector
with nonnegative rates summing to less than ``1 - EPS``.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from tvdingarch.errors import DegenerateDataError, DomainError, NumericError, SingularMatrixError
from tvdingarch.likelihood import COV_METHODS, _loglik_grad, covariance, info_matrices, log_factorials
from tvdingarch.model import PARAM_NAMES, ModelParams, as_counts, init_state, latent_path, simulate
from tvdingarch.pool import child_rng, map_ordered

__all__ = [
    "EPS",
    "FitConfig",
    "FitResult",
    "fit",
    "transform_params",
    "untransform_params",
    "information_criteria",
    "free_indices",
    "evaluate_fit",
    "attach_covariances",
    "fitted_path",
    "BootstrapEstimates",
    "parametric_bootstrap",
]

logger = logging.getLogger(__name__)

EPS = 1e-6
BOUNDARY_TOL = 1e-6
_RATE_FLOOR = 1e-10
# keeps exp(u) and the softmax weights away from overflow and exact zeros
_U_MAX = 600.0
_RESTARTS = 3
_F_STALL = 1e-12

_FREE = {"tv": (0, 1, 2, 3, 4, 5), "ordinary": (0, 1, 2, 3)}
_RATES = {"tv": (1, 2, 4, 5), "ordinary": (1, 2)}


def free_indices(mode):
    if mode not in _FREE:
        raise ValueError(f"mode must be 'tv' or 'ordinary', got {mode!r}")
    return _FREE[mode]


@dataclass
class FitConfig:
    mode: str = "tv"
    max_iterations: int = 500
    gradient_tolerance: float = 1e-6
    constraint: str = "practical_sum"
    multistart: int = 1
    seed: int = 0
    compute_covariance: bool = True
    bic_offset: int = 1

    def __post_init__(self):
        free_indices(self.mode)
        if self.constraint not in ("practical_sum", "none"):
            raise ValueError(f"constraint must be 'practical_sum' or 'none', got {self.constraint!r}")
        if not self.gradient_tolerance > 0:
            raise ValueError("gradient_tolerance must be > 0")
        if self.multistart < 1:
            raise ValueError("multistart must be >= 1")
        if self.bic_offset not in (0, 1):
            raise ValueError("bic_offset must be 0 (use n) or 1 (use n - 1)")


@dataclass
class FitResult:
    theta_hat: ModelParams
    loglik: float
    aic: float
    bic: float
    converged: bool
    iterations: int
    mode: str
    n: int
    init_used: tuple
    boundary_flags: dict
    covariances: dict = field(default_factory=dict)
    covariance_errors: dict = field(default_factory=dict)
    loglik_start: float = float("nan")
    gradient_norm: float = float("nan")
    message: str = ""

    @property
    def k(self):
        return len(free_indices(self.mode))

    @property
    def free_names(self):
        return [PARAM_NAMES[i] for i in free_indices(self.mode)]

    @property
    def standard_errors(self):
        """Standard errors from the conditional information (NaN if unavailable)."""
        cov = self.covariances.get("J1_inverse")
        if cov is None:
            return np.full(self.k, np.nan)
        return cov.standard_errors

    def to_dict(self):
        names = self.free_names
        se = self.standard_errors
        out = {
            "mode": self.mode,
            "n": self.n,
            "estimates": {k: getattr(self.theta_hat, k) for k in names},
            "standard_errors": {k: _num(v) for k, v in zip(names, se)},
            "loglik": self.loglik,
            "aic": self.aic,
            "bic": self.bic,
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "gradient_norm": _num(self.gradient_norm),
            "boundary_flags": {k: bool(v) for k, v in self.boundary_flags.items()},
            "init_used": {"lambda1": self.init_used[0], "phi1": self.init_used[1]},
            "covariance": {
                m: {"standard_errors": {k: _num(v) for k, v in zip(names, c.standard_errors)},
                    "condition_number": c.condition_number}
                for m, c in self.covariances.items()
            },
            "covariance_errors": dict(self.covariance_errors),
            "message": self.message,
        }
        return out


def _num(v):
    v = float(v)
    return v if math.isfinite(v) else None


def information_criteria(loglik, k, n_effective):
    """AIC and BIC for a maximised log-likelihood with `k` free parameters."""
    if n_effective < 2:
        raise DomainError("n_effective must be >= 2")
    aic = -2.0 * loglik + 2.0 * k
    bic = -2.0 * loglik + k * math.log(n_effective)
    return aic, bic


# -- parameter transform ---------------------------------------------------


def transform_params(p, mode="tv", constraint="practical_sum", eps=EPS):
    """Map parameters to the unconstrained optimisation vector.

    The vector has one entry per free parameter, ordered as in
    ``PARAM_NAMES``.  Rates of exactly zero are clamped to 1e-10 first.
    """
    theta = p.as_array() if isinstance(p, ModelParams) else np.asarray(p, dtype=float)
    free = free_indices(mode)
    rates = _RATES[mode]
    r = np.maximum(theta[list(rates)], _RATE_FLOOR)
    u = np.empty(len(free))
    pos = {idx: j for j, idx in enumerate(free)}
    u[pos[0]] = math.log(theta[0])
    u[pos[3]] = math.log(theta[3])
    if constraint == "practical_sum":
        slack = (1.0 - eps) - r.sum()
        if slack <= 0:
            raise DomainError(f"rate sum {r.sum():.6g} is not below 1 - eps")
        ur = np.log(r) - math.log(slack)
    else:
        ur = np.log(r)
    for j, idx in enumerate(rates):
        u[pos[idx]] = ur[j]
    return u


def _rates_from_u(ur, constraint, eps):
    if constraint == "practical_sum":
        m = max(0.0, float(ur.max()))
        e = np.exp(ur - m)
        denom = math.exp(-m) + e.sum()
        return (1.0 - eps) * e / denom
    return np.exp(ur)


def untransform_params(u, mode="tv", constraint="practical_sum", eps=EPS):
    """Inverse of :func:`transform_params`, returning the full 6-vector."""
    theta = _theta_from_u(np.asarray(u, dtype=float), mode, constraint, eps)
    return ModelParams.from_array(theta)


def _theta_from_u(u, mode, constraint, eps):
    free = free_indices(mode)
    rates = _RATES[mode]
    pos = {idx: j for j, idx in enumerate(free)}
    theta = np.zeros(6)
    theta[0] = math.exp(u[pos[0]])
    theta[3] = math.exp(u[pos[3]])
    ur = np.array([u[pos[i]] for i in rates])
    theta[list(rates)] = _rates_from_u(ur, constraint, eps)
    return theta


def _grad_u(u, theta, grad_theta, mode, constraint, eps):
    """Chain rule from d loglik / d theta to d loglik / d u."""
    free = free_indices(mode)
    rates = list(_RATES[mode])
    pos = {idx: j for j, idx in enumerate(free)}
    g = np.empty(len(free))
    g[pos[0]] = grad_theta[0] * theta[0]
    g[pos[3]] = grad_theta[3] * theta[3]
    r = theta[rates]
    gr = grad_theta[rates]
    if constraint == "practical_sum":
        weighted = float(np.dot(gr, r)) / (1.0 - eps)
        gu = r * (gr - weighted)
    else:
        gu = r * gr
    for j, idx in enumerate(rates):
        g[pos[idx]] = gu[j]
    return g


# -- fitting -----------------------------------------------------------------


def _default_start(y, init, mode):
    ybar = float(np.mean(y))
    theta = np.array([0.3 * ybar, 0.1, 0.1, init[1], 0.1, 0.1])
    if mode == "ordinary":
        theta[4:] = 0.0
    return theta


def _perturb(theta, rng, mode, eps):
    out = theta * np.exp(0.5 * rng.standard_normal(6))
    rates = list(_RATES[mode])
    out[[i for i in (4, 5) if i not in rates]] = 0.0
    total = out[rates].sum()
    if total >= 0.95 * (1 - eps):
        out[rates] *= 0.9 / total
    return out


def _coerce_start(theta, mode, constraint, eps):
    theta = np.array(theta, dtype=float)
    theta[0] = max(theta[0], 1e-8)
    theta[3] = max(theta[3], 1e-8)
    rates = list(_RATES[mode])
    if mode == "ordinary":
        theta[4:] = 0.0
    theta[rates] = np.maximum(theta[rates], 1e-8)
    if constraint == "practical_sum":
        total = theta[rates].sum()
        if total >= 1.0 - eps - 1e-8:
            theta[rates] *= (1.0 - eps - 1e-4) / total
    return theta


def _optimize(y, logfact, init, start, cfg, n_eff):
    mode, constraint = cfg.mode, cfg.constraint
    lam1, phi1 = init

    def objective(u):
        if np.max(np.abs(u)) > _U_MAX:
            return np.inf, np.zeros_like(u)
        theta = _theta_from_u(u, mode, constraint, EPS)
        ll, g, ok = _loglik_grad(theta, y, logfact, lam1, phi1)
        if not ok:
            return np.inf, np.zeros_like(u)
        gu = _grad_u(u, theta, g, mode, constraint, EPS)
        return -ll / n_eff, -gu / n_eff

    u = transform_params(start, mode, constraint)
    nit = 0
    budget = cfg.max_iterations
    f_prev = np.inf
    stalled = False
    for _ in range(1 + _RESTARTS):
        res = optimize.minimize(
            objective,
            u,
            jac=True,
            method="BFGS",
            options={"gtol": cfg.gradient_tolerance, "maxiter": max(1, budget)},
        )
        nit += int(res.nit)
        budget -= int(res.nit)
        u = res.x
        f, g = objective(u)
        gnorm = float(np.max(np.abs(g))) if np.isfinite(f) else np.inf
        # a line-search stall often clears with a fresh Hessian approximation;
        # if a fresh start cannot lower f either, f is optimal to working precision
        if res.success or gnorm <= cfg.gradient_tolerance or budget <= 0 or not np.isfinite(f):
            break
        if f_prev - f <= _F_STALL * max(1.0, abs(f)):
            stalled = True
            break
        f_prev = f
    converged = bool(np.isfinite(f) and (res.success or stalled or gnorm <= 10 * cfg.gradient_tolerance))
    return _theta_from_u(u, mode, constraint, EPS), -f * n_eff, converged, nit, gnorm, str(res.message)


def fit(y, cfg=None, init=None, start=None):
    """Conditional MLE of the tv-DINGARCH (or constant-dispersion) model.

    Parameters
    ----------
    y : array_like or CountSeries
        At least 20 counts, not all identical.
    cfg : FitConfig, optional
    init : (lambda1, phi1), optional
        Fixed starting values for the latent path; ``init_state(y)`` if None.
    start : array_like or sequence of array_like, optional
        Starting parameter vector(s) used instead of the default moment-based
        start (warm starts).  Random restarts perturb the last of them.

    Returns
    -------
    FitResult
        Non-convergence is reported through ``converged=False`` rather than an
        exception.
    """
    cfg = cfg or FitConfig()
    y = as_counts(y)
    if y.size < 20:
        raise DegenerateDataError("fit needs at least 20 observations")
    if np.all(y == y[0]):
        raise DegenerateDataError("constant count series")
    init = tuple(float(v) for v in (init if init is not None else init_state(y)))
    logfact = log_factorials(y)
    n_eff = y.size - 1

    if start is None:
        starts = [_coerce_start(_default_start(y, init, cfg.mode), cfg.mode, cfg.constraint, EPS)]
    else:
        given = np.atleast_2d(np.asarray(start.as_array() if isinstance(start, ModelParams) else start, dtype=float))
        starts = [_coerce_start(s, cfg.mode, cfg.constraint, EPS) for s in given]
    rng = np.random.default_rng(cfg.seed)
    base = starts[-1]
    for _ in range(cfg.multistart - 1):
        starts.append(_coerce_start(_perturb(base, rng, cfg.mode, EPS), cfg.mode, cfg.constraint, EPS))

    best = None
    ll_start = -np.inf
    for s in starts:
        ll0, _, ok0 = _loglik_grad(s, y, logfact, init[0], init[1])
        if ok0:
            ll_start = max(ll_start, ll0)
        try:
            result = _optimize(y, logfact, init, s, cfg, n_eff)
        except (FloatingPointError, OverflowError, ValueError, NumericError) as exc:
            logger.debug("start %s failed: %s", s, exc)
            continue
        if best is None or result[1] > best[1] or (result[2] and not best[2] and result[1] >= best[1] - 1e-8):
            best = result
    if best is None or not np.isfinite(best[1]):
        raise NumericError("no start produced a finite likelihood")
    theta, ll, converged, nit, gnorm, message = best

    return _result(y, theta, ll, cfg, init, converged, nit, gnorm, message, ll_start)


def evaluate_fit(y, theta, cfg=None, init=None):
    """FitResult for a given parameter vector without optimising.

    Used when a point is known to be optimal from another fit, e.g. the
    constant-dispersion optimum viewed as a boundary point of the full model.
    """
    cfg = cfg or FitConfig()
    y = as_counts(y)
    init = tuple(float(v) for v in (init if init is not None else init_state(y)))
    theta = np.asarray(theta.as_array() if isinstance(theta, ModelParams) else theta, dtype=float)
    ll, _, ok = _loglik_grad(theta, y, log_factorials(y), init[0], init[1])
    if not ok:
        raise NumericError("non-finite log-likelihood at the supplied parameters")
    return _result(y, theta, ll, cfg, init, True, 0, float("nan"), "evaluated at supplied parameters", ll)


def _result(y, theta, ll, cfg, init, converged, nit, gnorm, message, ll_start):
    p = ModelParams.from_array(theta)
    k = len(free_indices(cfg.mode))
    aic, bic = information_criteria(ll, k, y.size - cfg.bic_offset)
    flags = {PARAM_NAMES[i]: bool(theta[i] < BOUNDARY_TOL) for i in _RATES[cfg.mode]}
    res = FitResult(
        theta_hat=p,
        loglik=float(ll),
        aic=aic,
        bic=bic,
        converged=converged,
        iterations=nit,
        mode=cfg.mode,
        n=int(y.size),
        init_used=init,
        boundary_flags=flags,
        loglik_start=float(ll_start),
        gradient_norm=gnorm,
        message=message,
    )
    if cfg.compute_covariance:
        attach_covariances(res, y)
    return res


def attach_covariances(res, y):
    """Fill ``res.covariances`` with the three inverse-information estimates."""
    free = list(free_indices(res.mode))
    try:
        im = info_matrices(res.theta_hat, y, res.init_used)
    except NumericError as exc:
        res.covariance_errors = {m: str(exc) for m in COV_METHODS}
        return res
    for method in COV_METHODS:
        try:
            res.covariances[method] = covariance(im, method=method, free=free)
        except SingularMatrixError as exc:
            res.covariance_errors[method] = str(exc)
    return res


def fitted_path(res, y, with_derivatives=False):
    """Latent path of a fitted model over `y` from the fit's starting values."""
    return latent_path(res.theta_hat, y, res.init_used[0], res.init_used[1], with_derivatives)


@dataclass
class BootstrapEstimates:
    """Refitted estimates from series simulated at a fitted model."""

    names: list
    samples: np.ndarray
    failures: int

    @property
    def standard_errors(self):
        return self.samples.std(axis=0, ddof=1)

    def percentile_interval(self, level=0.95):
        tail = 0.5 * (1.0 - level)
        return np.quantile(self.samples, tail, axis=0), np.quantile(self.samples, 1.0 - tail, axis=0)


def _bootstrap_task(args):
    theta, init, n, mode, seed, index = args
    y, _ = simulate(ModelParams.from_array(theta), n, init[0], init[1], child_rng(seed, index))
    try:
        res = fit(y, FitConfig(mode=mode, compute_covariance=False))
    except (DegenerateDataError, NumericError):
        return None
    return res.theta_hat.as_array() if res.converged else None


def parametric_bootstrap(res, replications=500, seed=0, threads=None):
    """Refit the model to series simulated from ``res.theta_hat``.

    Each replicate has the observed length and starts the simulation at the
    fit's ``init_used``; failed or non-converged refits are dropped.
    """
    if replications < 2:
        raise ValueError("replications must be >= 2")
    theta = res.theta_hat.as_array()
    tasks = [(theta, res.init_used, res.n, res.mode, seed, b) for b in range(replications)]
    rows = [r for r in map_ordered(_bootstrap_task, tasks, threads) if r is not None]
    idx = list(free_indices(res.mode))
    samples = np.array(rows)[:, idx] if rows else np.empty((0, len(idx)))
    return BootstrapEstimates([PARAM_NAMES[i] for i in idx], samples, replications - len(rows))
