"""
Parametric bootstrap likelihood-ratio test of constant dispersion.

H0: alpha1 = alpha2 = 0 (constant dispersion) against the time-varying
dispersion model.  The restricted variant simulates bootstrap series from the
null fit, the unrestricted variant from the full fit.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from tvdingarch.errors import DegenerateDataError, NumericError
from tvdingarch.estimate import FitConfig, FitResult, evaluate_fit, fit
from tvdingarch.model import ModelParams, as_counts, simulate
from tvdingarch.pool import child_rng, map_ordered

__all__ = [
    "TestConfig",
    "TestReport",
    "lr_statistic",
    "fit_null_and_alt",
    "bootstrap_test",
    "UNRELIABLE_FRACTION",
]

logger = logging.getLogger(__name__)

LR_TOL = 1e-8
UNRELIABLE_FRACTION = 0.10


@dataclass
class TestConfig:
    __test__ = False  # not a pytest class

    replications: int = 199
    variant: str = "restricted"
    significance: float = 0.05
    seed: int = 0
    gradient_tolerance: float = 1e-6

    def __post_init__(self):
        if int(self.replications) != self.replications or self.replications < 19:
            raise ValueError(f"replications must be an integer >= 19, got {self.replications!r}")
        if self.variant not in ("restricted", "unrestricted"):
            raise ValueError(f"variant must be 'restricted' or 'unrestricted', got {self.variant!r}")
        if not 0.0 < self.significance < 1.0:
            raise ValueError("significance must lie in (0, 1)")


@dataclass
class TestReport:
    __test__ = False

    lr_observed: float
    lr_replicates: np.ndarray
    p_value: float
    reject: bool
    null_fit: FitResult
    alt_fit: FitResult
    failed_replicates: int
    variant: str
    replications: int
    significance: float
    unreliable: bool = False
    seed: int = 0

    def to_dict(self):
        return {
            "variant": self.variant,
            "replications": self.replications,
            "significance": self.significance,
            "seed": self.seed,
            "lr_observed": self.lr_observed,
            "lr_replicates": [None if not math.isfinite(v) else float(v) for v in self.lr_replicates],
            "p_value": self.p_value,
            "reject": bool(self.reject),
            "failed_replicates": int(self.failed_replicates),
            "unreliable": bool(self.unreliable),
            "null_fit": self.null_fit.to_dict(),
            "alt_fit": self.alt_fit.to_dict(),
        }


def lr_statistic(null_fit, alt_fit):
    """``-2 (loglik0 - loglik1)``, clamped at 0 within ``LR_TOL``."""
    lr = -2.0 * (null_fit.loglik - alt_fit.loglik)
    if lr < -2.0 * LR_TOL:
        raise NumericError(
            f"alternative loglik {alt_fit.loglik:.10g} is below null loglik {null_fit.loglik:.10g}; "
            "the alternative fit did not reach the nested optimum"
        )
    return lr if lr > 0.0 else 0.0


def _nested_start(null_fit):
    theta = null_fit.theta_hat.as_array()
    theta[4] = theta[5] = 0.01
    rates = theta[[1, 2, 4, 5]].sum()
    if rates >= 0.999:
        theta[[1, 2]] *= (0.999 - 0.02) / theta[[1, 2]].sum()
    return theta


def fit_null_and_alt(y, gradient_tolerance=1e-6, compute_covariance=False):
    """Fit the constant-dispersion and time-varying models to the same series.

    The full model is refitted from the null optimum when its first fit ends
    below the null likelihood, which keeps the two fits nested.
    """
    y = as_counts(y)
    null = fit(y, FitConfig(mode="ordinary", gradient_tolerance=gradient_tolerance,
                            compute_covariance=compute_covariance))
    cfg_alt = FitConfig(mode="tv", gradient_tolerance=gradient_tolerance, compute_covariance=compute_covariance)
    alt = fit(y, cfg_alt, init=null.init_used)
    if alt.loglik < null.loglik:
        retry = fit(y, cfg_alt, init=null.init_used, start=_nested_start(null))
        if retry.loglik > alt.loglik:
            alt = retry
    if alt.loglik < null.loglik:
        # the null optimum is a feasible boundary point of the full model
        alt = evaluate_fit(y, null.theta_hat, cfg_alt, init=null.init_used)
    return null, alt


def _replicate(task):
    theta, init, n, seed, index, tol = task
    rng = child_rng(seed, index)
    y, _ = simulate(ModelParams.from_array(theta), n, init[0], init[1], rng)
    try:
        null, alt = fit_null_and_alt(y, tol)
        if not (null.converged and alt.converged):
            return math.nan
        return lr_statistic(null, alt)
    except (DegenerateDataError, NumericError, ValueError, FloatingPointError) as exc:
        logger.debug("replicate %d failed: %s", index, exc)
        return math.nan


def bootstrap_test(y, cfg=None, threads=None, fits=None):
    """Bootstrap LR test of constant dispersion.

    Parameters
    ----------
    y : array_like or CountSeries
    cfg : TestConfig, optional
    threads : int, optional
        Worker processes; ``$TVD_THREADS`` or 1 when omitted.  The report is
        identical for any value.
    fits : (FitResult, FitResult), optional
        Null and full fits of `y` already computed, e.g. by a previous test
        of the same series with the other variant.

    Returns
    -------
    TestReport
        ``p_value`` is the share of successful replicates whose LR strictly
        exceeds the observed LR.
    """
    cfg = cfg or TestConfig()
    y = as_counts(y)
    if fits is None:
        null, alt = fit_null_and_alt(y, cfg.gradient_tolerance, compute_covariance=True)
    else:
        null, alt = fits
    lr_obs = lr_statistic(null, alt)
    source = null if cfg.variant == "restricted" else alt
    theta = source.theta_hat.as_array()
    tasks = [(theta, source.init_used, y.size, cfg.seed, b, cfg.gradient_tolerance) for b in range(cfg.replications)]
    lrs = np.array(map_ordered(_replicate, tasks, threads), dtype=float)
    ok = np.isfinite(lrs)
    failed = int((~ok).sum())
    b_eff = int(ok.sum())
    p_value = float(np.sum(lrs[ok] > lr_obs) / b_eff) if b_eff else math.nan
    unreliable = failed > UNRELIABLE_FRACTION * cfg.replications
    if failed:
        logger.info("%d of %d bootstrap replicates failed", failed, cfg.replications)
    return TestReport(
        lr_observed=lr_obs,
        lr_replicates=lrs,
        p_value=p_value,
        reject=bool(b_eff and p_value < cfg.significance),
        null_fit=null,
        alt_fit=alt,
        failed_replicates=failed,
        variant=cfg.variant,
        replications=cfg.replications,
        significance=cfg.significance,
        unreliable=unreliable,
        seed=cfg.seed,
    )
