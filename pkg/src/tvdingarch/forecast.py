"""
Rolling-origin one-step-ahead forecasting with refitting.

For each training length s = n0, ..., n-1 the model is fitted to y[:s], the
recursions are advanced one step with the fitted coefficients, and a point
forecast of y[s] is taken from the predictive negative binomial law.
"""

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from tvdingarch.errors import DegenerateDataError, DomainError, NumericError
from tvdingarch.estimate import FitConfig, fit, fitted_path
from tvdingarch.model import as_counts
from tvdingarch.nbdist import NbParams, nb_mode, nb_quantile

__all__ = [
    "POINT_METHODS",
    "ForecastConfig",
    "ForecastTrace",
    "osa_step",
    "point_forecast",
    "rmsfe",
    "rolling_forecast",
]

logger = logging.getLogger(__name__)

POINT_METHODS = ("mean", "median", "mode")


@dataclass
class ForecastConfig:
    n0: int
    point: str = "median"
    model: str = "tv"
    refit_every: int = 1
    gradient_tolerance: float = 1e-6

    def __post_init__(self):
        if self.point not in POINT_METHODS:
            raise ValueError(f"point must be one of {POINT_METHODS}, got {self.point!r}")
        if self.model not in ("tv", "ordinary"):
            raise ValueError(f"model must be 'tv' or 'ordinary', got {self.model!r}")
        if int(self.refit_every) != self.refit_every or self.refit_every < 1:
            raise ValueError("refit_every must be a positive integer")
        if self.n0 < 20:
            raise ValueError("n0 must be >= 20")


@dataclass
class ForecastTrace:
    """Per-step output; index i refers to time t = n0 + 1 + i (1-based)."""

    t: np.ndarray
    observed: np.ndarray
    predictions: np.ndarray
    lam: np.ndarray
    phi: np.ndarray
    rmsfe: np.ndarray
    point: str
    model: str
    n0: int
    refit_log: list = field(default_factory=list)

    @property
    def predictive_params(self):
        return list(zip(self.lam.tolist(), self.phi.tolist()))

    @property
    def terminal_rmsfe(self):
        return float(self.rmsfe[-1])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "y", "yhat", "lambda", "phi", "rmsfe"])
            for row in zip(self.t, self.observed, self.predictions, self.lam, self.phi, self.rmsfe):
                t, y, yhat, lam, phi, r = row
                yhat = repr(float(yhat)) if self.point == "mean" else str(int(yhat))
                w.writerow([int(t), int(y), yhat, repr(float(lam)), repr(float(phi)), repr(float(r))])


def osa_step(res, y, path):
    """Advance the fitted recursions from time s = len(y) to s + 1.

    Parameters
    ----------
    res : FitResult
    y : array_like
        Counts up to and including time s.
    path : LatentPath
        Fitted path through time s.

    Returns
    -------
    (lambda_next, phi_next)
    """
    y = as_counts(y)
    p = res.theta_hat
    lam_s = float(path.lam[len(y) - 1])
    phi_s = float(path.phi[len(y) - 1])
    y_s = float(y[-1])
    lam_next = p.beta0 + p.beta1 * y_s + p.beta2 * lam_s
    phi_next = p.alpha0 + p.alpha1 * y_s + p.alpha2 * phi_s
    return lam_next, phi_next


def point_forecast(lam, phi, method="median"):
    """Mean (real), median or mode (integers) of ``NB(lam, phi)``."""
    nb = NbParams(float(lam), float(phi))
    if method == "mean":
        return nb.lam
    if method == "median":
        return nb_quantile(nb, 0.5)
    if method == "mode":
        return nb_mode(nb)
    raise ValueError(f"point must be one of {POINT_METHODS}, got {method!r}")


def rmsfe(observed, predicted):
    """Cumulative root mean squared forecast error after each step."""
    e = np.asarray(observed, dtype=float) - np.asarray(predicted, dtype=float)
    return np.sqrt(np.cumsum(e * e) / np.arange(1, e.size + 1))


def rolling_forecast(y, cfg):
    """One-step-ahead predictions for t = n0 + 1, ..., n.

    The model is refitted every ``cfg.refit_every`` steps, warm-started at the
    previous estimate.  Between refits (and after a failed refit) the last
    fit is reused and its recursions are run over the longer training series.
    """
    y = as_counts(y)
    n = y.size
    if not 20 <= cfg.n0 < n:
        raise DomainError(f"n0 must satisfy 20 <= n0 < n = {n}, got {cfg.n0}")
    fcfg = FitConfig(mode=cfg.model, gradient_tolerance=cfg.gradient_tolerance, compute_covariance=False)
    steps = n - cfg.n0
    preds = np.empty(steps)
    lam = np.empty(steps)
    phi = np.empty(steps)
    log = []
    current = None
    for i, s in enumerate(range(cfg.n0, n)):
        train = y[:s]
        if i % cfg.refit_every == 0:
            entry = {"t": s + 1, "refit": True}
            try:
                start = None if current is None else current.theta_hat
                new = fit(train, fcfg, start=start)
                entry.update(converged=new.converged, loglik=new.loglik, iterations=new.iterations)
                if new.converged or current is None:
                    current = new
                else:
                    entry["reused_previous"] = True
            except (DegenerateDataError, NumericError) as exc:
                if current is None:
                    raise
                logger.warning("refit at t=%d failed (%s); reusing the previous fit", s + 1, exc)
                entry.update(converged=False, error=str(exc), reused_previous=True)
            log.append(entry)
        path = fitted_path(current, train)
        lam[i], phi[i] = osa_step(current, train, path)
        preds[i] = point_forecast(lam[i], phi[i], cfg.point)
    observed = y[cfg.n0:]
    return ForecastTrace(
        t=np.arange(cfg.n0 + 1, n + 1),
        observed=observed,
        predictions=preds,
        lam=lam,
        phi=phi,
        rmsfe=rmsfe(observed, preds),
        point=cfg.point,
        model=cfg.model,
        n0=cfg.n0,
        refit_log=log,
    )
