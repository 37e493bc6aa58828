"""
Monte Carlo harness for estimator accuracy and bootstrap-test size/power.

Replicate r draws its series from the child stream ``(seed, r)``; bootstrap
replicates inside a test use a test seed drawn from the same stream, so a
summary depends only on the design, never on worker count.
"""

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from tvdingarch.dispersion_test import TestConfig, bootstrap_test
from tvdingarch.errors import DegenerateDataError, NumericError
from tvdingarch.estimate import FitConfig, fit, free_indices
from tvdingarch.model import PARAM_NAMES, ModelParams, check_stationarity, simulate
from tvdingarch.pool import child_rng, map_ordered

__all__ = [
    "EXPERIMENTS",
    "McDesign",
    "McSummary",
    "stationary_state",
    "simulate_replicate",
    "run_estimation_study",
    "run_level_study",
]

logger = logging.getLogger(__name__)

EXPERIMENTS = ("estimation", "test_level", "test_power")
DEFAULT_BURNIN = 200


@dataclass
class McDesign:
    theta_true: ModelParams
    n: int
    replications: int = 200
    seed: int = 0
    experiment: str = "estimation"
    mode: str = "tv"
    burnin: int = DEFAULT_BURNIN

    def __post_init__(self):
        if self.replications < 10:
            raise ValueError("replications must be >= 10")
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        if self.n < 20:
            raise ValueError("n must be >= 20")
        if not check_stationarity(self.theta_true).is_stationary_practical:
            raise ValueError("design parameters violate the stationarity condition")
        if self.experiment == "test_level" and (self.theta_true.alpha1 or self.theta_true.alpha2):
            raise ValueError("a level study needs alpha1 = alpha2 = 0")

    def to_dict(self):
        d = asdict(self)
        d["theta_true"] = self.theta_true.as_dict()
        return d


@dataclass
class McSummary:
    design: McDesign
    names: list
    mean: dict = field(default_factory=dict)
    sd: dict = field(default_factory=dict)
    bias: dict = field(default_factory=dict)
    estimates: np.ndarray = None
    standardized: np.ndarray = None
    rejection_rates: dict = field(default_factory=dict)
    p_values: dict = field(default_factory=dict)
    failures: int = 0
    unreliable: int = 0
    successes: int = 0

    def to_dict(self):
        out = {
            "design": self.design.to_dict(),
            "names": list(self.names),
            "mean": self.mean,
            "sd": self.sd,
            "bias": self.bias,
            "rejection_rates": self.rejection_rates,
            "failures": self.failures,
            "unreliable": self.unreliable,
            "successes": self.successes,
        }
        if self.estimates is not None:
            out["estimates"] = self.estimates.tolist()
        if self.p_values:
            out["p_values"] = {k: [None if math.isnan(v) else v for v in vals] for k, vals in self.p_values.items()}
        return out

    def to_csv(self, path):
        """Per-parameter table for estimation studies, rejection table for tests."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            if self.rejection_rates:
                w.writerow(["variant", "level", "rejection_rate"])
                for variant, rates in self.rejection_rates.items():
                    for level, rate in rates.items():
                        w.writerow([variant, level, repr(rate)])
            else:
                w.writerow(["parameter", "true", "mean", "sd", "bias"])
                truth = self.design.theta_true.as_dict()
                for k in self.names:
                    w.writerow([k, repr(truth[k]), repr(self.mean[k]), repr(self.sd[k]), repr(self.bias[k])])

    def to_json(self, path, manifest=None):
        payload = self.to_dict()
        if manifest is not None:
            payload["manifest"] = manifest
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2)


def stationary_state(p):
    """Stationary means of (lambda_t, phi_t), used to start simulations."""
    lam = p.beta0 / (1.0 - p.beta1 - p.beta2)
    phi = (p.alpha0 + p.alpha1 * lam) / (1.0 - p.alpha2)
    return lam, phi


def simulate_replicate(d, index):
    """Series for replicate `index`, started at the stationary means after burn-in."""
    lam1, phi1 = stationary_state(d.theta_true)
    y, _ = simulate(d.theta_true, d.n, lam1, phi1, child_rng(d.seed, index), burnin=d.burnin)
    return y


def _estimation_task(args):
    d, index, fcfg = args
    y = simulate_replicate(d, index)
    try:
        res = fit(y, fcfg)
    except (DegenerateDataError, NumericError) as exc:
        logger.debug("replicate %d failed: %s", index, exc)
        return None
    if not res.converged:
        return None
    return res.theta_hat.as_array()


def run_estimation_study(d, cfg=None, threads=None):
    """Simulate, fit and summarise `d.replications` series.

    Non-converged fits are excluded and counted in ``failures``.
    """
    fcfg = cfg or FitConfig(mode=d.mode, compute_covariance=False)
    idx = list(free_indices(fcfg.mode))
    rows = map_ordered(_estimation_task, [(d, r, fcfg) for r in range(d.replications)], threads)
    ok = [r for r in rows if r is not None]
    names = [PARAM_NAMES[i] for i in idx]
    est = np.array(ok)[:, idx] if ok else np.empty((0, len(idx)))
    truth = d.theta_true.as_array()[idx]
    mean = est.mean(axis=0) if len(ok) else np.full(len(idx), np.nan)
    sd = est.std(axis=0, ddof=1) if len(ok) > 1 else np.full(len(idx), np.nan)
    with np.errstate(invalid="ignore", divide="ignore"):
        standardized = (est - mean) / sd
    return McSummary(
        design=d,
        names=names,
        mean=dict(zip(names, mean.tolist())),
        sd=dict(zip(names, sd.tolist())),
        bias=dict(zip(names, (mean - truth).tolist())),
        estimates=est,
        standardized=standardized,
        failures=d.replications - len(ok),
        successes=len(ok),
    )


def _test_task(args):
    d, index, replications, variants = args
    y = simulate_replicate(d, index)
    test_seed = int(np.random.SeedSequence(d.seed, spawn_key=(index, 1)).generate_state(1)[0])
    out = {}
    fits = None
    for variant in variants:
        cfg = TestConfig(replications=replications, variant=variant, seed=test_seed)
        try:
            rep = bootstrap_test(y, cfg, threads=1, fits=fits)
        except (DegenerateDataError, NumericError) as exc:
            logger.debug("replicate %d failed: %s", index, exc)
            out[variant] = (math.nan, True)
            continue
        fits = (rep.null_fit, rep.alt_fit)
        out[variant] = (rep.p_value, rep.unreliable)
    return out


def run_level_study(d, replications=199, variants=("restricted", "unrestricted"), levels=(0.05, 0.10), threads=None):
    """Rejection rates of the bootstrap test over simulated series.

    Each simulated series is tested with every variant using the same
    bootstrap seed (paired comparison).  A test rejects at level a when its
    p-value is below a.  Failed and unreliable tests are excluded.
    """
    TestConfig(replications=replications)
    tasks = [(d, r, replications, tuple(variants)) for r in range(d.replications)]
    rows = map_ordered(_test_task, tasks, threads)
    rates = {}
    pvals = {}
    failures = 0
    unreliable = 0
    successes = d.replications
    for variant in variants:
        ps = np.array([row[variant][0] for row in rows], dtype=float)
        bad = np.array([row[variant][1] for row in rows], dtype=bool)
        usable = np.isfinite(ps) & ~bad
        failures += int((~np.isfinite(ps)).sum())
        unreliable += int((bad & np.isfinite(ps)).sum())
        successes = min(successes, int(usable.sum()))
        pvals[variant] = ps.tolist()
        rates[variant] = {
            f"{a:g}": float(np.mean(ps[usable] < a)) if usable.any() else math.nan for a in levels
        }
    return McSummary(
        design=d,
        names=[],
        rejection_rates=rates,
        p_values=pvals,
        failures=failures,
        unreliable=unreliable,
        successes=successes,
    )
