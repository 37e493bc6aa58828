"""
Predictive checks for fitted count models.

The PIT histogram is the non-randomised version for discrete predictive
laws: each observation contributes the conditional PIT distribution

    F_t(u) = 0                                 u <= P(y_t - 1)
           = (u - P(y_t - 1)) / (P(y_t) - P(y_t - 1))   in between
           = 1                                 u >= P(y_t)

and bin masses are differences of the average of F_t over the bin edges.
"""

import csv
from dataclasses import dataclass

import numpy as np
from scipy import stats

from tvdingarch.errors import DomainError
from tvdingarch.model import as_counts
from tvdingarch.nbdist import _cdf_v

__all__ = ["PitHistogram", "pit", "pit_values", "pearson_residuals"]


@dataclass
class PitHistogram:
    bin_edges: np.ndarray
    bin_masses: np.ndarray
    uniformity_stat: float
    p_value: float
    n_obs: int

    @property
    def bins(self):
        return self.bin_masses.size

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin_low", "bin_high", "mass"])
            for lo, hi, m in zip(self.bin_edges[:-1], self.bin_edges[1:], self.bin_masses):
                w.writerow([repr(float(lo)), repr(float(hi)), repr(float(m))])

    def to_dict(self):
        return {
            "bin_edges": self.bin_edges.tolist(),
            "bin_masses": self.bin_masses.tolist(),
            "uniformity_stat": self.uniformity_stat,
            "p_value": self.p_value,
            "n_obs": self.n_obs,
        }


def _aligned(y, path, start):
    y = as_counts(y)
    lam = np.asarray(path.lam, dtype=float)
    phi = np.asarray(path.phi, dtype=float)
    if lam.shape != y.shape or phi.shape != y.shape:
        raise DomainError("path and counts are not aligned")
    return y[start:], lam[start:], phi[start:]


def pit_values(y, path, u, start=1):
    """Average conditional PIT distribution evaluated at levels `u`."""
    y, lam, phi = _aligned(y, path, start)
    lo = _cdf_v(y - 1.0, lam, phi)
    hi = _cdf_v(y, lam, phi)
    u = np.asarray(u, dtype=float)
    width = hi - lo
    safe = np.where(width > 0, width, 1.0)
    f = np.clip((u[:, None] - lo[None, :]) / safe[None, :], 0.0, 1.0)
    # zero-width steps (numerically certain outcomes) jump at lo
    f = np.where(width[None, :] > 0, f, (u[:, None] >= lo[None, :]).astype(float))
    return f.mean(axis=1)


def pit(y, path, bins=10, start=1):
    """Non-randomised PIT histogram with a chi-square uniformity check.

    Parameters
    ----------
    y : array_like
    path : LatentPath
        Predictive means and dispersions aligned with `y`.
    bins : int, default 10
    start : int, default 1
        First zero-based index used; the default skips the first observation,
        on which the likelihood conditions.

    Returns
    -------
    PitHistogram
        ``uniformity_stat`` is ``N * sum((m_j - 1/J)**2 / (1/J))`` with N the
        number of observations used, referred to chi-square with J - 1 df.
    """
    if int(bins) != bins or bins < 2:
        raise DomainError("bins must be an integer >= 2")
    edges = np.linspace(0.0, 1.0, int(bins) + 1)
    fbar = pit_values(y, path, edges, start)
    fbar[0], fbar[-1] = 0.0, 1.0
    masses = np.maximum(np.diff(fbar), 0.0)
    masses /= masses.sum()
    n_obs = as_counts(y).size - start
    expected = 1.0 / bins
    stat = float(n_obs * np.sum((masses - expected) ** 2 / expected))
    return PitHistogram(edges, masses, stat, float(stats.chi2.sf(stat, bins - 1)), n_obs)


def pearson_residuals(y, path):
    """``(y_t - lam_t) / sqrt(lam_t + lam_t**2 / phi_t)`` for every t."""
    y, lam, phi = _aligned(y, path, 0)
    return (y - lam) / np.sqrt(lam + lam * lam / phi)
