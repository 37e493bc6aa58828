import csv
import math
from types import SimpleNamespace

import numpy as np
import pytest

from tvdingarch.errors import DomainError
from tvdingarch.estimate import fit, fitted_path
from tvdingarch.forecast import ForecastConfig, osa_step, point_forecast, rmsfe, rolling_forecast
from tvdingarch.model import LatentPath, ModelParams, latent_path
from tvdingarch.nbdist import NbParams, nb_log_pmf

from conftest import SETTING_II, sim


def fake_fit(p):
    return SimpleNamespace(theta_hat=p)


def test_osa_step_substitution():
    p = ModelParams(1.0, 0.5, 0.2, 2.0, 0.0, 0.0)
    path = LatentPath(lam=np.array([2.0, 3.0]), phi=np.array([7.0, 2.0]))
    assert osa_step(fake_fit(p), [1, 4], path) == pytest.approx((3.6, 2.0))


def test_osa_step_constant_mean():
    p = ModelParams(2.5, 0.0, 0.0, 1.0, 0.3, 0.1)
    path = LatentPath(lam=np.array([9.0, 9.0]), phi=np.array([1.0, 1.0]))
    lam, phi = osa_step(fake_fit(p), [3, 40], path)
    assert lam == 2.5
    assert phi == pytest.approx(1.0 + 12.0 + 0.1)


def test_osa_step_matches_hand_iteration(setting2_series):
    y, _ = setting2_series
    y = y[:300]
    res = fit(y[:299])
    path = fitted_path(res, y[:299])
    lam, phi = osa_step(res, y[:299], path)
    full = latent_path(res.theta_hat, y, *res.init_used)
    assert lam == pytest.approx(full.lam[299], rel=1e-14)
    assert phi == pytest.approx(full.phi[299], rel=1e-14)


def test_point_forecast_examples():
    assert point_forecast(1.0, 1.0, "median") == 0
    assert point_forecast(3.7, 2.0, "mean") == 3.7
    p = NbParams(8.0, 3.0)
    assert point_forecast(8.0, 3.0, "mode") == int(np.argmax(nb_log_pmf(p, np.arange(200))))
    with pytest.raises(ValueError):
        point_forecast(1.0, 1.0, "trimmed")


def test_rmsfe_examples():
    assert rmsfe([1, 3], [2, 5])[-1] == pytest.approx(math.sqrt(2.5), abs=1e-15)
    assert np.all(rmsfe([4, 0, 7], [4, 0, 7]) == 0.0)


def test_rmsfe_recurrence_exact():
    rng = np.random.default_rng(0)
    y = rng.integers(0, 50, 500)
    yhat = rng.normal(20, 5, 500)
    r = rmsfe(y, yhat)
    k = np.arange(1, 501)
    lhs = r[1:] ** 2 * k[1:]
    rhs = r[:-1] ** 2 * k[:-1] + (y[1:] - yhat[1:]) ** 2
    assert np.max(np.abs(lhs - rhs) / np.maximum(1.0, rhs)) < 1e-12


def test_config_validation():
    with pytest.raises(ValueError):
        ForecastConfig(n0=10)
    with pytest.raises(ValueError):
        ForecastConfig(n0=50, point="avg")
    with pytest.raises(ValueError):
        ForecastConfig(n0=50, refit_every=0)


@pytest.fixture(scope="module")
def short_series():
    y, _ = sim(SETTING_II, 120, 14)
    return y


def test_rolling_forecast_shapes_and_trace(short_series, tmp_path):
    y = short_series
    tr = rolling_forecast(y, ForecastConfig(n0=100, point="median", refit_every=5))
    assert tr.t.tolist() == list(range(101, 121))
    assert tr.predictions.shape == (20,)
    assert np.all(tr.predictions == np.round(tr.predictions))
    assert sum(e["refit"] for e in tr.refit_log) == 4
    assert np.allclose(tr.rmsfe, rmsfe(y[100:], tr.predictions))
    out = tmp_path / "trace.csv"
    tr.to_csv(out)
    rows = list(csv.DictReader(open(out)))
    assert len(rows) == 20 and set(rows[0]) == {"t", "y", "yhat", "lambda", "phi", "rmsfe"}


def test_single_prediction_boundary(short_series):
    y = short_series
    tr = rolling_forecast(y, ForecastConfig(n0=119, point="mean"))
    assert tr.predictions.shape == (1,)
    with pytest.raises(DomainError):
        rolling_forecast(y, ForecastConfig(n0=120))


def test_predictions_use_only_past_data(short_series):
    y = short_series.copy()
    a = rolling_forecast(y, ForecastConfig(n0=110, point="mean", refit_every=3))
    y2 = y.copy()
    y2[-1] += 50  # the last observation is never part of a training window
    b = rolling_forecast(y2, ForecastConfig(n0=110, point="mean", refit_every=3))
    assert np.array_equal(a.predictions, b.predictions)


def test_ordinary_model_dispersion_constant(short_series):
    tr = rolling_forecast(short_series, ForecastConfig(n0=110, model="ordinary", refit_every=20))
    assert np.allclose(tr.phi, tr.phi[0])


def test_median_absolute_error_not_worse_than_mean():
    # the median minimises expected absolute error under the predictive law
    rng = np.random.default_rng(4)
    med_err = mean_err = 0.0
    for _ in range(300):
        lam, phi = rng.uniform(0.5, 30), rng.uniform(0.2, 5)
        y = rng.poisson(lam * rng.gamma(phi, 1 / phi, 200))
        med_err += np.abs(y - point_forecast(lam, phi, "median")).mean()
        mean_err += np.abs(y - point_forecast(lam, phi, "mean")).mean()
    assert med_err <= mean_err
