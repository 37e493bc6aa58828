import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tvdingarch.errors import DegenerateDataError, DomainError
from tvdingarch.estimate import (
    EPS,
    FitConfig,
    evaluate_fit,
    fit,
    information_criteria,
    parametric_bootstrap,
    transform_params,
    untransform_params,
)
from tvdingarch.likelihood import loglik
from tvdingarch.model import ModelParams

from conftest import SETTING_I, SETTING_II, sim


def test_transform_roundtrip_setting_i():
    u = transform_params(SETTING_I)
    back = untransform_params(u).as_array()
    assert np.max(np.abs(back - SETTING_I.as_array())) < 1e-12


def test_zero_vector_maps_to_equal_rates():
    p = untransform_params(np.zeros(6))
    rates = [p.beta1, p.beta2, p.alpha1, p.alpha2]
    assert p.beta0 == 1.0 and p.alpha0 == 1.0
    assert np.allclose(rates, (1 - EPS) / 5, rtol=1e-15)


def test_transform_fuzz_roundtrip():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(1000):
        r = rng.dirichlet(np.ones(5))[:4] * (1 - EPS)
        theta = np.array([rng.uniform(0.01, 50), r[0], r[1], rng.uniform(0.01, 20), r[2], r[3]])
        back = untransform_params(transform_params(theta)).as_array()
        worst = max(worst, np.max(np.abs(back - theta)))
    assert worst < 1e-10


@given(st.lists(st.floats(min_value=-30, max_value=30), min_size=6, max_size=6))
@settings(max_examples=300)
def test_any_vector_maps_inside_constraint(u):
    p = untransform_params(np.array(u))
    assert p.rate_sum < 1.0
    assert p.beta0 > 0 and p.alpha0 > 0


def test_boundary_rates_are_clamped():
    p = ModelParams(2.0, 0.3, 0.0, 1.0, 0.0, 0.2)
    back = untransform_params(transform_params(p)).as_array()
    assert back[2] == pytest.approx(1e-10, rel=1e-6)
    assert back[4] == pytest.approx(1e-10, rel=1e-6)


def test_transform_rejects_rates_on_the_constraint():
    with pytest.raises(DomainError):
        transform_params(ModelParams(1.0, 0.5, 0.5, 1.0, 0.0, 0.0))


def test_ordinary_transform_has_four_coordinates():
    p = ModelParams(2.0, 0.3, 0.2, 1.0)
    u = transform_params(p, mode="ordinary")
    assert u.shape == (4,)
    assert np.allclose(untransform_params(u, mode="ordinary").as_array(), p.as_array(), atol=1e-12)


def test_information_criteria_examples():
    aic, bic = information_criteria(-1329.284, 6, 645)
    assert aic == pytest.approx(2670.568, abs=1e-9)
    assert bic == pytest.approx(2697.39, abs=0.01)
    assert information_criteria(0.0, 0, 10) == (0.0, 0.0)
    aic, bic = information_criteria(-10.0, 2, 100)
    assert aic == 24.0
    assert bic == pytest.approx(20 + 2 * math.log(100), abs=1e-12)
    assert round(bic, 2) == 29.21
    with pytest.raises(DomainError):
        information_criteria(0.0, 1, 1)


def test_fit_setting_ii(setting2_series):
    y, _ = setting2_series
    res = fit(y)
    assert res.converged
    assert res.k == 6
    est = res.theta_hat.as_array()
    truth = SETTING_II.as_array()
    se = res.standard_errors
    assert np.all(np.abs(est - truth) < 4 * se)
    assert res.theta_hat.rate_sum < 1.0
    assert res.loglik >= res.loglik_start
    assert res.loglik == pytest.approx(loglik(res.theta_hat, y, res.init_used), rel=1e-14)
    assert res.aic == pytest.approx(-2 * res.loglik + 12)
    assert res.bic == pytest.approx(-2 * res.loglik + 6 * math.log(y.size - 1))
    assert set(res.covariances) == {"J1_inverse", "OPG_inverse", "Hessian_inverse"}


def test_fit_nesting_and_ordinary_mode(setting2_series):
    y, _ = setting2_series
    tv = fit(y, FitConfig(compute_covariance=False))
    ord_ = fit(y, FitConfig(mode="ordinary", compute_covariance=False))
    assert ord_.loglik <= tv.loglik
    assert ord_.theta_hat.alpha1 == 0 and ord_.theta_hat.alpha2 == 0
    assert ord_.k == 4
    assert ord_.free_names == ["beta0", "beta1", "beta2", "alpha0"]
    assert ord_.bic == pytest.approx(-2 * ord_.loglik + 4 * math.log(y.size - 1))


def test_ordinary_mode_recovers_constant_dispersion_truth():
    p = ModelParams(2.0, 0.4, 0.3, 1.0, 0.0, 0.0)
    est = []
    for seed in range(20):
        y, _ = sim(p, 1000, 100 + seed)
        est.append(fit(y, FitConfig(mode="ordinary", compute_covariance=False)).theta_hat.as_array()[:4])
    est = np.array(est)
    sd = est.std(axis=0, ddof=1)
    assert np.all(np.abs(est.mean(axis=0) - p.as_array()[:4]) < 3 * sd / math.sqrt(20) + 0.05 * p.as_array()[:4])


def test_constant_series_rejected():
    with pytest.raises(DegenerateDataError):
        fit(np.full(50, 3.0))
    with pytest.raises(DegenerateDataError):
        fit(np.arange(10))


def test_multistart_never_worse(setting2_series):
    y, _ = setting2_series
    one = fit(y[:300], FitConfig(compute_covariance=False))
    many = fit(y[:300], FitConfig(multistart=4, seed=3, compute_covariance=False))
    assert many.loglik >= one.loglik - 1e-9


def test_warm_start_reaches_same_optimum(setting2_series):
    y, _ = setting2_series
    cold = fit(y, FitConfig(compute_covariance=False))
    warm = fit(y, FitConfig(compute_covariance=False), start=cold.theta_hat)
    assert warm.loglik == pytest.approx(cold.loglik, abs=1e-6)


def test_boundary_flags_when_dispersion_constant():
    p = ModelParams(2.0, 0.3, 0.3, 1.0, 0.0, 0.0)
    y, _ = sim(p, 400, 8)
    res = fit(y, FitConfig(mode="ordinary"))
    assert res.boundary_flags == {"beta1": False, "beta2": False}
    forced = evaluate_fit(y, res.theta_hat, FitConfig(mode="tv", compute_covariance=False), init=res.init_used)
    assert forced.boundary_flags["alpha1"] and forced.boundary_flags["alpha2"]
    assert forced.loglik == pytest.approx(res.loglik, rel=1e-14)


def test_config_validation():
    with pytest.raises(ValueError):
        FitConfig(mode="bogus")
    with pytest.raises(ValueError):
        FitConfig(gradient_tolerance=0.0)
    with pytest.raises(ValueError):
        FitConfig(multistart=0)


def test_unconstrained_mode_runs(setting2_series):
    y, _ = setting2_series
    res = fit(y, FitConfig(constraint="none", compute_covariance=False))
    assert res.converged


def test_parametric_bootstrap_deterministic(setting1_series):
    y, _ = setting1_series
    res = fit(y[:200], FitConfig(compute_covariance=False))
    a = parametric_bootstrap(res, 20, seed=4)
    b = parametric_bootstrap(res, 20, seed=4, threads=2)
    assert np.array_equal(a.samples, b.samples)
    lo, hi = a.percentile_interval(0.9)
    assert np.all(lo <= hi)
    assert a.samples.shape[1] == 6 and a.failures == 20 - a.samples.shape[0]


def test_to_dict_fields(setting2_series):
    y, _ = setting2_series
    d = fit(y[:200]).to_dict()
    for key in ("estimates", "standard_errors", "loglik", "aic", "bic", "converged", "boundary_flags", "init_used"):
        assert key in d
