import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import cumulative_trapezoid

from frontspeed.ensemble import (
    EnsembleConfig,
    FitError,
    aggregate,
    calibrate_kappa,
    expected_gamma,
    fit_quadratic_law,
    run_ensemble,
    wilson_interval,
)
from frontspeed.errors import ParameterError
from frontspeed.gaussian_shear import CovarianceModel
from frontspeed.reaction import bistable_speed

C0 = bistable_speed(0.25)


def cfg(**kw):
    base = dict(n_samples=16, cross_n=16, front_nodes=1025, seed=3)
    base.update(kw)
    return EnsembleConfig(**base)


def test_config_validation():
    for bad in ({"q": 1.0}, {"epsilon_target": 0.3}, {"kappa": 0.0}, {"route": "x"},
                {"n_samples": 0}, {"delta": -1.0}, {"threads": 0}):
        with pytest.raises(ParameterError):
            cfg(**bad)
    with pytest.raises(ParameterError):
        cfg(model=CovarianceModel(dim=2), epsilon_target=0.21)
    assert cfg(delta=0.1, q=0.5, kappa=2.0).threshold == pytest.approx(2.0 * 0.1**2.5)


def test_vanishing_variance():
    rep = run_ensemble(cfg(model=CovarianceModel(sigma2=0.0), route="with_bounds"))
    assert rep.mean_gamma == 0.0
    assert rep.exceed_frac == 0.0 and rep.exceed_frac_bound == 0.0


def test_determinism_and_csv(tmp_path):
    a = run_ensemble(cfg(route="with_bounds"))
    b = run_ensemble(cfg(route="with_bounds"))
    assert json.dumps(a.to_dict(), sort_keys=True) == json.dumps(b.to_dict(), sort_keys=True)
    a.to_csv(tmp_path / "r.csv")
    a.to_json(tmp_path / "r.json")
    assert a.n_used == 16 and a.n_failed == 0


def test_asymptotic_route_never_exceeds():
    rep = run_ensemble(cfg())
    assert rep.exceed_frac == 0.0 and rep.exceed_frac_bound is None
    assert all(r["c_source"] == "asymptotic" for r in rep.records)


def test_sandwich_route_records():
    rep = run_ensemble(cfg(route="with_bounds", delta=0.1))
    for r in rep.records:
        assert r["admissible"]
        assert r["c_lower"] <= r["c_used"] <= r["c_upper"]
        assert r["deviation"] <= r["deviation_bound"]


def test_aggregate_counts_inadmissible_as_exceedance():
    c = cfg(route="with_bounds")
    recs = [
        {"failed": False, "admissible": True, "deviation": 0.0, "deviation_bound": 0.0,
         "gamma": 0.1, "sup_norm": 1.0},
        {"failed": False, "admissible": False, "deviation": 0.0, "deviation_bound": 0.0,
         "gamma": 0.1, "sup_norm": 3.0},
        {"failed": True, "error": "x"},
    ]
    rep = aggregate(c, recs)
    assert rep.n_used == 2 and rep.n_failed == 1
    assert rep.exceed_frac == 0.5 and rep.inadmissible_frac == 0.5


def test_expected_gamma_degenerate_covariance():
    # perfectly correlated field is constant in y: no fluctuation
    model = CovarianceModel(kind="squared_exponential", corr_len=1e6)
    assert expected_gamma(model, C0) < 1e-10
    with pytest.raises(ParameterError):
        expected_gamma(CovarianceModel(dim=2), C0)


def test_expected_gamma_against_matrix_trace():
    model = CovarianceModel()
    y = np.linspace(0, 1, 801)
    C = model(y[:, None] - y[None, :])
    # chi' = B(y) - y B(1) with B the running integral: a linear map of b
    W = cumulative_trapezoid(np.eye(len(y)), y, axis=0, initial=0)
    M = W - np.outer(y, W[-1])
    var = np.einsum("ij,jk,ik->i", M, C, M)
    oracle = 0.5 * C0 * np.trapezoid(var, y)
    assert expected_gamma(model, C0) == pytest.approx(oracle, rel=1e-4)


@pytest.mark.slow
def test_ensemble_mean_gamma_matches_quadrature():
    rep = run_ensemble(cfg(n_samples=256, cross_n=32, seed=11))
    eg = expected_gamma(CovarianceModel(), C0)
    assert abs(rep.mean_gamma - eg) <= 4 * rep.gamma_std_err


def test_two_seeds_consistent():
    a = run_ensemble(cfg(n_samples=64, seed=1))
    b = run_ensemble(cfg(n_samples=64, seed=2))
    se = np.hypot(a.gamma_std_err, b.gamma_std_err)
    assert abs(a.mean_gamma - b.mean_gamma) <= 4 * se


def test_calibrate_kappa():
    k = calibrate_kappa(cfg(), pilot_seed=100, n_pilot=16)
    assert k.kappa > 0 and k.n_used == 16 and k.n_inadmissible == 0
    rep = run_ensemble(cfg(route="with_bounds", delta=0.1, kappa=k.kappa, seed=100))
    # the calibration quantile is met on its own pilot
    assert rep.exceed_frac_bound <= 1 - 0.95 + 1.0 / 16


def test_wilson_interval():
    lo, hi = wilson_interval(0, 100)
    assert lo == 0.0 and 0.03 < hi < 0.04
    lo, hi = wilson_interval(50, 100)
    assert lo < 0.5 < hi and hi - 0.5 == pytest.approx(0.5 - lo)
    assert wilson_interval(0, 0) == (0.0, 1.0)


@given(
    c0=st.floats(0.1, 1.0),
    lin=st.floats(-1.0, 1.0),
    gam=st.floats(-1.0, 1.0),
    K=st.floats(0.5, 5.0),
)
@settings(max_examples=10, deadline=None)
def test_fit_recovers_quadratic_plus_quartic(c0, lin, gam, K):
    d = np.geomspace(0.02, 0.2, 7)
    fit = fit_quadratic_law(d, c0 + lin * d + gam * d**2 + K * d**4)
    # the quadratic absorbs part of the quartic term
    assert abs(fit.c0_hat - c0) <= K * d[-1] ** 4
    assert abs(fit.residual_exponent - 4.0) < 0.1


def test_fit_exact_quadratic_and_zero_shear():
    d = np.geomspace(0.02, 0.2, 6)
    fit = fit_quadratic_law(d, C0 + 0.01 * d**2)
    assert fit.gamma_hat == pytest.approx(0.01, rel=1e-8)
    assert fit.residual_exponent == float("inf")
    flat = fit_quadratic_law(d, np.full_like(d, C0))
    assert abs(flat.gamma_hat) < 1e-10 and abs(flat.lin_hat) < 1e-10


def test_fit_errors():
    d = np.geomspace(0.02, 0.2, 6)
    with pytest.raises(FitError):
        fit_quadratic_law(d[:4], d[:4])
    with pytest.raises(FitError):
        fit_quadratic_law(np.linspace(0.1, 0.2, 6), d)
    with pytest.raises(FitError):
        fit_quadratic_law(d, d, converged=[True] * 5 + [False])
    with pytest.raises(FitError):
        fit_quadratic_law(d, np.r_[d[:-1], np.nan])


def test_exceedance_consistent_across_seeds():
    fr = []
    for seed in (1, 2):
        rep = run_ensemble(cfg(n_samples=64, seed=seed, route="with_bounds", delta=0.1, kappa=0.0155))
        fr.append((rep.exceed_frac_bound, rep.exceed_std_err))
    se = np.hypot(fr[0][1], fr[1][1])
    assert abs(fr[0][0] - fr[1][0]) <= 3 * se
