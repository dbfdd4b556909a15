"""Acceptance criteria 1-12, one printed PASS/FAIL line each.

Run alone with ``pytest tests/test_acceptance.py -v``; the lines are collected
in the "acceptance criteria" section of the terminal summary.
"""

import time

import numpy as np
import pytest

from frontspeed.cell_problem import solve_cell
from frontspeed.corrector import (
    corrector_residual,
    decay_report,
    solvability_defect,
    solve_corrector,
    zeroth_mode_without_strain,
)
from frontspeed.direct_sim import SimGrid, integrate, linear_growth_study
from frontspeed.ensemble import EnsembleConfig, calibrate_kappa, fit_quadratic_law, run_ensemble
from frontspeed.front_solver import solve_front
from frontspeed.gaussian_shear import (
    CovarianceModel,
    CrossGrid,
    borell_check,
    constant_shear,
    cosine_shear,
    kl_decompose,
    sample_field,
)
from frontspeed.minmax import build_test_function, estimate_speed, eval_psi
from frontspeed.reaction import Nonlinearity, analytic_bistable_front, bistable_speed

pytestmark = pytest.mark.acceptance

MU = 0.25
C0 = bistable_speed(MU)
NL = Nonlinearity("bistable", MU)
SWEEP = [0.025, 0.05, 0.1, 0.15, 0.2]
OU = CovarianceModel("ornstein_uhlenbeck", 1.0, 1.0, 1)


@pytest.fixture(scope="module")
def fp():
    return analytic_bistable_front(MU, 30.0, 2049)


@pytest.fixture(scope="module")
def cos16():
    return cosine_shear(CrossGrid(1.0, 16, 1))


def test_c01_front_oracle(criterion):
    t = time.perf_counter()
    dc, du = 0.0, 0.0
    for mu in (0.1, 0.25, 0.4):
        p = solve_front(Nonlinearity("bistable", mu))
        ex = analytic_bistable_front(mu, p.half_width, len(p.xi))
        dc = max(dc, abs(p.c0 - bistable_speed(mu)))
        du = max(du, float(np.max(np.abs(p.U - ex.U))))
    dt = time.perf_counter() - t
    criterion(1, dc < 1e-6 and du < 1e-5 and dt < 5,
              f"|dc0|={dc:.2e} (<1e-6), |dU|={du:.2e} (<1e-5), {dt:.1f}s (<5s)")


def test_c02_cell_problem(criterion):
    t = time.perf_counter()
    g1, g2 = CrossGrid(1.0, 32, 1), CrossGrid(1.0, 16, 2)
    e1 = abs(solve_cell(cosine_shear(g1).fluct, g1, C0).grad_sq_avg - 1 / (2 * np.pi**2))
    e2 = abs(solve_cell(cosine_shear(g2).fluct, g2, C0).grad_sq_avg - 1 / (8 * np.pi**2))
    dt = time.perf_counter() - t
    criterion(2, e1 < 1e-8 and e2 < 1e-8 and dt < 1,
              f"1D err={e1:.2e}, 2D err={e2:.2e} (<1e-8), {dt:.2f}s (<1s)")


def test_c03_psi_constancy(criterion, fp):
    t = time.perf_counter()
    b = cosine_shear(CrossGrid(1.0, 32, 1))
    cs = solve_cell(b.fluct, b.grid, fp.c0)
    tf = build_test_function(fp, cs, solve_corrector(cs, fp), 0.0)
    err = float(np.max(np.abs(eval_psi(tf, b) - fp.c0)))
    dt = time.perf_counter() - t
    criterion(3, err < 1e-8 and dt < 1, f"max|psi-c0|={err:.2e} (<1e-8), {dt:.2f}s (<1s)")


def test_c04_corrector_residual(criterion, fp):
    b = cosine_shear(CrossGrid(1.0, 32, 1))
    cs = solve_cell(b.fluct, b.grid, fp.c0)
    res = float(np.max(np.abs(corrector_residual(solve_corrector(cs, fp), cs, fp))))
    sol = abs(solvability_defect(cs, fp))
    criterion(4, res < 1e-6 and sol < 1e-8, f"residual={res:.2e} (<1e-6), solvability={sol:.2e} (<1e-8)")


def test_c05_sandwich(criterion, fp, cos16):
    t = time.perf_counter()
    est = estimate_speed(fp, cos16, 0.1)
    tr = integrate(NL, cos16, 0.1, SimGrid(-40.0, 40.0, 0.1, cos16.grid, T=150.0))
    c = tr.fitted_speed
    dt = time.perf_counter() - t
    ok = tr.converged and est.lower - 2e-3 <= c <= est.upper + 2e-3 and dt < 120
    criterion(5, ok, f"c_direct={c:.8f} in [{est.lower:.8f}, {est.upper:.8f}] +- 2e-3, {dt:.0f}s (<120s)")


def test_c06_quadratic_law(criterion, cos16):
    t = time.perf_counter()
    grid = SimGrid(-40.0, 40.0, 0.1, cos16.grid, dt=0.01, T=150.0)
    base = integrate(NL, constant_shear(cos16.grid, 0.0), 0.0, grid).fitted_speed - C0
    speeds, conv = [], []
    for d in SWEEP:
        tr = integrate(NL, cos16, d, grid)
        speeds.append(tr.fitted_speed - base)
        conv.append(tr.converged)
    fit = fit_quadratic_law(SWEEP, speeds, conv)
    target = C0 / (4 * np.pi**2)
    rel = abs(fit.gamma_hat / target - 1)
    dt = time.perf_counter() - t
    ok = rel < 0.1 and fit.residual_exponent >= 2.5 and dt < 900
    criterion(6, ok, f"gamma_hat={fit.gamma_hat:.6g} vs {target:.6g} (rel {rel:.2%} <10%), "
                     f"p={fit.residual_exponent:.3g} (>=2.5), {dt:.0f}s (<900s)")


def test_c07_cubic_remainder(criterion, fp):
    b = cosine_shear(CrossGrid(1.0, 32, 1))
    w = []
    for d in SWEEP:
        est = estimate_speed(fp, b, d)
        w.append(est.upper - est.lower)
    slope = float(np.polyfit(np.log(SWEEP), np.log(w), 1)[0])
    criterion(7, 2.5 <= slope <= 3.5, f"spread slope={slope:.3f} (in [2.5, 3.5])")


def test_c08_mode_decay(criterion, fp):
    t = time.perf_counter()
    g = CrossGrid(1.0, 32, 1)
    basis = kl_decompose(OU, g)
    c4, amps = [], []
    for i in range(100):
        b = sample_field(basis, (8, i))
        cs = solve_cell(b.fluct, g, fp.c0)
        c4.append(decay_report(solve_corrector(cs, fp).modes, fp)["C4_hat"])
        amps.append(np.abs(cs.a_coeffs[1:33]))
    ratio = max(c4) / float(np.median(c4))
    j = np.arange(1, 33)
    slope = float(np.polyfit(np.log(j), np.log(np.mean(amps, axis=0)), 1)[0])
    dt = time.perf_counter() - t
    criterion(8, ratio < 5 and slope <= -1 and dt < 300,
              f"C4 max/median={ratio:.3f} (<5), a_j slope={slope:.2f} (<=-1), {dt:.0f}s (<300s)")


def test_c09_borell(criterion):
    t = time.perf_counter()
    rep = borell_check(OU, [1.0, 2.0, 3.0], 10_000, seed=9)
    margin = rep.borell_bound + 3 * rep.std_err - rep.empirical_prob
    dt = time.perf_counter() - t
    criterion(9, bool(np.all(margin >= 0)) and dt < 60,
              f"P_emp={np.round(rep.empirical_prob, 4).tolist()} vs "
              f"bound={np.round(rep.borell_bound, 4).tolist()}, {dt:.1f}s (<60s)")


def test_c10_deviation_event(criterion):
    t = time.perf_counter()
    base = EnsembleConfig(model=OU, n_samples=256, q=0.5, cross_n=32, route="with_bounds")
    cal = calibrate_kappa(base, pilot_seed=1000, n_pilot=256, delta=0.1)
    frac = {}
    for d in (0.05, 0.025):
        rep = run_ensemble(EnsembleConfig(**{**base.__dict__, "delta": d, "kappa": cal.kappa, "seed": 2024}))
        frac[d] = (rep.exceed_frac, rep.exceed_frac_bound)
    t_ens = time.perf_counter() - t
    spot = run_ensemble(EnsembleConfig(**{
        **base.__dict__, "n_samples": 16, "cross_n": 16, "delta": 0.05, "kappa": cal.kappa,
        "seed": 2025, "route": "with_direct",
    }))
    eb05, eb025 = frac[0.05][1], frac[0.025][1]
    decreases = eb025 < eb05 or eb05 == 0.0
    ok = eb05 < 0.05 and decreases and spot.exceed_frac < 0.05 and spot.n_failed == 0 and t_ens < 600
    criterion(10, ok, f"kappa={cal.kappa:.4g}; bound frac d=0.05: {eb05:.4f} (<0.05), "
                      f"d=0.025: {eb025:.4f}; midpoint frac {frac[0.05][0]:.4f}/{frac[0.025][0]:.4f}; "
                      f"direct spot check {spot.exceed_frac:.3f} over {spot.n_used}; {t_ens:.0f}s (<600s)")


def test_c11_secular_growth(criterion, fp):
    b = cosine_shear(CrossGrid(1.0, 32, 1))
    big = analytic_bistable_front(MU, 40.0, 2731)
    cs = solve_cell(b.fluct, b.grid, C0)
    naive = zeroth_mode_without_strain(big, cs.grad_sq_avg, cs.gamma)
    cf = solve_corrector(cs, big)
    r = {}
    for w in (10.0, 15.0, 20.0):
        sel = np.abs(big.xi) <= w
        r[w] = float(np.max(np.abs(cf.u[sel]) / big.U_prime[sel, None]))
    bounded = r[20.0] / r[10.0] < 1.05
    ok = naive.abs_growth_slope > 0 and bounded
    criterion(11, ok, f"alpha=0 |u0|/U' slope={naive.abs_growth_slope:.4f} (>0); "
                      f"strained max|u|/U' over |xi|<=10,15,20: "
                      f"{r[10.0]:.3e}, {r[15.0]:.3e}, {r[20.0]:.3e}")


def test_c12_large_delta(criterion):
    t = time.perf_counter()
    b = cosine_shear(CrossGrid(1.0, 16, 1))
    rep = linear_growth_study(NL, b, [2.0, 4.0, 8.0, 16.0, 32.0])
    dt = time.perf_counter() - t
    criterion(12, rep.cauchy_like and dt < 1200,
              f"c/delta={np.round(rep.ratios, 4).tolist()}, "
              f"diffs={np.round(rep.differences, 4).tolist()}, {dt:.0f}s (<1200s)")
