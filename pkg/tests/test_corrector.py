import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import solve

from frontspeed.cell_problem import solve_cell
from frontspeed.corrector import (
    AssemblyError,
    assemble_corrector,
    corrector_residual,
    decay_report,
    derivative_ratios,
    mode_basis,
    solvability_defect,
    solve_corrector,
    solve_mode,
    solve_modes,
    zeroth_mode_without_strain,
)
from frontspeed.front_solver import D1_6, D2_6
from frontspeed.gaussian_shear import CovarianceModel, CrossGrid, kl_decompose, make_rng, sample_field
from frontspeed.reaction import analytic_bistable_front

LAM2 = 4 * np.pi**2
A2 = -1 / (2 * np.pi**2)


def _dense_oracle(lam, a, fp):
    """Sixth-order dense solve of the same mode problem (zero Dirichlet, odd ghosts)."""
    n, h = len(fp.xi), fp.h
    M = np.zeros((n, n))
    coef = D2_6 / h**2 - fp.c0 * D1_6 / h
    for i in range(1, n - 1):
        M[i, i] += -lam + fp.nl.df(fp.U[i])
        for k, w in enumerate(coef):
            j = i + k - 3
            if j < 0:
                M[i, -j] -= w
            elif j >= n:
                M[i, 2 * (n - 1) - j] -= w
            else:
                M[i, j] += w
    M[0, 0] = M[-1, -1] = 1.0
    rhs = -a * fp.U_second
    rhs[[0, -1]] = 0.0
    return solve(M, rhs)


def test_trivial_modes(exact_front):
    assert np.all(solve_mode((3,), 9 * np.pi**2, 0.0, exact_front).u == 0)
    assert np.all(solve_mode((0,), 0.0, 0.7, exact_front).u == 0)


def test_cosine_mode_against_dense_oracle(exact_front):
    m = solve_mode((2,), LAM2, A2, exact_front)
    assert m.residual < 1e-8
    fine = analytic_bistable_front(0.25, 30.0, 2 * (len(exact_front.xi) - 1) + 1)
    ref = _dense_oracle(LAM2, A2, fine)[::2]
    assert np.max(np.abs(m.u - ref)) / np.max(np.abs(ref)) < 1e-6
    ratio = np.max(np.abs(m.u)) / np.max(exact_front.U_prime)
    assert ratio / abs(A2) < 1.0


@given(lam=st.floats(0.5, 5000.0), a=st.floats(-10, 10).filter(lambda x: abs(x) > 1e-6))
@settings(max_examples=20, deadline=None)
def test_mode_is_linear_in_forcing(exact_front, lam, a):
    u1 = solve_mode((1,), lam, a, exact_front).u
    u2 = solve_mode((1,), lam, 2 * a, exact_front).u
    assert np.max(np.abs(u2 - 2 * u1)) <= 1e-12 * max(1.0, np.max(np.abs(u2)))


def test_dirichlet_closure_is_invisible_inside(exact_front):
    big = analytic_bistable_front(0.25, 60.0, 4097)
    a = solve_mode((2,), LAM2, A2, exact_front)
    b = solve_mode((2,), LAM2, A2, big)
    sel = np.abs(exact_front.xi) <= 15
    sel_b = np.abs(big.xi) <= 15
    assert np.max(np.abs(a.u[sel] - b.u[sel_b])) < 1e-8 * np.max(np.abs(a.u))


def test_single_mode_assembly(cosine_corrector, cosine_cell, exact_front):
    m = [mm for mm in cosine_corrector.modes if mm.j == (2,)][0]
    y = cosine_cell.grid.axis
    assert np.max(np.abs(cosine_corrector.u - np.outer(m.u, np.cos(2 * np.pi * y)))) < 1e-10
    assert np.max(np.abs(cosine_cell.grid.mean(cosine_corrector.u))) < 1e-10


def test_zero_shear_gives_zero_corrector(exact_front, grid1d):
    cs = solve_cell(np.zeros(grid1d.size), grid1d, exact_front.c0)
    cf = solve_corrector(cs, exact_front)
    assert np.all(cf.u == 0) and cf.modes == []


def test_ou_residual_and_missing_modes(ou_basis, exact_front):
    b = sample_field(ou_basis, 17)
    cs = solve_cell(b.fluct, b.grid, exact_front.c0)
    cf = solve_corrector(cs, exact_front)
    assert np.max(np.abs(corrector_residual(cf, cs, exact_front))) < 1e-6
    assert np.max(np.abs(b.grid.mean(cf.u))) < 1e-10
    modes = solve_modes(cs, exact_front)
    with pytest.raises(AssemblyError, match="dropped mass"):
        assemble_corrector(modes[1:], cs.grid, cs)


def test_mixed_derivative_is_analytic(cosine_corrector):
    # grad_y u~_xi = u_2'(xi) * d/dy cos(2 pi y)
    m = [mm for mm in cosine_corrector.modes if mm.j == (2,)][0]
    y = cosine_corrector.grid.axis
    ref = np.outer(m.u_prime, -2 * np.pi * np.sin(2 * np.pi * y))
    assert np.max(np.abs(cosine_corrector.grad_cross_u_xi[..., 0] - ref)) < 1e-12
    _, g = mode_basis([(2,)], cosine_corrector.grid)
    assert g.shape == (1, len(y), 1)


def test_decay_report(exact_front):
    z = solve_mode((1,), np.pi**2, 0.0, exact_front)
    assert decay_report([z], exact_front)["modes"][0]["r_j"] == 0.0
    s = []
    for n in (1025, 2049, 4097):
        fp = analytic_bistable_front(0.25, 30.0, n)
        s.append(decay_report([solve_mode((2,), LAM2, A2, fp)], fp)["C4_hat"])
    assert np.isfinite(s).all()
    assert abs(s[-1] / s[-2] - 1) < 0.05


def test_decay_constant_uniform_over_ensemble(ou_basis, exact_front):
    c4 = []
    for i in range(30):
        b = sample_field(ou_basis, (21, i))
        cs = solve_cell(b.fluct, b.grid, exact_front.c0)
        c4.append(decay_report(solve_corrector(cs, exact_front).modes, exact_front)["C4_hat"])
    assert max(c4) / np.median(c4) < 5


@given(alpha=st.floats(-2, 2))
@settings(max_examples=15, deadline=None)
def test_solvability_holds_for_any_strain(cosine_cell, exact_front, alpha):
    assert abs(solvability_defect(cosine_cell, exact_front, alpha=alpha)) < 1e-8


def test_solvability_fixes_gamma(ou_basis, exact_front):
    b = sample_field(ou_basis, 5)
    cs = solve_cell(b.fluct, b.grid, exact_front.c0)
    assert abs(solvability_defect(cs, exact_front)) < 1e-8
    assert abs(solvability_defect(cs, exact_front, gamma=1.1 * cs.gamma)) > 1e-4 * cs.gamma


def test_derivative_ratios_scale_with_sup_norm_squared(exact_front):
    # variance spread over two decades so amplitude, not shape, drives the regression
    g = CrossGrid(1.0, 32, 1)
    rng = make_rng(5)
    rows, norms = [], []
    for i in range(100):
        s2 = 10 ** rng.uniform(-1, 1)
        b = sample_field(kl_decompose(CovarianceModel(sigma2=s2), g), (1, i))
        cs = solve_cell(b.fluct, g, exact_front.c0)
        r = derivative_ratios(solve_corrector(cs, exact_front), exact_front)
        rows.append([r["u_xi"], r["u_xixi"], r["grad_u_xi"]])
        norms.append(b.sup_norm**2)
    rows = np.array(rows)
    assert np.all(np.isfinite(rows))
    for k in range(3):
        slope = np.polyfit(np.log(norms), np.log(rows[:, k]), 1)[0]
        assert 0.8 <= slope <= 1.2


def test_secular_growth_without_strain(cosine_cell, exact_front):
    rep = zeroth_mode_without_strain(exact_front, cosine_cell.grad_sq_avg, cosine_cell.gamma)
    assert rep.abs_growth_slope > 0
    assert rep.slope == pytest.approx(rep.expected_slope, rel=1e-4)
