"""Corrector ``u~(xi, y) = sum_j u_j(xi) phi_j(y)`` of the multi-scale test function.

Each cross-section mode solves the two-point problem

    u_j'' - lambda_j u_j - c0 u_j' + f'(U) u_j = -a_j U''

on the profile grid with zero Dirichlet data at both ends, using the same
five-point stencils as the front solver. The zero mode is identically zero:
with ``alpha = -<|grad chi|^2>/2`` its forcing vanishes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .cell_problem import CellSolution, _basis_1d
from .errors import ParameterError, SolverError
from .front_solver import D1_4, D2_4, FrontProfile
from .gaussian_shear import CrossGrid

DROP_TOL = 1e-10


class AssemblyError(ParameterError):
    """Modes above the drop tolerance are missing from an assembly."""


@dataclass
class ModeSolution:
    j: tuple
    lambda_j: float
    a_j: float
    u: np.ndarray
    u_prime: np.ndarray
    u_second: np.ndarray
    u_third: np.ndarray | None = None
    u_fourth: np.ndarray | None = None
    residual: float = 0.0


def _odd_pad(u):
    # zero Dirichlet at both ends, continued oddly into two ghost cells
    return np.concatenate([-u[2:0:-1], u, -u[-2:-4:-1]])


def _derivs(u, h):
    n = len(u)
    up = _odd_pad(u)
    d1 = sum(a * up[k : k + n] for k, a in enumerate(D1_4)) / h
    d2 = sum(a * up[k : k + n] for k, a in enumerate(D2_4)) / h**2
    return d1, d2


def mode_operator_residual(u, lambda_j, fp: FrontProfile, rhs):
    d1, d2 = _derivs(u, fp.h)
    r = d2 - lambda_j * u - fp.c0 * d1 + fp.nl.df(fp.U) * u - rhs
    r[[0, -1]] = u[[0, -1]]
    return r, d1, d2


def _solve_dirichlet(lambda_j: float, fp: FrontProfile, rhs: np.ndarray) -> np.ndarray:
    n = len(fp.xi)
    h = fp.h
    a = D2_4 / h**2 - fp.c0 * D1_4 / h  # offsets -2..2
    diag = a[2] - lambda_j + fp.nl.df(fp.U)
    ab = np.zeros((5, n))
    for o in range(-2, 3):
        # banded storage: ab[2 + i - j, j] = A[i, j]; row i, column i + o
        if o == 0:
            ab[2, :] = diag
        elif o > 0:
            ab[2 - o, o:] = a[o + 2]
        else:
            ab[2 - o, : n + o] = a[o + 2]
    # odd ghosts: u_{-1} = -u_1 enters row 1 through offset -2
    ab[2, 1] -= a[0]
    ab[2, n - 2] -= a[4]
    # Dirichlet rows
    for i in (0, n - 1):
        for o in range(-2, 3):
            jcol = i + o
            if 0 <= jcol < n:
                ab[2 + i - jcol, jcol] = 1.0 if o == 0 else 0.0
    b = rhs.copy()
    b[[0, -1]] = 0.0
    try:
        return solve_banded((2, 2), ab, b)
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"singular mode operator (lambda={lambda_j})") from exc


def solve_mode(j, lambda_j: float, a_j: float, fp: FrontProfile) -> ModeSolution:
    """Solve one cross-section mode of the corrector equation."""
    j = tuple(np.atleast_1d(j).tolist())
    n = len(fp.xi)
    if not any(j) or a_j == 0.0:
        z = np.zeros(n)
        return ModeSolution(j, lambda_j, a_j, z, z.copy(), z.copy(), z.copy(), z.copy())
    if lambda_j <= 0:
        raise ParameterError("nonzero modes need lambda_j > 0")
    rhs = -a_j * fp.U_second
    u = _solve_dirichlet(lambda_j, fp, rhs)
    r, d1, d2 = mode_operator_residual(u, lambda_j, fp, rhs)
    # third derivative by differentiating the mode equation; used for interpolation only
    Up, Upp = fp.U_prime, fp.U_second
    dfU = fp.nl.df(fp.U)
    U3 = fp.c0 * Upp - dfU * Up
    d3 = lambda_j * d1 + fp.c0 * d2 - fp.nl.d2f(fp.U) * Up * u - dfU * d1 - a_j * U3
    d4 = np.gradient(d3, fp.h, edge_order=2)
    return ModeSolution(j, lambda_j, a_j, u, d1, d2, d3, d4, float(np.max(np.abs(r))))


def solve_modes(cs: CellSolution, fp: FrontProfile, drop_tol: float = DROP_TOL):
    return [solve_mode(j, lam, a, fp) for j, lam, a in cs.modes(drop_tol) if any(j)]


def decay_report(modes, fp: FrontProfile) -> dict:
    """Per-mode ``r_j = max |u_j| / U'`` and ``s_j = r_j (1 + |j|^2) / |a_j|``."""
    Up = fp.U_prime
    out = {"modes": []}
    s_max = 0.0
    for m in modes:
        r = float(np.max(np.abs(m.u) / Up))
        jj = float(np.sum(np.square(m.j)))
        s = r * (1.0 + jj) / abs(m.a_j) if m.a_j != 0 else 0.0
        s_max = max(s_max, s)
        out["modes"].append({"j": list(m.j), "a_j": m.a_j, "r_j": r, "s_j": s})
    out["C4_hat"] = s_max
    return out


@dataclass
class CorrectorField:
    """``u~`` and derivatives on ``xi x cross-grid`` (cross nodes flattened)."""

    xi: np.ndarray
    grid: CrossGrid
    u: np.ndarray
    u_xi: np.ndarray
    u_xixi: np.ndarray
    lap_cross: np.ndarray  # Lap_y u~
    lap_cross_xi: np.ndarray
    lap_cross_xixi: np.ndarray
    grad_cross_u_xi: np.ndarray  # (n_xi, n_cross, dim)
    grad_cross_u_xixi: np.ndarray
    u_xi3: np.ndarray | None = None
    u_xi4: np.ndarray | None = None
    grad_cross_u_xi3: np.ndarray | None = None
    modes: list = field(default_factory=list)

    def to_csv(self, path, y_index: int = 0) -> None:
        """Slice at one cross-section node."""
        cols = [self.xi, self.u[:, y_index], self.u_xi[:, y_index], self.u_xixi[:, y_index]]
        np.savetxt(path, np.column_stack(cols), delimiter=",", fmt="%.17g",
                   header="xi,u,u_xi,u_xixi", comments="")


def mode_basis(js, grid: CrossGrid, points_axis=None):
    """phi_j and grad phi_j at the (flattened) grid nodes for mode indices ``js``."""
    ax = grid.axis if points_axis is None else points_axis
    js = np.asarray(js, dtype=int).reshape(len(js), grid.dim)
    nmax = int(js.max()) + 1 if len(js) else 1
    C, S = _basis_1d(nmax, ax, grid.L)
    if grid.dim == 1:
        phi = C[:, js[:, 0]].T
        grad = S[:, js[:, 0]].T[..., None]
    else:
        c1, c2 = C[:, js[:, 0]], C[:, js[:, 1]]
        s1, s2 = S[:, js[:, 0]], S[:, js[:, 1]]
        phi = np.einsum("am,bm->mab", c1, c2).reshape(len(js), -1)
        g1 = np.einsum("am,bm->mab", s1, c2).reshape(len(js), -1)
        g2 = np.einsum("am,bm->mab", c1, s2).reshape(len(js), -1)
        grad = np.stack([g1, g2], axis=-1)
    return phi, grad


def assemble_corrector(
    modes, grid: CrossGrid, cs: CellSolution | None = None, drop_tol: float = DROP_TOL
) -> CorrectorField:
    """Tensor assembly of ``u~`` and its derivatives from mode solutions.

    When ``cs`` is given, every nonzero mode of ``|grad chi|^2`` above
    ``drop_tol`` must be present.
    """
    if cs is not None:
        have = {m.j for m in modes}
        missing = [(j, a) for j, _, a in cs.modes(drop_tol) if any(j) and j not in have]
        if missing:
            mass = sum(abs(a) for _, a in missing)
            raise AssemblyError(
                f"{len(missing)} modes above tolerance missing (dropped mass {mass:.3e}): "
                f"{[j for j, _ in missing[:10]]}"
            )
    modes = [m for m in modes if any(m.j)]
    if not modes:
        raise ParameterError("assemble_corrector needs at least one mode solution")
    phi, gphi = mode_basis([m.j for m in modes], grid)
    lam = np.array([m.lambda_j for m in modes])
    U0 = np.column_stack([m.u for m in modes])
    U1 = np.column_stack([m.u_prime for m in modes])
    U2 = np.column_stack([m.u_second for m in modes])
    U3 = np.column_stack([m.u_third for m in modes])
    U4 = np.column_stack([m.u_fourth for m in modes])
    return CorrectorField(
        xi=None,
        grid=grid,
        u=U0 @ phi,
        u_xi=U1 @ phi,
        u_xixi=U2 @ phi,
        lap_cross=-(U0 * lam) @ phi,
        lap_cross_xi=-(U1 * lam) @ phi,
        lap_cross_xixi=-(U2 * lam) @ phi,
        grad_cross_u_xi=np.einsum("nm,mkd->nkd", U1, gphi),
        grad_cross_u_xixi=np.einsum("nm,mkd->nkd", U2, gphi),
        u_xi3=U3 @ phi,
        u_xi4=U4 @ phi,
        grad_cross_u_xi3=np.einsum("nm,mkd->nkd", U3, gphi),
        modes=modes,
    )


def solve_corrector(cs: CellSolution, fp: FrontProfile, drop_tol: float = DROP_TOL):
    """Solve all active modes and assemble ``u~`` on ``fp.xi x cs.grid``."""
    modes = solve_modes(cs, fp, drop_tol)
    cf = assemble_corrector(modes, cs.grid, cs, drop_tol) if modes else zero_corrector(fp, cs.grid)
    cf.xi = fp.xi
    return cf


def zero_corrector(fp: FrontProfile, grid: CrossGrid) -> CorrectorField:
    z = np.zeros((len(fp.xi), grid.size))
    gz = np.zeros((len(fp.xi), grid.size, grid.dim))
    return CorrectorField(fp.xi, grid, z, z, z, z, z, z, gz, gz, z, z, gz, [])


def corrector_residual(cf: CorrectorField, cs: CellSolution, fp: FrontProfile) -> np.ndarray:
    """Node-wise residual of ``Lap u~ - c0 u~_xi + f'(U) u~ = (<|grad chi|^2> - |grad chi|^2) U''``."""
    g2 = cs.grad_sq.ravel()
    lhs = cf.u_xixi + cf.lap_cross - fp.c0 * cf.u_xi + fp.nl.df(fp.U)[:, None] * cf.u
    rhs = (cs.grad_sq_avg - g2)[None, :] * fp.U_second[:, None]
    return lhs - rhs


def solvability_defect(cs: CellSolution, fp: FrontProfile, alpha=None, gamma=None) -> float:
    """Inner product of the corrector forcing with the adjoint kernel ``U' exp(-c0 xi)``.

    The forcing is ``-|grad chi|^2 U'' - 2 alpha U'' + gamma U' + c0 alpha U'``
    averaged over the cross-section; defaults are the cell-solution values.
    The result is normalised by ``int (U')^2 exp(-c0 xi)``.
    """
    alpha = cs.alpha if alpha is None else alpha
    gamma = cs.gamma if gamma is None else gamma
    g2 = cs.grad_sq.ravel()
    avg = cs.grid.mean(g2)
    Up, Upp = fp.U_prime, fp.U_second
    forcing = -(avg + 2 * alpha) * Upp + (gamma + fp.c0 * alpha) * Up
    w = Up * np.exp(-fp.c0 * fp.xi)
    return float(np.trapezoid(forcing * w, fp.xi) / np.trapezoid(Up * w, fp.xi))


@dataclass
class SecularReport:
    xi: np.ndarray
    u0: np.ndarray
    ratio: np.ndarray  # u0 / U'
    slope: float
    intercept: float
    expected_slope: float
    abs_growth_slope: float  # slope of |u0|/U' against |xi|


def zeroth_mode_without_strain(fp: FrontProfile, a0: float, gamma: float, window=None):
    """Zero mode with ``alpha = 0``: ``L_0 u0 = -a0 U'' + gamma U'``.

    The exact solutions are ``-(a0/2) xi U' + const U'``, so ``u0 / U'`` is
    affine in ``xi``. Returns the computed ratio and its fitted slope over
    ``window`` (default: the middle half of the grid).
    """
    rhs = -a0 * fp.U_second + gamma * fp.U_prime
    u0 = _solve_dirichlet(0.0, fp, rhs)
    ratio = u0 / fp.U_prime
    lo, hi = window if window is not None else (-0.5 * fp.half_width, 0.5 * fp.half_width)
    sel = (fp.xi >= lo) & (fp.xi <= hi)
    slope, icpt = np.polyfit(fp.xi[sel], ratio[sel], 1)
    far = sel & (np.abs(fp.xi) >= 5.0)
    growth = np.polyfit(np.abs(fp.xi[far]), np.abs(ratio[far]), 1)[0]
    return SecularReport(fp.xi, u0, ratio, float(slope), float(icpt), -0.5 * a0, float(growth))


def decay_json(report: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2)


def derivative_ratios(cf: CorrectorField, fp: FrontProfile, window: float | None = None) -> dict:
    """``max |u~_xi|/U'``, ``max |u~_xixi|/U'`` and ``max |grad_y u~_xi|/U'``.

    Taken over ``|xi| <= window`` (default ``Xi/2``), away from the Dirichlet ends.
    """
    w = 0.5 * fp.half_width if window is None else window
    sel = np.abs(fp.xi) <= w
    Up = fp.U_prime[sel, None]
    return {
        "u_xi": float(np.max(np.abs(cf.u_xi[sel]) / Up)),
        "u_xixi": float(np.max(np.abs(cf.u_xixi[sel]) / Up)),
        "grad_u_xi": float(np.max(np.linalg.norm(cf.grad_cross_u_xi[sel], axis=-1) / Up)),
        "u": float(np.max(np.abs(cf.u[sel]) / Up)),
    }
