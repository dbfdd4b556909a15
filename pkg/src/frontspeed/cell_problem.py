"""Neumann cell problem ``-Lap chi = b1`` on the rectangle, solved spectrally.

A grid function on the vertex grid is identified with its cosine
interpolant ``sum_j B_j phi_j`` (DCT-I), ``phi_j(y) = prod_i cos(pi j_i y_i / L)``
normalised to unit sup norm. On that interpolant the cell problem is solved
exactly: ``chi_j = B_j / lambda_j`` with ``lambda_j = (pi |j| / L)^2`` and
the zero mode dropped.

``|grad chi|^2`` is a cosine polynomial of twice the degree, so its
coefficients ``a_j`` are computed exactly from samples on the grid refined
by two; ``a_coeffs`` therefore carries modes ``0..2n`` per axis.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from scipy.fft import dctn

from .errors import ParameterError
from .gaussian_shear import CrossGrid


class SolvabilityError(ParameterError):
    """Forcing with nonzero mean has no Neumann solution."""


def cosine_coeffs(values, grid: CrossGrid) -> np.ndarray:
    """Coefficients of the cosine interpolant of ``values`` (shape ``grid.shape``)."""
    v = np.asarray(values, dtype=float).reshape(grid.shape)
    n = grid.n
    c = dctn(v, type=1) / n ** grid.dim
    for ax in range(grid.dim):
        idx = [slice(None)] * grid.dim
        for end in (0, n):
            idx[ax] = end
            c[tuple(idx)] *= 0.5
    return c


def mode_eigenvalues(n: int, L: float, dim: int) -> np.ndarray:
    k2 = (np.pi * np.arange(n + 1) / L) ** 2
    out = k2
    for _ in range(dim - 1):
        out = np.add.outer(out, k2)
    return out


def _basis_1d(n_modes: int, x: np.ndarray, L: float):
    """cos and d/dx cos of modes 0..n_modes-1 at points x; shapes (len(x), n_modes)."""
    k = np.pi * np.arange(n_modes) / L
    arg = np.outer(x, k)
    return np.cos(arg), -np.sin(arg) * k


def evaluate_cosine(coeffs: np.ndarray, grid: CrossGrid, points_axis: np.ndarray):
    """Value and gradient of ``sum coeffs_j phi_j`` on the tensor grid of ``points_axis``.

    Returns ``(value, grad)`` with grad stacked on the last axis.
    """
    L = grid.L
    C, S = _basis_1d(coeffs.shape[0], points_axis, L)
    if grid.dim == 1:
        return C @ coeffs, (S @ coeffs)[..., None]
    val = C @ coeffs @ C.T
    g1 = S @ coeffs @ C.T
    g2 = C @ coeffs @ S.T
    return val, np.stack([g1, g2], axis=-1)


@dataclass
class CellSolution:
    grid: CrossGrid
    chi: np.ndarray  # on grid, shape grid.shape
    grad_chi: np.ndarray  # grid.shape + (dim,)
    chi_coeffs: np.ndarray
    grad_sq_avg: float
    a_coeffs: np.ndarray  # (2n+1,)*dim, sup-normalised cosine coefficients of |grad chi|^2
    c0: float
    meta: dict = field(default_factory=dict)

    @property
    def gamma(self) -> float:
        return 0.5 * self.c0 * self.grad_sq_avg

    @property
    def alpha(self) -> float:
        return -0.5 * self.grad_sq_avg

    @property
    def grad_sq(self) -> np.ndarray:
        return np.sum(self.grad_chi**2, axis=-1)

    def modes(self, drop_tol: float = 0.0):
        """Yield ``(j, lambda_j, a_j)`` for all modes with ``|a_j| > drop_tol``."""
        lam = mode_eigenvalues(self.a_coeffs.shape[0] - 1, self.grid.L, self.grid.dim)
        for j in product(*(range(s) for s in self.a_coeffs.shape)):
            a = float(self.a_coeffs[j])
            if abs(a) > drop_tol:
                yield j, float(lam[j]), a

    def summary(self) -> dict:
        return {
            "gamma": self.gamma,
            "alpha": self.alpha,
            "grad_sq_avg": self.grad_sq_avg,
            "c0": self.c0,
            "a_coeffs": {
                ",".join(map(str, j)): a for j, _, a in self.modes(0.0) if a != 0.0
            },
            **self.meta,
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2)


def solve_cell(b1, grid: CrossGrid, c0: float, mean_tol: float = 1e-10) -> CellSolution:
    """Solve ``-Lap chi = b1`` with zero Neumann data and zero mean.

    Raises
    ------
    SolvabilityError
        if the trapezoid mean of ``b1`` exceeds ``mean_tol``.
    """
    b1 = np.asarray(b1, dtype=float)
    if b1.size == 0:
        raise ParameterError("empty forcing")
    if b1.size != grid.size:
        raise ParameterError("forcing does not match the cross grid")
    mean = grid.mean(b1.ravel())
    if abs(mean) > mean_tol:
        raise SolvabilityError(f"forcing mean {mean:.3e} is not zero")
    B = cosine_coeffs(b1, grid)
    lam = mode_eigenvalues(grid.n, grid.L, grid.dim)
    C = np.zeros_like(B)
    nz = lam > 0
    C[nz] = B[nz] / lam[nz]
    chi, grad = evaluate_cosine(C, grid, grid.axis)
    # <|grad chi|^2> = <chi (-Lap chi)> = sum lam_j C_j^2 <phi_j^2>
    norm2 = np.ones_like(lam)
    for ax in range(grid.dim):
        idx = [np.newaxis] * grid.dim
        idx[ax] = slice(None)
        w = np.where(np.arange(grid.n + 1) > 0, 0.5, 1.0)
        norm2 = norm2 * w[tuple(idx)]
    grad_sq_avg = float(np.sum(lam * C**2 * norm2))
    fine = grid.refine(2)
    _, grad_f = evaluate_cosine(C, grid, fine.axis)
    a = cosine_coeffs(np.sum(grad_f**2, axis=-1), fine)
    return CellSolution(
        grid=grid,
        chi=chi,
        grad_chi=grad,
        chi_coeffs=C,
        grad_sq_avg=grad_sq_avg,
        a_coeffs=a,
        c0=float(c0),
        meta={"a_coeffs_max_index": 2 * grid.n},
    )


def grad_sq_modes(cs: CellSolution) -> dict:
    """``{j: a_j}`` for the nonzero coefficients of ``|grad chi|^2``."""
    return {j: a for j, _, a in cs.modes(0.0) if a != 0.0}


def reconstruct(a_coeffs: np.ndarray, grid: CrossGrid) -> np.ndarray:
    """Evaluate ``sum a_j phi_j`` on ``grid`` nodes."""
    val, _ = evaluate_cosine(a_coeffs, grid, grid.axis)
    return val


def spectral_laplacian(values, grid: CrossGrid) -> np.ndarray:
    """Laplacian of the cosine interpolant, sampled on the grid."""
    B = cosine_coeffs(values, grid)
    val, _ = evaluate_cosine(-mode_eigenvalues(grid.n, grid.L, grid.dim) * B, grid, grid.axis)
    return val
