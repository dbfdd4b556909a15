"""Unperturbed traveling front ``U'' - c0 U' + f(U) = 0`` on a truncated line.

The profile is found by Newton's method on the unknowns ``(U_0..U_{n-1}, c0)``
with fourth-order central differences. The translation invariance is removed
by pinning ``U(0) = 1/2``. At both ends the solution is continued into two
ghost cells along its exact exponential tail (the decaying root of the
linearisation about 0 and 1), which is the decay-matched closure.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import BPoly
from scipy.sparse.linalg import spsolve

from .errors import ParameterError, SolverError
from .reaction import Nonlinearity, bistable_closed_form

log = logging.getLogger(__name__)

# five-point stencils, offsets -2..2
D1_4 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
D2_4 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0
# seven-point stencils, offsets -3..3 (used only as an independent check)
D1_6 = np.array([-1.0, 9.0, -45.0, 0.0, 45.0, -9.0, 1.0]) / 60.0
D2_6 = np.array([2.0, -27.0, 270.0, -490.0, 270.0, -27.0, 2.0]) / 180.0


@dataclass
class FrontProfile:
    """Front ``U(xi)`` sampled on a uniform grid, with its speed ``c0``.

    ``U_second`` is stored as computed by the producer. Off-grid evaluation
    (``evaluate``) always returns ``U'' = c0 U' - f(U)`` so that the
    travelling-wave identity holds to rounding at every point.
    """

    xi: np.ndarray
    U: np.ndarray
    U_prime: np.ndarray
    U_second: np.ndarray
    c0: float
    nl: Nonlinearity
    exact: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def h(self) -> float:
        return float(self.xi[1] - self.xi[0])

    @property
    def half_width(self) -> float:
        return float(self.xi[-1])

    @cached_property
    def _hermite(self):
        return BPoly.from_derivatives(
            self.xi, np.column_stack([self.U, self.U_prime, self.U_second])
        )

    def evaluate(self, xi):
        """Return ``(U, U', U'')`` at arbitrary points inside the grid."""
        xi = np.asarray(xi, dtype=float)
        lo, hi = self.xi[0], self.xi[-1]
        if xi.size and (xi.min() < lo - 1e-12 or xi.max() > hi + 1e-12):
            raise ParameterError(
                f"xi outside profile grid [{lo}, {hi}]: [{xi.min()}, {xi.max()}]"
            )
        if self.exact:
            U, Up, _ = bistable_closed_form(xi, self.nl.mu)
        else:
            U = self._hermite(xi)
            Up = self._hermite(xi, 1)
        Upp = self.c0 * Up - self.nl.f(U)
        return U, Up, Upp

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["xi", "U", "U_prime", "U_second"])
            for row in zip(self.xi, self.U, self.U_prime, self.U_second):
                w.writerow([f"{v:.17g}" for v in row])

    @classmethod
    def from_csv(cls, path, c0: float, nl: Nonlinearity) -> "FrontProfile":
        data = np.loadtxt(path, delimiter=",", skiprows=1)
        return cls(data[:, 0], data[:, 1], data[:, 2], data[:, 3], c0, nl)


def tail_rates(nl: Nonlinearity, c: float) -> tuple[float, float]:
    """Exponential rates of the front tails.

    Returns ``(r_left, r_right)`` with ``U ~ exp(r_left xi)`` as xi -> -inf
    and ``1 - U ~ exp(r_right xi)`` as xi -> +inf (``r_right < 0``).
    """
    fp0 = nl.df(0.0)
    fp1 = nl.df(1.0)
    r_left = 0.5 * (c + np.sqrt(max(c * c - 4.0 * fp0, 0.0)))
    r_right = 0.5 * (c - np.sqrt(c * c - 4.0 * fp1))
    return float(r_left), float(r_right)


def _pad(U, h, nl, c, width):
    rl, rr = tail_rates(nl, c)
    k = np.arange(width, 0, -1)
    left = U[0] * np.exp(-rl * k * h)
    k = np.arange(1, width + 1)
    right = 1.0 - (1.0 - U[-1]) * np.exp(rr * k * h)
    return np.concatenate([left, U, right])


def _stencil_apply(Upad, coeffs, n):
    w = (len(coeffs) - 1) // 2
    out = np.zeros(n)
    for k, a in enumerate(coeffs):
        if a != 0.0:
            out += a * Upad[k : k + n]
    return out


def _pin_weights(xi):
    """Linear interpolation weights for U(0)."""
    j = int(np.searchsorted(xi, 0.0) - 1)
    j = min(max(j, 0), len(xi) - 2)
    t = (0.0 - xi[j]) / (xi[j + 1] - xi[j])
    return j, 1.0 - t, t


def _residual(U, c, xi, nl):
    n = len(U)
    h = xi[1] - xi[0]
    Up = _pad(U, h, nl, c, 2)
    d1 = _stencil_apply(Up, D1_4, n) / h
    d2 = _stencil_apply(Up, D2_4, n) / h**2
    return d2 - c * d1 + nl.f(U), d1, d2


def _jacobian(U, c, xi, nl):
    n = len(U)
    h = xi[1] - xi[0]
    rl, rr = tail_rates(nl, c)
    a = D2_4 / h**2 - c * D1_4 / h
    diags = [np.full(n - abs(o), a[o + 2]) for o in range(-2, 3)]
    diags[2] = diags[2] + nl.df(U)
    J = sp.diags(diags, offsets=list(range(-2, 3)), shape=(n, n), format="lil")
    # ghost cells depend on the boundary unknowns
    for i in (0, 1):
        for o in (-2, -1):
            j = i + o
            if j < 0:
                J[i, 0] += a[o + 2] * np.exp(-rl * (-j) * h)
    for i in (n - 2, n - 1):
        for o in (1, 2):
            j = i + o
            if j > n - 1:
                J[i, n - 1] += a[o + 2] * np.exp(rr * (j - n + 1) * h)
    # d/dc by a one-sided difference (c enters through -c U' and the tail rates)
    eps = 1e-7 * max(1.0, abs(c))
    r0, _, _ = _residual(U, c, xi, nl)
    r1, _, _ = _residual(U, c + eps, xi, nl)
    dc = (r1 - r0) / eps
    return J.tocsr(), dc


def _initial_guess(nl: Nonlinearity, xi):
    # logistic guess; width and speed from the net reaction strength
    s = np.linspace(0.0, 1.0, 401)
    fmax = float(np.max(nl.f(s)))
    c = max(np.sqrt(2.0 * max(np.trapezoid(nl.f(s), s), 0.0)), 0.05)
    width = 1.0 / np.sqrt(max(fmax, 1e-3) * 4.0)
    return 1.0 / (1.0 + np.exp(-xi / width)), c


def _monotone(U, floor=1e-10):
    # increments below the rounding floor of U ~ 1 count as flat, not decreasing
    d = np.diff(U)
    return bool(np.all(d > -1e-12) and np.all((d > 0) | (U[1:] > 1.0 - floor) | (U[:-1] < floor)))


def _tail_slopes(U, d1, xi, nl, c, floor=1e-10):
    """Replace stencil slopes by the exponential asymptote where U or 1-U < floor.

    Below the floor the stencil differences are dominated by rounding (and are
    exactly zero once ``1 - U`` underflows).
    """
    rl, rr = tail_rates(nl, c)
    d1 = d1.copy()
    lo = np.flatnonzero(U < floor)
    if lo.size and lo[-1] + 1 < len(U):
        a = lo[-1] + 1
        d1[lo] = rl * U[a] * np.exp(rl * (xi[lo] - xi[a]))
    hi = np.flatnonzero(1.0 - U < floor)
    if hi.size and hi[0] > 0:
        a = hi[0] - 1
        d1[hi] = -rr * (1.0 - U[a]) * np.exp(rr * (xi[hi] - xi[a]))
    return d1


def _extend(fp: FrontProfile, xi):
    """Resample a profile onto ``xi``, continuing the tails exponentially."""
    rl, rr = tail_rates(fp.nl, fp.c0)
    U = np.interp(xi, fp.xi, fp.U)
    lo, hi = xi < fp.xi[0], xi > fp.xi[-1]
    U[lo] = fp.U[0] * np.exp(rl * (xi[lo] - fp.xi[0]))
    U[hi] = 1.0 - (1.0 - fp.U[-1]) * np.exp(rr * (xi[hi] - fp.xi[-1]))
    return U


def solve_front(
    nl: Nonlinearity,
    half_width: float = 30.0,
    n_nodes: int = 2049,
    tol: float = 1e-11,
    max_iter: int = 60,
    guess: FrontProfile | None = None,
) -> FrontProfile:
    """Newton collocation for the traveling front and its speed.

    Raises
    ------
    ParameterError
        for a domain shorter than 20 or fewer than 512 nodes.
    SolverError
        if Newton does not reach ``tol`` within ``max_iter`` iterations.
    """
    if half_width < 20.0:
        raise ParameterError("half_width must be at least 20")
    if n_nodes < 512:
        raise ParameterError("n_nodes must be at least 512")
    xi = np.linspace(-half_width, half_width, n_nodes)
    if guess is None and half_width > 40.0:
        # continuation from a short domain; long cold tails defeat the crude guess
        n_short = max(512, int(round(40.0 / half_width * (n_nodes - 1))) + 1)
        guess = solve_front(nl, 40.0, n_short, tol=1e-9, max_iter=max_iter)
    if guess is None:
        U, c = _initial_guess(nl, xi)
    else:
        U, c = _extend(guess, xi), guess.c0
    j, w0, w1 = _pin_weights(xi)

    def full_res(U, c):
        r, _, _ = _residual(U, c, xi, nl)
        return np.append(r, w0 * U[j] + w1 * U[j + 1] - 0.5)

    res = full_res(U, c)
    norm = np.max(np.abs(res))
    for it in range(max_iter):
        if norm < tol:
            break
        J, dc = _jacobian(U, c, xi, nl)
        pin = sp.csr_matrix(([w0, w1], ([0, 0], [j, j + 1])), shape=(1, n_nodes))
        A = sp.bmat([[J, sp.csr_matrix(dc[:, None])], [pin, None]], format="csc")
        step = spsolve(A, -res)
        lam = 1.0
        while lam > 1e-4:
            Un = U + lam * step[:-1]
            cn = c + lam * step[-1]
            if _monotone(Un) and np.all((Un > -1e-3) & (Un < 1 + 1e-3)):
                rn = full_res(Un, cn)
                nn = np.max(np.abs(rn))
                if nn < norm or nn < tol:
                    break
            lam *= 0.5
        else:
            raise SolverError("front Newton line search failed", residual=norm)
        U, c, res, norm = Un, cn, rn, nn
        log.debug("front newton it=%d |F|=%.3e c=%.12f", it, norm, c)
    else:
        raise SolverError(f"front Newton did not converge in {max_iter} iterations", residual=norm)

    _, d1, d2 = _residual(U, c, xi, nl)
    d1 = _tail_slopes(U, d1, xi, nl, c)
    if np.any(d1 <= 0):
        raise SolverError("converged front is not monotone", residual=norm)
    return FrontProfile(
        xi=xi,
        U=U,
        U_prime=d1,
        U_second=c * d1 - nl.f(U),
        c0=float(c),
        nl=nl,
        meta={"newton_residual": float(norm), "iterations": it, "scheme": "fd4"},
    )


def front_residual(fp: FrontProfile) -> float:
    """Max-norm ODE residual of ``fp.U`` with seven-point (sixth-order) stencils.

    Uses only ``U`` and ``c0``; the stored derivatives are ignored. The three
    nodes at each end are skipped.
    """
    U = np.asarray(fp.U, dtype=float)
    n = len(U)
    h = fp.h
    m = n - 6
    d1 = _stencil_apply(U, D1_6, m) / h
    d2 = _stencil_apply(U, D2_6, m) / h**2
    r = d2 - fp.c0 * d1 + fp.nl.f(U[3:-3])
    return float(np.max(np.abs(r)))


def tail_fit_residuals(fp: FrontProfile, span: float = 5.0, floor: float = 1e-10):
    """Residuals of affine fits to ``log U`` (left) and ``log(1-U)`` (right).

    Each fit uses ``span`` length units at the outer end of the region where
    the tail is still above ``floor`` (deeper values are rounding noise).
    Residuals are RMS deviations from the fitted line.
    """
    xi = fp.xi
    out = []
    for tail in (fp.U, 1.0 - fp.U):
        ok = np.flatnonzero(tail > floor)
        outer = ok[0] if tail is fp.U else ok[-1]
        mask = (tail > floor) & (np.abs(xi - xi[outer]) < span)
        y = np.log(tail[mask])
        p = np.polyfit(xi[mask], y, 1)
        out.append(float(np.sqrt(np.mean((np.polyval(p, xi[mask]) - y) ** 2))))
    return out[0], out[1]
