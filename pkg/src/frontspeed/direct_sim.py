"""Direct integration of ``u_t = Lap u + delta b(y) u_x + f(u)`` in a channel.

Space: second-order finite differences on a vertex grid with zero-flux
conditions on every side (including the truncated channel ends). Time:

``imex``
    diffusion backward Euler (diagonalised by a DCT-I), reaction and
    advection forward Euler.
``explicit_euler_upwind``
    everything forward Euler.

The advection stencil is central where the cell Peclet number
``|delta b| hx / 2`` is at most one (the scheme is then monotone under the
usual step restriction) and first-order upwind elsewhere, unless forced.

The domain follows the front: when the front leaves the middle third of the
window, the solution is shifted by whole cells and the shift is added to the
recorded position.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np
from scipy.fft import dctn, idctn

from .errors import ParameterError, SolverError
from .gaussian_shear import CrossGrid, ShearSample
from .reaction import Nonlinearity

log = logging.getLogger(__name__)

# default step when none is given; the IMEX bound alone would allow O(1) steps
# and the first-order time error is about 0.03 dt in the speed
DT_CAP = 0.01


class TruncationError(SolverError):
    """The front no longer fits inside the computational window."""


@dataclass
class SimGrid:
    x1_min: float = -40.0
    x1_max: float = 40.0
    hx: float = 0.1
    cross: CrossGrid = field(default_factory=lambda: CrossGrid(1.0, 16, 1))
    dt: float | None = None  # None: min(stability bound, DT_CAP)
    T: float = 150.0
    scheme: Literal["imex", "explicit_euler_upwind"] = "imex"
    advection: Literal["auto", "central", "upwind"] = "auto"
    safety: float = 0.9
    output_every: float = 0.5

    @property
    def nx(self) -> int:
        return int(round((self.x1_max - self.x1_min) / self.hx)) + 1

    @property
    def x1(self) -> np.ndarray:
        return self.x1_min + self.hx * np.arange(self.nx)

    def max_dt(self, delta: float, b_sup: float) -> float:
        """Largest admissible step for this scheme."""
        adv = abs(delta) * b_sup
        bounds = []
        if adv > 0:
            bounds.append(self.hx / adv)
        if self.scheme == "explicit_euler_upwind":
            inv = 2.0 / self.hx**2 + 2.0 * self.cross.dim / self.cross.h**2
            bounds.append(1.0 / inv)
        else:
            # reaction is explicit in both schemes
            bounds.append(1.0)
        return self.safety * min(bounds)


@dataclass
class SpeedTrace:
    times: np.ndarray
    front_pos: np.ndarray
    fitted_speed: float
    fit_window: tuple[float, float]
    fit_residual: float
    converged: bool
    meta: dict = field(default_factory=dict)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "X"])
            for t, x in zip(self.times, self.front_pos):
                w.writerow([f"{t:.17g}", f"{x:.17g}"])

    def record(self) -> dict:
        return {
            "fitted_speed": self.fitted_speed,
            "fit_window": list(self.fit_window),
            "fit_residual": self.fit_residual,
            "converged": self.converged,
            **self.meta,
        }


def _neumann_symbol(n: int, h: float) -> np.ndarray:
    """Eigenvalues of the 3-point Neumann Laplacian on ``n`` vertices (DCT-I modes)."""
    k = np.arange(n)
    return -(2.0 - 2.0 * np.cos(np.pi * k / (n - 1))) / h**2 if n > 1 else np.zeros(1)


def _laplacian(u, hx, hy):
    """3-point Neumann Laplacian along every axis of ``u`` (axis 0 is x1)."""
    out = np.zeros_like(u)
    for ax in range(u.ndim):
        h = hx if ax == 0 else hy
        if u.shape[ax] == 1:
            continue
        pad = [(0, 0)] * u.ndim
        pad[ax] = (1, 1)
        up = np.pad(u, pad, mode="reflect")
        sl = lambda a, b: tuple(slice(a, b) if i == ax else slice(None) for i in range(u.ndim))
        n = u.shape[ax]
        out += (up[sl(0, n)] - 2.0 * u + up[sl(2, n + 2)]) / h**2
    return out


def _x1_derivative(u, hx, a, mode):
    """``a * u_x1`` with central or upwind differences, zero slope at the ends."""
    up = np.concatenate([u[1:2], u, u[-2:-1]], axis=0)
    fwd = (up[2:] - up[1:-1]) / hx
    bwd = (up[1:-1] - up[:-2]) / hx
    if mode == "central":
        return a * 0.5 * (fwd + bwd)
    # u_t = a u_x transports to the left for a > 0: take the downstream-x side
    return np.where(a > 0, a * fwd, a * bwd)


def cross_average(u: np.ndarray, cross: CrossGrid) -> np.ndarray:
    return u.reshape(u.shape[0], -1) @ cross.weights / cross.volume


def level_position(x, ubar, level=0.5) -> float:
    """Leftmost crossing of ``level`` by linear interpolation."""
    idx = np.flatnonzero(ubar >= level)
    if idx.size == 0 or idx[0] == 0:
        raise TruncationError("front level set not inside the window; enlarge x1 span")
    i = idx[0]
    t = (level - ubar[i - 1]) / (ubar[i] - ubar[i - 1])
    return float(x[i - 1] + t * (x[i] - x[i - 1]))


def default_initial(x1: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x1 / np.sqrt(2.0)))


def _fit_speed(times, pos, frac=1.0 / 3.0):
    t_end = times[-1]
    sel = times >= t_end - frac * (t_end - times[0])
    t, x = times[sel], pos[sel]
    slope = np.polyfit(t, x, 1)[0]
    half = len(t) // 2
    s1 = np.polyfit(t[: half + 1], x[: half + 1], 1)[0]
    s2 = np.polyfit(t[half:], x[half:], 1)[0]
    # u = Phi(x1 + c t): the front moves towards -x1 for c > 0
    return -float(slope), (float(t[0]), float(t[-1])), float(abs(s2 - s1))


def integrate(
    nl: Nonlinearity,
    b: ShearSample,
    delta: float,
    grid: SimGrid,
    u0: np.ndarray | Callable | None = None,
    check_monotone: bool = False,
) -> SpeedTrace:
    """Integrate the channel PDE and measure the front speed.

    Raises
    ------
    ParameterError
        if ``grid.dt`` exceeds the stability bound or the grids disagree.
    TruncationError
        if the front profile no longer fits inside the window.
    SolverError
        if the discrete solution leaves [0, 1] by more than 1e-8.
    """
    cross = grid.cross
    if b.grid != cross:
        raise ParameterError("shear sample and simulation cross grids differ")
    x1 = grid.x1
    nx = len(x1)
    bvals = b.values.reshape(cross.shape)
    b_sup = float(np.max(np.abs(bvals)))
    dt_max = grid.max_dt(delta, b_sup)
    dt = min(dt_max, DT_CAP) if grid.dt is None else grid.dt
    if dt > dt_max * (1 + 1e-12):
        raise ParameterError(f"dt={dt} violates the stability bound {dt_max:.4g}")
    n_steps = int(np.ceil(grid.T / dt))
    dt = grid.T / n_steps
    every = max(1, int(round(grid.output_every / dt)))

    a = (delta * bvals)[None, ...] * np.ones((nx,) + cross.shape)
    peclet = float(np.max(np.abs(a))) * grid.hx / 2.0
    mode = grid.advection
    if mode == "auto":
        mode = "central" if peclet <= 1.0 else "upwind"

    shape = (nx,) + cross.shape
    if u0 is None:
        u0 = default_initial
    if callable(u0):
        u = np.broadcast_to(u0(x1).reshape((nx,) + (1,) * cross.dim), shape).copy()
    else:
        u = np.array(u0, dtype=float).reshape(shape)

    if grid.scheme == "imex":
        sym = _neumann_symbol(nx, grid.hx).reshape((nx,) + (1,) * cross.dim)
        sy = _neumann_symbol(cross.n + 1, cross.h)
        for ax in range(cross.dim):
            shp = [1] * (cross.dim + 1)
            shp[ax + 1] = cross.n + 1
            sym = sym + sy.reshape(shp)
        inv = 1.0 / (1.0 - dt * sym)
    elif grid.scheme != "explicit_euler_upwind":
        raise ParameterError(f"unknown scheme {grid.scheme!r}")

    offset = 0.0
    shifts = 0
    times, pos = [], []
    lo_band = grid.x1_min + (grid.x1_max - grid.x1_min) / 3.0
    hi_band = grid.x1_max - (grid.x1_max - grid.x1_min) / 3.0
    centre = 0.5 * (grid.x1_min + grid.x1_max)

    def observe(step):
        nonlocal u, offset, shifts
        ubar = cross_average(u, cross)
        X = level_position(x1, ubar)
        if X < lo_band or X > hi_band:
            k = int(round((X - centre) / grid.hx))
            # new[i] = old[i + k]; fill with the constant tail states
            if k > 0:
                u = np.concatenate([u[k:], np.repeat(u[-1:], k, axis=0)], axis=0)
            else:
                u = np.concatenate([np.repeat(u[:1], -k, axis=0), u[:k]], axis=0)
            offset += k * grid.hx
            shifts += 1
            ubar = cross_average(u, cross)
            X = level_position(x1, ubar)
        if ubar[0] > 1e-3 or ubar[-1] < 1.0 - 1e-3:
            raise TruncationError(
                "front does not fit in the x1 window (tails not settled); enlarge the span"
            )
        umin, umax = float(u.min()), float(u.max())
        if umin < -1e-8 or umax > 1.0 + 1e-8:
            raise SolverError(f"maximum principle violated: u in [{umin:.3e}, {umax:.3e}]")
        if check_monotone and np.any(np.diff(u, axis=0) < -1e-8):
            raise SolverError("solution lost monotonicity in x1")
        times.append(step * dt)
        pos.append(X + offset)

    observe(0)
    for step in range(1, n_steps + 1):
        rhs = _x1_derivative(u, grid.hx, a, mode) + nl.f(u)
        if grid.scheme == "imex":
            u = idctn(dctn(u + dt * rhs, type=1) * inv, type=1)
        else:
            u = u + dt * (rhs + _laplacian(u, grid.hx, cross.h))
        if step % every == 0 or step == n_steps:
            observe(step)

    times = np.asarray(times)
    pos = np.asarray(pos)
    speed, window, resid = _fit_speed(times, pos)
    converged = resid < 1e-3 * abs(speed) if speed != 0 else resid < 1e-8
    return SpeedTrace(
        times,
        pos,
        speed,
        window,
        resid,
        bool(converged),
        meta={
            "dt": dt,
            "steps": n_steps,
            "scheme": grid.scheme,
            "advection": mode,
            "peclet": peclet,
            "window_shifts": shifts,
            "delta": delta,
        },
    )


@dataclass
class LinearGrowthReport:
    deltas: np.ndarray
    speeds: np.ndarray
    ratios: np.ndarray  # c / delta
    converged: np.ndarray
    differences: np.ndarray  # |ratio[k+1] - ratio[k]|
    cauchy_like: bool
    traces: list = field(default_factory=list, repr=False)

    def record(self) -> dict:
        return {
            "deltas": self.deltas.tolist(),
            "speeds": self.speeds.tolist(),
            "c_over_delta": self.ratios.tolist(),
            "converged": self.converged.tolist(),
            "differences": self.differences.tolist(),
            "cauchy_like": self.cauchy_like,
        }


def linear_growth_study(
    nl: Nonlinearity, b: ShearSample, delta_list, grid: SimGrid | None = None
) -> LinearGrowthReport:
    """Speeds at large ``delta`` and the trend of ``c(delta) / delta``.

    ``cauchy_like`` is true when every run converged and the successive
    differences of ``c / delta`` shrink strictly. Unconverged runs keep their
    measured value and are flagged in ``converged``.

    Without ``grid``, each run uses ``hx = 0.2``, ``T = 30`` and the window
    ``|x1| <= 40 + 5 delta``: the shear stretches the front roughly in
    proportion to ``delta``.
    """
    deltas = np.asarray(delta_list, dtype=float)
    if deltas.size < 3 or np.any(np.diff(deltas) <= 0) or deltas[0] <= 0:
        raise ParameterError("delta_list must be positive, increasing, with at least 3 entries")
    if deltas[-1] < 10 * deltas[0]:
        raise ParameterError("delta_list must span at least one decade")
    speeds, conv, traces = [], [], []
    for d in deltas:
        half = 40.0 + 5.0 * d
        g = grid or SimGrid(-half, half, 0.2, b.grid, T=30.0)
        try:
            tr = integrate(nl, b, float(d), g)
            speeds.append(tr.fitted_speed)
            conv.append(tr.converged)
            traces.append(tr)
        except SolverError as exc:
            log.warning("delta=%g failed: %s", d, exc)
            speeds.append(np.nan)
            conv.append(False)
            traces.append(None)
    speeds = np.asarray(speeds)
    ratios = speeds / deltas
    diffs = np.abs(np.diff(ratios))
    conv = np.asarray(conv, dtype=bool)
    cauchy = bool(conv.all() and np.all(np.diff(diffs) < 0))
    return LinearGrowthReport(deltas, speeds, ratios, conv, diffs, cauchy, traces)
