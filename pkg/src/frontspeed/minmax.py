"""Multi-scale test function, the speed functional psi and the min-max sandwich.

The test function is

    v(x1, y) = U(xi) + delta^2 u~(xi, y),   xi = (1 + alpha delta^2) x1 + delta chi(y).

Writing ``s = 1 + alpha delta^2``, ``P = U' + delta^2 u~_xi`` and
``Q = U'' + delta^2 u~_xixi`` (all at ``xi``), the chain rule gives

    v_x1        = s P
    Lap v + delta b v_x1 + f(v)
                = s^2 Q + delta^2 |grad chi|^2 Q - delta b1 P
                  + 2 delta^3 grad chi . grad_y u~_xi + delta^2 Lap_y u~
                  + delta b s P + f(v)

so psi is evaluated from profile and corrector values alone, without
differencing across the composed map. Expanding in delta and using the
profile and corrector equations leaves

    R1 = delta^3 A + delta^4 B + delta^5 D + delta^6 E + N,
    psi - (c0 + delta b_bar + delta^2 gamma) = R1 / v_x1,

with ``N = f(v) - f(U) - delta^2 f'(U) u~``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .cell_problem import CellSolution, solve_cell
from .corrector import CorrectorField, solve_corrector
from .errors import ContractError, ParameterError
from .front_solver import FrontProfile
from .gaussian_shear import ShearSample


def _hermite5(x0: float, h: float, F0, F1, F2, q):
    """Quintic Hermite interpolation of columns on a uniform grid.

    ``F0, F1, F2`` hold value, first and second derivative with shape
    ``(n, K)``; ``q`` has shape ``(N, K)`` and column ``k`` is evaluated
    from column ``k`` of the data.
    """
    n = F0.shape[0]
    s = (q - x0) / h
    i = np.clip(np.floor(s).astype(int), 0, n - 2)
    t = s - i
    t2 = t * t
    t3 = t2 * t
    t4 = t3 * t
    t5 = t4 * t
    h00 = 1 - 10 * t3 + 15 * t4 - 6 * t5
    h01 = t - 6 * t3 + 8 * t4 - 3 * t5
    h02 = 0.5 * (t2 - 3 * t3 + 3 * t4 - t5)
    h10 = 10 * t3 - 15 * t4 + 6 * t5
    h11 = -4 * t3 + 7 * t4 - 3 * t5
    h12 = 0.5 * (t3 - 2 * t4 + t5)
    g = lambda F, k: np.take_along_axis(F, i + k, axis=0)
    return (
        h00 * g(F0, 0) + h * h01 * g(F1, 0) + h * h * h02 * g(F2, 0)
        + h10 * g(F0, 1) + h * h11 * g(F1, 1) + h * h * h12 * g(F2, 1)
    )


@dataclass
class TestFunction:
    """``v`` and everything needed for psi, on ``x1_grid x cross nodes``."""

    __test__ = False  # not a pytest class

    fp: FrontProfile
    cs: CellSolution
    cf: CorrectorField
    delta: float
    x1_grid: np.ndarray
    admissible: bool
    admissibility_margin: float
    xi: np.ndarray  # (N, K)
    v: np.ndarray
    v_x1: np.ndarray
    parts: dict = field(repr=False, default_factory=dict)
    delta0_sq: float = np.inf
    reason: str = ""

    @property
    def stretch(self) -> float:
        return 1.0 + self.cs.alpha * self.delta**2


def admissibility_threshold(fp: FrontProfile, cs: CellSolution, cf: CorrectorField) -> float:
    """Empirical ``delta_0^2`` below which the test function is admissible.

    Uses ``min(1/(2|alpha|), 1/(2 max|u~_xi/U'|), 1/(2 max|u~|/min(U, 1-U)))``:
    the first two give ``v_x1 >= U'/4``, the last keeps ``0 < v < 1``.
    """
    mid = np.abs(fp.xi) <= 0.5 * fp.half_width
    Up = fp.U_prime[mid, None]
    room = np.minimum(fp.U, 1.0 - fp.U)[mid, None]
    r1 = float(np.max(np.abs(cf.u_xi[mid]) / Up)) if cf.u_xi.size else 0.0
    r0 = float(np.max(np.abs(cf.u[mid]) / room)) if cf.u.size else 0.0
    terms = [np.inf]
    if cs.alpha != 0:
        terms.append(1.0 / (2 * abs(cs.alpha)))
    if r1 > 0:
        terms.append(1.0 / (2 * r1))
    if r0 > 0:
        terms.append(1.0 / (2 * r0))
    return float(min(terms))


def build_test_function(
    fp: FrontProfile,
    cs: CellSolution,
    cf: CorrectorField,
    delta: float,
    x1_grid: np.ndarray | None = None,
) -> TestFunction:
    """Evaluate ``v`` and the ingredients of psi at every ``(x1, y)`` node.

    ``x1_grid`` defaults to the profile nodes covering ``[-Xi/2, Xi/2]``
    (one node beyond either end when the nodes miss it). A test
    function whose mapped ``xi`` leaves the profile grid, or which fails
    ``v_x1 > 0`` or ``0 < v < 1``, is returned with ``admissible=False``.
    """
    if not delta >= 0:
        raise ParameterError("delta must be >= 0")
    if cf.u.shape != (len(fp.xi), cs.grid.size) or cf.grid != cs.grid:
        raise ParameterError("corrector does not match the profile and cell grids")
    if x1_grid is None:
        half = 0.5 * fp.half_width
        i0 = np.searchsorted(fp.xi, -half + 1e-12, side="right") - 1
        i1 = np.searchsorted(fp.xi, half - 1e-12, side="left") + 1
        x1_grid = fp.xi[max(i0, 0):i1]
    x1 = np.asarray(x1_grid, dtype=float)
    if x1.min() > -0.5 * fp.half_width + 1e-9 or x1.max() < 0.5 * fp.half_width - 1e-9:
        raise ParameterError("x1_grid must span at least [-Xi/2, Xi/2]")

    d2 = delta * delta
    s = 1.0 + cs.alpha * d2
    chi = cs.chi.ravel()
    xi = s * x1[:, None] + delta * chi[None, :]
    lo, hi = fp.xi[0], fp.xi[-1]
    inside = xi.min() >= lo and xi.max() <= hi
    xq = np.clip(xi, lo, hi)

    U, Up, Upp = fp.evaluate(xq)
    x0, h = fp.xi[0], fp.h
    if cf.modes:
        ut = _hermite5(x0, h, cf.u, cf.u_xi, cf.u_xixi, xq)
        ut1 = _hermite5(x0, h, cf.u_xi, cf.u_xixi, cf.u_xi3, xq)
        ut2 = _hermite5(x0, h, cf.u_xixi, cf.u_xi3, cf.u_xi4, xq)
        lap = _hermite5(x0, h, cf.lap_cross, cf.lap_cross_xi, cf.lap_cross_xixi, xq)
        g = cf.grad_cross_u_xi, cf.grad_cross_u_xixi, cf.grad_cross_u_xi3
        gchi = cs.grad_chi.reshape(-1, cs.grid.dim)
        cross = sum(
            gchi[None, :, d] * _hermite5(x0, h, g[0][..., d], g[1][..., d], g[2][..., d], xq)
            for d in range(cs.grid.dim)
        )
    else:
        ut = ut1 = ut2 = lap = cross = np.zeros_like(xq)

    P = Up + d2 * ut1
    Q = Upp + d2 * ut2
    v = U + d2 * ut
    v_x1 = s * P
    margin = float(np.min(v_x1 / Up))
    reasons = []
    if not inside:
        reasons.append("mapped xi leaves the profile grid")
    if not np.all(v_x1 > 0):
        reasons.append("v_x1 not positive")
    if not (np.all(v > 0) and np.all(v < 1)):
        reasons.append("v not inside (0, 1)")
    return TestFunction(
        fp=fp,
        cs=cs,
        cf=cf,
        delta=float(delta),
        x1_grid=x1,
        admissible=not reasons,
        admissibility_margin=margin,
        xi=xi,
        v=v,
        v_x1=v_x1,
        parts=dict(U=U, Up=Up, Upp=Upp, ut=ut, ut1=ut1, ut2=ut2, lap=lap, cross=cross, P=P, Q=Q),
        delta0_sq=admissibility_threshold(fp, cs, cf),
        reason="; ".join(reasons),
    )


def _check(tf: TestFunction, b: ShearSample):
    if not tf.admissible:
        raise ContractError(f"test function is not admissible: {tf.reason}")
    if b.grid != tf.cs.grid:
        raise ParameterError("shear sample and cell solution grids differ")


def _lv(tf: TestFunction, b: ShearSample):
    """``Lap v + delta b v_x1 + f(v)`` node-wise."""
    p = tf.parts
    d, d2 = tf.delta, tf.delta**2
    s = tf.stretch
    g2 = tf.cs.grad_sq.ravel()[None, :]
    b1 = b.fluct[None, :]
    bb = b.values[None, :]
    return (
        s * s * p["Q"]
        + d2 * g2 * p["Q"]
        - d * b1 * p["P"]
        + 2 * d**3 * p["cross"]
        + d2 * p["lap"]
        + d * bb * s * p["P"]
        + tf.fp.nl.f(tf.v)
    )


def eval_psi(tf: TestFunction, b: ShearSample) -> np.ndarray:
    """psi = (Lap v + delta b v_x1 + f(v)) / v_x1 on the ``(x1, y)`` grid.

    Raises
    ------
    ContractError
        if ``tf`` is not admissible.
    """
    _check(tf, b)
    return _lv(tf, b) / tf.v_x1


def speed_bounds(tf: TestFunction, b: ShearSample) -> tuple[float, float]:
    """``(min psi, max psi)`` over the grid."""
    psi = eval_psi(tf, b)
    return float(psi.min()), float(psi.max())


def asymptotic_speed(c0: float, b_bar: float, gamma: float, delta: float) -> float:
    """``c0 + delta b_bar + delta^2 gamma``."""
    return c0 + delta * b_bar + delta * delta * gamma


def remainder_terms(tf: TestFunction, b: ShearSample) -> dict:
    """Remainder fields of the expansion and their ``max |.| / U'`` sizes.

    Returns a dict with keys ``A, B, D, E, N`` (max-norm ratios to ``U'``),
    ``R1`` (the assembled field), ``identity_error`` (max node-wise
    ``|(psi - c_asym) v_x1 - R1|``) and ``R1_ratio_ok`` (whether
    ``|R1/v_x1| <= 4 |R1/U'|`` everywhere).
    """
    _check(tf, b)
    p = tf.parts
    cs, fp = tf.cs, tf.fp
    al, ga, c0 = cs.alpha, cs.gamma, fp.c0
    d = tf.delta
    g2 = cs.grad_sq.ravel()[None, :]
    b1 = b.fluct[None, :]
    A = al * b1 * p["Up"] + 2 * p["cross"]
    B = (
        al * al * p["Upp"]
        + 2 * al * p["ut2"]
        + g2 * p["ut2"]
        - c0 * al * p["ut1"]
        - ga * p["ut1"]
        - ga * al * p["Up"]
    )
    D = al * b1 * p["ut1"]
    E = al * al * p["ut2"] - al * ga * p["ut1"]
    nl = fp.nl
    N = nl.f(tf.v) - nl.f(p["U"]) - d * d * nl.df(p["U"]) * p["ut"]
    R1 = d**3 * A + d**4 * B + d**5 * D + d**6 * E + N
    c_asym = asymptotic_speed(c0, b.mean, ga, d)
    psi = _lv(tf, b) / tf.v_x1
    ident = np.abs((psi - c_asym) * tf.v_x1 - R1)
    Up = p["Up"]
    rat = lambda F: float(np.max(np.abs(F) / Up))
    return {
        "A": rat(A),
        "B": rat(B),
        "D": rat(D),
        "E": rat(E),
        "N": rat(N),
        "R1": R1,
        "identity_error": float(ident.max()),
        "R1_ratio_ok": bool(np.all(np.abs(R1 / tf.v_x1) <= 4 * np.abs(R1 / Up) + 1e-300)),
    }


@dataclass
class SpeedEstimate:
    delta: float
    c0: float
    b_bar: float
    gamma: float
    linear_term: float
    quad_term: float
    asymptotic: float
    lower: float | None
    upper: float | None
    admissible: bool
    margin: float
    direct: float | None = None
    remainder_parts: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def record(self) -> dict:
        out = asdict(self)
        out.update(out.pop("meta"))
        return out

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.record(), fh, indent=2)


def estimate_speed(
    fp: FrontProfile,
    b: ShearSample,
    delta: float,
    x1_grid=None,
    cs: CellSolution | None = None,
    cf: CorrectorField | None = None,
    remainders: bool = False,
) -> SpeedEstimate:
    """Run the cell problem, corrector and sandwich for one shear and ``delta``.

    An inadmissible test function yields ``lower = upper = None``.
    """
    cs = cs or solve_cell(b.fluct, b.grid, fp.c0)
    cf = cf or solve_corrector(cs, fp)
    tf = build_test_function(fp, cs, cf, delta, x1_grid)
    lower = upper = None
    parts = {}
    meta = {"delta0_sq": tf.delta0_sq, "reason": tf.reason}
    if tf.admissible:
        lower, upper = speed_bounds(tf, b)
        psi = eval_psi(tf, b)
        # psi at the x1 ends: the truncated channel should already look asymptotic
        meta["psi_end_spread"] = float(
            max(np.ptp(psi[0]), np.ptp(psi[-1]))
        )
        if remainders:
            rt = remainder_terms(tf, b)
            parts = {k: rt[k] for k in ("A", "B", "D", "E", "N")}
            meta["identity_error"] = rt["identity_error"]
    return SpeedEstimate(
        delta=float(delta),
        c0=fp.c0,
        b_bar=b.mean,
        gamma=cs.gamma,
        linear_term=delta * b.mean,
        quad_term=delta * delta * cs.gamma,
        asymptotic=asymptotic_speed(fp.c0, b.mean, cs.gamma, delta),
        lower=lower,
        upper=upper,
        admissible=tf.admissible,
        margin=tf.admissibility_margin,
        remainder_parts=parts,
        meta=meta,
    )
