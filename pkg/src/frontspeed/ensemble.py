"""Monte Carlo harness over Gaussian shears.

For each sample index ``i`` the shear is drawn from the seed ``(seed, i)``,
split into mean and fluctuation, and pushed through the cell problem
(``gamma``), optionally the min-max sandwich and optionally the direct
simulator. The speed used for the deviation event is the best available one:
direct, else the sandwich midpoint, else the asymptotic formula.

Direct speeds are corrected by a same-grid run without shear, and by default
the mean drift ``delta * b_bar`` is handled as the exact frame shift it is:
only ``b1`` is integrated. This removes scheme biases proportional to ``dt``
that would otherwise swamp the ``delta^(3-q)`` event threshold.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Literal

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.stats import spearmanr

from .cell_problem import solve_cell
from .corrector import solve_corrector
from .direct_sim import SimGrid, integrate
from .errors import FrontspeedError, ParameterError
from .front_solver import FrontProfile, solve_front
from .gaussian_shear import (
    GENERATOR,
    CovarianceModel,
    CrossGrid,
    ShearSample,
    constant_shear,
    kl_decompose,
    sample_field,
    wilson_std_err,
)
from .minmax import asymptotic_speed, build_test_function, speed_bounds
from .reaction import Nonlinearity, analytic_bistable_front

log = logging.getLogger(__name__)

ROUTES = ("asymptotic_only", "with_bounds", "with_direct")


class FitError(ParameterError):
    """The requested least-squares fit is ill-posed."""


@dataclass
class EnsembleConfig:
    model: CovarianceModel = field(default_factory=CovarianceModel)
    nl: Nonlinearity = field(default_factory=Nonlinearity)
    n_samples: int = 256
    delta: float = 0.05
    q: float = 0.5
    kappa: float = 1.0
    epsilon_target: float = 0.05
    seed: int = 0
    route: Literal["asymptotic_only", "with_bounds", "with_direct"] = "asymptotic_only"
    L: float = 1.0
    cross_n: int = 32
    kl_modes: int | None = None
    front_half_width: float = 30.0
    front_nodes: int = 2049
    direct_hx: float = 0.1
    direct_T: float = 100.0
    direct_span: float = 40.0
    direct_frame: Literal["comoving", "lab"] = "comoving"
    threads: int = 1

    def __post_init__(self):
        if not 0 < self.q < 1:
            raise ParameterError("q must lie in (0, 1)")
        eps_max = 0.25 if self.model.dim == 1 else 0.2
        if not 0 < self.epsilon_target < eps_max:
            raise ParameterError(f"epsilon_target must lie in (0, {eps_max})")
        if not self.kappa > 0:
            raise ParameterError("kappa must be positive")
        if self.route not in ROUTES:
            raise ParameterError(f"route must be one of {ROUTES}")
        if self.n_samples < 1:
            raise ParameterError("n_samples must be positive")
        if not self.delta >= 0:
            raise ParameterError("delta must be >= 0")
        if self.direct_frame not in ("comoving", "lab"):
            raise ParameterError("direct_frame must be 'comoving' or 'lab'")
        if self.threads < 1:
            raise ParameterError("threads must be >= 1")

    @property
    def grid(self) -> CrossGrid:
        return CrossGrid(self.L, self.cross_n, self.model.dim)

    @property
    def threshold(self) -> float:
        return self.kappa * self.delta ** (3.0 - self.q)

    def to_dict(self) -> dict:
        return asdict(self)


def front_for(nl: Nonlinearity, half_width: float, n_nodes: int) -> FrontProfile:
    if nl.kind == "bistable":
        return analytic_bistable_front(nl.mu, half_width, n_nodes)
    return solve_front(nl, half_width, n_nodes)


class _Pipeline:
    """Per-sample computation; holds the shared KL basis and front profile."""

    def __init__(self, cfg: EnsembleConfig):
        self.cfg = cfg
        self.basis = kl_decompose(cfg.model, cfg.grid, cfg.kl_modes)
        self.fp = front_for(cfg.nl, cfg.front_half_width, cfg.front_nodes)
        self.c_direct_zero = None
        if cfg.route == "with_direct":
            # same-grid run without shear: removes the scheme's own speed bias
            tr = integrate(cfg.nl, constant_shear(cfg.grid, 0.0), 0.0, self.sim_grid())
            self.c_direct_zero = tr.fitted_speed

    def sim_grid(self) -> SimGrid:
        c = self.cfg
        return SimGrid(-c.direct_span, c.direct_span, c.direct_hx, c.grid, T=c.direct_T)

    def __call__(self, index: int) -> dict:
        cfg, fp = self.cfg, self.fp
        seed = (cfg.seed, index)
        rec = {"index": index, "seed": list(seed), "failed": False, "error": ""}
        try:
            b = sample_field(self.basis, seed)
            rec["b_bar"] = b.mean
            rec["sup_norm"] = b.sup_norm
            rec["holder_norm"] = b.holder_norm(0.5)
            cs = solve_cell(b.fluct, b.grid, fp.c0)
            rec["gamma"] = cs.gamma
            c_asym = asymptotic_speed(fp.c0, b.mean, cs.gamma, cfg.delta)
            rec["c_asym"] = c_asym
            rec.update(c_lower=None, c_upper=None, c_direct=None, admissible=None)
            c_used, source = c_asym, "asymptotic"
            dev_bound = None
            if cfg.route in ("with_bounds", "with_direct"):
                cf = solve_corrector(cs, fp)
                tf = build_test_function(fp, cs, cf, cfg.delta)
                rec["admissible"] = tf.admissible
                rec["margin"] = tf.admissibility_margin
                if tf.admissible:
                    lo, hi = speed_bounds(tf, b)
                    rec["c_lower"], rec["c_upper"] = lo, hi
                    c_used, source = 0.5 * (lo + hi), "sandwich_midpoint"
                    dev_bound = max(abs(lo - c_asym), abs(hi - c_asym))
            if cfg.route == "with_direct":
                if cfg.direct_frame == "comoving":
                    # delta*b_bar is an exact frame shift; integrate b1 and add it back
                    shear = ShearSample(b.grid, b.fluct, label="fluctuation")
                    shift = cfg.delta * b.mean
                else:
                    shear, shift = b, 0.0
                tr = integrate(cfg.nl, shear, cfg.delta, self.sim_grid())
                rec["c_direct_raw"] = tr.fitted_speed
                rec["direct_converged"] = tr.converged
                if tr.converged:
                    rec["c_direct"] = tr.fitted_speed - self.c_direct_zero + fp.c0 + shift
                    c_used, source = rec["c_direct"], "direct"
            rec["c_used"] = c_used
            rec["c_source"] = source
            rec["deviation"] = abs(c_used - c_asym)
            rec["deviation_bound"] = dev_bound
        except FrontspeedError as exc:
            rec["failed"] = True
            rec["error"] = f"{type(exc).__name__}: {exc}"
            log.warning("sample %d failed: %s", index, exc)
        return rec


_WORKER: _Pipeline | None = None


def _init_worker(cfg):
    global _WORKER
    _WORKER = _Pipeline(cfg)


def _run_one(index):
    return _WORKER(index)


def wilson_interval(k: int, n: int, z: float = 1.96) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    p = k / n
    den = 1 + z * z / n
    mid = (p + z * z / (2 * n)) / den
    half = z * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return float(max(0.0, mid - half)), float(min(1.0, mid + half))


@dataclass
class EnsembleReport:
    config: dict
    records: list
    exceed_frac: float
    exceed_ci: tuple
    exceed_std_err: float
    exceed_frac_bound: float | None
    inadmissible_frac: float
    n_failed: int
    n_used: int
    mean_gamma: float
    gamma_std_err: float
    threshold: float
    quantiles: dict
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    def to_csv(self, path) -> None:
        keys = sorted({k for r in self.records for k in r})
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=keys)
            w.writeheader()
            for r in self.records:
                w.writerow({k: _fmt(r.get(k)) for k in keys})


def _fmt(x):
    if isinstance(x, float):
        return f"{x:.17g}"
    return "" if x is None else x


def run_ensemble(cfg: EnsembleConfig) -> EnsembleReport:
    """Run all samples and aggregate the deviation event.

    Inadmissible test functions count as exceedances on the sandwich routes:
    no speed bound is available for them. Failed samples are reported and
    excluded from every fraction.
    """
    if cfg.route == "with_direct" and cfg.n_samples > 64:
        log.warning("with_direct on %d samples: expect a long run", cfg.n_samples)
    idx = range(cfg.n_samples)
    if cfg.threads > 1:
        with ProcessPoolExecutor(cfg.threads, initializer=_init_worker, initargs=(cfg,)) as ex:
            records = list(ex.map(_run_one, idx, chunksize=8))
    else:
        pipe = _Pipeline(cfg)
        records = [pipe(i) for i in idx]
    records.sort(key=lambda r: r["index"])
    return aggregate(cfg, records)


def aggregate(cfg: EnsembleConfig, records: list) -> EnsembleReport:
    ok = [r for r in records if not r["failed"]]
    n = len(ok)
    thr = cfg.threshold
    sandwich = cfg.route != "asymptotic_only"
    exceed, exceed_b, inadm = [], [], []
    for r in ok:
        bad = sandwich and not r["admissible"]
        inadm.append(bad)
        r["exceed"] = bool(bad or r["deviation"] >= thr)
        exceed.append(r["exceed"])
        if sandwich:
            exceed_b.append(bool(bad or r["deviation_bound"] >= thr))
    k = int(sum(exceed))
    gam = np.array([r["gamma"] for r in ok])
    ratios = np.array([r["deviation"] / cfg.delta ** (3 - cfg.q) for r in ok]) if cfg.delta > 0 else np.zeros(n)
    meta = {"generator": GENERATOR, "route": cfg.route}
    if sandwich and 0 < sum(inadm) < n:
        rho = spearmanr([r["sup_norm"] for r in ok], inadm).statistic
        meta["inadmissible_sup_norm_rank_corr"] = float(rho)
    if not sandwich:
        meta["note"] = "asymptotic_only: the speed used equals the asymptotic formula"
    return EnsembleReport(
        config=cfg.to_dict(),
        records=records,
        exceed_frac=k / n if n else float("nan"),
        exceed_ci=wilson_interval(k, n),
        exceed_std_err=float(wilson_std_err(k, n)) if n else float("nan"),
        exceed_frac_bound=(sum(exceed_b) / n if (sandwich and n) else None),
        inadmissible_frac=sum(inadm) / n if n else float("nan"),
        n_failed=len(records) - n,
        n_used=n,
        mean_gamma=float(gam.mean()) if n else float("nan"),
        gamma_std_err=float(gam.std(ddof=1) / np.sqrt(n)) if n > 1 else float("nan"),
        threshold=thr,
        quantiles={
            f"q{int(p * 100)}": float(np.quantile(ratios, p)) if n else float("nan")
            for p in (0.5, 0.9, 0.95, 0.99)
        },
        meta=meta,
    )


@dataclass
class KappaCalibration:
    kappa: float
    quantile: float
    delta: float
    n_used: int
    n_inadmissible: int
    seed: int


def calibrate_kappa(
    cfg: EnsembleConfig,
    pilot_seed: int,
    n_pilot: int = 256,
    delta: float = 0.1,
    quantile: float = 0.95,
) -> KappaCalibration:
    """Operational constant for the deviation event.

    Runs the sandwich route on the pilot seed and returns the ``quantile`` of
    ``max(|lower - c_asym|, |upper - c_asym|) / delta^(3-q)``; the sandwich
    contains the true speed, so this dominates ``|c - c_asym|``. Inadmissible
    pilots enter as infinite ratios.
    """
    pilot = EnsembleConfig(**{
        **cfg.__dict__,
        "seed": pilot_seed,
        "n_samples": n_pilot,
        "delta": delta,
        "route": "with_bounds",
        "kappa": 1.0,
    })
    rep = run_ensemble(pilot)
    ok = [r for r in rep.records if not r["failed"]]
    if not ok:
        raise FrontspeedError("every pilot sample failed")
    ratios = np.array([
        r["deviation_bound"] / delta ** (3 - cfg.q) if r["admissible"] else np.inf for r in ok
    ])
    kappa = float(np.quantile(ratios, quantile, method="higher"))
    if not np.isfinite(kappa):
        raise FrontspeedError("too many inadmissible pilot samples to calibrate kappa")
    return KappaCalibration(
        kappa=max(kappa, np.finfo(float).tiny),
        quantile=quantile,
        delta=delta,
        n_used=len(ok),
        n_inadmissible=int(np.sum(~np.isfinite(ratios))),
        seed=pilot_seed,
    )


def expected_gamma(model: CovarianceModel, c0: float, L: float = 1.0, n_quad: int = 1501) -> float:
    """``E gamma`` for a one-dimensional cross-section by quadrature of the covariance.

    With ``B(y) = int_0^y b`` and ``K(y, z) = E B(y) B(z)``,
    ``E <|chi'|^2> = (1/L) int_0^L [K(y,y) - 2 (y/L) K(y,L) + (y/L)^2 K(L,L)] dy``.
    """
    if model.dim != 1:
        raise ParameterError("closed-form expectation implemented for dim = 1 only")
    y = np.linspace(0.0, L, n_quad)
    R = model(y[:, None] - y[None, :])
    K = cumulative_trapezoid(cumulative_trapezoid(R, y, axis=0, initial=0), y, axis=1, initial=0)
    t = y / L
    integrand = np.diag(K) - 2 * t * K[:, -1] + t * t * K[-1, -1]
    return float(0.5 * c0 * np.trapezoid(integrand, y) / L)


@dataclass
class QuadraticFit:
    c0_hat: float
    lin_hat: float
    gamma_hat: float
    residual_exponent: float
    rss_curve: dict = field(default_factory=dict, repr=False)

    def record(self) -> dict:
        return {
            "c0_hat": self.c0_hat,
            "lin_hat": self.lin_hat,
            "gamma_hat": self.gamma_hat,
            "residual_exponent": self.residual_exponent,
        }


def fit_quadratic_law(deltas, speeds, converged=None, p_range=(2.05, 8.0)) -> QuadraticFit:
    """Least-squares ``c = c0 + lin delta + gamma delta^2`` and the remainder exponent.

    The exponent is the ``p`` minimising the residual of
    ``c0 + lin delta + gamma delta^2 + K delta^p`` over ``p_range``. When the
    quadratic already fits to rounding it is reported as ``inf``.

    Raises
    ------
    FitError
        with fewer than five distinct deltas, a span below a factor 8,
        unconverged entries or an ill-conditioned design.
    """
    d = np.asarray(deltas, dtype=float)
    c = np.asarray(speeds, dtype=float)
    if d.shape != c.shape or d.ndim != 1:
        raise FitError("deltas and speeds must be matching 1-D arrays")
    if converged is not None and not np.all(converged):
        raise FitError("all speeds in the sweep must be converged")
    if len(np.unique(d)) < 5 or d.min() <= 0 or d.max() / d.min() < 8:
        raise FitError("need at least 5 distinct positive deltas spanning a factor of 8")
    if not np.all(np.isfinite(c)):
        raise FitError("non-finite speeds")
    V = np.column_stack([np.ones_like(d), d, d * d])
    if np.linalg.cond(V) > 1e12:
        raise FitError("ill-conditioned quadratic fit")
    coef, *_ = np.linalg.lstsq(V, c, rcond=None)
    res = c - V @ coef
    scale = max(np.max(np.abs(c)), 1.0)
    ps = np.linspace(p_range[0], p_range[1], 600)
    if np.max(np.abs(res)) <= 1e-13 * scale:
        return QuadraticFit(*map(float, coef), float("inf"))
    rss = []
    for p in ps:
        W = np.column_stack([V, d**p])
        sol = np.linalg.lstsq(W, c, rcond=None)[0]
        rss.append(float(np.sum((c - W @ sol) ** 2)))
    p_hat = float(ps[int(np.argmin(rss))])
    return QuadraticFit(*map(float, coef), p_hat, {"p": ps.tolist(), "rss": rss})
