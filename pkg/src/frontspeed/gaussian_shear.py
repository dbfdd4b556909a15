"""Shear profiles on the channel cross-section ``[0, L]^dim``.

Gaussian shears are drawn from a truncated Karhunen-Loeve expansion whose
eigenpairs come from a Nystrom discretisation (trapezoid weights) of the
covariance operator. Deterministic profiles (cosine, constant) share the same
``ShearSample`` container so every downstream route treats them alike.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property
from typing import Literal, Sequence

import numpy as np
from scipy.linalg import eigh
from scipy.spatial.distance import pdist

from .errors import ParameterError

GENERATOR = f"numpy.random.PCG64 (numpy {np.__version__})"


@dataclass(frozen=True)
class CrossGrid:
    """Vertex grid on ``[0, L]^dim`` with ``n`` intervals per axis.

    Nodes include the boundary, so the Neumann cosine modes
    ``cos(pi j x / L)``, ``j = 0..n``, are exactly the DCT-I basis.
    """

    L: float = 1.0
    n: int = 32
    dim: int = 1

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ParameterError("cross-section dimension must be 1 or 2")
        if self.n < 1:
            raise ParameterError("cross grid needs at least one interval")
        if not self.L > 0:
            raise ParameterError("L must be positive")

    @property
    def h(self) -> float:
        return self.L / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n + 1,) * self.dim

    @property
    def size(self) -> int:
        return (self.n + 1) ** self.dim

    @property
    def axis(self) -> np.ndarray:
        return np.linspace(0.0, self.L, self.n + 1)

    @cached_property
    def points(self) -> np.ndarray:
        """Node coordinates, shape ``(size, dim)``, C order."""
        axes = np.meshgrid(*([self.axis] * self.dim), indexing="ij")
        return np.column_stack([a.ravel() for a in axes])

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoid quadrature weights on the flattened grid (sum = L^dim)."""
        w1 = np.full(self.n + 1, self.h)
        w1[[0, -1]] *= 0.5
        w = w1
        for _ in range(self.dim - 1):
            w = np.multiply.outer(w, w1)
        return w.ravel()

    @property
    def volume(self) -> float:
        return self.L**self.dim

    def mean(self, values) -> float:
        values = np.asarray(values).reshape(-1, self.size)
        out = values @ self.weights / self.volume
        return out if len(out) > 1 else float(out[0])

    def refine(self, factor: int = 2) -> "CrossGrid":
        return CrossGrid(self.L, self.n * factor, self.dim)


@dataclass(frozen=True)
class CovarianceModel:
    """Stationary covariance ``R(t, s) = sigma2 * rho(|t - s| / corr_len)``."""

    kind: Literal["ornstein_uhlenbeck", "squared_exponential"] = "ornstein_uhlenbeck"
    sigma2: float = 1.0
    corr_len: float = 1.0
    dim: int = 1

    def __post_init__(self):
        if self.kind not in ("ornstein_uhlenbeck", "squared_exponential"):
            raise ParameterError(f"unknown covariance kind {self.kind!r}")
        if not self.sigma2 >= 0 or not self.corr_len > 0:
            raise ParameterError("sigma2 must be >= 0 and corr_len > 0")
        if self.dim not in (1, 2):
            raise ParameterError("dim must be 1 or 2")

    def __call__(self, r):
        r = np.abs(np.asarray(r, dtype=float)) / self.corr_len
        if self.kind == "ornstein_uhlenbeck":
            return self.sigma2 * np.exp(-r)
        return self.sigma2 * np.exp(-0.5 * r * r)

    def matrix(self, points) -> np.ndarray:
        d = np.sqrt(((points[:, None, :] - points[None, :, :]) ** 2).sum(-1))
        return self(d)


@dataclass
class KLBasis:
    grid: CrossGrid
    eigenvalues: np.ndarray  # descending, length m
    eigenfunctions: np.ndarray  # (m, size), orthonormal w.r.t. grid.weights
    model: CovarianceModel | None = None

    @property
    def m(self) -> int:
        return len(self.eigenvalues)

    def gram(self) -> np.ndarray:
        phi = self.eigenfunctions
        return (phi * self.grid.weights) @ phi.T

    def covariance(self) -> np.ndarray:
        phi = self.eigenfunctions
        return (phi.T * self.eigenvalues) @ phi


def kl_decompose(model: CovarianceModel, grid: CrossGrid, m: int | None = None) -> KLBasis:
    """Eigenpairs of the Nystrom-discretised covariance operator.

    The weighted problem ``R W phi = lam phi`` is symmetrised as
    ``W^1/2 R W^1/2``; eigenfunctions are returned orthonormal in the
    trapezoid inner product.
    """
    if model.dim != grid.dim:
        raise ParameterError("covariance and grid dimensions differ")
    size = grid.size
    m = size if m is None else int(m)
    if not 1 <= m <= size:
        raise ParameterError(f"m must lie in [1, {size}]")
    sw = np.sqrt(grid.weights)
    R = model.matrix(grid.points)
    lam, vec = eigh(sw[:, None] * R * sw[None, :])
    lam, vec = lam[::-1], vec[:, ::-1]
    top = max(lam[0], 0.0)
    if lam.min() < -1e-8 * max(top, 1e-300):
        raise ParameterError(
            f"covariance matrix not positive semidefinite (min eigenvalue {lam.min():.3e})"
        )
    lam = np.where(lam < 0, 0.0, lam)
    phi = (vec / sw[:, None]).T
    return KLBasis(grid, lam[:m].copy(), phi[:m].copy(), model)


@dataclass
class ShearSample:
    """One shear profile ``b = mean + fluct`` on a cross grid."""

    grid: CrossGrid
    values: np.ndarray  # flattened, C order
    seed: int | tuple | None = None
    theta: np.ndarray | None = None
    generator: str | None = None
    label: str = "gaussian"
    holder: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).ravel()
        if self.values.size != self.grid.size:
            raise ParameterError("sample size does not match grid")

    @cached_property
    def mean(self) -> float:
        return float(self.grid.mean(self.values))

    @cached_property
    def fluct(self) -> np.ndarray:
        return self.values - self.mean

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def holder_norm(self, p: float, radius: float | None = None) -> float:
        key = (p, radius)
        if key not in self.holder:
            self.holder[key] = holder_norm(self, p, radius)
        return self.holder[key]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{i + 1}" for i in range(self.grid.dim)] + ["b"])
            for pt, v in zip(self.grid.points, self.values):
                w.writerow([f"{c:.17g}" for c in pt] + [f"{v:.17g}"])


def make_rng(seed) -> np.random.Generator:
    """PCG64 generator; ``seed`` may be an int or a sequence of ints."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def sample_field(basis: KLBasis, seed: int | Sequence[int]) -> ShearSample:
    """Draw ``b = sum_j sqrt(lam_j) phi_j theta_j`` with unit normal ``theta``."""
    theta = make_rng(seed).standard_normal(basis.m)
    values = (np.sqrt(basis.eigenvalues) * theta) @ basis.eigenfunctions
    s = seed if isinstance(seed, int) else tuple(seed)
    return ShearSample(basis.grid, values, seed=s, theta=theta, generator=GENERATOR)


def sample_batch(basis: KLBasis, seed, n: int) -> np.ndarray:
    """``n`` samples from one generator stream, shape ``(n, size)``."""
    theta = make_rng(seed).standard_normal((n, basis.m))
    return (theta * np.sqrt(basis.eigenvalues)) @ basis.eigenfunctions


def cosine_shear(grid: CrossGrid, amplitude: float = 1.0, mode: int = 1) -> ShearSample:
    """``amplitude * prod_i cos(pi mode x_i / L)``."""
    vals = amplitude * np.prod(np.cos(np.pi * mode * grid.points / grid.L), axis=1)
    return ShearSample(grid, vals, label=f"cosine(mode={mode}, amplitude={amplitude})")


def constant_shear(grid: CrossGrid, value: float = 1.0) -> ShearSample:
    return ShearSample(grid, np.full(grid.size, float(value)), label=f"constant({value})")


def holder_norm(sample: ShearSample, p: float, radius: float | None = None) -> float:
    """Grid Holder norm ``sup|b| + max |b(s) - b(t)| / |s - t|^p``.

    The seminorm is taken over all node pairs, or only pairs closer than
    ``radius`` when given.
    """
    if not 0.0 < p < 1.0:
        raise ParameterError(f"Holder exponent must lie in (0, 1), got {p}")
    pts = sample.grid.points
    b = sample.values
    dist = pdist(pts)
    diff = pdist(b[:, None], "cityblock")
    if radius is not None:
        keep = dist <= radius
        dist, diff = dist[keep], diff[keep]
    semi = float(np.max(diff / dist**p)) if dist.size else 0.0
    return sample.sup_norm + semi


def wilson_std_err(k, n):
    """Half-width of the z = 1 Wilson score interval for ``k`` successes in ``n``."""
    p = np.asarray(k, dtype=float) / n
    return np.sqrt(p * (1 - p) / n + 1.0 / (4 * n * n)) / (1.0 + 1.0 / n)


@dataclass
class ExceedanceReport:
    lambda_grid: np.ndarray
    empirical_prob: np.ndarray
    borell_bound: np.ndarray
    mu_sup_hat: float
    n_samples: int
    std_err: np.ndarray
    sigma2: float
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "lambda_grid": self.lambda_grid.tolist(),
            "empirical_prob": self.empirical_prob.tolist(),
            "borell_bound": self.borell_bound.tolist(),
            "std_err": self.std_err.tolist(),
            "mu_sup_hat": self.mu_sup_hat,
            "n_samples": self.n_samples,
            "sigma2": self.sigma2,
            **self.meta,
        }


def borell_check(
    model: CovarianceModel,
    lambda_grid,
    n_samples: int,
    seed,
    grid: CrossGrid | None = None,
    m: int | None = None,
) -> ExceedanceReport:
    """Monte Carlo tail of ``|sup b - E sup b|`` against ``2 exp(-lam^2 / 2 sigma^2)``."""
    if n_samples < 1000:
        raise ParameterError("borell_check needs at least 1000 samples")
    grid = grid or CrossGrid(1.0, 64, model.dim)
    basis = kl_decompose(model, grid, m)
    sups = sample_batch(basis, seed, n_samples).max(axis=1)
    mu_hat = float(sups.mean())
    lam = np.asarray(lambda_grid, dtype=float)
    counts = (np.abs(sups[:, None] - mu_hat) > lam[None, :]).sum(axis=0)
    return ExceedanceReport(
        lambda_grid=lam,
        empirical_prob=counts / n_samples,
        borell_bound=2.0 * np.exp(-(lam**2) / (2.0 * model.sigma2)),
        mu_sup_hat=mu_hat,
        n_samples=n_samples,
        std_err=wilson_std_err(counts, n_samples),
        sigma2=model.sigma2,
        meta={
            "generator": GENERATOR,
            "grid": {"L": grid.L, "n": grid.n, "dim": grid.dim},
            "note": "mu_sup_hat is estimated from the same samples that are counted",
        },
    )
