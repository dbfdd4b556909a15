"""Reaction terms and the closed-form bistable front."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.special import expit

from .errors import ParameterError

SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class Nonlinearity:
    """Reaction term ``f`` on [0, 1].

    ``bistable``:   f(u) = u (1 - u) (u - mu),  mu in (0, 1/2)
    ``combustion``: f(u) = amplitude (u - mu)^3 (1 - u) for u > mu, else 0.
    The cubic contact at the ignition cutoff keeps f in C^2.
    """

    kind: Literal["bistable", "combustion"] = "bistable"
    mu: float = 0.25
    amplitude: float = 1.0

    def __post_init__(self):
        if self.kind == "bistable":
            if not 0.0 < self.mu < 0.5:
                raise ParameterError(f"bistable mu must lie in (0, 1/2), got {self.mu}")
            if self.amplitude != 1.0:
                raise ParameterError("bistable amplitude is fixed to 1")
        elif self.kind == "combustion":
            if not 0.0 < self.mu < 1.0:
                raise ParameterError(f"combustion mu must lie in (0, 1), got {self.mu}")
            if not self.amplitude > 0.0:
                raise ParameterError("combustion amplitude must be positive")
        else:
            raise ParameterError(f"unknown nonlinearity kind {self.kind!r}")

    def f(self, u):
        return eval_f(self, u)

    def df(self, u):
        return eval_f_prime(self, u)

    def d2f(self, u):
        return eval_f_second(self, u)


def eval_f(nl: Nonlinearity, u):
    u = np.asarray(u, dtype=float)
    mu = nl.mu
    if nl.kind == "bistable":
        out = u * (1.0 - u) * (u - mu)
    else:
        w = np.maximum(u - mu, 0.0)
        out = nl.amplitude * w**3 * (1.0 - u)
    return out if out.ndim else float(out)


def eval_f_prime(nl: Nonlinearity, u):
    u = np.asarray(u, dtype=float)
    mu = nl.mu
    if nl.kind == "bistable":
        # d/du [-u^3 + (1 + mu) u^2 - mu u]
        out = -3.0 * u**2 + 2.0 * (1.0 + mu) * u - mu
    else:
        w = np.maximum(u - mu, 0.0)
        out = nl.amplitude * (3.0 * w**2 * (1.0 - u) - w**3)
    return out if out.ndim else float(out)


def eval_f_second(nl: Nonlinearity, u):
    u = np.asarray(u, dtype=float)
    mu = nl.mu
    if nl.kind == "bistable":
        out = -6.0 * u + 2.0 * (1.0 + mu)
    else:
        w = np.maximum(u - mu, 0.0)
        out = nl.amplitude * (6.0 * w * (1.0 - u) - 6.0 * w**2)
    return out if out.ndim else float(out)


def bistable_speed(mu: float) -> float:
    """Speed of the cubic bistable front, ``sqrt(2) (1/2 - mu)``."""
    if not 0.0 < mu < 0.5:
        raise ParameterError(f"bistable mu must lie in (0, 1/2), got {mu}")
    return SQRT2 * (0.5 - mu)


def analytic_bistable_front(mu: float, half_width: float = 30.0, n_nodes: int = 1025):
    """Closed-form bistable front ``U = 1 / (1 + exp(-xi / sqrt 2))``.

    Pinned so that ``U(0) = 1/2``. The returned profile evaluates exactly
    (not by interpolation) at off-grid points.
    """
    from .front_solver import FrontProfile

    nl = Nonlinearity("bistable", mu)
    c0 = bistable_speed(mu)
    xi = np.linspace(-half_width, half_width, n_nodes)
    U, Up, Upp = bistable_closed_form(xi, mu)
    return FrontProfile(xi=xi, U=U, U_prime=Up, U_second=Upp, c0=c0, nl=nl, exact=True)


def bistable_closed_form(xi, mu: float):
    """U, U', U'' of the logistic front, with both tails at full relative precision."""
    xi = np.asarray(xi, dtype=float)
    U = expit(xi / SQRT2)
    V = expit(-xi / SQRT2)  # 1 - U without cancellation
    Up = U * V / SQRT2
    Upp = U * V * (V - U) / 2.0
    return U, Up, Upp
