"""Reaction-diffusion front speeds in (random) shear flows.

Three independent routes to the speed of a bistable or combustion front in
a channel with shear flow ``delta * b(y)``:

* the small-``delta`` asymptotic law ``c0 + delta*mean(b) + delta**2*gamma``
  with ``gamma`` from a Neumann cell problem,
* inf/sup of the speed functional evaluated on a multi-scale test function,
* direct time integration of the reaction-advection-diffusion equation.
"""

from .errors import (
    ConfigError,
    ContractError,
    FrontspeedError,
    ParameterError,
    SolverError,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ContractError",
    "FrontspeedError",
    "ParameterError",
    "SolverError",
    "__version__",
]
