"""Problem data for the scalar advection-diffusion model on a moving domain.

The strong form is ``du/dt + div(beta_s u) - nu * laplace(u) = f`` posed on
the deforming domain, written in space-time divergence form with the
space-time velocity ``beta = (1, beta_s)``.  Boundary data enters through a
single combined datum ``g`` on the Neumann/inflow part of the space-time
boundary: ``g = -zeta * u * (beta . n) + nu * grad_s(u) . n_s`` with
``zeta = 1`` where ``beta . n < 0``.  On the bottom of the first slab this
reduces to the initial condition (there ``n = (-1, 0, ...)``); on the final
top face it vanishes identically.  Homogeneous Dirichlet facets carry no
datum.

All callables are vectorized: they take points with shape (m, 1+d) in
``(t, x)`` ordering and return (m,) values or (m, d) vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError

Points = np.ndarray


@dataclass
class ExactSolution:
    """Closed-form solution with its space-time gradient (d/dt, d/dx_1, ...)."""

    u: Callable[[Points], np.ndarray]
    grad: Callable[[Points], np.ndarray]


def zero_forcing(tx: Points) -> np.ndarray:
    return np.zeros(tx.shape[:-1])


def fd_divergence(beta: Callable[[Points], np.ndarray], d: int, eps: float = 1e-6):
    """Central finite-difference spatial divergence of the velocity field."""

    def div(tx: Points) -> np.ndarray:
        tx = np.asarray(tx, dtype=float)
        out = np.zeros(tx.shape[:-1])
        for k in range(d):
            hi = tx.copy()
            lo = tx.copy()
            hi[..., 1 + k] += eps
            lo[..., 1 + k] -= eps
            out += (beta(hi)[..., k] - beta(lo)[..., k]) / (2 * eps)
        return out

    return div


@dataclass
class ProblemSpec:
    """Coefficients, data, and (optionally) the exact solution of a run.

    ``bc_data(tx, n)`` receives the unit outward space-time normal so the
    combined datum can be evaluated per boundary point.  When it is omitted
    but an exact solution is present, the datum is derived from the exact
    solution; this is how manufactured and reference problems set their
    inflow/Neumann/initial data.
    """

    nu: float
    beta: Callable[[Points], np.ndarray]
    d: int = 2
    forcing: Callable[[Points], np.ndarray] = zero_forcing
    bc_data: Optional[Callable[[Points, np.ndarray], np.ndarray]] = None
    exact: Optional[ExactSolution] = None
    div_beta: Optional[Callable[[Points], np.ndarray]] = None
    name: str = ""

    def __post_init__(self):
        if not self.nu > 0:
            raise ConfigError(f"nu must be positive, got {self.nu}")
        if self.bc_data is None:
            if self.exact is None:
                raise ConfigError("bc_data: no boundary datum and no exact solution to derive it from")
            self.bc_data = self._datum_from_exact()
        if self.div_beta is None:
            self.div_beta = fd_divergence(self.beta, self.d)

    def _datum_from_exact(self):
        exact, beta, nu = self.exact, self.beta, self.nu

        def g(tx: Points, n: np.ndarray) -> np.ndarray:
            uval = exact.u(tx)
            gr = exact.grad(tx)
            bs = beta(tx)
            bn = n[..., 0] + np.sum(bs * n[..., 1:], axis=-1)
            zeta = (bn < 0).astype(float)
            return -zeta * uval * bn + nu * np.sum(gr[..., 1:] * n[..., 1:], axis=-1)

        return g

    def spacetime_beta(self, tx: Points) -> np.ndarray:
        """beta = (1, beta_s) evaluated at space-time points."""
        tx = np.asarray(tx, dtype=float)
        out = np.empty(tx.shape)
        out[..., 0] = 1.0
        out[..., 1:] = self.beta(tx)
        return out
