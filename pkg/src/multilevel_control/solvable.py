"""Necessary condition for an initial state to be steerable by a staircase
control: ||x0|| <= sigma_bar * ||e^{-tau A} B||_{L^2(0,T)} with sigma_bar the
largest level magnitude.  Stated and implemented for a single control
channel."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.integrate import simpson

from .lti import LtiSystem
from .pwl import PwlConvex

__all__ = ["SolvableBoundReport", "solvable_bound"]


@dataclass(frozen=True)
class SolvableBoundReport:
    sigma_bar: float
    gram_norm: float
    bound: float
    x0_norm: float
    passes: bool

    def to_dict(self) -> dict:
        return {
            "sigma_bar": self.sigma_bar,
            "gram_norm": self.gram_norm,
            "bound": self.bound,
            "x0_norm": self.x0_norm,
            "passes": self.passes,
        }


def solvable_bound(
    sys: LtiSystem, pen: PwlConvex, scale: float = 1.0, nodes: int = 4001
) -> SolvableBoundReport:
    """Evaluate the necessary steering bound for ``sys`` under ``pen``.

    ``scale`` multiplies the slope ladder (the realized levels of the
    scaled/squared functionals).  The Gram integrand ||e^{-tau A} B||^2 is
    smooth, and Simpson quadrature on a uniform grid resolves the analytic
    test cases to better than 1e-8 relative.
    """
    if sys.channels != 1:
        raise ValueError("the solvable-set bound is stated for a single control channel")
    if nodes < 3:
        raise ValueError("need at least 3 quadrature nodes")
    taus = np.linspace(0.0, sys.T, nodes)
    h = taus[1] - taus[0]
    step = sla.expm(-h * sys.A)
    col = sys.B[:, 0].copy()
    integrand = np.empty(nodes)
    for i in range(nodes):
        integrand[i] = float(col @ col)
        if i < nodes - 1:
            col = step @ col
    gram_norm = float(np.sqrt(simpson(integrand, x=taus)))
    sigma_bar = float(scale * np.max(np.abs(pen.slopes)))
    bound = sigma_bar * gram_norm
    x0_norm = float(np.linalg.norm(sys.x0))
    return SolvableBoundReport(
        sigma_bar=sigma_bar,
        gram_norm=gram_norm,
        bound=bound,
        x0_norm=x0_norm,
        passes=bool(x0_norm <= bound),
    )
