"""EM variant of the SSL solver.

The slab indicators are treated as missing data. The E-step replaces each
indicator by its conditional inclusion probability; the M-step for the
coefficients is then a LASSO with per-coordinate weights
``sigma2 * lambda_star(beta_j)``, solved by the same coordinate-descent kernel
that backs :func:`sslasso.solver.weighted_lasso`. Ladder handling (warm
starts, variance freezing) is shared with the coordinate-ascent solver.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from . import _kernels
from .data import StandardizedDesign
from .exceptions import NumericalError
from .penalty import PenaltyContext, SSLHyperParams, pstar
from .solver import (
    POLISH_TOL,
    FitPath,
    _explore,
    initial_state,
    log_posterior,
    sigma2_floor,
    update_sigma2,
)

__all__ = ["EMState", "e_step", "m_step_beta", "m_step_theta", "em_at_rung", "em_fit"]

logger = logging.getLogger(__name__)

THETA_EPS = 1e-12


@dataclass(frozen=True)
class EMState:
    """EM iterate; ``responsibilities`` are the inclusion probabilities of ``beta``."""

    beta: NDArray[np.float64]
    theta: float
    sigma2: float
    responsibilities: NDArray[np.float64]
    iterations: int = 0
    converged: bool = False
    log_posterior: float = float("nan")
    sigma2_floored: bool = False

    def __post_init__(self) -> None:
        for name in ("beta", "responsibilities"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.beta.shape != self.responsibilities.shape:
            raise ValueError("beta and responsibilities differ in length")
        if not 0 < self.theta < 1:
            raise ValueError(f"theta must lie in (0, 1), got {self.theta}")
        if not self.sigma2 > 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        if not np.all(np.isfinite(self.beta)):
            raise NumericalError("non-finite coefficients in EM state")

    @property
    def support(self) -> NDArray[np.intp]:
        return np.flatnonzero(self.beta)


def e_step(beta: NDArray, ctx: PenaltyContext) -> NDArray:
    """Conditional inclusion probabilities, elementwise :func:`pstar`."""
    return np.asarray(pstar(np.asarray(beta, dtype=float), ctx))


def m_step_beta(
    design: StandardizedDesign,
    weights: NDArray,
    beta0: NDArray | None = None,
    tol: float = 1e-7,
    max_sweeps: int = 100_000,
) -> NDArray:
    """Weighted LASSO ``max -0.5||y - X b||^2 - sum_j w_j |b_j|`` on the design."""
    w = np.asarray(weights, dtype=float)
    if w.shape != (design.p,) or np.any(w < 0):
        raise ValueError("need p nonnegative weights")
    beta = np.zeros(design.p) if beta0 is None else np.array(beta0, dtype=float)
    r = design.y_c - design.X_s @ beta
    xtx = np.full(design.p, float(design.n))
    _kernels.weighted_lasso_cd(design.X_s, r, beta, xtx, w.copy(), tol, max_sweeps)
    return beta


def m_step_theta(responsibilities: NDArray, a: float, b: float, p: int) -> float:
    """``(sum p* + a - 1) / (a + b + p - 2)`` clamped into ``(eps, 1 - eps)``."""
    if not a + b + p > 2:
        raise ValueError(f"need a + b + p > 2, got {a + b + p}")
    theta = (float(np.sum(responsibilities)) + a - 1.0) / (a + b + p - 2.0)
    return min(max(theta, THETA_EPS), 1.0 - THETA_EPS)


def _weights(beta, ctx) -> NDArray:
    ps = e_step(beta, ctx)
    return ctx.sigma2 * (ctx.lambda1 * ps + ctx.lambda0 * (1.0 - ps))


def em_at_rung(
    design: StandardizedDesign,
    hyper: SSLHyperParams,
    lambda0: float,
    init,
    freeze_sigma2: bool = False,
) -> EMState:
    """EM iterations at one spike rate, warm-started from ``init``.

    ``init`` may be any state carrying ``beta``, ``theta`` and ``sigma2``.
    The weighted-LASSO M-step is solved to ``hyper.tol / 10``. After the
    coefficients settle, one last M-step at the final ``(theta, sigma2)`` is
    solved to machine-level tolerance.
    """
    hyper = hyper.resolved(design.n, design.p)
    if lambda0 < hyper.lambda1:
        raise ValueError(f"lambda0={lambda0} below lambda1={hyper.lambda1}")
    n, p = design.n, design.p
    lam1 = hyper.lambda1
    beta = np.array(init.beta, dtype=float)
    theta = hyper.fixed_theta if hyper.fixed_theta is not None else init.theta
    sigma2 = hyper.sigma2 if hyper.sigma2 is not None else init.sigma2
    update_var = hyper.sigma2 is None and not freeze_sigma2
    floor = sigma2_floor(design.y_c)
    floored = getattr(init, "sigma2_floored", False) if not update_var else False

    def context():
        return PenaltyContext(theta=theta, sigma2=sigma2, n=n, lambda0=lambda0, lambda1=lam1)

    converged = False
    t = 0
    while t < hyper.max_iter:
        t += 1
        ctx = context()
        new = m_step_beta(design, _weights(beta, ctx), beta0=beta, tol=hyper.tol / 10.0)
        change = float(np.max(np.abs(new - beta))) if p else 0.0
        beta = new
        if hyper.fixed_theta is None:
            theta = m_step_theta(e_step(beta, ctx), hyper.a, hyper.b, p)
        if update_var:
            r = design.y_c - design.X_s @ beta
            sigma2, floored = update_sigma2(float(r @ r), n, floor)
        if not math.isfinite(change):
            raise NumericalError(f"EM diverged at lambda0={lambda0}")
        if change < hyper.tol:
            converged = True
            break

    ctx = context()
    beta = m_step_beta(design, _weights(beta, ctx), beta0=beta, tol=POLISH_TOL)
    lp = log_posterior(design, beta, sigma2, theta, lambda0, lam1)
    if not math.isfinite(lp):
        raise NumericalError(f"non-finite log posterior at lambda0={lambda0}")
    if not converged:
        logger.warning("EM at lambda0=%g: no convergence in %d iterations", lambda0, hyper.max_iter)
    return EMState(
        beta=beta,
        theta=theta,
        sigma2=sigma2,
        responsibilities=e_step(beta, ctx),
        iterations=t,
        converged=converged,
        log_posterior=lp,
        sigma2_floored=floored,
    )


def em_fit(design: StandardizedDesign, hyper: SSLHyperParams) -> FitPath:
    """EM along the spike-rate ladder with the same warm starts and freezing as CA."""
    hyper = hyper.resolved(design.n, design.p)
    return _explore(design, hyper, initial_state(design, hyper), em_at_rung)
