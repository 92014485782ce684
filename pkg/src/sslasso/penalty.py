"""Penalty calculus of the spike-and-slab LASSO.

Everything here is a pure function of its arguments. The mixture odds are
handled on the log scale: ``exp(-|beta| (lambda0 - lambda1))`` underflows for
large spike rates, so the inclusion probability is computed as a logistic of
the log-odds rather than from the raw densities.

All functions accept scalars or numpy arrays for ``beta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
from numpy.typing import ArrayLike
from scipy.optimize import minimize_scalar
from scipy.special import expit

__all__ = [
    "SSLHyperParams",
    "PenaltyContext",
    "Threshold",
    "default_ladder",
    "log_pstar",
    "pstar",
    "lambda_star",
    "pen_singleton",
    "g_fn",
    "threshold_delta",
    "threshold_delta_exact",
]


def default_ladder(lambda1: float, n: int, count: int = 50) -> tuple[float, ...]:
    """Linear ladder of ``count`` spike rates from ``lambda1 + 1`` to ``max(n, 100)``."""
    top = float(max(n, 100))
    return tuple(float(v) for v in np.linspace(lambda1 + 1.0, top, count))


@dataclass(frozen=True)
class SSLHyperParams:
    """Prior hyperparameters and solver settings.

    ``b=None`` resolves to the number of predictors and ``lambda0_ladder=None``
    to :func:`default_ladder`; call :meth:`resolved` once the data shape is
    known. ``sigma2=None`` means the error variance is unknown and estimated.
    ``fixed_theta`` pins the mixing weight instead of re-estimating it.

    ``sigma2_init`` is the variance an unknown-variance fit starts from (and
    holds while it is frozen): ``"cv"`` for the residual variance of a
    cross-validated LASSO, ``"null"`` for ``||y||^2 / (n + 2)``, or a number.
    """

    lambda1: float = 1.0
    lambda0_ladder: tuple[float, ...] | None = None
    a: float = 1.0
    b: float | None = None
    sigma2: float | None = None
    fixed_theta: float | None = None
    tol: float = 1e-6
    max_iter: int = 500
    sigma2_init: float | str = "cv"

    def __post_init__(self) -> None:
        if not self.lambda1 > 0:
            raise ValueError(f"lambda1 must be positive, got {self.lambda1}")
        if self.lambda0_ladder is not None:
            ladder = tuple(float(v) for v in self.lambda0_ladder)
            if not ladder:
                raise ValueError("lambda0 ladder is empty")
            if any(b <= a for a, b in zip(ladder, ladder[1:])):
                raise ValueError("lambda0 ladder must be strictly increasing")
            if ladder[0] < self.lambda1:
                raise ValueError(
                    f"every lambda0 must be >= lambda1={self.lambda1}, got {ladder[0]}"
                )
            object.__setattr__(self, "lambda0_ladder", ladder)
        if not self.a > 0:
            raise ValueError(f"a must be positive, got {self.a}")
        if self.b is not None and not self.b > 0:
            raise ValueError(f"b must be positive, got {self.b}")
        if self.sigma2 is not None and not self.sigma2 > 0:
            raise ValueError(f"fixed sigma2 must be positive, got {self.sigma2}")
        if self.fixed_theta is not None and not 0 < self.fixed_theta < 1:
            raise ValueError(f"fixed theta must lie in (0, 1), got {self.fixed_theta}")
        if not self.tol > 0 or self.max_iter < 1:
            raise ValueError("tol must be positive and max_iter at least 1")
        if isinstance(self.sigma2_init, str):
            if self.sigma2_init not in ("cv", "null"):
                raise ValueError(f"unknown sigma2_init rule {self.sigma2_init!r}")
        elif not self.sigma2_init > 0:
            raise ValueError(f"sigma2_init must be positive, got {self.sigma2_init}")

    @property
    def variance_mode(self) -> str:
        return "unknown" if self.sigma2 is None else "fixed"

    def resolved(self, n: int, p: int) -> SSLHyperParams:
        """Copy with ``b`` and the ladder filled in for an ``n`` by ``p`` design."""
        return replace(
            self,
            lambda0_ladder=self.lambda0_ladder or default_ladder(self.lambda1, n),
            b=float(p) if self.b is None else self.b,
        )


@dataclass(frozen=True)
class PenaltyContext:
    """The quantities the singleton penalty depends on besides ``beta``."""

    theta: float
    sigma2: float
    n: int
    lambda0: float
    lambda1: float

    def __post_init__(self) -> None:
        if not 0 < self.theta < 1:
            raise ValueError(f"theta must lie in (0, 1), got {self.theta}")
        if not self.sigma2 > 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        if not self.n > 0:
            raise ValueError(f"n must be positive, got {self.n}")
        if not self.lambda0 >= self.lambda1 > 0:
            raise ValueError(
                f"need lambda0 >= lambda1 > 0, got {self.lambda0}, {self.lambda1}"
            )

    @property
    def log_prior_odds(self) -> float:
        """``log[(1 - theta)/theta * lambda0/lambda1]``, the spike log-odds at zero."""
        return (
            math.log1p(-self.theta)
            - math.log(self.theta)
            + math.log(self.lambda0)
            - math.log(self.lambda1)
        )


def _spike_log_odds(beta: ArrayLike, ctx: PenaltyContext):
    return ctx.log_prior_odds - np.abs(beta) * (ctx.lambda0 - ctx.lambda1)


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def log_pstar(beta: ArrayLike, ctx: PenaltyContext):
    """Log of the conditional slab probability, ``-log(1 + spike odds)``."""
    return _out(-np.logaddexp(0.0, _spike_log_odds(beta, ctx)))


def pstar(beta: ArrayLike, ctx: PenaltyContext):
    """Probability that ``beta`` was drawn from the slab given its value."""
    return _out(expit(-_spike_log_odds(beta, ctx)))


def lambda_star(beta: ArrayLike, ctx: PenaltyContext):
    """Adaptive shrinkage rate: slab-probability weighted mix of the two rates."""
    ps = expit(-_spike_log_odds(beta, ctx))
    return _out(ctx.lambda1 * ps + ctx.lambda0 * (1.0 - ps))


def pen_singleton(beta: ArrayLike, ctx: PenaltyContext):
    """Centered log-prior penalty of one coefficient; zero at ``beta = 0``.

    Its derivative in ``|beta|`` is ``-lambda_star(beta)``.
    """
    odds0 = ctx.log_prior_odds
    odds = _spike_log_odds(beta, ctx)
    # log p*(0) - log p*(beta) = log(1 + e^odds) - log(1 + e^odds0)
    return _out(-ctx.lambda1 * np.abs(beta) + np.logaddexp(0.0, odds) - np.logaddexp(0.0, odds0))


def g_fn(x: ArrayLike, ctx: PenaltyContext):
    """``(lambda_star(x) - lambda1)^2 + (2n/sigma2) log pstar(x)``."""
    shift = np.asarray(lambda_star(x, ctx)) - ctx.lambda1
    return _out(shift**2 + (2.0 * ctx.n / ctx.sigma2) * np.asarray(log_pstar(x, ctx)))


class Threshold(NamedTuple):
    """Selection threshold on ``|z_j|`` and which branch produced it."""

    value: float
    branch: str  # "sqrt" when g(0) > 0, otherwise "lambda_star"


def threshold_delta(ctx: PenaltyContext) -> Threshold:
    """Closed-form approximation of the selection threshold.

    ``sqrt(2 n sigma2 log(1/pstar(0))) + sigma2 lambda1`` when ``g(0) > 0``,
    else ``sigma2 lambda_star(0)``. A tie at ``g(0) == 0`` takes the second
    branch.
    """
    if g_fn(0.0, ctx) > 0.0:
        value = math.sqrt(-2.0 * ctx.n * ctx.sigma2 * log_pstar(0.0, ctx)) + ctx.sigma2 * ctx.lambda1
        return Threshold(value, "sqrt")
    return Threshold(ctx.sigma2 * lambda_star(0.0, ctx), "lambda_star")


def threshold_delta_exact(ctx: PenaltyContext, grid_size: int = 400) -> float:
    """Exact threshold ``inf_{t>0} [n t / 2 - sigma2 pen(t) / t]``.

    Slow path for checking the closed-form approximation: a log-spaced scan
    locates the basin, then a bounded Brent refinement polishes it.
    The ``t -> 0`` limit ``sigma2 lambda_star(0)`` is included as a candidate.
    """
    gap = ctx.lambda0 - ctx.lambda1
    spike0 = 1.0 - pstar(0.0, ctx)

    def pen_over_t(t):
        t = np.asarray(t, dtype=float)
        # pen(t) / t cancels badly as t -> 0; near zero use
        # pen = -lambda1 t + log1p((1 - p*(0)) expm1(-t gap)) instead
        near = np.log1p(spike0 * np.expm1(-t * gap)) - ctx.lambda1 * t
        far = np.asarray(pen_singleton(t, ctx))
        return np.where(t * gap <= 1.0, near, far) / t

    def objective(t):
        return ctx.n * t / 2.0 - ctx.sigma2 * pen_over_t(t)

    limit0 = ctx.sigma2 * lambda_star(0.0, ctx)
    # pen <= 0, so past t_max the linear term alone exceeds the t -> 0 limit
    t_max = 2.0 * limit0 / ctx.n
    ts = np.geomspace(1e-10 * t_max, t_max, grid_size)
    vals = objective(ts)
    k = int(np.argmin(vals))
    lo = ts[max(k - 1, 0)]
    hi = ts[min(k + 1, grid_size - 1)]
    best = float(vals[k])
    if hi > lo:
        res = minimize_scalar(
            lambda t: float(objective(t)), bounds=(lo, hi), method="bounded", options={"xatol": 1e-14}
        )
        best = min(best, float(res.fun))
    return min(best, limit0)
