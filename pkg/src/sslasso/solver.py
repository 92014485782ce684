"""Coordinate-ascent MAP solver and dynamic posterior exploration.

The global mode of the SSL posterior is a fixed point of a thresholded
soft-thresholding map: coordinate ``j`` is zero unless its partial residual
correlation ``|z_j|`` exceeds the selection threshold, and otherwise is
shrunk by ``sigma2 * lambda_star(beta_j)``. :func:`fit_at_rung` iterates that
map together with the mixing-weight and variance updates at one spike rate;
:func:`fit_path` walks a ladder of increasing spike rates with warm starts.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from numpy.typing import NDArray

from . import _kernels
from .data import StandardizedDesign
from .exceptions import NumericalError
from .penalty import PenaltyContext, SSLHyperParams, lambda_star, pen_singleton, threshold_delta

__all__ = [
    "SolverState",
    "FitPath",
    "partial_residual",
    "update_beta_j",
    "update_theta",
    "update_sigma2",
    "sigma2_floor",
    "log_posterior",
    "initial_state",
    "fit_at_rung",
    "fit_path",
    "weighted_lasso",
    "lasso",
    "cv_lasso",
    "estimate_sigma2_cv",
]

logger = logging.getLogger(__name__)

# iterations below which a rung counts as "converging quickly" for unfreezing sigma2
UNFREEZE_ITERATIONS = 100
POLISH_TOL = 1e-13
POLISH_MAX_SWEEPS = 1000


@dataclass(frozen=True)
class SolverState:
    """Solver iterate on the standardized scale."""

    beta: NDArray[np.float64]
    theta: float
    sigma2: float
    delta: float = 0.0
    iterations: int = 0
    converged: bool = False
    log_posterior: float = float("nan")
    delta_branch: str = ""
    sigma2_floored: bool = False

    def __post_init__(self) -> None:
        beta = np.array(self.beta, dtype=float)
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        if not 0 < self.theta < 1:
            raise ValueError(f"theta must lie in (0, 1), got {self.theta}")
        if not self.sigma2 > 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        if self.delta < 0:
            raise ValueError(f"delta must be nonnegative, got {self.delta}")
        if not np.all(np.isfinite(beta)):
            raise NumericalError("non-finite coefficients in solver state")

    @property
    def support(self) -> NDArray[np.intp]:
        """0-based indices of the nonzero coefficients."""
        return np.flatnonzero(self.beta)


@dataclass(frozen=True)
class FitPath:
    """Solver states along the spike-rate ladder.

    ``stabilized_at`` is the first rung from which the support no longer
    changes; it is ``None`` when the support changes at the final rung.
    ``sigma2_unfrozen_at`` is the first rung at which the variance was
    re-estimated (unknown-variance fits only).
    """

    rungs: tuple[tuple[float, object], ...]
    stabilized_at: int | None = None
    sigma2_unfrozen_at: int | None = None
    hyper: SSLHyperParams | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        lams = [lam for lam, _ in self.rungs]
        if any(b <= a for a, b in zip(lams, lams[1:])):
            raise ValueError("rungs must be ordered by strictly increasing lambda0")

    def __len__(self) -> int:
        return len(self.rungs)

    @property
    def lambda0s(self) -> NDArray[np.float64]:
        return np.array([lam for lam, _ in self.rungs])

    @property
    def final(self):
        return self.rungs[-1][1]

    @property
    def coefficients(self) -> NDArray[np.float64]:
        """Array of shape (rungs, p)."""
        return np.vstack([st.beta for _, st in self.rungs])

    def supports(self) -> list[frozenset[int]]:
        return [frozenset(int(j) for j in np.flatnonzero(st.beta)) for _, st in self.rungs]


def stabilization_index(supports: list[frozenset[int]]) -> int | None:
    """First index from which every later support equals the last one."""
    if not supports:
        return None
    s = len(supports) - 1
    while s > 0 and supports[s - 1] == supports[-1]:
        s -= 1
    if s == len(supports) - 1 and len(supports) > 1:
        return None
    return s


def partial_residual(
    j: int, beta: NDArray, design: StandardizedDesign, residual: NDArray | None = None
) -> float:
    """``z_j = x_j'(y - sum_{k != j} x_k beta_k)`` (0-based ``j``).

    With a maintained full residual ``r = y - X beta`` this is
    ``x_j' r + n beta_j`` since every standardized column has squared norm n.
    """
    x = design.X_s[:, j]
    if residual is None:
        residual = design.y_c - design.X_s @ beta
    return float(x @ residual + design.n * beta[j])


def update_beta_j(z_j: float, beta_j_old: float, ctx: PenaltyContext, delta: float) -> float:
    """Thresholded soft-threshold update of one coefficient.

    Zero when ``|z_j| <= delta``; otherwise
    ``(|z_j| - sigma2 lambda_star(beta_j_old))_+ sign(z_j) / n``.
    """
    if abs(z_j) <= delta:
        return 0.0
    mag = abs(z_j) - ctx.sigma2 * lambda_star(beta_j_old, ctx)
    return math.copysign(mag / ctx.n, z_j) if mag > 0 else 0.0


def update_theta(nonzero_count: int, a: float, b: float, p: int) -> float:
    """Mixing-weight update ``(a + count) / (a + b + p)``."""
    if not 0 <= nonzero_count <= p:
        raise ValueError(f"nonzero count {nonzero_count} outside [0, {p}]")
    return (a + nonzero_count) / (a + b + p)


def sigma2_floor(y: NDArray) -> float:
    var = float(np.var(y))
    return 1e-10 * var if var > 0 else 1e-10


def update_sigma2(residual_ss: float, n: int, floor: float) -> tuple[float, bool]:
    """``residual_ss / (n + 2)`` bounded below by ``floor``.

    Returns the new variance and whether the floor was applied.
    """
    if residual_ss < 0:
        raise ValueError(f"residual sum of squares must be nonnegative, got {residual_ss}")
    s2 = residual_ss / (n + 2)
    if s2 < floor:
        return floor, True
    return s2, False


def log_posterior(
    design: StandardizedDesign,
    beta: NDArray,
    sigma2: float,
    theta: float,
    lambda0: float,
    lambda1: float,
) -> float:
    """``-||y - X beta||^2 / (2 sigma2) - (n+2) log sigma + sum_j pen(beta_j | theta)``."""
    r = design.y_c - design.X_s @ beta
    ctx = PenaltyContext(theta=theta, sigma2=sigma2, n=design.n, lambda0=lambda0, lambda1=lambda1)
    pen = np.asarray(pen_singleton(beta, ctx))
    return float(
        -(r @ r) / (2.0 * sigma2) - (design.n + 2) * 0.5 * math.log(sigma2) + pen.sum()
    )


def initial_state(design: StandardizedDesign, hyper: SSLHyperParams) -> SolverState:
    """Null-model start: zero coefficients, prior-mean mixing weight.

    The starting variance follows ``hyper.sigma2_init`` unless the variance
    is fixed.
    """
    hyper = hyper.resolved(design.n, design.p)
    if hyper.fixed_theta is not None:
        theta = hyper.fixed_theta
    else:
        theta = hyper.a / (hyper.a + hyper.b)
    if hyper.sigma2 is not None:
        sigma2 = hyper.sigma2
    elif hyper.sigma2_init == "cv":
        sigma2 = estimate_sigma2_cv(design, hyper.lambda0_ladder)
    elif hyper.sigma2_init == "null":
        sigma2, _ = update_sigma2(float(design.y_c @ design.y_c), design.n, sigma2_floor(design.y_c))
    else:
        sigma2 = float(hyper.sigma2_init)
    return SolverState(beta=np.zeros(design.p), theta=theta, sigma2=sigma2)


def fit_at_rung(
    design: StandardizedDesign,
    hyper: SSLHyperParams,
    lambda0: float,
    init: SolverState,
    freeze_sigma2: bool = False,
) -> SolverState:
    """Coordinate ascent at a single spike rate.

    Each outer iteration recomputes the threshold, sweeps the coordinates in
    order, then updates the mixing weight and (unless fixed or frozen) the
    variance. Stops when no coefficient moves by ``hyper.tol`` or after
    ``hyper.max_iter`` iterations. A final polish sweeps at the last
    ``(theta, sigma2)`` so that the returned coefficients are a fixed point
    of the update under the returned state.
    """
    hyper = hyper.resolved(design.n, design.p)
    if lambda0 < hyper.lambda1:
        raise ValueError(f"lambda0={lambda0} below lambda1={hyper.lambda1}")
    n, p = design.n, design.p
    X, y = design.X_s, design.y_c
    xtx = np.full(p, float(n))
    beta = np.array(init.beta, dtype=float)
    r = y - X @ beta
    theta = hyper.fixed_theta if hyper.fixed_theta is not None else init.theta
    sigma2 = hyper.sigma2 if hyper.sigma2 is not None else init.sigma2
    update_var = hyper.sigma2 is None and not freeze_sigma2
    floor = sigma2_floor(y)
    floored = init.sigma2_floored if not update_var else False
    lam1 = hyper.lambda1

    start_lp = log_posterior(design, beta, sigma2, theta, lambda0, lam1)
    converged = False
    t = 0
    while t < hyper.max_iter:
        t += 1
        ctx = PenaltyContext(theta=theta, sigma2=sigma2, n=n, lambda0=lambda0, lambda1=lam1)
        delta = threshold_delta(ctx).value
        change = _kernels.ssl_sweep(
            X, r, beta, xtx, sigma2, ctx.log_prior_odds, lambda0, lam1, delta
        )
        if hyper.fixed_theta is None:
            theta = update_theta(int(np.count_nonzero(beta)), hyper.a, hyper.b, p)
        if update_var:
            sigma2, floored = update_sigma2(float(r @ r), n, floor)
        if not math.isfinite(change):
            raise NumericalError(f"coordinate sweep diverged at lambda0={lambda0}")
        if change < hyper.tol:
            converged = True
            break

    ctx = PenaltyContext(theta=theta, sigma2=sigma2, n=n, lambda0=lambda0, lambda1=lam1)
    thr = threshold_delta(ctx)
    for _ in range(POLISH_MAX_SWEEPS):
        change = _kernels.ssl_sweep(
            X, r, beta, xtx, sigma2, ctx.log_prior_odds, lambda0, lam1, thr.value
        )
        if change < POLISH_TOL:
            break

    lp = log_posterior(design, beta, sigma2, theta, lambda0, lam1)
    if not math.isfinite(lp):
        raise NumericalError(f"non-finite log posterior at lambda0={lambda0}")
    if not converged:
        logger.warning("lambda0=%g: no convergence in %d iterations", lambda0, hyper.max_iter)
    logger.debug("lambda0=%g: %d iterations, log posterior %g -> %g", lambda0, t, start_lp, lp)
    return SolverState(
        beta=beta,
        theta=theta,
        sigma2=sigma2,
        delta=thr.value,
        iterations=t,
        converged=converged,
        log_posterior=lp,
        delta_branch=thr.branch,
        sigma2_floored=floored,
    )


def _explore(design, hyper, init, fit_one) -> FitPath:
    rungs = []
    state = init
    frozen = hyper.sigma2 is None
    unfrozen_at = None
    ladder = hyper.lambda0_ladder
    for s, lam0 in enumerate(ladder):
        state = fit_one(design, hyper, lam0, state, frozen)
        rungs.append((lam0, state))
        if frozen and state.converged and state.iterations < UNFREEZE_ITERATIONS:
            frozen = False
            if s + 1 < len(ladder):
                unfrozen_at = s + 1
    supports = [frozenset(int(j) for j in np.flatnonzero(st.beta)) for _, st in rungs]
    return FitPath(
        rungs=tuple(rungs),
        stabilized_at=stabilization_index(supports),
        sigma2_unfrozen_at=unfrozen_at,
        hyper=hyper,
    )


def fit_path(design: StandardizedDesign, hyper: SSLHyperParams) -> FitPath:
    """Dynamic posterior exploration over ``hyper.lambda0_ladder``.

    Each rung is warm-started from the previous rung's solution. With unknown
    variance, ``sigma2`` stays at its null-model value until a rung converges
    in fewer than 100 iterations, and is re-estimated from the next rung on.
    """
    hyper = hyper.resolved(design.n, design.p)
    return _explore(design, hyper, initial_state(design, hyper), fit_at_rung)


def weighted_lasso(
    X: NDArray,
    y: NDArray,
    weights: Union[float, NDArray],
    beta0: NDArray | None = None,
    tol: float = 1e-10,
    max_sweeps: int = 100_000,
) -> NDArray:
    """Maximize ``-0.5 ||y - X b||^2 - sum_j w_j |b_j|`` by coordinate descent.

    Columns need not be standardized. This is the spike-equals-slab special
    case of the SSL update and serves as the package's LASSO.
    """
    X = _kernels.as_fortran(X)
    y = np.asarray(y, dtype=float)
    p = X.shape[1]
    w = np.broadcast_to(np.asarray(weights, dtype=float), (p,)).copy()
    if np.any(w < 0):
        raise ValueError("penalty weights must be nonnegative")
    xtx = np.einsum("ij,ij->j", X, X)
    if np.any(xtx <= 0):
        raise ValueError("design has an all-zero column")
    beta = np.zeros(p) if beta0 is None else np.array(beta0, dtype=float)
    r = y - X @ beta
    _kernels.weighted_lasso_cd(X, r, beta, xtx, w, tol, max_sweeps)
    return beta


def lasso(design: StandardizedDesign, penalty: float, **kwargs) -> NDArray:
    """LASSO on a standardized design at rate ``penalty`` (threshold on ``|x_j' r|``)."""
    return weighted_lasso(design.X_s, design.y_c, penalty, **kwargs)


def cv_lasso(
    design: StandardizedDesign, grid, folds: int = 5, tol: float = 1e-7
) -> tuple[float, NDArray]:
    """LASSO with the rate picked by ``folds``-fold cross-validation over ``grid``.

    Rows are assigned to folds as ``i mod folds``, so the result involves no
    randomness. A fold's training penalty is scaled by its share of rows so
    that every fold targets the same per-observation rate. Each fold walks
    the grid from the largest rate down with warm starts.

    Returns
    -------
    rate : float
        The grid value with the smallest summed held-out squared error.
    beta : ndarray
        Full-data LASSO at ``rate``.
    """
    n, p = design.n, design.p
    if not 2 <= folds <= n:
        raise ValueError(f"need 2 <= folds <= n, got folds={folds}, n={n}")
    rates = np.sort(np.asarray(grid, dtype=float))[::-1]
    if rates.size == 0 or np.any(rates <= 0):
        raise ValueError("cross-validation grid must be nonempty and positive")
    fold = np.arange(n) % folds
    err = np.zeros(rates.size)
    for k in range(folds):
        train = fold != k
        Xt = _kernels.as_fortran(design.X_s[train])
        yt = design.y_c[train]
        Xv, yv = design.X_s[~train], design.y_c[~train]
        share = train.sum() / n
        beta = np.zeros(p)
        for i, rate in enumerate(rates):
            beta = weighted_lasso(Xt, yt, rate * share, beta0=beta, tol=tol)
            r = yv - Xv @ beta
            err[i] += r @ r
    best = float(rates[int(np.argmin(err))])
    beta = np.zeros(p)
    for rate in rates[rates >= best]:
        beta = weighted_lasso(design.X_s, design.y_c, rate, beta0=beta, tol=tol)
    return best, beta


def estimate_sigma2_cv(design: StandardizedDesign, grid, folds: int = 5) -> float:
    """Residual variance ``RSS / (n - df - 1)`` of the cross-validated LASSO.

    Falls back to the null-model value ``||y||^2 / (n + 2)`` when the selected
    model leaves no residual degrees of freedom.
    """
    _, beta = cv_lasso(design, grid, folds=folds)
    r = design.y_c - design.X_s @ beta
    dof = design.n - np.count_nonzero(beta) - 1
    floor = sigma2_floor(design.y_c)
    if dof < 1:
        return update_sigma2(float(design.y_c @ design.y_c), design.n, floor)[0]
    return max(float(r @ r) / dof, floor)
