"""Debiased SSL estimates and asymptotic pointwise confidence intervals.

The mode is corrected by one step along ``Theta X'(y - X beta) / n`` where
``Theta`` approximates the inverse Gram matrix ``Sigma = X'X / n``. With
``n > p`` the exact inverse is available; otherwise ``Theta`` comes from
nodewise LASSO regressions of each column on the rest.

The intervals are asymptotic and can undercover in small samples.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import NDArray
from scipy import linalg
from scipy.stats import norm

from .data import StandardizedDesign
from .exceptions import NumericalError
from .solver import weighted_lasso

__all__ = [
    "PrecisionEstimate",
    "IntervalTable",
    "precision_estimate",
    "debias",
    "confidence_intervals",
    "write_intervals_csv",
]

TAU2_MIN = 1e-12


@dataclass(frozen=True)
class PrecisionEstimate:
    """Approximate inverse of ``X'X / n``.

    Attributes
    ----------
    theta_hat : ndarray, shape (p, p)
        Not symmetric when built nodewise.
    method : {"exact_inverse", "nodewise"}
    nodewise_lambda : float or None
    """

    theta_hat: NDArray[np.float64]
    method: str
    nodewise_lambda: float | None = None

    def __post_init__(self) -> None:
        if self.method not in ("exact_inverse", "nodewise"):
            raise ValueError(f"unknown precision method {self.method!r}")
        th = np.array(self.theta_hat, dtype=float)
        if th.ndim != 2 or th.shape[0] != th.shape[1]:
            raise ValueError(f"precision matrix must be square, got shape {th.shape}")
        if not np.all(np.isfinite(th)):
            raise NumericalError("non-finite entries in precision estimate")
        th.setflags(write=False)
        object.__setattr__(self, "theta_hat", th)


def _gram(design: StandardizedDesign) -> NDArray:
    return design.X_s.T @ design.X_s / design.n


def precision_estimate(
    design: StandardizedDesign, method: str = "nodewise", nodewise_lambda: float | None = None
) -> PrecisionEstimate:
    """Estimate ``Theta`` by direct inversion or nodewise regression.

    Nodewise row ``j`` regresses column ``j`` on the others by LASSO at rate
    ``nodewise_lambda`` (per observation, default ``sqrt(log p / n)``), sets
    ``tau_j^2 = ||x_j - X_{-j} gamma||^2 / n + lambda ||gamma||_1`` and fills
    the row with ``(1 at j, -gamma elsewhere) / tau_j^2``.

    Raises
    ------
    NumericalError
        Singular Gram matrix under ``exact_inverse``, or a nodewise
        ``tau_j^2`` below ``1e-12`` (column ``j`` collinear with the rest).
    """
    n, p = design.n, design.p
    if method == "exact_inverse":
        if n <= p:
            raise NumericalError(f"exact inverse needs n > p, got n={n}, p={p}")
        sigma = _gram(design)
        # a near-singular Gram matrix would pass inv() but wreck the intervals
        if np.linalg.cond(sigma) > 1e12:
            raise NumericalError("Gram matrix is singular to working precision")
        return PrecisionEstimate(linalg.inv(sigma), "exact_inverse")
    if method != "nodewise":
        raise ValueError(f"unknown precision method {method!r}")
    if p == 1:
        return PrecisionEstimate(np.linalg.inv(_gram(design)), "nodewise", nodewise_lambda)
    lam = math.sqrt(math.log(p) / n) if nodewise_lambda is None else float(nodewise_lambda)
    if not lam > 0:
        raise ValueError(f"nodewise lambda must be positive, got {lam}")
    X = design.X_s
    theta = np.zeros((p, p))
    for j in range(p):
        others = np.delete(np.arange(p), j)
        xj = X[:, j]
        # rate lam per observation is n * lam on the 0.5 * RSS scale
        gamma = weighted_lasso(X[:, others], xj, n * lam)
        resid = xj - X[:, others] @ gamma
        tau2 = float(resid @ resid) / n + lam * float(np.abs(gamma).sum())
        if tau2 < TAU2_MIN:
            raise NumericalError(f"column {j + 1} is collinear with the others (tau^2={tau2:.3g})")
        theta[j, j] = 1.0 / tau2
        theta[j, others] = -gamma / tau2
    return PrecisionEstimate(theta, "nodewise", lam)


def debias(beta_hat: NDArray, prec: PrecisionEstimate, design: StandardizedDesign) -> NDArray:
    """One-step correction ``beta + Theta X'(y - X beta) / n``."""
    beta_hat = np.asarray(beta_hat, dtype=float)
    if beta_hat.shape != (design.p,) or prec.theta_hat.shape != (design.p, design.p):
        raise ValueError("dimension mismatch between estimate, precision and design")
    r = design.y_c - design.X_s @ beta_hat
    return beta_hat + prec.theta_hat @ (design.X_s.T @ r) / design.n


@dataclass(frozen=True)
class IntervalTable:
    """Per-coordinate intervals ``estimate +/- half_width``."""

    estimate: NDArray[np.float64]
    lower: NDArray[np.float64]
    upper: NDArray[np.float64]
    alpha: float
    sigma2_hat: float

    @property
    def width(self) -> NDArray[np.float64]:
        return self.upper - self.lower

    def covers(self, truth: NDArray) -> NDArray[np.bool_]:
        truth = np.asarray(truth, dtype=float)
        return (self.lower <= truth) & (truth <= self.upper)


def confidence_intervals(
    beta_d: NDArray,
    prec: PrecisionEstimate,
    design: StandardizedDesign,
    sigma2_hat: float,
    alpha: float = 0.05,
) -> IntervalTable:
    """Intervals with half-width ``z_{1-alpha/2} sqrt(sigma2 (Theta Sigma Theta')_jj / n)``."""
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if not sigma2_hat > 0:
        raise ValueError(f"sigma2_hat must be positive, got {sigma2_hat}")
    beta_d = np.asarray(beta_d, dtype=float)
    th = prec.theta_hat
    # diag(Theta Sigma Theta') without forming the p x p product
    diag = np.einsum("ij,ij->i", th @ _gram(design), th)
    if np.any(diag <= 0):
        j = int(np.flatnonzero(diag <= 0)[0])
        raise NumericalError(f"nonpositive variance factor at coordinate {j + 1}")
    half = norm.ppf(1.0 - alpha / 2.0) * np.sqrt(sigma2_hat * diag / design.n)
    return IntervalTable(
        estimate=beta_d,
        lower=beta_d - half,
        upper=beta_d + half,
        alpha=float(alpha),
        sigma2_hat=float(sigma2_hat),
    )


def write_intervals_csv(
    path: str | Path, table: IntervalTable, names, precision: PrecisionEstimate
) -> None:
    """Write ``index,name,estimate,lower,upper`` with 1-based indices.

    Leading ``#`` lines record alpha, the plugged-in variance and the
    precision method; all values are on the standardized scale.
    """
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        fh.write(f"# alpha={table.alpha!r}\n")
        fh.write(f"# sigma2={table.sigma2_hat!r}\n")
        fh.write(f"# precision={precision.method}\n")
        if precision.nodewise_lambda is not None:
            fh.write(f"# nodewise_lambda={precision.nodewise_lambda!r}\n")
        fh.write("# scale=standardized\n")
        w = csv.writer(fh)
        w.writerow(["index", "name", "estimate", "lower", "upper"])
        for j, name in enumerate(names):
            w.writerow(
                [j + 1, name, float(table.estimate[j]), float(table.lower[j]), float(table.upper[j])]
            )
