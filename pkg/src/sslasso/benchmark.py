"""Synthetic block-correlated designs, selection metrics and the replication harness.

Each replication draws a fresh design and response from its own generator,
seeded by mixing the master seed with the replication index through
:class:`numpy.random.SeedSequence`. Replications may run on a thread pool
(the compiled sweeps release the GIL); results are reduced in index order, so
reports do not depend on the schedule.
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from .data import RawDataset, destandardize, standardize
from .em import em_fit
from .exceptions import SSLError
from .penalty import SSLHyperParams
from .solver import cv_lasso, fit_path

__all__ = [
    "SimConfig",
    "ConfusionCounts",
    "MetricsReport",
    "BenchmarkReport",
    "PRESETS",
    "preset",
    "replication_seed",
    "gen_design",
    "gen_response",
    "simulate",
    "confusion",
    "metrics",
    "run_benchmark",
]

METRIC_NAMES = ("mse", "mpe", "model_size", "fdr", "fnr", "mcc")


@dataclass(frozen=True)
class SimConfig:
    """Block-equicorrelated Gaussian design with a sparse truth.

    ``true_beta`` maps 1-based predictor indices to nonzero values.
    """

    n: int
    p: int
    block_size: int
    rho: float
    true_beta: tuple[tuple[int, float], ...]
    sigma2: float
    replications: int = 1
    seed: int = 0
    name: str = "custom"

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "true_beta", tuple((int(j), float(v)) for j, v in self.true_beta)
        )
        if self.n < 2 or self.p < 1:
            raise ValueError(f"need n >= 2 and p >= 1, got n={self.n}, p={self.p}")
        if self.block_size < 1 or self.p % self.block_size:
            raise ValueError(f"p={self.p} is not a multiple of block_size={self.block_size}")
        if not 0 <= self.rho < 1:
            raise ValueError(f"rho must lie in [0, 1), got {self.rho}")
        idx = [j for j, _ in self.true_beta]
        if len(set(idx)) != len(idx) or any(not 1 <= j <= self.p for j in idx):
            raise ValueError(f"true_beta indices must be distinct and within 1..{self.p}")
        if self.sigma2 < 0:
            raise ValueError(f"sigma2 must be nonnegative, got {self.sigma2}")
        if self.replications < 1:
            raise ValueError("need at least one replication")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def beta0(self) -> NDArray[np.float64]:
        b = np.zeros(self.p)
        for j, v in self.true_beta:
            b[j - 1] = v
        return b

    @property
    def truth(self) -> frozenset[int]:
        """1-based indices of the nonzero coefficients."""
        return frozenset(j for j, v in self.true_beta if v != 0)


PRESETS: dict[str, tuple[SimConfig, SSLHyperParams]] = {
    "sec33": (
        SimConfig(
            n=50,
            p=12,
            block_size=3,
            rho=0.9,
            true_beta=((1, 1.3), (4, 1.3), (7, 1.3), (10, 1.3)),
            sigma2=1.0,
            replications=100,
            name="sec33",
        ),
        SSLHyperParams(lambda1=0.01, lambda0_ladder=tuple(np.linspace(1.0, 50.0, 50))),
    ),
    "table1": (
        SimConfig(
            n=100,
            p=1000,
            block_size=50,
            rho=0.9,
            true_beta=((1, -3.5), (51, -2.5), (101, -1.5), (151, 1.5), (201, 2.5), (251, 3.5)),
            sigma2=3.0,
            replications=50,
            name="table1",
        ),
        SSLHyperParams(lambda1=1.0, lambda0_ladder=tuple(np.linspace(2.0, 100.0, 50))),
    ),
}


def preset(name: str, **overrides) -> tuple[SimConfig, SSLHyperParams]:
    """Simulation config and matching hyperparameters of a named scenario."""
    try:
        config, hyper = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    if overrides:
        config = SimConfig(**{**asdict(config), **overrides})
    return config, hyper


def replication_seed(master: int, index: int) -> int:
    """64-bit seed of replication ``index`` (0-based) under ``master``."""
    ss = np.random.SeedSequence(master, spawn_key=(index,))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def gen_design(config: SimConfig, rng: np.random.Generator) -> NDArray[np.float64]:
    """Rows iid normal with unit variances and correlation ``rho`` within blocks.

    Within a block, ``x = sqrt(rho) z + sqrt(1 - rho) w`` with one shared
    standard normal ``z`` per row and block.
    """
    n, p, k = config.n, config.p, config.block_size
    shared = rng.standard_normal((n, p // k))
    own = rng.standard_normal((n, p))
    return math.sqrt(config.rho) * np.repeat(shared, k, axis=1) + math.sqrt(1.0 - config.rho) * own


def gen_response(
    X: NDArray, beta0: NDArray, sigma2: float, rng: np.random.Generator
) -> NDArray[np.float64]:
    """``X beta0`` plus iid ``N(0, sigma2)`` noise."""
    if X.shape[1] != np.shape(beta0)[0]:
        raise ValueError("design and coefficient dimensions disagree")
    if sigma2 < 0:
        raise ValueError(f"sigma2 must be nonnegative, got {sigma2}")
    return X @ beta0 + math.sqrt(sigma2) * rng.standard_normal(X.shape[0])


def simulate(config: SimConfig, rng: np.random.Generator) -> RawDataset:
    X = gen_design(config, rng)
    y = gen_response(X, config.beta0, config.sigma2, rng)
    return RawDataset(y=y, X=X)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self) -> None:
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise ValueError("confusion counts must be nonnegative")

    @property
    def p(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def confusion(selected, truth, p: int) -> ConfusionCounts:
    """Counts for 1-based index sets ``selected`` and ``truth`` among ``p`` predictors."""
    sel, tru = set(int(j) for j in selected), set(int(j) for j in truth)
    if any(not 1 <= j <= p for j in sel | tru):
        raise ValueError(f"indices must lie in 1..{p}")
    tp = len(sel & tru)
    fp = len(sel - tru)
    fn = len(tru - sel)
    return ConfusionCounts(tp=tp, tn=p - tp - fp - fn, fp=fp, fn=fn)


@dataclass(frozen=True)
class MetricsReport:
    """Estimation and selection metrics of one fit.

    ``fdr`` is ``FP / (TN + FP)``, the quantity usually called the false
    positive rate. ``mcc_degenerate`` is set when the MCC denominator is zero
    and the value 0 was assigned by convention.
    """

    mse: float
    mpe: float
    model_size: int
    fdr: float
    fnr: float
    mcc: float
    counts: ConfusionCounts
    mcc_degenerate: bool = False


def _mcc(c: ConfusionCounts) -> tuple[float, bool]:
    denom = (c.tp + c.fp) * (c.tp + c.fn) * (c.tn + c.fp) * (c.tn + c.fn)
    if denom > 0:
        return (c.tp * c.tn - c.fp * c.fn) / math.sqrt(denom), False
    if c.fp == 0 and c.fn == 0:
        return 1.0, False
    if c.tp == 0 and c.tn == 0:
        return -1.0, False
    return 0.0, True


def metrics(
    counts: ConfusionCounts, beta_hat: NDArray, beta0: NDArray, X: NDArray
) -> MetricsReport:
    """MSE ``||b - b0||^2 / p``, MPE ``||X(b - b0)||^2 / n``, FDR, FNR and MCC."""
    beta_hat = np.asarray(beta_hat, dtype=float)
    beta0 = np.asarray(beta0, dtype=float)
    X = np.asarray(X, dtype=float)
    if beta_hat.shape != beta0.shape or X.shape[1] != beta0.shape[0]:
        raise ValueError("dimension mismatch among estimate, truth and design")
    if counts.p != beta0.shape[0]:
        raise ValueError(f"counts cover {counts.p} predictors, truth has {beta0.shape[0]}")
    diff = beta_hat - beta0
    fit_err = X @ diff
    mcc, degenerate = _mcc(counts)
    return MetricsReport(
        mse=float(diff @ diff) / diff.shape[0],
        mpe=float(fit_err @ fit_err) / X.shape[0],
        model_size=counts.tp + counts.fp,
        fdr=counts.fp / (counts.tn + counts.fp) if counts.tn + counts.fp else 0.0,
        fnr=counts.fn / (counts.tp + counts.fn) if counts.tp + counts.fn else 0.0,
        mcc=mcc,
        counts=counts,
        mcc_degenerate=degenerate,
    )


@dataclass(frozen=True)
class ReplicationResult:
    index: int
    seed: int
    ssl: MetricsReport | None = None
    lasso: MetricsReport | None = None
    lasso_rate: float | None = None
    stabilized_at: int | None = None
    ladder_length: int = 0
    error: str | None = None


@dataclass(frozen=True)
class BenchmarkReport:
    config: SimConfig
    hyper: SSLHyperParams
    solver: str
    results: tuple[ReplicationResult, ...]
    baseline: bool = True
    elapsed: float = field(default=0.0, compare=False)

    @property
    def failures(self) -> tuple[ReplicationResult, ...]:
        return tuple(r for r in self.results if r.error is not None)

    def aggregate(self, method: str = "ssl") -> dict[str, dict[str, float | int | None]]:
        """Mean, sample sd (``ddof=1``), standard error and count per metric.

        ``sd`` and ``se`` are ``None`` with fewer than two successful
        replications.
        """
        rows = [getattr(r, method) for r in self.results if getattr(r, method) is not None]
        out = {}
        for name in METRIC_NAMES:
            vals = np.array([getattr(m, name) for m in rows], dtype=float)
            count = int(vals.size)
            mean = float(vals.mean()) if count else None
            sd = float(vals.std(ddof=1)) if count > 1 else None
            out[name] = {
                "mean": mean,
                "sd": sd,
                "se": sd / math.sqrt(count) if sd is not None else None,
                "n": count,
            }
        out["mcc_degenerate"] = {"count": sum(m.mcc_degenerate for m in rows)}
        return out

    def to_dict(self) -> dict:
        methods = ["ssl"] + (["lasso"] if self.baseline else [])
        return {
            "config": asdict(self.config),
            "hyper": asdict(self.hyper),
            "solver": self.solver,
            "replications": len(self.results),
            "failures": [{"index": r.index, "seed": r.seed, "error": r.error} for r in self.failures],
            "aggregates": {m: self.aggregate(m) for m in methods},
        }

    def write(self, outdir: str | Path, stem: str = "benchmark") -> tuple[Path, Path]:
        """Write ``<stem>.json`` (aggregates, config echo) and ``<stem>.csv`` (one row per replication)."""
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        json_path, csv_path = outdir / f"{stem}.json", outdir / f"{stem}.csv"
        json_path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        methods = ["ssl"] + (["lasso"] if self.baseline else [])
        header = ["replication", "seed", "error", "stabilized_at"]
        for m in methods:
            header += [f"{m}_{k}" for k in METRIC_NAMES + ("tp", "tn", "fp", "fn")]
        if self.baseline:
            header.append("lasso_rate")
        with csv_path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for r in self.results:
                row = [r.index + 1, r.seed, r.error or "", "" if r.stabilized_at is None else r.stabilized_at + 1]
                for m in methods:
                    rep = getattr(r, m)
                    if rep is None:
                        row += [""] * (len(METRIC_NAMES) + 4)
                    else:
                        row += [getattr(rep, k) for k in METRIC_NAMES]
                        c = rep.counts
                        row += [c.tp, c.tn, c.fp, c.fn]
                if self.baseline:
                    row.append("" if r.lasso_rate is None else r.lasso_rate)
                w.writerow(row)
        return json_path, csv_path


def _score(beta_raw: NDArray, config: SimConfig, X: NDArray) -> MetricsReport:
    selected = np.flatnonzero(beta_raw) + 1
    counts = confusion(selected, config.truth, config.p)
    return metrics(counts, beta_raw, config.beta0, X)


def _replicate(index, config, solver, hyper, baseline) -> ReplicationResult:
    seed = replication_seed(config.seed, index)
    try:
        raw = simulate(config, np.random.default_rng(seed))
        design = standardize(raw)
        path = (em_fit if solver == "em" else fit_path)(design, hyper)
        ssl = _score(destandardize(path.final.beta, design)[0], config, raw.X)
        lasso = rate = None
        if baseline:
            rate, beta = cv_lasso(design, path.hyper.lambda0_ladder)
            lasso = _score(destandardize(beta, design)[0], config, raw.X)
    except SSLError as exc:
        return ReplicationResult(index=index, seed=seed, error=f"{type(exc).__name__}: {exc}")
    return ReplicationResult(
        index=index,
        seed=seed,
        ssl=ssl,
        lasso=lasso,
        lasso_rate=rate,
        stabilized_at=path.stabilized_at,
        ladder_length=len(path),
    )


def run_benchmark(
    config: SimConfig,
    solver: str = "ca",
    hyper: SSLHyperParams | None = None,
    workers: int = 1,
    baseline: bool = True,
) -> BenchmarkReport:
    """Fit every replication and collect per-replication metrics.

    The baseline is a LASSO whose rate minimizes 5-fold cross-validated
    prediction error over the SSL ladder values. A replication that raises a
    solver or data error is recorded with its seed and excluded from the
    aggregates.
    """
    if solver not in ("ca", "em"):
        raise ValueError(f"solver must be 'ca' or 'em', got {solver!r}")
    if workers < 1:
        raise ValueError(f"workers must be at least 1, got {workers}")
    if hyper is None:
        hyper = PRESETS[config.name][1] if config.name in PRESETS else SSLHyperParams()
    hyper = hyper.resolved(config.n, config.p)
    start = time.perf_counter()
    indices = range(config.replications)
    if workers == 1:
        results = [_replicate(i, config, solver, hyper, baseline) for i in indices]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(
                pool.map(lambda i: _replicate(i, config, solver, hyper, baseline), indices)
            )
    return BenchmarkReport(
        config=config,
        hyper=hyper,
        solver=solver,
        results=tuple(results),
        baseline=baseline,
        elapsed=time.perf_counter() - start,
    )
