import logging
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from sslasso.benchmark import preset, replication_seed, simulate  # noqa: E402
from sslasso.data import StandardizedDesign, standardize  # noqa: E402


@pytest.fixture(autouse=True)
def _quiet_solver(caplog):
    caplog.set_level(logging.ERROR, logger="sslasso")


def random_design(rng, n, p, beta_scale=1.0, noise=1.0):
    X = rng.standard_normal((n, p))
    beta = beta_scale * rng.standard_normal(p)
    y = X @ beta + noise * rng.standard_normal(n)
    return StandardizedDesign.from_arrays(X, y)


def orthogonal_design(n, p, seed=0):
    """Centered columns with ``X'X = n I`` (QR of a centered Gaussian matrix)."""
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, p))
    A -= A.mean(axis=0)
    q, _ = np.linalg.qr(A)
    X = q * np.sqrt(n)
    y = X @ rng.normal(0, 2, p) + rng.standard_normal(n)
    return StandardizedDesign.from_arrays(X, y)


def sec33_designs(count=100, seed=0):
    config, hyper = preset("sec33", seed=seed)
    return [
        standardize(simulate(config, np.random.default_rng(replication_seed(config.seed, i))))
        for i in range(count)
    ], hyper


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line per acceptance criterion for the run summary."""

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
