import numpy as np
import pytest

from coreg.panel import SparsePanel
from coreg.spaces import CorrelationSpace, EuclideanSpace, WassersteinSpace, normal_quantiles


def random_panel(rng, n=30, ni=(1, 5), space="euclidean", p=1, m=20, dim=3):
    """Panel with uniform times, uniform covariates and noisy responses."""
    counts = rng.integers(ni[0], ni[1] + 1, size=n)
    subject = np.repeat(np.arange(n), counts)
    N = subject.size
    t = rng.uniform(0, 1, N)
    x = rng.uniform(0, 1, (N, p))
    if space == "euclidean":
        y = 1 + x.sum(axis=1) - t**2 + 0.3 * rng.standard_normal(N)
        sp = EuclideanSpace()
    elif space == "wasserstein":
        z = normal_quantiles(m)
        loc = x[:, 0] + t + 0.2 * rng.standard_normal(N)
        scale = 0.5 + 0.5 * rng.uniform(size=N)
        y = loc[:, None] + scale[:, None] * z[None, :]
        sp = WassersteinSpace(m)
    else:
        y = np.stack([random_corr(rng, dim) for _ in range(N)])
        sp = CorrelationSpace(dim)
    return SparsePanel(tuple(f"s{k}" for k in range(n)), subject, t, x, y, sp)


def random_corr(rng, dim):
    a = rng.standard_normal((dim + 3, dim))
    c = np.corrcoef(a, rowvar=False)
    c = 0.5 * (c + c.T)
    np.fill_diagonal(c, 1.0)
    return c


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
