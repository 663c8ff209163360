import numpy as np
import pytest

from drsplit import prox_catalog as pc


def random_psd(rng, n, rank=None, scale=1.0):
    rank = n if rank is None else rank
    M = rng.standard_normal((n, rank))
    return scale * (M @ M.T) / max(rank, 1)


def random_spl(rng, n):
    bps, slopes = [], []
    for _ in range(n):
        m = int(rng.integers(0, 4))
        b = np.sort(rng.uniform(-2, 2, m))
        while m > 1 and np.any(np.diff(b) <= 1e-3):
            b = np.sort(rng.uniform(-2, 2, m))
        s = np.sort(rng.uniform(-2, 2, m + 1))
        bps.append(b.tolist())
        slopes.append(s.tolist())
    return pc.separable_piecewise_linear(bps, slopes)


def catalog_entries(rng, n):
    """One instance of every catalog kind, plus the derived wrappers."""
    basis = rng.standard_normal((n, max(1, n // 2)))
    entries = [
        pc.indicator_subspace(basis),
        pc.indicator_affine(rng.standard_normal(n), rng.standard_normal((n, max(1, n - 2)))),
        pc.indicator_orthant(n),
        pc.indicator_shifted_orthant(n),
        pc.indicator_polar_of(pc.indicator_subspace(basis)),
        pc.indicator_polar_of(pc.indicator_orthant(n)),
        pc.quadratic(random_psd(rng, n), rng.standard_normal(n)),
        pc.quadratic(random_psd(rng, n, rank=1), rng.standard_normal(n)),
        pc.scaled_l1(float(rng.uniform(0, 2)), n),
        random_spl(rng, n),
    ]
    entries.append(pc.conjugate(entries[6]))
    entries.append(pc.reflected(entries[9]))
    entries.append(pc.reflected(pc.conjugate(entries[3])))
    return entries


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line for the acceptance summary, then assert."""

    def record(label, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {label}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
