import numpy as np
import pytest

from rollgov.harness import ExperimentConfig, Toolkit


@pytest.fixture(scope="session")
def toolkit():
    """Default configuration with lazily built banks and sets, shared by all tests."""
    return Toolkit(ExperimentConfig())


def hit_and_run(A, b, start, n, rng, burn=20, edge_fraction=0.2):
    """Points of ``{z : A z <= b}`` by hit-and-run from an interior ``start``.

    A share of the draws is pushed almost onto the boundary so that tight
    rows get exercised, not only the bulk of the polytope.
    """
    z = np.array(start, dtype=float)
    out = []
    total = burn + n
    for i in range(total):
        d = rng.standard_normal(z.size)
        d /= np.linalg.norm(d)
        ad = A @ d
        slack = b - A @ z
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = slack / ad
        t_hi = np.min(ratios[ad > 0]) if np.any(ad > 0) else 1.0
        t_lo = np.max(ratios[ad < 0]) if np.any(ad < 0) else -1.0
        if rng.random() < edge_fraction:
            t = (t_hi if rng.random() < 0.5 else t_lo) * (1 - 1e-9)
            cand = z + t * d
        else:
            cand = z + rng.uniform(t_lo, t_hi) * d
        if i >= burn:
            out.append(cand.copy())
        # keep the chain inside the bulk so it does not stick to a face
        z = z + rng.uniform(t_lo, t_hi) * 0.5 * d
    return np.array(out)


# ------------------------------------------------------------------ acceptance verdicts

_VERDICTS: dict = {}


@pytest.fixture
def verdict():
    """Record a criterion's PASS/FAIL line, then fail the test if it did not hold."""

    def record(number: int, title: str, ok: bool, detail: str = ""):
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}" + (f"  [{detail}]" if detail else "")
        _VERDICTS[number] = line
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.write_sep("=", "acceptance criteria")
        for n in sorted(_VERDICTS):
            terminalreporter.write_line(_VERDICTS[n])
