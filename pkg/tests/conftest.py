import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def check_convergence_contract(result, cfg):
    """A converged run satisfied the branch it reports."""
    tol = cfg.test_tol
    for k, s in enumerate(result.summaries):
        if not s.converged or s.via not in ("omega", "tol_stop"):
            continue
        if s.via == "tol_stop":
            window = result.summaries[max(0, k - tol.N + 1) : k + 1]
            assert all(w.score <= tol.tol_stop for w in window), (k, [w.score for w in window])
        else:
            assert k + 1 >= tol.M
            # registry iterations count from the run's first iteration
            recent = range(k - tol.M + 1, k + 1)
            assert not any(it in recent for it in result.registry.iterations())
            assert all(w.new_extrema == 0 for w in result.summaries[k - tol.M + 1 : k + 1])


@pytest.fixture
def contract():
    return check_convergence_contract


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
