import numpy as np
import pytest

from forster.basis import enumerate_states
from forster.interaction import build_hamiltonian, sample_positions


def random_instance(rng, i, max_norm=10.0, max_delta=5.0):
    """Random geometry + detuning whose Hamiltonian has spectral norm <= max_norm."""
    basis = enumerate_states(i)
    while True:
        cfg = sample_positions(i, 18.0, rng)
        h = build_hamiltonian(basis, cfg, rng.uniform(-max_delta, max_delta))
        if np.linalg.norm(h.entries, 2) <= max_norm:
            return basis, h


@pytest.fixture
def rng():
    return np.random.default_rng(20100218)


_ACCEPTANCE_LINES = []


@pytest.fixture
def report_criterion():
    def report(label, ok, detail):
        _ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  {label}: {detail}")
        return ok

    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
