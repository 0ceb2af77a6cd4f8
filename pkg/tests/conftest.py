import numpy as np
import pytest

from pixdoherty.netalg import Kind, NetworkMatrix


def random_passive_s(rng, n, n_freqs=3, radius=0.9, symmetric=True):
    """Random scattering matrices with spectral norm below ``radius``."""
    a = rng.normal(size=(n_freqs, n, n)) + 1j * rng.normal(size=(n_freqs, n, n))
    if symmetric:
        a = a + np.swapaxes(a, -1, -2)
    norms = np.linalg.norm(a, ord=2, axis=(1, 2))
    a = a / norms[:, None, None] * radius * rng.uniform(0.2, 1.0, size=(n_freqs, 1, 1))
    return NetworkMatrix(Kind.SCATTERING, np.arange(1, n_freqs + 1) * 1e9, a)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = next((m for name, m in sys.modules.items() if name.endswith("test_acceptance")), None)
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
