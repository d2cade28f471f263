import functools

import pytest

from hyperstab.extremal import ModelParams, best_constant, solve_ground_state


@functools.lru_cache(maxsize=None)
def _ground(n, p, lam):
    params = ModelParams(n, p, lam)
    U = solve_ground_state(params)
    return params, U, best_constant(U, params)


@functools.lru_cache(maxsize=None)
def _spectrum(n, p, lam, l, k=3):
    from hyperstab.spectral import sector_spectrum

    params, U, _ = _ground(n, p, lam)
    return sector_spectrum(U, params, l, k)


@pytest.fixture(scope="session")
def ground():
    """ground(n, p, lam) -> (params, profile, S), cached across the session."""
    return _ground


@pytest.fixture(scope="session")
def spectrum():
    """spectrum(n, p, lam, l, k=3) -> SpectralResult, cached across the session."""
    return _spectrum


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for k in sorted(results):
            terminalreporter.write_line(results[k])
