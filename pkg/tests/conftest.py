import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rmtqfi.linalg import eigh
from rmtqfi.spin import SpinChainSpec, build_h0_prime, build_hamiltonian, h0_eigensystem

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# chain used for the N = 12 checks: one system spin coupled to bath site 5
CHAIN12_SPEC = SpinChainSpec(N=12, B=0.01, Bx_bath=0.3, Jx=1.0, Jz_sb=0.2, Jx_sb=0.4, couplings=((1, 5),))
# index 5500 of a 2**13-dimensional H0 spectrum, rescaled to 2**12 states
CHAIN12_INDEX = 2750


def random_symmetric(rng, n, scale=1.0):
    a = rng.normal(scale=scale, size=(n, n))
    return (a + a.T) / 2


@pytest.fixture(scope="session")
def chain12():
    """Diagonalized N = 12 chain with its H0 eigenbasis (about a minute on one core)."""
    spec = CHAIN12_SPEC
    h = build_hamiltonian(spec)
    return {"spec": spec, "h": h, "eig": eigh(h), "h0_eig": h0_eigensystem(spec), "h0p": build_h0_prime(spec)}


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
