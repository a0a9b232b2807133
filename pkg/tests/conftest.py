import numpy as np
import pytest

from qselftest.bell import ProjectiveMeasurement


def random_unitary(dim, rng):
    z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_density(dim, rng, rank=None):
    rank = rank or dim
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_measurement(dim, rng, outcomes=None):
    """Random rank-1 basis measurement (outcomes == dim) or a coarse-grained one."""
    outcomes = outcomes or dim
    u = random_unitary(dim, rng)
    groups = np.array_split(np.arange(dim), outcomes)
    projs = [sum(np.outer(u[:, k], u[:, k].conj()) for k in g) for g in groups]
    return ProjectiveMeasurement(projs)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# criterion number -> (passed, detail); filled by test_acceptance
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
