import pytest

from twisted_moments_lab.hecke import build_tau_table, normalize
from twisted_moments_lab.primes import sieve


@pytest.fixture(scope="session")
def table():
    return normalize(build_tau_table(10_000))


@pytest.fixture(scope="session")
def primes():
    return sieve(10_000)


@pytest.fixture(scope="session")
def large_table():
    return normalize(build_tau_table(100_000))
