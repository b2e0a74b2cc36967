import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twisted_moments_lab.constants import TAU_CACHE_HEADER_SIZE, Verdict
from twisted_moments_lab.errors import CacheFormatError, CapacityError, DomainError, PreconditionError
from twisted_moments_lab.hecke import (
    build_tau_table,
    crt_moduli,
    crt_reconstruct,
    deligne_check,
    divisor_count,
    jacobi_cube_series,
    lambda_square_identity_check,
    load_or_build_table,
    load_tau_cache,
    multiplicativity_check,
    normalize,
    omega,
    pentagonal_series,
    prime_power_lambda,
    recursion_check,
    satake,
    satake_check,
    satake_closure_check,
    save_tau_cache,
    tau_residues,
)

TAU_HEAD = [1, -24, 252, -1472, 4830, -6048, -16744, 84480, -113643, -115920]


def test_tau_head():
    tau = build_tau_table(10)
    assert tau[0] == 0
    assert list(tau[1:]) == TAU_HEAD


def test_tau_large_values_exact():
    tau = build_tau_table(1000)
    # Ramanujan's congruence tau(n) = sigma_11(n) mod 691
    for n in (97, 500, 1000):
        sigma = sum(d**11 for d in range(1, n + 1) if n % d == 0)
        assert (int(tau[n]) - sigma) % 691 == 0
    assert int(tau[2]) * int(tau[3]) == int(tau[6])


def test_pentagonal_cubed_is_jacobi():
    length = 200
    pentagonal = pentagonal_series(length)
    cube = np.convolve(np.convolve(pentagonal, pentagonal)[:length], pentagonal)[:length]
    assert np.array_equal(cube, jacobi_cube_series(length))


def test_crt_roundtrip_signed():
    moduli = crt_moduli(1000)
    values = [0, 1, -1, 10**20, -(10**20) + 7]
    residues = np.array([[v % m for v in values] for m in moduli], dtype=np.int64)
    assert list(crt_reconstruct(moduli, residues)) == values


def test_capacity_limit():
    with pytest.raises(CapacityError):
        tau_residues(1000, max_limit=100)


def test_prime_power_beyond_table(table):
    p = 97
    assert p**2 <= table.limit < p**3
    lam_p = table.lam[p]
    expected = lam_p * table.lam[p**2] - lam_p
    assert prime_power_lambda(table, p, 3) == pytest.approx(expected, abs=1e-12)
    assert prime_power_lambda(table, p, 0) == 1.0


def test_satake_rejects_deligne_violation():
    with pytest.raises(DomainError):
        satake(2.5)


@pytest.mark.parametrize("lambda_p", [-2.0, -1.3, 0.0, 0.7, 2.0])
class TestSatake:
    def test_roots(self, lambda_p: float):
        pair = satake(lambda_p)
        assert abs(pair.alpha + pair.beta - lambda_p) < 1e-12
        assert abs(pair.alpha * pair.beta - 1) < 1e-12
        assert abs(abs(pair.alpha) - 1) < 1e-12


class TestIdentities:
    def test_lambda_square(self, table):
        report = lambda_square_identity_check(table, 100)
        assert report.verdict == Verdict.PASS
        assert report.checked == 25

    def test_multiplicativity(self, table):
        assert multiplicativity_check(table, 10_000, seed=3).verdict == Verdict.PASS

    def test_deligne(self, table):
        assert deligne_check(table).verdict == Verdict.PASS

    def test_recursion(self, table):
        assert recursion_check(table).verdict == Verdict.PASS

    def test_satake(self, table):
        assert satake_check(table, 1000).verdict == Verdict.PASS
        assert satake_closure_check(table).verdict == Verdict.PASS


@pytest.mark.slow
def test_identities_at_acceptance_scale(large_table):
    assert lambda_square_identity_check(large_table, 316).verdict == Verdict.PASS
    assert deligne_check(large_table, 100_000).verdict == Verdict.PASS


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 99), st.integers(2, 99))
def test_multiplicative_on_coprime_pairs(table, m, n):
    if math.gcd(m, n) == 1:
        assert table.lam[m * n] == pytest.approx(table.lam[m] * table.lam[n], abs=1e-9)


@given(st.integers(1, 5000))
def test_divisor_helpers(n):
    assert divisor_count(n) == sum(1 for d in range(1, n + 1) if n % d == 0)
    assert omega(n) <= math.log2(n) + 1


class TestCache:
    async def test_roundtrip(self, tmp_path):
        path = tmp_path / "tau.bin"
        moduli, residues = tau_residues(500, 10_000)
        await save_tau_cache(path, moduli, residues)
        assert path.stat().st_size == TAU_CACHE_HEADER_SIZE + 8 * residues.size

        loaded_moduli, loaded = await load_tau_cache(path)
        assert loaded_moduli == moduli
        assert np.array_equal(loaded, residues)

    async def test_load_or_build_reuses_cache(self, tmp_path):
        path = tmp_path / "tau.bin"
        built = await load_or_build_table(300, path)
        reused = await load_or_build_table(200, path)
        assert reused.limit == 300
        assert np.array_equal(built.lam, reused.lam)

    async def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"NOTATAUCACHE" + bytes(32))
        with pytest.raises(CacheFormatError):
            await load_tau_cache(path)

    async def test_truncated_body(self, tmp_path):
        path = tmp_path / "short.bin"
        moduli, residues = tau_residues(100, 10_000)
        await save_tau_cache(path, moduli, residues)
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(CacheFormatError):
            await load_tau_cache(path)


FIRST_HUNDRED_PRIMES_END = 541


@pytest.fixture(scope="module")
def square_range_table():
    return normalize(build_tau_table(FIRST_HUNDRED_PRIMES_END**2))


class TestFirstHundredPrimes:
    def test_report_covers_hundred_primes(self, square_range_table):
        report = lambda_square_identity_check(square_range_table, FIRST_HUNDRED_PRIMES_END)
        assert report.checked == 100
        assert report.max_residual < 1e-9
        assert report.verdict == Verdict.PASS

    @pytest.mark.parametrize("p", [2, 3, 5, 97, 229, 409, 541])
    def test_identity_at_prime(self, square_range_table, p: int):
        lam = square_range_table.lam
        assert abs(lam[p] ** 2 - lam[p * p] - 1.0) < 1e-9

    def test_bound_needs_squares_in_table(self, table):
        with pytest.raises(PreconditionError):
            lambda_square_identity_check(table, FIRST_HUNDRED_PRIMES_END)
