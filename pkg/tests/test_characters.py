import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twisted_moments_lab.characters import (
    CharacterEvaluator,
    all_twisted_sums,
    build_index,
    character_values,
    chirp_z_dft,
    find_primitive_root,
    kernel_benchmark,
    kernel_oracle_check,
    max_naive_deviation,
    naive_twisted_sum,
    orthogonality_residual,
    parseval_residual,
)
from twisted_moments_lab.constants import Verdict
from twisted_moments_lab.errors import CapacityError, DomainError, LengthConditionError, NotPrimeError
from twisted_moments_lab.timer import stopwatch


@pytest.mark.parametrize("q, g", [(3, 2), (7, 3), (23, 5), (101, 2), (10007, 5)])
class TestIndex:
    def test_primitive_root(self, q: int, g: int):
        assert find_primitive_root(q) == g

    def test_index_inverts_powers(self, q: int, g: int):
        index = build_index(q)
        n = np.arange(1, q)
        powers = np.array([pow(g, int(e), q) for e in index.ind[1:]])
        assert np.array_equal(powers, n)
        assert index.ind[0] == -1


def test_index_errors():
    with pytest.raises(NotPrimeError):
        build_index(15)
    with pytest.raises(CapacityError):
        build_index(10007, max_modulus=1000)
    with pytest.raises(DomainError):
        build_index(7, g=2)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 300), st.sampled_from([-1, 1]))
def test_chirp_z_matches_fft(length, sign):
    rng = np.random.default_rng(length)
    values = rng.normal(size=length) + 1j * rng.normal(size=length)
    reference = np.fft.fft(values) if sign == -1 else np.fft.ifft(values) * length
    assert np.max(np.abs(chirp_z_dft(values, sign) - reference)) < 1e-9 * max(1.0, length)


class TestKernel:
    def test_full_naive_cross_check(self, table):
        index = build_index(101)
        coeffs = table.lam[1:11]
        assert kernel_oracle_check(index, coeffs).verdict == Verdict.PASS

    def test_q2003(self, table):
        index = build_index(2003)
        assert max_naive_deviation(index, table.lam[1:45]) < 1e-9

    def test_principal_sum(self, table):
        index = build_index(101)
        vector = all_twisted_sums(index, table.lam[1:11])
        assert vector.principal == pytest.approx(table.lam[1:11].sum())

    def test_length_condition(self):
        index = build_index(11)
        with pytest.raises(LengthConditionError):
            all_twisted_sums(index, np.ones(11))

    def test_orthogonality_identity(self, table):
        index = build_index(10007)
        assert orthogonality_residual(index, table.lam[1:101]) < 1e-9
        assert parseval_residual(index, table.lam[1:101]) < 1e-9


class TestEvaluator:
    def test_completely_multiplicative(self):
        chi = CharacterEvaluator(build_index(101), 7)
        for m, n in [(2, 3), (4, 25), (10, 10)]:
            assert chi(m * n) == pytest.approx(chi(m) * chi(n))

    def test_zero_on_multiples_of_q(self):
        index = build_index(23)
        assert character_values(index, 3, np.array([23, 46]))[0] == 0

    def test_matches_naive_sum(self, table):
        index = build_index(101)
        chi = CharacterEvaluator(index, 5)
        direct = sum(chi(n) * table.lam[n] for n in range(1, 11))
        assert direct == pytest.approx(naive_twisted_sum(index, 5, table.lam[1:11]))

    def test_index_range(self):
        with pytest.raises(DomainError):
            CharacterEvaluator(build_index(7), 6)


class TestKernelSpeed:
    def test_benchmark_report(self, table):
        report = kernel_benchmark(table.lam[1:101], 10007, 1009, naive_characters=50)
        assert report.name == "kernel_speedup"
        assert report.estimate > 0
        assert report.extra["kernel_ms"] > 0
        assert report.ratio == pytest.approx(report.estimate / 20.0)

    @pytest.mark.slow
    def test_million_modulus(self, large_table):
        coeffs = large_table.lam[1:1001]
        index = build_index(1_000_003)
        with stopwatch() as watch:
            vector = all_twisted_sums(index, coeffs)
        assert watch.elapsed_ms < 10_000
        assert vector.values.size == 1_000_002
        assert kernel_benchmark(coeffs, 1_000_003, 10_007).verdict == Verdict.PASS
