import math

import numpy as np
import pytest

from twisted_moments_lab.characters import build_index
from twisted_moments_lab.constants import SumVariant, Verdict
from twisted_moments_lab.errors import (
    DomainError,
    FactorRangeError,
    LengthConditionError,
    PreconditionError,
    ScheduleError,
)
from twisted_moments_lab.mollifier import MollifierSchedule
from twisted_moments_lab.primes import sieve
from twisted_moments_lab.steinhaus import (
    EulerMoment,
    EvenMomentCase,
    PhaseStream,
    D_ml,
    R_ml,
    R_total,
    conditional_tower_check,
    euler_product_battery,
    even_moment_battery,
    parseval_battery,
    err_ml,
    err_tail_bound,
    euler_product_F,
    even_moment_bound,
    even_moment_check,
    exact_prime_moment,
    expected_euler_product,
    f_value,
    log_euler_gap,
    monte_carlo_euler_product,
    offdiagonal_correlation,
    orthogonality_transfer_check,
    parseval_check,
    phase_matrix,
    rough_interval_lambda_sum,
    sample,
    smooth_rough_regroup,
    twisted_partial_sum,
)


class TestPhases:
    def test_deterministic(self):
        primes = np.array([2, 3, 5, 7])
        assert np.array_equal(phase_matrix(primes, 7, 10), phase_matrix(primes, 7, 10))

    def test_keyed_per_prime(self):
        full = phase_matrix(np.array([2, 3, 5]), 7, 5)
        alone = phase_matrix(np.array([3]), 7, 5)
        assert np.array_equal(full[:, 1], alone[:, 0])

    def test_chunking_and_start(self):
        primes = np.array([2, 3])
        whole = phase_matrix(primes, 1, 12)
        chunked = np.concatenate(list(PhaseStream(primes, 1).blocks(12, chunk=5)))
        assert np.array_equal(whole, chunked)
        assert np.array_equal(phase_matrix(primes, 1, 4, start=8), whole[8:])

    def test_unit_modulus(self):
        assert np.allclose(np.abs(phase_matrix(np.array([2, 3, 5]), 0, 100)), 1.0)


class TestSample:
    def test_f_value_multiplicative(self):
        f = sample(sieve(100), seed=5)
        assert f_value(f, 12) == pytest.approx(f_value(f, 4) * f_value(f, 3))
        assert f_value(f, 8) == pytest.approx(f_value(f, 2) ** 3)
        assert f_value(f, 1) == 1

    def test_factor_range(self):
        f = sample(sieve(10), seed=5)
        with pytest.raises(FactorRangeError):
            f_value(f, 22)

    def test_realization_matches_matrix(self):
        primes = sieve(30)
        f = sample(primes, seed=9, realization=3)
        assert np.array_equal(f.phases, phase_matrix(primes.primes, 9, 4)[3])


class TestPartialSums:
    def test_regroup_is_exact(self, table):
        f = sample(sieve(200), seed=11)
        full, regrouped = smooth_rough_regroup(f, table, 200, 10)
        assert abs(full - regrouped) < 1e-9

    def test_full_needs_cutoff(self, table):
        f = sample(sieve(10), seed=1)
        with pytest.raises(FactorRangeError):
            twisted_partial_sum(f, table, 100)

    def test_smooth_variant_within_cutoff(self, table):
        f = sample(sieve(10), seed=1)
        smooth = twisted_partial_sum(f, table, 100, SumVariant.SMOOTH)
        wide = sample(sieve(100), seed=1)
        assert smooth == pytest.approx(twisted_partial_sum(wide, table, 100, SumVariant.SMOOTH, split=10))

    def test_rough_split(self, table):
        f = sample(sieve(50), seed=2)
        rough = twisted_partial_sum(f, table, 50, SumVariant.ROUGH, split=7)
        expected = 1 + sum(
            f_value(f, n) * table.lam[n] for n in range(11, 51) if all(n % p for p in (2, 3, 5, 7))
        )
        assert rough == pytest.approx(expected)


def tiny_schedule(J: int = 1) -> MollifierSchedule:
    return MollifierSchedule.custom(10, 2.0, [5.0], [J])


class TestMollifierPieces:
    def test_truncation_zero(self):
        assert R_ml(0.7 + 0.2j, 2.0, 0) == 1.0

    def test_R_is_square_of_truncated_exponential(self):
        D = 0.3 - 0.4j
        assert R_ml(D, 3.0, 2) == pytest.approx((1 + 2 * 0.3 + (2 * 0.3) ** 2 / 2) ** 2)

    @pytest.mark.parametrize("J", [0, 1, 3, 8])
    def test_err_below_tail_bound(self, J: int):
        D = np.linspace(-3, 3, 61) + 0.5j
        assert np.all(np.abs(err_ml(D, 2.5, J)) <= err_tail_bound(D, 2.5, J) * (1 + 1e-9) + 1e-12)

    def test_D_matches_direct_sum(self, table, primes):
        schedule = tiny_schedule()
        f = sample(sieve(10), seed=4)
        direct = sum(
            table.lam[p] * f_value(f, p) / p**0.5 + (table.lam[p] ** 2 - 2) * f_value(f, p) ** 2 / (2 * p)
            for p in (2, 3, 5)
        )
        assert D_ml(f, table, schedule, 1, 0, primes) == pytest.approx(direct)

    def test_D_range_checks(self, table, primes):
        schedule = tiny_schedule()
        f = sample(sieve(10), seed=4)
        with pytest.raises(ScheduleError):
            D_ml(f, table, schedule, 2, 0, primes)
        with pytest.raises(ScheduleError):
            D_ml(f, table, schedule, 1, 3, primes)

    def test_R_total_nonnegative(self, table, primes):
        f = sample(sieve(10), seed=4)
        assert R_total(f, table, tiny_schedule(2), 2.0, primes) >= 0


class TestEulerProduct:
    def test_log_gap_within_envelope(self, table, primes):
        f = sample(primes.upto(1000), seed=3)
        gap, envelope = log_euler_gap(f, table, 0.7, 1000, primes)
        assert abs(gap) <= envelope

    def test_domain(self, table, primes):
        f = sample(primes.upto(100), seed=3)
        with pytest.raises(DomainError):
            euler_product_F(f, table, 0.3, 100, primes)

    def test_trivial_exponents(self, table, primes):
        assert expected_euler_product(table, EulerMoment(0, 0, 0.0, 0.0), 200, 1e4, primes) == (1.0, 1.0)

    def test_precondition(self, table, primes):
        with pytest.raises(PreconditionError):
            expected_euler_product(table, EulerMoment(2, 0, 0.0, 0.0), 200, 1e4, primes)

    def test_closed_form_against_quadrature(self, table, primes):
        closed, quadrature = expected_euler_product(table, EulerMoment(1, 0, 0.1, 0.0), 200, 1e4, primes)
        assert abs(math.log(closed) - math.log(quadrature)) <= 50 / math.sqrt(200)

    def test_monte_carlo_against_quadrature(self, table, primes):
        case = EulerMoment(1, 1, 0.1, 0.1, 0.0, 0.5)
        _, quadrature = expected_euler_product(table, case, 200, 2000, primes)
        mean, stderr = monte_carlo_euler_product(table, case, 200, 2000, primes, 20_000, seed=7)
        assert abs(mean - quadrature) <= 4 * stderr

    def test_battery_cases(self, table, primes):
        report = euler_product_battery(table, primes, 300, 7)
        cases = report.extra["cases"]
        assert report.name == "euler_product"
        assert len(cases) == 10
        assert all(row["log_gap"] <= 50 / math.sqrt(row["z"]) for row in cases)
        assert cases[0]["closed_form"] == cases[0]["quadrature"] == 1.0
        assert report.estimate <= 50.0

    @pytest.mark.slow
    def test_battery_full_samples(self, table, primes):
        report = euler_product_battery(table, primes, 100_000, 7)
        assert report.estimate <= 50.0
        assert report.stderr < 5.0


class TestEvenMoment:
    def test_single_prime_exact(self):
        assert exact_prime_moment({3: (2.0, 0.0)}, 2) == pytest.approx(16.0)

    def test_two_primes_gaussian_growth(self):
        terms = {2: (1.0, 0.0), 3: (1.0, 0.0)}
        # E|X + Y|^(2j) for independent uniform phases is the central binomial coefficient
        assert [exact_prime_moment(terms, j) for j in range(4)] == [1, 2, 6, 20]

    def test_monte_carlo_against_expansion(self, table):
        weights = {2: (1.0 + 0.5j, 0.3), 3: (-0.7, 0.2j)}
        case = EvenMomentCase(c=np.array([1.0]), weights=weights, j=2)
        report = even_moment_check(table, case, 20_000, seed=3)
        terms = {p: (a / math.sqrt(p), b / p) for p, (a, b) in weights.items()}
        assert report.estimate == pytest.approx(exact_prime_moment(terms, 2), abs=4 * report.stderr)
        assert report.ratio <= 2.0
        assert report.oracle == pytest.approx(even_moment_bound(case))

    def test_battery(self, table):
        report = even_moment_battery(table, 4000, seed=5)
        assert len(report.extra["cases"]) == 8
        assert report.verdict == Verdict.PASS
        assert report.estimate <= 2.0


class TestParseval:
    def test_delta(self):
        lhs, rhs, tail = parseval_check(np.array([1.0]), 0.3, t_max=1000)
        assert lhs == pytest.approx(1 / 0.6)
        assert abs(lhs - rhs) <= 0.01 * lhs + tail

    def test_lambda_coefficients(self, table):
        lhs, rhs, tail = parseval_check(table.lam[1:51], 0.3, t_max=1000)
        assert abs(lhs - rhs) <= 0.01 * lhs + tail

    def test_sigma_domain(self):
        with pytest.raises(DomainError):
            parseval_check(np.array([1.0]), 0.0)

    def test_battery(self, table):
        report = parseval_battery(table)
        assert [row["set"] for row in report.extra["sets"]] == ["delta", "telescoping", "lambda_50"]
        assert report.verdict == Verdict.PASS


class TestTransfer:
    def test_sides_agree(self, table, primes):
        char_side, rmf_side = orthogonality_transfer_check(
            build_index(10007), 10, tiny_schedule(), 2.0, table, primes
        )
        assert char_side == pytest.approx(rmf_side, rel=1e-8)

    def test_without_mollifier_is_diagonal(self, table, primes):
        char_side, rmf_side = orthogonality_transfer_check(
            build_index(10007), 10, tiny_schedule(0), 2.0, table, primes
        )
        assert rmf_side == pytest.approx(float(np.sum(table.lam[1:11] ** 2)))
        assert char_side == pytest.approx(rmf_side, rel=1e-9)

    def test_length_condition(self, table, primes):
        with pytest.raises(LengthConditionError):
            orthogonality_transfer_check(build_index(101), 10, tiny_schedule(), 2.0, table, primes)

    def test_leakage_at_small_modulus(self, table, primes):
        char_side, rmf_side = orthogonality_transfer_check(
            build_index(101), 10, tiny_schedule(), 2.0, table, primes, enforce_length=False
        )
        assert abs(char_side - rmf_side) / abs(rmf_side) > 1e-6


class TestOrthogonality:
    def test_offdiagonal(self):
        report = offdiagonal_correlation(sieve(30).primes, seed=2, samples=10_000)
        assert report.verdict == Verdict.PASS

    def test_conditional_tower(self, table):
        report = conditional_tower_check(table, seed=5, outer=300, inner=300)
        assert report.verdict == Verdict.PASS

    def test_rough_interval_shape(self, table, primes):
        value, shape, ratio = rough_interval_lambda_sum(10_000, 2, 10, table, primes)
        assert value > 0
        assert 0.05 < ratio < 20
