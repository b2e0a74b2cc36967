import math

import pytest

from twisted_moments_lab.characters import build_index
from twisted_moments_lab.constants import XRule
from twisted_moments_lab.errors import DomainError, LengthConditionError, PreconditionError
from twisted_moments_lab.moments import (
    MOMENT_COLUMNS,
    choose_x,
    growth_fit,
    growth_scan,
    moment,
    moment_rows,
    naive_moment,
    normalization,
    sample_primes,
)


def test_normalization():
    q, x, k = 101, 10, 2.0
    assert normalization(q, x, k) == pytest.approx(100 * 100 * math.log(101))


@pytest.mark.parametrize("q, x", [(101, 10), (10007, 100)])
class TestMoment:
    def test_diagonal_identity(self, table, q: int, x: int):
        report = moment(build_index(q), table, x, 1.0)
        assert report.second_moment_check < 1e-9

    def test_positive(self, table, q: int, x: int):
        report = moment(build_index(q), table, x, 2.0)
        assert report.s_k > 0 and report.normalized > 0
        assert not report.beyond_sqrt


@pytest.mark.parametrize(
    "q, x, k",
    [(101, 10, 2.0), (101, 10, 2.5), (1999, 44, 2.5), (2003, 44, 3.0)],
)
def test_matches_naive(table, q: int, x: int, k: float):
    index = build_index(q)
    fast = moment(index, table, x, k).s_k
    assert fast == pytest.approx(naive_moment(index, table, x, k), rel=1e-9)


def test_moment_preconditions(table):
    index = build_index(101)
    with pytest.raises(LengthConditionError):
        moment(index, table, 101, 2.0)
    with pytest.raises(DomainError):
        moment(index, table, 10, 0.0)
    with pytest.raises(PreconditionError):
        moment(build_index(10007), table, 10_001, 2.0)


def test_beyond_sqrt_is_flagged(table):
    assert moment(build_index(101), table, 50, 2.0).beyond_sqrt


def test_choose_x():
    assert choose_x(1009, XRule.SQRT) == 31
    assert choose_x(1009, XRule.FIXED, 40) == 40
    with pytest.raises(PreconditionError):
        choose_x(1009, XRule.FIXED)
    with pytest.raises(LengthConditionError):
        choose_x(101, XRule.FIXED, 200)


def test_sample_primes():
    assert sample_primes(101, 131) == [101, 103, 107, 109, 113, 127, 131]
    chosen = sample_primes(1000, 10**6, 10)
    assert len(chosen) == 10
    assert chosen == sorted(chosen) and chosen[0] == 1009


class TestGrowthScan:
    async def test_ordered_and_deterministic(self, table):
        q_list = [211, 101, 307]
        first = await growth_scan(q_list, 2.0, XRule.SQRT, table, threads=3)
        second = await growth_scan(q_list, 2.0, XRule.SQRT, table, threads=1)
        assert [r.q for r in first] == q_list
        assert [r.s_k for r in first] == [r.s_k for r in second]

    async def test_repeated_modulus(self, table):
        first, again = await growth_scan([1009, 1009], 2.5, XRule.SQRT, table, threads=2)
        assert first.model_dump(exclude={"runtime_ms"}) == again.model_dump(exclude={"runtime_ms"})

    async def test_fit_and_rows(self, table):
        reports = await growth_scan(sample_primes(1000, 5000, 6), 2.0, XRule.SQRT, table)
        fit = growth_fit(reports)
        assert fit is not None
        assert fit.reference_slope == 1.0
        assert fit.ci_low <= fit.slope <= fit.ci_high

        rows = moment_rows(reports, record_runtime=False)
        assert list(rows[0]) == MOMENT_COLUMNS
        assert all(row["runtime_ms"] is None for row in rows)

    async def test_fit_needs_three_moduli(self, table):
        reports = await growth_scan([101, 103], 2.0, XRule.SQRT, table)
        assert growth_fit(reports) is None
