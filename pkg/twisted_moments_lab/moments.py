import asyncio
import logging
import math
from typing import Iterable

import numpy as np
import sympy
from scipy import stats

from .characters import CharacterIndex, all_twisted_sums, build_index, naive_twisted_sum
from .constants import XRule
from .errors import DomainError, LengthConditionError, PreconditionError
from .hecke import HeckeTable
from .helpers import pairwise_sum
from .primes import sieve
from .schemas import GrowthFit, MomentReport
from .timer import async_timed, stopwatch

logger = logging.getLogger(__name__)

MOMENT_COLUMNS = ["q", "x", "k", "S_k", "normalized", "second_moment_check", "runtime_ms"]


def power_of_square(abs2: np.ndarray, k: float) -> np.ndarray:
    """|T|^(2k) as exp(k log |T|^2), zero where T = 0"""
    out = np.zeros_like(abs2)
    positive = abs2 > 0
    out[positive] = np.exp(k * np.log(abs2[positive]))
    return out


def normalization(q: int, x: int, k: float) -> float:
    """phi(q) x^k (log q)^((k-1)^2)"""
    return (q - 1) * math.exp(k * math.log(x) + (k - 1.0) ** 2 * math.log(math.log(q)))


def moment(index: CharacterIndex, table: HeckeTable, x: int, k: float) -> MomentReport:
    """
    S_k(q, x) over the non-principal characters, with the diagonal identity
    (S_1 + |T(chi_0)|^2) / phi(q) = sum lambda(n)^2 as a built-in check
    """
    q = index.q
    if x >= q:
        raise LengthConditionError(f"moment needs x < q, got {x=} {q=}")
    if x > table.limit:
        raise PreconditionError(f"{x=} exceeds the Hecke table limit {table.limit}")
    if k <= 0:
        raise DomainError(f"moment order must be positive, got {k=}")
    beyond_sqrt = x * x > q
    if beyond_sqrt:
        logger.warning(f"{x=} exceeds sqrt({q=}), outside the lower-bound range")

    coeffs = table.lam[1 : x + 1]
    vector = all_twisted_sums(index, coeffs)
    abs2 = vector.values.real**2 + vector.values.imag**2

    s_k = pairwise_sum(power_of_square(abs2[1:], k))
    diagonal = pairwise_sum(coeffs**2)
    second_moment_check = abs(pairwise_sum(abs2) / index.phi - diagonal) / diagonal

    return MomentReport(
        q=q,
        x=x,
        k=k,
        s_k=s_k,
        normalized=s_k / normalization(q, x, k),
        principal=float(abs2[0]),
        second_moment_check=second_moment_check,
        beyond_sqrt=beyond_sqrt,
    )


def naive_moment(index: CharacterIndex, table: HeckeTable, x: int, k: float) -> float:
    """Double loop over every non-principal character and every n <= x"""
    coeffs = table.lam[1 : x + 1]
    values = np.array([abs(naive_twisted_sum(index, a, coeffs)) ** 2 for a in range(1, index.phi)])
    return pairwise_sum(power_of_square(values, k))


def choose_x(q: int, rule: XRule, fixed: float | None = None) -> int:
    if rule == XRule.SQRT:
        return math.isqrt(q)
    if fixed is None:
        raise PreconditionError("the fixed x rule needs a value for x")
    x = int(fixed)
    if x >= q:
        raise LengthConditionError(f"fixed {x=} must stay below {q=}")
    return x


def sample_primes(low: int, high: int, count: int | None = None) -> list[int]:
    """
    Every prime in [low, high], or `count` of them: the first prime at or above
    each point of a geometric grid, without repeats
    """
    if count is None:
        primes = sieve(high).primes
        return [int(p) for p in primes[primes >= low]]

    chosen: list[int] = []
    for target in np.geomspace(low, high, count):
        candidate = int(sympy.nextprime(max(1, math.ceil(target) - 1)))
        if candidate <= high and candidate not in chosen:
            chosen.append(candidate)
    return chosen


def _evaluate(
    table: HeckeTable, q: int, k: float, rule: XRule, fixed: float | None, max_modulus: int
) -> MomentReport:
    with stopwatch() as watch:
        index = build_index(q, max_modulus=max_modulus)
        report = moment(index, table, choose_x(q, rule, fixed), k)
    return report.model_copy(update={"runtime_ms": watch.elapsed_ms})


@async_timed()
async def growth_scan(
    q_list: Iterable[int],
    k: float,
    rule: XRule,
    table: HeckeTable,
    fixed: float | None = None,
    threads: int = 1,
    max_modulus: int = 20_000_000,
) -> list[MomentReport]:
    """One report per q, computed in worker threads and returned in input order"""
    semaphore = asyncio.Semaphore(threads)

    async def run_one(q: int) -> MomentReport:
        async with semaphore:
            return await asyncio.to_thread(_evaluate, table, q, k, rule, fixed, max_modulus)

    reports = await asyncio.gather(*(run_one(q) for q in q_list))
    logger.info(f"growth scan finished: {len(reports)} moduli at {k=}")
    return list(reports)


def growth_fit(reports: list[MomentReport], confidence: float = 0.95) -> GrowthFit | None:
    """
    Slope of log(S_k / (phi(q) x^k)) against loglog q with a Student-t interval;
    the reference slope is (k-1)^2
    """
    if len({r.q for r in reports}) < 3:
        return None
    k = reports[0].k
    loglog_q = np.array([math.log(math.log(r.q)) for r in reports])
    response = np.array([math.log(r.s_k) - math.log((r.q - 1) * float(r.x) ** k) for r in reports])
    fit = stats.linregress(loglog_q, response)
    spread = stats.t.ppf(0.5 + confidence / 2, len(reports) - 2) * fit.stderr
    return GrowthFit(
        slope=float(fit.slope),
        intercept=float(fit.intercept),
        stderr=float(fit.stderr),
        ci_low=float(fit.slope - spread),
        ci_high=float(fit.slope + spread),
        reference_slope=(k - 1.0) ** 2,
        points=len(reports),
    )


def moment_rows(reports: list[MomentReport], record_runtime: bool = False) -> list[dict]:
    return [
        {
            "q": r.q,
            "x": r.x,
            "k": r.k,
            "S_k": r.s_k,
            "normalized": r.normalized,
            "second_moment_check": r.second_moment_check,
            "runtime_ms": r.runtime_ms if record_runtime else None,
        }
        for r in reports
    ]
