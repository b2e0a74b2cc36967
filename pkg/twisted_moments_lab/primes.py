"""
Prime sieving and the prime sums, Euler factors and multiplicative
densities built on top of a HeckeTable
"""
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Callable, Iterable

import numpy as np
import sympy
from pydantic import BaseModel, ConfigDict
from scipy import stats

from .constants import SERIES_RELATIVE_TAIL, SYM2_TRUNCATION, PrimeSumKind
from .errors import CapacityError, DivergenceError, DomainError, PreconditionError
from .helpers import async_read_file, async_write_atomic, pairwise_sum
from .schemas import PrimeSumRow

if TYPE_CHECKING:
    from .hecke import HeckeTable

logger = logging.getLogger(__name__)

ZETA_2 = math.pi**2 / 6


@dataclass(slots=True, frozen=True, eq=False)
class PrimeList:
    """
    Attributes:
        bound: sieve bound
        primes: ascending int64 array of every prime <= bound
    """

    bound: int
    primes: np.ndarray

    def __len__(self) -> int:
        return int(self.primes.size)

    def upto(self, x: float) -> np.ndarray:
        return self.primes[: np.searchsorted(self.primes, x, side="right")]

    def between(self, low: float, high: float) -> np.ndarray:
        """Primes p with low < p <= high"""
        start = np.searchsorted(self.primes, low, side="right")
        stop = np.searchsorted(self.primes, high, side="right")
        return self.primes[start:stop]

    def verify(self, segment: int = 65_536) -> bool:
        """Recount with a different segment size and compare"""
        recount = sieve(self.bound, segment=segment, max_bound=max(self.bound, 2))
        return bool(np.array_equal(recount.primes, self.primes))


def simple_sieve(limit: int) -> np.ndarray:
    if limit < 2:
        return np.array([], dtype=np.int64)
    marks = np.ones(limit + 1, dtype=bool)
    marks[:2] = False
    for p in range(2, math.isqrt(limit) + 1):
        if marks[p]:
            marks[p * p : limit + 1 : p] = False
    return np.flatnonzero(marks).astype(np.int64)


def sieve(bound: int, segment: int = 2**20, max_bound: int = 10**9) -> PrimeList:
    """
    Odd-only segmented sieve of Eratosthenes

    :param bound: largest number examined
    :param segment: odd numbers per segment, bounds the working memory
    :param max_bound: capacity limit
    """
    bound = int(bound)
    if bound < 2:
        raise DomainError(f"sieve bound must be at least 2, got {bound=}")
    if bound > max_bound:
        raise CapacityError(f"sieve {bound=} exceeds {max_bound=}")

    base = simple_sieve(math.isqrt(bound) + 1)
    chunks = [np.array([2], dtype=np.int64)]
    span = 2 * segment
    low = 3

    while low <= bound:
        high = min(low + span, bound + 1)
        mask = np.ones((high - low + 1) // 2, dtype=bool)
        for p in base[1:]:
            p = int(p)
            square = p * p
            if square >= high:
                break
            start = max(square, ((low + p - 1) // p) * p)
            if start % 2 == 0:
                start += p
            if start >= high:
                continue
            mask[(start - low) // 2 :: p] = False
        chunks.append(low + 2 * np.flatnonzero(mask).astype(np.int64))
        low = high if high % 2 == 1 else high + 1

    primes = np.concatenate(chunks)
    primes = primes[primes <= bound]
    logger.debug(f"sieved {bound=} -> {primes.size} primes")
    return PrimeList(bound=bound, primes=primes)


def is_prime(n: int) -> bool:
    return bool(sympy.isprime(int(n)))


def factorize(n: int) -> dict[int, int]:
    """Prime factorization, {p: exponent} in ascending p"""
    if n < 1:
        raise DomainError(f"cannot factor {n=}")
    return {int(p): int(e) for p, e in sorted(sympy.factorint(int(n)).items())}


def mertens_sum(primes: PrimeList, x: float) -> float:
    """Sum of 1/p over p <= x"""
    if x < 2:
        raise DomainError(f"mertens_sum needs x >= 2, got {x=}")
    return pairwise_sum(1.0 / primes.upto(x).astype(np.float64))


def lambda_sq_mertens(primes: PrimeList, table: "HeckeTable", x: float) -> float:
    """Sum of lambda(p)^2 / p over p <= x"""
    if x > table.limit:
        raise PreconditionError(f"{x=} exceeds the Hecke table limit {table.limit}")
    p = primes.upto(x)
    return pairwise_sum(table.lam[p] ** 2 / p)


def loglog_residual(value: float, x: float, constant: float) -> float:
    return value - math.log(math.log(x)) - constant


def fit_mertens_constant(
    primes: PrimeList, weights: np.ndarray | None, grid: Iterable[float]
) -> tuple[float, float]:
    """
    Fitting oracle for b1 (weights None) or b2 (weights lambda(p)^2).
    Least squares of sum - loglog x against 1/log x; the intercept is the constant

    :return: (constant, slope of the 1/log x term)
    """
    p = primes.primes.astype(np.float64)
    terms = (np.ones_like(p) if weights is None else weights) / p
    partial = np.cumsum(terms)
    grid = np.asarray(sorted(grid), dtype=np.float64)
    idx = np.searchsorted(primes.primes, grid, side="right") - 1
    if np.any(idx < 0) or grid[-1] > primes.bound:
        raise PreconditionError(f"fit grid {grid[0]:g}..{grid[-1]:g} outside the sieve")

    residual = partial[idx] - np.log(np.log(grid))
    fit = stats.linregress(1.0 / np.log(grid), residual)
    logger.debug(f"mertens fit {fit.intercept=} {fit.slope=}")
    return float(fit.intercept), float(fit.slope)


class FixtureValue(BaseModel):
    model_config = ConfigDict(frozen=True)

    value: float | None
    provenance: str


class ConstantsFixture(BaseModel):
    model_config = ConfigDict(frozen=True)

    b1: FixtureValue
    b2: FixtureValue
    L1_sym2: FixtureValue
    T_truncation: FixtureValue

    @property
    def truncation(self) -> int:
        return int(self.T_truncation.value or SYM2_TRUNCATION)

    def resolve(
        self, name: str, compute: Callable[[], float], how: str
    ) -> tuple[float, "ConstantsFixture"]:
        """
        Stored value, or the oracle's when the fixture holds null. The returned
        fixture carries a measured value together with its provenance
        """
        entry: FixtureValue = getattr(self, name)
        if entry.value is not None:
            return entry.value, self
        value = compute()
        logger.info(f"fixture {name} is null, measured {value=} by {how}")
        return value, self.model_copy(update={name: FixtureValue(value=value, provenance=how)})


async def load_constants(path: str | Path) -> ConstantsFixture:
    return ConstantsFixture.model_validate_json(await async_read_file(path))


async def save_constants(path: str | Path, fixture: ConstantsFixture) -> Path:
    return await async_write_atomic(path, fixture.model_dump_json(indent=2) + "\n")


def cosine_prime_sum(
    primes: PrimeList,
    x: float,
    alpha: float,
    beta: float,
    table: "HeckeTable | None" = None,
    beta_constant: float = 1.0,
) -> float:
    """
    Sum over p <= x of cos(alpha log p) / p^(1+beta), weighted by lambda(p^2)
    when a table is given

    :param beta_constant: C in the admissible range 0 <= beta <= C / log x
    """
    if x < 2:
        raise DomainError(f"cosine_prime_sum needs x >= 2, got {x=}")
    if not 0 <= beta <= beta_constant / math.log(x):
        raise DomainError(f"{beta=} outside [0, {beta_constant} / log x] at {x=}")

    p = primes.upto(x)
    logp = np.log(p.astype(np.float64))
    terms = np.cos(alpha * logp) * np.exp(-(1.0 + beta) * logp)
    if table is not None:
        terms = terms * table.prime_square_values(p)
    return pairwise_sum(terms)


def cosine_bound_shape(x: float, alpha: float, weighted: bool = False) -> float:
    """The piecewise bound shape, without its additive constant"""
    alpha = abs(alpha)
    if weighted:
        return 3.0 * math.log(math.log(alpha + math.e**math.e))
    if alpha <= 1.0 / math.log(x):
        return math.log(math.log(x))
    if alpha <= 10.0:
        return math.log(1.0 / alpha)
    return math.log(math.log(alpha))


def measured_cosine_constant(
    primes: PrimeList,
    xs: Iterable[float],
    alphas: Iterable[float],
    table: "HeckeTable | None" = None,
) -> float:
    """Largest excess of the sum over its bound shape across a sweep"""
    excess = [
        cosine_prime_sum(primes, x, a, 0.0, table) - cosine_bound_shape(x, a, table is not None)
        for x in xs
        for a in alphas
    ]
    return max(excess)


def local_sym2_factor(p: float, s: complex, lambda_p2: float) -> complex:
    """(1 - l p^-s + l p^-2s - p^-3s)^-1 with l = lambda(p^2)"""
    z = p ** (-s)
    return 1.0 / (1.0 - lambda_p2 * z + lambda_p2 * z * z - z * z * z)


def local_sym2_factor_satake(p: float, s: complex, alpha: complex, beta: complex) -> complex:
    z = p ** (-s)
    return 1.0 / ((1.0 - alpha * alpha * z) * (1.0 - z) * (1.0 - beta * beta * z))


def sym2_L_truncated(
    s: complex, bound: float, table: "HeckeTable", primes: PrimeList
) -> tuple[complex, float]:
    """
    Truncated Euler product of L(s, sym^2 f) over p <= bound

    :return: (value, estimated absolute size of the omitted tail)
    """
    sigma = complex(s).real
    if sigma <= 1:
        raise DivergenceError(f"sym^2 Euler product diverges at {s=}")
    if bound * bound > table.limit:
        raise PreconditionError(f"{bound=} needs lambda(p^2) beyond {table.limit=}")

    p = primes.upto(bound).astype(np.float64)
    factors = local_sym2_factor(p, s, table.prime_square_values(p.astype(np.int64)))
    value = complex(np.prod(factors))

    tail_log = 3.0 * bound ** (1.0 - sigma) / ((sigma - 1.0) * math.log(max(bound, 2.0)))
    return value, abs(value) * math.expm1(tail_log)


def lambda_square_series(table: "HeckeTable", primes: PrimeList, T: int) -> np.ndarray:
    """lambda(n^2) for 0 <= n <= T (entry 0 unused), by multiplicativity"""
    if T > table.limit:
        raise PreconditionError(f"{T=} needs lambda(p) beyond {table.limit=}")
    values = np.ones(T + 1, dtype=np.float64)
    values[0] = 0.0
    for p in primes.upto(T):
        p = int(p)
        power, j = p, 1
        while power <= T:
            idx = np.arange(power, T + 1, power)
            idx = idx[(idx // power) % p != 0]
            values[idx] *= table.prime_power(p, 2 * j)
            power *= p
            j += 1
    return values


def sym2_l_at_one(
    table: "HeckeTable", primes: PrimeList, T: int = SYM2_TRUNCATION
) -> tuple[float, float]:
    """
    L(1, sym^2 f) as zeta(2) times the Riesz-smoothed sum of lambda(n^2)/n up to T

    :return: (value, Cauchy difference against the same evaluation at T/2)
    """

    def smoothed(limit: int, series: np.ndarray) -> float:
        n = np.arange(1, limit + 1, dtype=np.float64)
        return ZETA_2 * pairwise_sum(series[1 : limit + 1] / n * (1.0 - n / limit) ** 2)

    series = lambda_square_series(table, primes, T)
    value = smoothed(T, series)
    difference = abs(value - smoothed(T // 2, series))
    if difference > 1e-2:
        logger.warning(f"L(1, sym^2 f) not settled at {T=}: {difference=:.3e}")
    return value, difference


def _local_series(
    p: int, nu: int, table: "HeckeTable", decay: float, weight: Callable[[float, float], float]
) -> float:
    """
    Sum over j >= 0 of weight(lambda(p^(nu+j)), lambda(p^j)) / p^(decay j), truncated
    once the Deligne envelope of the remaining terms is below the relative tail tolerance
    """
    ratio = float(p) ** -decay
    total, j = 0.0, 0
    while True:
        total += weight(table.prime_power(p, nu + j), table.prime_power(p, j)) * ratio**j
        j += 1
        envelope = (nu + j + 2) ** 2 * (j + 2) ** 2 * ratio**j / (1.0 - ratio)
        if envelope <= SERIES_RELATIVE_TAIL * max(abs(total), 1e-300):
            return total
        if j > 5000:
            raise DivergenceError(f"local series at {p=} did not settle")


def p1_p2_factors(c: int, table: "HeckeTable") -> tuple[float, float]:
    """P1(c) and P2(c), each a product over p^nu || c of a truncated local series"""

    def pair(upper: float, lower: float) -> float:
        return abs(upper) * abs(lower)

    p1 = p2 = 1.0
    for p, nu in factorize(c).items():
        p1 *= _local_series(p, nu, table, 1.0, pair)
        p2 *= _local_series(p, nu, table, 0.75, pair)
    return p1, p2


def h_function(
    p: int, power: int, k: float, table: "HeckeTable", support: Iterable[int] | None = None
) -> float:
    """
    h(p) = (k-1) lambda(p), h(p^2) = k(k-1)(lambda(p^2)-1)/2 + (k-1)^2 on the
    support, zero off it
    """
    if power not in (1, 2):
        raise DomainError(f"h is supported on p and p^2 only, got {power=}")
    if support is not None and p not in set(support):
        return 0.0
    if power == 1:
        return (k - 1.0) * table.prime_power(p, 1)
    return 0.5 * k * (k - 1.0) * (table.prime_power(p, 2) - 1.0) + (k - 1.0) ** 2


def p3_factor(
    c: int, k: float, table: "HeckeTable", support: Iterable[int] | None = None
) -> float:
    """P3(c) = product over p | c of |h(p)| + |h(p^2)| / p"""
    support = None if support is None else set(support)
    value = 1.0
    for p in factorize(c):
        value *= abs(h_function(p, 1, k, table, support)) + abs(
            h_function(p, 2, k, table, support)
        ) / p
    return value


def _sieve_local_correction(p: int, table: "HeckeTable") -> float:
    """zeta_p(2) / (zeta_p(1) L_p(1, sym^2 f))"""
    lam2 = table.prime_power(p, 2)
    inverse_local_l = 1.0 - lam2 / p + lam2 / p**2 - 1.0 / p**3
    return p / (p + 1.0) * inverse_local_l


def g_factor(d: int, table: "HeckeTable") -> float:
    """Sieve density of the lambda(n)^2 weights on multiples of d"""
    value = 1.0 / d
    for p, nu in factorize(d).items():
        local = _local_series(p, nu, table, 1.0, lambda upper, _: upper * upper)
        value *= local * _sieve_local_correction(p, table)
    return value


def lambda_pair_sum(x: int, c1: int, c2: int, table: "HeckeTable") -> float:
    """Brute-force sum over n <= x of |lambda(c1 n) lambda(c2 n)|"""
    if max(c1, c2) * x > table.limit:
        raise PreconditionError(f"{x=} with {c1=}, {c2=} leaves the table")
    n = np.arange(1, int(x) + 1)
    return pairwise_sum(np.abs(table.lam[c1 * n] * table.lam[c2 * n]))


def divisor_constrained_lambda_sum(
    x: int, c: int, table: "HeckeTable", l_sym2: float
) -> tuple[float, float]:
    """
    Sum of lambda(n)^2 over n <= x with c | n, and its main term
    x g(c) L(1, sym^2 f) / zeta(2)

    :return: (exact, main_term)
    """
    if x > table.limit:
        raise PreconditionError(f"{x=} exceeds {table.limit=}")
    if c < 1:
        raise DomainError(f"modulus {c=} must be positive")
    exact = pairwise_sum(table.lam[c : int(x) + 1 : c] ** 2)
    main = x * g_factor(c, table) * l_sym2 / ZETA_2
    return exact, main


def geometric_grid(low: float, high: float, points: int) -> np.ndarray:
    if points == 1:
        return np.array([float(high)])
    return np.geomspace(low, high, points)


def prime_sum_rows(
    kind: PrimeSumKind,
    primes: PrimeList,
    grid: Iterable[float],
    constant: float,
    table: "HeckeTable | None" = None,
) -> list[PrimeSumRow]:
    """Rows (x, sum, loglog x + constant, residual) for the primes report"""
    if kind == PrimeSumKind.LAMBDA_SQUARE and table is None:
        raise PreconditionError("lambda-square sums need a Hecke table")

    rows = []
    for x in grid:
        if kind == PrimeSumKind.RECIPROCAL:
            value = mertens_sum(primes, x)
        else:
            value = lambda_sq_mertens(primes, table, x)  # type: ignore[arg-type]
        rows.append(
            PrimeSumRow(
                x=float(x),
                sum=value,
                reference=math.log(math.log(x)) + constant,
                residual=loglog_residual(value, x, constant),
            )
        )
    return rows
