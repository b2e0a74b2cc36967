"""
Normalized Hecke eigenvalues of the discriminant form

tau(n) is the coefficient of q^n in q * prod (1 - q^m)^24. The product is
expanded modulo several primes below 2^31 with exact int64 arithmetic and
lifted back to integers by CRT.
"""
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .constants import (
    CRT_MODULUS_CEILING,
    IDENTITY_TOLERANCE,
    KAPPA,
    SATAKE_TOLERANCE,
    TAU_CACHE_HEADER_SIZE,
    TAU_CACHE_MAGIC,
)
from .errors import CacheFormatError, CapacityError, DomainError, PreconditionError
from .helpers import async_read_file, async_write_atomic
from .primes import factorize, is_prime, simple_sieve
from .schemas import IdentityReport, verdict_of

logger = logging.getLogger(__name__)


@dataclass(slots=True, frozen=True)
class SatakePair:
    alpha: complex
    beta: complex


@dataclass(slots=True, frozen=True, eq=False)
class HeckeTable:
    """
    Attributes:
        limit: table bound N
        lam: float64 array with lam[n] = lambda(n) for 1 <= n <= N, lam[0] = 0
        weight: kappa, fixed at 12
        tau: exact tau(n) as Python ints (object array), when kept
    """

    limit: int
    lam: np.ndarray
    weight: int = KAPPA
    tau: np.ndarray | None = field(default=None, repr=False)

    def __getitem__(self, n: int) -> float:
        return float(self.lam[n])

    def prime_power(self, p: int, j: int) -> float:
        return prime_power_lambda(self, p, j)

    def prime_square_values(self, primes: np.ndarray) -> np.ndarray:
        """lambda(p^2) = lambda(p)^2 - 1 for an array of primes p <= limit"""
        return self.lam[primes] ** 2 - 1.0


def pentagonal_series(length: int) -> np.ndarray:
    """prod (1 - q^m) up to q^(length-1), by Euler's pentagonal number theorem"""
    series = np.zeros(length, dtype=np.int64)
    k = 0
    while True:
        first = k * (3 * k - 1) // 2
        if first >= length:
            break
        sign = -1 if k % 2 else 1
        series[first] = sign
        second = k * (3 * k + 1) // 2
        if k and second < length:
            series[second] = sign
        k += 1
    return series


def jacobi_cube_series(length: int) -> np.ndarray:
    """prod (1 - q^m)^3 = sum (-1)^k (2k+1) q^(k(k+1)/2), up to q^(length-1)"""
    series = np.zeros(length, dtype=np.int64)
    k = 0
    while (offset := k * (k + 1) // 2) < length:
        series[offset] = (-1) ** k * (2 * k + 1)
        k += 1
    return series


def crt_moduli(limit: int) -> list[int]:
    """Primes just below 2^31, enough of them to pin tau(n) for n <= limit"""
    # |tau(n)| <= d(n) n^5.5 and d(n) <= 2 sqrt(n)
    bits = 5.5 * math.log2(limit) + math.log2(4.0 * math.sqrt(limit)) + 2.0
    count = max(1, math.ceil(bits / 30.0))

    moduli: list[int] = []
    candidate = CRT_MODULUS_CEILING - 1
    while len(moduli) < count:
        if is_prime(candidate):
            moduli.append(candidate)
        candidate -= 2
    return moduli


def _multiply_sparse(dense: np.ndarray, sparse: np.ndarray, modulus: int) -> np.ndarray:
    """dense * sparse truncated to len(dense), reduced modulo modulus"""
    length = dense.size
    out = np.zeros(length, dtype=np.int64)
    for offset in np.flatnonzero(sparse):
        out[offset:] += dense[: length - offset] * int(sparse[offset])
    return out % modulus


def tau_residues(limit: int, max_limit: int) -> tuple[list[int], np.ndarray]:
    """
    Residues of tau(1..limit) modulo each CRT modulus

    :return: (moduli, int64 array of shape (len(moduli), limit))
    """
    if limit < 1:
        raise DomainError(f"table limit must be positive, got {limit=}")
    if limit > max_limit:
        raise CapacityError(f"{limit=} exceeds the Hecke memory budget {max_limit=}")

    moduli = crt_moduli(limit)
    cube = jacobi_cube_series(limit)
    residues = np.empty((len(moduli), limit), dtype=np.int64)
    logger.debug(f"expanding eta^24 to {limit=} modulo {moduli=}")

    for row, modulus in enumerate(moduli):
        power = cube % modulus
        # eta^24 = (eta^3)^8
        for _ in range(7):
            power = _multiply_sparse(power, cube, modulus)
        residues[row] = power
    return moduli, residues


def crt_reconstruct(moduli: list[int], residues: np.ndarray) -> np.ndarray:
    """Garner reconstruction to the symmetric range, as an object array of ints"""
    count, length = residues.shape
    digits = [residues[0] % moduli[0]]

    for i in range(1, count):
        m_i = moduli[i]
        value = np.zeros(length, dtype=np.int64)
        scale = 1
        for j in range(i):
            value = (value + digits[j] * scale) % m_i
            scale = scale * moduli[j] % m_i
        inverse = pow(scale, -1, m_i)
        digits.append((residues[i] - value) % m_i * inverse % m_i)

    result = digits[-1].astype(object)
    for i in range(count - 2, -1, -1):
        result = result * moduli[i] + digits[i].astype(object)

    product = math.prod(moduli)
    return np.where(result > product // 2, result - product, result)


def build_tau_table(limit: int, max_limit: int = 5_000_000) -> np.ndarray:
    """
    Exact tau(n); entry n holds tau(n) and entry 0 is 0

    :param limit: N
    :param max_limit: memory budget
    """
    moduli, residues = tau_residues(limit, max_limit)
    return _tau_from_residues(moduli, residues)


def _tau_from_residues(moduli: list[int], residues: np.ndarray) -> np.ndarray:
    tau = np.empty(residues.shape[1] + 1, dtype=object)
    tau[0] = 0
    tau[1:] = crt_reconstruct(moduli, residues)
    return tau


def normalize(tau: np.ndarray, weight: int = KAPPA) -> HeckeTable:
    """lambda(n) = tau(n) / n^((kappa-1)/2)"""
    if weight != KAPPA:
        raise DomainError(f"only the weight {KAPPA} form is instantiated, got {weight=}")
    limit = len(tau) - 1
    n = np.arange(limit + 1, dtype=np.float64)
    lam = np.zeros(limit + 1, dtype=np.float64)
    lam[1:] = np.asarray(tau[1:], dtype=object).astype(np.float64) / n[1:] ** (
        (weight - 1) / 2
    )
    return HeckeTable(limit=limit, lam=lam, weight=weight, tau=tau)


def prime_power_lambda(table: HeckeTable, p: int, j: int) -> float:
    """lambda(p^j) from the table, or by the three-term recursion beyond it"""
    if j < 0:
        raise DomainError(f"negative exponent {j=}")
    p, j = int(p), int(j)
    if j == 0:
        return 1.0
    if p > table.limit:
        raise PreconditionError(f"lambda({p=}) is outside the table ({table.limit=})")
    if p**j <= table.limit:
        return float(table.lam[p**j])

    lam_p = float(table.lam[p])
    previous, current = 1.0, lam_p
    for _ in range(1, j):
        previous, current = current, lam_p * current - previous
    return current


def satake(lambda_p: float) -> SatakePair:
    """Roots of X^2 - lambda(p) X + 1"""
    if abs(lambda_p) > 2.0 + IDENTITY_TOLERANCE:
        raise DomainError(f"{lambda_p=} violates the Deligne bound")
    theta = math.acos(max(-1.0, min(1.0, lambda_p / 2.0)))
    alpha = complex(math.cos(theta), math.sin(theta))
    return SatakePair(alpha=alpha, beta=alpha.conjugate())


def satake_residual(pair: SatakePair, lambda_p: float) -> float:
    """Worst deviation from alpha + beta = lambda, |alpha| = |beta| = 1, alpha beta = 1"""
    return max(
        abs(pair.alpha + pair.beta - lambda_p),
        abs(abs(pair.alpha) - 1.0),
        abs(abs(pair.beta) - 1.0),
        abs(pair.alpha * pair.beta - 1.0),
        abs(pair.alpha**2 + pair.beta**2 - (lambda_p**2 - 2.0)),
    )


def divisor_count(n: int) -> int:
    return math.prod(e + 1 for e in factorize(n).values())


def omega(n: int) -> int:
    return 0 if n == 1 else len(factorize(n))


def divisor_count_array(limit: int) -> np.ndarray:
    """d(n) for 0 <= n <= limit"""
    counts = np.zeros(limit + 1, dtype=np.int64)
    for i in range(1, limit + 1):
        counts[i::i] += 1
    return counts


def _report(
    name: str, residuals: np.ndarray, where: np.ndarray, tolerance: float
) -> IdentityReport:
    if residuals.size == 0:
        return IdentityReport(
            name=name, max_residual=0.0, tolerance=tolerance, verdict=verdict_of(True)
        )
    worst = int(np.argmax(residuals))
    max_residual = float(residuals[worst])
    return IdentityReport(
        name=name,
        max_residual=max_residual,
        tolerance=tolerance,
        worst_at=int(where[worst]),
        checked=int(residuals.size),
        verdict=verdict_of(max_residual <= tolerance),
    )


def lambda_square_identity_check(table: HeckeTable, bound: int) -> IdentityReport:
    """max over p <= bound of |lambda(p)^2 - lambda(p^2) - 1|"""
    if bound * bound > table.limit:
        raise PreconditionError(f"{bound=} needs lambda(p^2) beyond {table.limit=}")
    p = simple_sieve(bound)
    residuals = np.abs(table.lam[p] ** 2 - table.lam[p * p] - 1.0)
    return _report("lambda_square_identity", residuals, p, IDENTITY_TOLERANCE)


def deligne_check(table: HeckeTable, limit: int | None = None) -> IdentityReport:
    """|lambda(n)| <= d(n) for n <= limit"""
    limit = table.limit if limit is None else min(limit, table.limit)
    d = divisor_count_array(limit)
    excess = np.maximum(np.abs(table.lam[1 : limit + 1]) - d[1:], 0.0)
    return _report("deligne_bound", excess, np.arange(1, limit + 1), IDENTITY_TOLERANCE)


def multiplicativity_check(table: HeckeTable, pairs: int = 10_000, seed: int = 0) -> IdentityReport:
    """|lambda(mn) - lambda(m) lambda(n)| / max(1, |lambda(mn)|) on random coprime pairs"""
    rng = np.random.default_rng(seed)
    chosen_m: list[np.ndarray] = []
    chosen_n: list[np.ndarray] = []
    found = 0
    while found < pairs:
        m = rng.integers(2, max(3, math.isqrt(table.limit) + 1), size=4 * pairs)
        n = rng.integers(1, table.limit // m + 1)
        keep = (np.gcd(m, n) == 1) & (n > 1)
        chosen_m.append(m[keep])
        chosen_n.append(n[keep])
        found += int(keep.sum())
        if table.limit < 6:
            break
    m = np.concatenate(chosen_m)[:pairs]
    n = np.concatenate(chosen_n)[:pairs]
    mn = m * n
    residuals = np.abs(table.lam[mn] - table.lam[m] * table.lam[n]) / np.maximum(
        1.0, np.abs(table.lam[mn])
    )
    return _report("multiplicativity", residuals, mn, IDENTITY_TOLERANCE)


def _prime_powers(table: HeckeTable, min_exponent: int) -> list[tuple[int, int]]:
    powers = []
    for p in simple_sieve(math.isqrt(table.limit)):
        p, j = int(p), min_exponent
        while p**j <= table.limit:
            powers.append((p, j))
            j += 1
    return powers


def recursion_check(table: HeckeTable) -> IdentityReport:
    """Table values at prime powers against the three-term recursion from lambda(p)"""
    powers = _prime_powers(table, 2)
    residuals = np.array(
        [
            abs(table.lam[p**j] - (table.lam[p] * table.lam[p ** (j - 1)] - table.lam[p ** (j - 2)]))
            for p, j in powers
        ]
    )
    where = np.array([p**j for p, j in powers], dtype=np.int64)
    return _report("hecke_recursion", residuals, where, IDENTITY_TOLERANCE)


def satake_closure_check(table: HeckeTable) -> IdentityReport:
    """lambda(p^j) = sum alpha^i beta^(j-i) for every prime power in the table"""
    powers = _prime_powers(table, 1)
    residuals = []
    for p, j in powers:
        pair = satake(float(table.lam[p]))
        closure = sum(pair.alpha**i * pair.beta ** (j - i) for i in range(j + 1))
        residuals.append(abs(closure.real - table.lam[p**j]) + abs(closure.imag))
    where = np.array([p**j for p, j in powers], dtype=np.int64)
    return _report("satake_closure", np.array(residuals), where, IDENTITY_TOLERANCE)


def satake_check(table: HeckeTable, bound: int) -> IdentityReport:
    """Satake relations at every prime p <= bound"""
    p = simple_sieve(min(bound, table.limit))
    residuals = np.array([satake_residual(satake(float(table.lam[q])), float(table.lam[q])) for q in p])
    return _report("satake_relations", residuals, p, SATAKE_TOLERANCE)


def _pack_header(limit: int) -> bytes:
    return TAU_CACHE_MAGIC.ljust(8, b"\0") + struct.pack("<q", limit)


async def save_tau_cache(path: str | Path, moduli: list[int], residues: np.ndarray) -> Path:
    """Header {magic, N}, then little-endian int64 residues, one modulus after another"""
    limit = residues.shape[1]
    if list(moduli) != crt_moduli(limit):
        raise CacheFormatError(f"moduli do not match the canonical set for {limit=}")
    payload = _pack_header(limit) + residues.astype("<i8").tobytes()
    return await async_write_atomic(path, payload)


async def load_tau_cache(path: str | Path) -> tuple[list[int], np.ndarray]:
    content = await async_read_file(path)
    if len(content) < TAU_CACHE_HEADER_SIZE or not content.startswith(TAU_CACHE_MAGIC):
        raise CacheFormatError(f"{path} is not a tau cache")
    (limit,) = struct.unpack("<q", content[8:TAU_CACHE_HEADER_SIZE])
    if limit < 1:
        raise CacheFormatError(f"{path} declares {limit=}")

    moduli = crt_moduli(limit)
    body = content[TAU_CACHE_HEADER_SIZE:]
    if len(body) != 8 * limit * len(moduli):
        raise CacheFormatError(
            f"{path} holds {len(body)} bytes, expected {8 * limit * len(moduli)}"
        )
    residues = np.frombuffer(body, dtype="<i8").reshape(len(moduli), limit).astype(np.int64)
    return moduli, residues


async def load_or_build_table(
    limit: int, cache_path: str | Path | None = None, max_limit: int = 5_000_000
) -> HeckeTable:
    """
    Table to at least `limit`, reusing a cache when it covers the bound.
    A fresh expansion is written back to the cache path
    """
    if cache_path is not None and Path(cache_path).exists():
        moduli, residues = await load_tau_cache(cache_path)
        if residues.shape[1] >= limit:
            logger.info(f"tau cache {cache_path} covers {residues.shape[1]} >= {limit=}")
            return normalize(_tau_from_residues(moduli, residues))
        logger.warning(f"tau cache {cache_path} is too short ({residues.shape[1]} < {limit})")

    moduli, residues = tau_residues(limit, max_limit)
    if cache_path is not None:
        await save_tau_cache(cache_path, moduli, residues)
    return normalize(_tau_from_residues(moduli, residues))
