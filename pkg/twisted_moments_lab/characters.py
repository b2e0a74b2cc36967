"""
Dirichlet characters modulo a prime q and the all-characters kernel

chi_a(n) = exp(2 pi i a ind(n) / (q-1)), where ind is the discrete log to the
smallest primitive root. Bucketing coefficients by ind turns the q-1 twisted
sums into one DFT of length q-1, done by Bluestein's chirp-z algorithm.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import fft

from .constants import IDENTITY_TOLERANCE
from .errors import CapacityError, DomainError, LengthConditionError, NotPrimeError
from .helpers import pairwise_sum
from .primes import factorize, is_prime
from .schemas import AuditReport, verdict_of
from .timer import stopwatch

logger = logging.getLogger(__name__)


@dataclass(slots=True, frozen=True, eq=False)
class CharacterIndex:
    """
    Attributes:
        q: prime modulus
        g: smallest primitive root
        ind: int64 array of length q, ind[n] = log_g n for 1 <= n < q, ind[0] = -1
    """

    q: int
    g: int
    ind: np.ndarray

    @property
    def phi(self) -> int:
        return self.q - 1


@dataclass(slots=True, frozen=True, eq=False)
class TwistedSumVector:
    q: int
    x: int
    values: np.ndarray

    @property
    def principal(self) -> complex:
        return complex(self.values[0])


def find_primitive_root(q: int) -> int:
    if not is_prime(q):
        raise NotPrimeError(f"modulus {q=} is not prime")
    if q == 2:
        return 1
    cofactors = [(q - 1) // r for r in factorize(q - 1)]
    for g in range(2, q):
        if all(pow(g, e, q) != 1 for e in cofactors):
            return g
    raise NotPrimeError(f"no primitive root found for {q=}")


def build_index(q: int, g: int | None = None, max_modulus: int = 20_000_000) -> CharacterIndex:
    """Discrete-log table from the powers of g, computed in sqrt(q)-sized blocks"""
    if q > max_modulus:
        raise CapacityError(f"modulus {q=} exceeds {max_modulus=}")
    g = find_primitive_root(q) if g is None else g

    order = q - 1
    block = math.isqrt(order) + 1
    base = np.empty(block, dtype=np.int64)
    base[0] = 1
    for i in range(1, block):
        base[i] = base[i - 1] * g % q

    step = pow(g, block, q)
    strides = np.empty(block, dtype=np.int64)
    strides[0] = 1
    for j in range(1, block):
        strides[j] = strides[j - 1] * step % q

    powers = (strides[:, None] * base[None, :] % q).ravel()[:order]
    ind = np.full(q, -1, dtype=np.int64)
    ind[powers] = np.arange(order, dtype=np.int64)
    if np.any(ind[1:] < 0):
        raise DomainError(f"{g=} is not a primitive root modulo {q=}")

    logger.debug(f"built discrete-log index for {q=} {g=}")
    return CharacterIndex(q=q, g=g, ind=ind)


def chirp_z_dft(values: np.ndarray, sign: int = -1) -> np.ndarray:
    """
    X[a] = sum_j values[j] exp(sign 2 pi i a j / L) for any length L, by
    Bluestein's identity aj = (a^2 + j^2 - (a-j)^2) / 2
    """
    values = np.asarray(values, dtype=np.complex128)
    length = values.size
    if length == 0:
        return values.copy()

    j = np.arange(length, dtype=np.int64)
    # j^2 mod 2L keeps the phase argument small
    chirp = np.exp(sign * 1j * np.pi * ((j * j) % (2 * length)) / length)

    size = fft.next_fast_len(2 * length - 1)
    signal = np.zeros(size, dtype=np.complex128)
    signal[:length] = values * chirp
    kernel = np.zeros(size, dtype=np.complex128)
    kernel[:length] = chirp.conj()
    if length > 1:
        kernel[size - length + 1 :] = chirp[1:][::-1].conj()

    convolved = fft.ifft(fft.fft(signal) * fft.fft(kernel))
    return chirp * convolved[:length]


def bucket_coefficients(index: CharacterIndex, coeffs: np.ndarray) -> np.ndarray:
    """c[j] = sum of a_n over n <= x with ind(n) = j; coeffs[n-1] = a_n"""
    x = len(coeffs)
    if x >= index.q:
        raise LengthConditionError(f"twisted sums need x < q, got {x=} q={index.q}")
    return np.bincount(
        index.ind[1 : x + 1], weights=np.asarray(coeffs, dtype=np.float64), minlength=index.phi
    )


def all_twisted_sums(index: CharacterIndex, coeffs: np.ndarray) -> TwistedSumVector:
    """T(chi_a) = sum_{n <= x} a_n chi_a(n) for every a = 0 .. q-2"""
    buckets = bucket_coefficients(index, coeffs)
    return TwistedSumVector(q=index.q, x=len(coeffs), values=chirp_z_dft(buckets, sign=1))


def _phases(index: CharacterIndex, a: int, n: np.ndarray) -> np.ndarray:
    exponent = (a * index.ind[n]) % index.phi
    return np.exp(2j * np.pi * exponent / index.phi)


def naive_twisted_sum(index: CharacterIndex, a: int, coeffs: np.ndarray) -> complex:
    n = np.arange(1, len(coeffs) + 1)
    coprime = n % index.q != 0
    return pairwise_sum(np.asarray(coeffs)[coprime] * _phases(index, a, n[coprime]))


def character_values(index: CharacterIndex, a: int, n: np.ndarray) -> np.ndarray:
    """chi_a(n), zero where q | n"""
    n = np.asarray(n, dtype=np.int64)
    residues = n % index.q
    values = np.zeros(n.shape, dtype=np.complex128)
    coprime = residues != 0
    values[coprime] = _phases(index, a, residues[coprime])
    return values


class CharacterEvaluator(object):
    """chi_a as a completely multiplicative evaluator"""

    def __init__(self, index: CharacterIndex, a: int):
        if not 0 <= a < index.phi:
            raise DomainError(f"character index {a=} outside 0..{index.phi - 1}")
        self.index = index
        self.a = a

    def at_primes(self, primes: np.ndarray) -> np.ndarray:
        return character_values(self.index, self.a, primes)

    def __call__(self, n: int) -> complex:
        return complex(character_values(self.index, self.a, np.array([n]))[0])


def orthogonality_residual(index: CharacterIndex, coeffs: np.ndarray) -> float:
    """Relative gap in (1/phi(q)) sum_a |T(chi_a)|^2 = sum over (n, q) = 1 of a_n^2"""
    vector = all_twisted_sums(index, coeffs)
    lhs = pairwise_sum(np.abs(vector.values) ** 2) / index.phi
    n = np.arange(1, len(coeffs) + 1)
    rhs = pairwise_sum(np.asarray(coeffs)[n % index.q != 0] ** 2)
    return abs(lhs - rhs) / max(abs(rhs), 1e-300)


def parseval_residual(index: CharacterIndex, coeffs: np.ndarray) -> float:
    """Relative gap in sum_a |T(chi_a)|^2 = (q-1) sum_j |c_j|^2"""
    buckets = bucket_coefficients(index, coeffs)
    values = chirp_z_dft(buckets, sign=1)
    lhs = pairwise_sum(np.abs(values) ** 2)
    rhs = index.phi * pairwise_sum(buckets**2)
    return abs(lhs - rhs) / max(abs(rhs), 1e-300)


def max_naive_deviation(index: CharacterIndex, coeffs: np.ndarray, characters=None) -> float:
    """Largest |kernel - naive| over the given characters (all by default)"""
    vector = all_twisted_sums(index, coeffs)
    characters = range(index.phi) if characters is None else characters
    return max(abs(vector.values[a] - naive_twisted_sum(index, a, coeffs)) for a in characters)


def kernel_benchmark(
    coeffs: np.ndarray, q: int, naive_q: int, naive_characters: int = 200
) -> AuditReport:
    """
    Kernel time at q against the naive time measured on a sample of characters
    at naive_q and scaled to phi(q) characters
    """
    index = build_index(q, max_modulus=max(q, naive_q))
    with stopwatch() as fast:
        all_twisted_sums(index, coeffs)

    small = build_index(naive_q, max_modulus=max(q, naive_q))
    sample = np.linspace(0, small.phi - 1, min(naive_characters, small.phi)).astype(int)
    with stopwatch() as naive:
        for a in sample:
            naive_twisted_sum(small, int(a), coeffs)

    extrapolated = naive.elapsed_ms / len(sample) * index.phi
    speedup = extrapolated / max(fast.elapsed_ms, 1e-6)
    logger.info(f"kernel at {q=}: {fast.elapsed_ms:.1f} ms, naive about {extrapolated:.0f} ms")
    return AuditReport(
        name="kernel_speedup",
        estimate=speedup,
        oracle=20.0,
        ratio=speedup / 20.0,
        verdict=verdict_of(speedup >= 20.0),
        extra={"kernel_ms": fast.elapsed_ms, "naive_extrapolated_ms": extrapolated},
    )


def kernel_oracle_check(index: CharacterIndex, coeffs: np.ndarray, characters=None) -> AuditReport:
    deviation = max_naive_deviation(index, coeffs, characters)
    return AuditReport(
        name="kernel_vs_naive",
        estimate=deviation,
        tolerance=IDENTITY_TOLERANCE,
        verdict=verdict_of(deviation < IDENTITY_TOLERANCE),
        extra={"q": index.q, "x": len(coeffs)},
    )
