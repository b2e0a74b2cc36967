from enum import Enum, StrEnum, unique

DISTRIBUTION = "twisted-moments-lab"
# reported when the package runs from a source tree without metadata
FALLBACK_VERSION = "0.0.0+unknown"

# Weight of the discriminant form; fixed rather than a parameter.
KAPPA = 12

TAU_CACHE_MAGIC = b"TAUV1"
TAU_CACHE_HEADER_SIZE = 16

# Largest primes below 2**31 are used as CRT moduli for the eta expansion.
CRT_MODULUS_CEILING = 2**31

IDENTITY_TOLERANCE = 1e-9
SATAKE_TOLERANCE = 1e-12
SERIES_RELATIVE_TAIL = 1e-12
SINGULAR_FACTOR_TOLERANCE = 1e-12

SYM2_TRUNCATION = 10_000


@unique
class ScheduleMode(StrEnum):
    PAPER_FAITHFUL = "paper_faithful"
    DESK = "desk"


@unique
class XRule(StrEnum):
    SQRT = "sqrt"
    FIXED = "fixed"


@unique
class LemmaCheck(StrEnum):
    EVEN_MOMENT = "even-moment"
    EULER_PRODUCT = "euler-product"
    PARSEVAL = "parseval"
    TRANSFER = "transfer"


# numbered spellings accepted by --lemma
LEMMA_ALIASES = {
    "2.4": LemmaCheck.EVEN_MOMENT,
    "2.5": LemmaCheck.EULER_PRODUCT,
    "2.6": LemmaCheck.PARSEVAL,
}


@unique
class PrimeSumKind(StrEnum):
    RECIPROCAL = "reciprocal"
    LAMBDA_SQUARE = "lambda-square"


@unique
class Subcommand(StrEnum):
    HECKE = "hecke"
    PRIMES = "primes"
    MOMENTS = "moments"
    RMF_VERIFY = "rmf-verify"
    MOLLIFIER_CHECK = "mollifier-check"
    TRANSFER_CHECK = "transfer-check"


@unique
class SumVariant(Enum):
    FULL = "full"
    SMOOTH = "smooth"
    ROUGH = "rough"


@unique
class MajorantCase(Enum):
    TRUNCATED = "truncated"
    MIDDLE = "middle"
    TAIL = "tail"


@unique
class Verdict(StrEnum):
    PASS = "pass"
    FAIL = "fail"


class ExitCode:
    OK = 0
    FAILURE = 1
    VALIDATION = 2
    AUDIT = 3
