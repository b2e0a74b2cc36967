import argparse
import asyncio
import logging
import sys
from typing import Sequence

from pydantic import ValidationError

from .commands import build_dispatcher
from .config import LabSettings, RunConfig
from .constants import (
    LEMMA_ALIASES,
    ExitCode,
    LemmaCheck,
    PrimeSumKind,
    ScheduleMode,
    Subcommand,
    Verdict,
    XRule,
)
from .errors import (
    AuditFailedError,
    CapacityError,
    DomainError,
    NotPrimeError,
    PreconditionError,
    ScheduleError,
)

logger = logging.getLogger(__name__)

USAGE_ERRORS = (PreconditionError, DomainError, ScheduleError, NotPrimeError, CapacityError)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tml", description="Twisted moments of Hecke eigenvalue sums"
    )
    subparsers = parser.add_subparsers(dest="subcommand", required=True)

    def add(name: Subcommand, help_text: str) -> argparse.ArgumentParser:
        sub = subparsers.add_parser(str(name), help=help_text)
        sub.add_argument("--out", help="output file; standard output when omitted")
        sub.add_argument("--hecke-cache", dest="hecke_cache")
        sub.add_argument("--log-level", dest="log_level")
        return sub

    hecke = add(Subcommand.HECKE, "build the eigenvalue table and audit its identities")
    hecke.add_argument("--limit", type=int)
    hecke.add_argument("--seed", type=int)

    primes = add(Subcommand.PRIMES, "Mertens-type prime sums against loglog x + constant")
    primes.add_argument("--kind", choices=[str(k) for k in PrimeSumKind])
    primes.add_argument("--x-max", dest="x_max", type=float)
    primes.add_argument("--points", type=int)

    moments = add(Subcommand.MOMENTS, "twisted 2k-th moments over a range of prime moduli")
    moments.add_argument("--q-range", dest="q_range")
    moments.add_argument("--q-count", dest="q_count", type=int)
    moments.add_argument("--k", type=float)
    moments.add_argument("--x-rule", dest="x_rule", choices=[str(r) for r in XRule])
    moments.add_argument("--x", type=float)
    moments.add_argument("--plot")

    rmf = add(Subcommand.RMF_VERIFY, "random multiplicative function audits")
    rmf.add_argument("--lemma", choices=[*(str(c) for c in LemmaCheck), *LEMMA_ALIASES])
    rmf.add_argument("--samples", type=int)
    rmf.add_argument("--seed", type=int)

    mollifier = add(Subcommand.MOLLIFIER_CHECK, "build a mollifier schedule and audit it")
    mollifier.add_argument("--x", type=float)
    mollifier.add_argument("--k", type=float)
    mollifier.add_argument("--c0", type=float)
    mollifier.add_argument("--mode", choices=[str(m) for m in ScheduleMode])
    mollifier.add_argument("--samples", type=int)
    mollifier.add_argument("--seed", type=int)

    transfer = add(Subcommand.TRANSFER_CHECK, "character side against the random model side")
    transfer.add_argument("--q", type=int)
    transfer.add_argument("--x", type=float)
    transfer.add_argument("--j", type=int)
    transfer.add_argument("--y", type=float)
    transfer.add_argument("--k", type=float)
    return parser


def parse_config(argv: Sequence[str]) -> tuple[RunConfig, str | None]:
    namespace = vars(build_parser().parse_args(argv))
    log_level = namespace.pop("log_level", None)
    fields = {key: value for key, value in namespace.items() if value is not None}
    return RunConfig(**fields), log_level


def _diagnostic(err: ValidationError) -> str:
    first = err.errors()[0]
    location = ".".join(str(part) for part in first.get("loc", ()))
    message = first.get("msg", str(err)).removeprefix("Value error, ")
    return f"{location}: {message}" if location else message


def run(argv: Sequence[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        config, log_level = parse_config(argv)
    except SystemExit as exc:
        return ExitCode.OK if exc.code in (0, None) else ExitCode.VALIDATION
    except ValidationError as err:
        print(f"error: {_diagnostic(err)}", file=sys.stderr)
        return ExitCode.VALIDATION

    settings = LabSettings()
    logging.basicConfig(
        level=(log_level or settings.log_level).upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    try:
        outcome = asyncio.run(build_dispatcher(settings).dispatch(config))
    except USAGE_ERRORS as err:
        print(f"error: {err}", file=sys.stderr)
        return ExitCode.VALIDATION
    except AuditFailedError as err:
        print(f"audit failed: {err}", file=sys.stderr)
        return ExitCode.AUDIT
    except Exception as err:
        logger.error(err, exc_info=True)
        return ExitCode.FAILURE

    if outcome.report is not None and outcome.report.verdict == Verdict.FAIL:
        print(f"audit failed: {outcome.report.detail}", file=sys.stderr)
        return ExitCode.AUDIT
    return ExitCode.OK


def main() -> None:
    sys.exit(run())
