"""
Subcommand callbacks and the providers they declare through Annotated
parameters; the dispatcher resolves providers before calling a callback
"""
import logging
import math
from typing import Annotated, Callable

from .characters import build_index
from .config import DeskScaling, LabSettings, RunConfig
from .constants import (
    LemmaCheck,
    PrimeSumKind,
    ScheduleMode,
    Subcommand,
    XRule,
)
from .dispatcher import Dispatcher
from .handler import Outcome, SubcommandHandler
from .hecke import (
    HeckeTable,
    deligne_check,
    lambda_square_identity_check,
    load_or_build_table,
    multiplicativity_check,
    recursion_check,
    satake_check,
    satake_closure_check,
)
from .helpers import rows_to_csv, to_json
from .mollifier import (
    MollifierSchedule,
    build_schedule,
    case_boundary_ratio,
    check_a_bounds,
    check_length_constraint,
    est_aj_audit,
    interval_decay_audit,
    interval_partition_audit,
    majorization_audit,
    zerocase_audit,
)
from .moments import MOMENT_COLUMNS, growth_fit, growth_scan, moment_rows, sample_primes
from .plot import emit_plot
from .primes import (
    ConstantsFixture,
    PrimeList,
    fit_mertens_constant,
    geometric_grid,
    load_constants,
    prime_sum_rows,
    save_constants,
    sieve,
    sym2_l_at_one,
)
from .schemas import AuditReport, LabReport, Provenance, verdict_of
from .steinhaus import (
    conditional_tower_check,
    euler_product_battery,
    even_moment_battery,
    offdiagonal_correlation,
    orthogonality_transfer_check,
    parseval_battery,
)

logger = logging.getLogger(__name__)

PRIME_SUM_COLUMNS = ["x", "sum", "reference", "residual"]
LEMMA_BOUND = 10_000
TRANSFER_TOLERANCE = 1e-8


def config_schedule(config: RunConfig) -> MollifierSchedule:
    return build_schedule(config.x, config.k, config.c0, config.mode, DeskScaling())


def transfer_y(config: RunConfig) -> int:
    """--y, or the largest y with x y^(4J) < q (at least 2)"""
    if config.y is not None:
        return int(config.y)
    y = 2
    while config.x * (y + 1) ** (4 * config.j) < config.q:
        y += 1
    return y


def required_limit(config: RunConfig, settings: LabSettings) -> int:
    match config.subcommand:
        case Subcommand.HECKE:
            return config.limit or settings.hecke_limit
        case Subcommand.PRIMES:
            return int(config.x_max) if config.kind == PrimeSumKind.LAMBDA_SQUARE else 2
        case Subcommand.MOMENTS:
            if config.x_rule == XRule.FIXED:
                return int(config.x)
            return math.isqrt(config.q_range[1])
        case Subcommand.RMF_VERIFY:
            return LEMMA_BOUND
        case Subcommand.MOLLIFIER_CHECK:
            return max(2, math.ceil(config_schedule(config).y))
        case Subcommand.TRANSFER_CHECK:
            return max(int(config.x), transfer_y(config))
    return 2


async def hecke_table(config: RunConfig, settings: LabSettings) -> HeckeTable:
    return await load_or_build_table(
        required_limit(config, settings), config.hecke_cache, settings.max_hecke_limit
    )


def prime_list(config: RunConfig, settings: LabSettings) -> PrimeList:
    if config.subcommand == Subcommand.PRIMES:
        bound = int(config.x_max)
    else:
        bound = required_limit(config, settings)
    return sieve(max(2, bound), settings.sieve_segment, settings.max_sieve_bound)


async def constants(config: RunConfig, settings: LabSettings) -> ConstantsFixture:
    return await load_constants(settings.constants_path)


def lab_settings(config: RunConfig, settings: LabSettings) -> LabSettings:
    return settings


def provenance(config: RunConfig, mode: ScheduleMode | None = None) -> Provenance:
    seeded = config.subcommand in (
        Subcommand.HECKE,
        Subcommand.RMF_VERIFY,
        Subcommand.MOLLIFIER_CHECK,
    )
    return Provenance(mode=mode, seed=config.seed if seeded else None, parameters=config.parameters())


def json_outcome(report: LabReport) -> Outcome:
    return Outcome(content=to_json(report.to_dic()), report=report)


async def resolve_constant(
    settings: LabSettings,
    fixture: ConstantsFixture,
    name: str,
    compute: Callable[[], float],
    how: str,
) -> float:
    """Fixture value, or a fresh measurement stored back with its provenance"""
    value, updated = fixture.resolve(name, compute, how)
    if updated is not fixture:
        try:
            await save_constants(settings.constants_path, updated)
        except OSError as err:
            logger.warning(f"measured {name} not stored in {settings.constants_path}: {err}")
    return value


async def run_hecke(
    config: RunConfig,
    table: Annotated[HeckeTable, hecke_table],
    primes: Annotated[PrimeList, prime_list],
    fixture: Annotated[ConstantsFixture, constants],
    settings: Annotated[LabSettings, lab_settings],
) -> Outcome:
    audits = [
        lambda_square_identity_check(table, min(1000, math.isqrt(table.limit))),
        multiplicativity_check(table, 10_000, config.seed),
        deligne_check(table, min(table.limit, 100_000)),
        recursion_check(table),
        satake_check(table, min(1000, table.limit)),
        satake_closure_check(table),
    ]
    head = min(table.limit, 10)
    data = {
        "limit": table.limit,
        "weight": table.weight,
        "tau": None if table.tau is None else [int(t) for t in table.tau[1 : head + 1]],
        "lambda": [float(v) for v in table.lam[1 : head + 1]],
        "L1_sym2": None,
    }
    T = fixture.truncation
    if table.limit >= T:
        data["L1_sym2"] = await resolve_constant(
            settings,
            fixture,
            "L1_sym2",
            lambda: sym2_l_at_one(table, primes, T)[0],
            f"Riesz-smoothed zeta(2) sum lambda(n^2)/n up to {T=}",
        )
    else:
        logger.info(f"table limit {table.limit} below {T=}, L(1, sym^2 f) skipped")
    return json_outcome(LabReport(provenance=provenance(config), audits=audits, data=data))


async def run_primes(
    config: RunConfig,
    primes: Annotated[PrimeList, prime_list],
    table: Annotated[HeckeTable, hecke_table],
    fixture: Annotated[ConstantsFixture, constants],
    settings: Annotated[LabSettings, lab_settings],
) -> Outcome:
    grid = geometric_grid(min(100.0, config.x_max), config.x_max, config.points)
    fit_grid = geometric_grid(min(100.0, config.x_max), config.x_max, max(config.points, 8))
    how = f"least-squares fit against 1/log x on {len(fit_grid)} points up to {config.x_max:g}"
    if config.kind == PrimeSumKind.RECIPROCAL:
        constant = await resolve_constant(
            settings, fixture, "b1", lambda: fit_mertens_constant(primes, None, fit_grid)[0], how
        )
    else:
        weights = table.lam[primes.primes] ** 2
        constant = await resolve_constant(
            settings, fixture, "b2", lambda: fit_mertens_constant(primes, weights, fit_grid)[0], how
        )
    rows = prime_sum_rows(config.kind, primes, grid, constant, table)
    measured = max((abs(r.residual) * math.log(r.x) for r in rows), default=0.0)
    if measured > 5.0:
        logger.warning(f"residual constant {measured=:.3f} exceeds 5")
    content = rows_to_csv(
        PRIME_SUM_COLUMNS,
        ({"x": r.x, "sum": r.sum, "reference": r.reference, "residual": r.residual} for r in rows),
    )
    return Outcome(content=content)


async def run_moments(
    config: RunConfig,
    table: Annotated[HeckeTable, hecke_table],
    settings: Annotated[LabSettings, lab_settings],
) -> Outcome:
    low, high = config.q_range
    q_list = sample_primes(low, high, config.q_count)
    reports = await growth_scan(
        q_list, config.k, config.x_rule, table, config.x, settings.threads, settings.max_modulus
    )
    fit = growth_fit(reports)
    if fit is not None:
        logger.info(
            f"growth slope {fit.slope:.4f} in [{fit.ci_low:.4f}, {fit.ci_high:.4f}], "
            f"reference {fit.reference_slope}"
        )
    content = rows_to_csv(MOMENT_COLUMNS, moment_rows(reports, settings.record_runtime))
    extra = [(config.plot, emit_plot(content))] if config.plot is not None else []
    return Outcome(content=content, extra_files=extra)


def transfer_audit(
    table: HeckeTable,
    primes: PrimeList,
    q: int,
    x: int,
    k: float,
    y: int,
    J: int,
    control_q: int | None = None,
) -> AuditReport:
    """
    Character side against the symbolic random-model side on a one-interval
    schedule; control_q reruns the comparison where x N >= q to show leakage
    """
    schedule = MollifierSchedule.custom(x, k, [float(y)], [J])
    char_side, rmf_side = orthogonality_transfer_check(
        build_index(q), x, schedule, k, table, primes
    )
    gap = abs(char_side - rmf_side) / abs(rmf_side)
    passed = gap < TRANSFER_TOLERANCE
    extra: dict = {"q": q, "x": x, "y": y, "J": J, "char_side": char_side, "rmf_side": rmf_side}

    if control_q is not None:
        control_char, control_rmf = orthogonality_transfer_check(
            build_index(control_q), x, schedule, k, table, primes, enforce_length=False
        )
        leakage = abs(control_char - control_rmf) / abs(control_rmf)
        extra["control"] = {"q": control_q, "char_side": control_char, "leakage": leakage}
        passed &= leakage > 1e-6
    return AuditReport(
        name="orthogonality_transfer",
        estimate=char_side,
        oracle=rmf_side,
        ratio=gap,
        tolerance=TRANSFER_TOLERANCE,
        verdict=verdict_of(passed),
        extra=extra,
    )


async def run_rmf_verify(
    config: RunConfig,
    table: Annotated[HeckeTable, hecke_table],
    primes: Annotated[PrimeList, prime_list],
) -> Outcome:
    match config.lemma:
        case LemmaCheck.EULER_PRODUCT:
            audits = [euler_product_battery(table, primes, config.samples, config.seed)]
        case LemmaCheck.PARSEVAL:
            audits = [parseval_battery(table)]
        case LemmaCheck.EVEN_MOMENT:
            audits = [
                even_moment_battery(table, config.samples, config.seed),
                offdiagonal_correlation(primes.upto(30), config.seed, config.samples),
                conditional_tower_check(table, config.seed),
            ]
        case _:
            audits = [transfer_audit(table, primes, 10007, 10, 2.0, 5, 1, control_q=101)]
    report = LabReport(provenance=provenance(config), audits=audits, data={"lemma": str(config.lemma)})
    return json_outcome(report)


def a_bounds_audit(schedule: MollifierSchedule, primes: PrimeList) -> AuditReport:
    rows = check_a_bounds(schedule, primes)
    excess = max(row["A_m"] - row["bound"] for row in rows)
    return AuditReport(
        name="a_bounds",
        estimate=excess,
        tolerance=0.0,
        verdict=verdict_of(all(row["ok"] for row in rows)),
        detail="largest A_m minus its bound",
        extra={"rows": rows},
    )


async def run_mollifier_check(
    config: RunConfig,
    table: Annotated[HeckeTable, hecke_table],
    primes: Annotated[PrimeList, prime_list],
) -> Outcome:
    schedule = config_schedule(config)
    cap = schedule.scaling.length_exponent_cap if schedule.scaling else None
    length = check_length_constraint(schedule, cap=cap)
    if not length.ok:
        logger.warning(f"length constraint fails with margin {length.margin:.4g}")

    audits = [a_bounds_audit(schedule, primes)]
    for J in sorted(set(schedule.J)):
        audits.append(majorization_audit(config.k, J, 1000, config.seed))
        audits.append(interval_partition_audit(config.k, J, 1000, config.seed))
    est_aj = est_aj_audit(schedule, primes)
    if schedule.mode == ScheduleMode.PAPER_FAITHFUL:
        audits.append(est_aj)

    data = {
        "schedule": schedule.model_dump(mode="json"),
        "length": {"ok": length.ok, "margin": length.margin, "exponents": length.exponents},
        "est_aj": est_aj.model_dump(mode="json"),
        "zerocase": zerocase_audit(
            table, schedule, schedule.M, 0, 0, primes, config.samples, config.seed
        ).model_dump(mode="json"),
        "interval_decay": interval_decay_audit(
            table, schedule, primes, config.samples, config.seed
        ).model_dump(mode="json"),
        "case_boundary_log_ratio": {str(J): case_boundary_ratio(J, config.k) for J in set(schedule.J)},
    }
    report = LabReport(provenance=provenance(config, schedule.mode), audits=audits, data=data)
    return json_outcome(report)


async def run_transfer_check(
    config: RunConfig,
    table: Annotated[HeckeTable, hecke_table],
    primes: Annotated[PrimeList, prime_list],
) -> Outcome:
    audit = transfer_audit(
        table, primes, config.q, int(config.x), config.k, transfer_y(config), config.j
    )
    report = LabReport(provenance=provenance(config), audits=[audit], data={})
    return json_outcome(report)


HANDLERS = {
    Subcommand.HECKE: run_hecke,
    Subcommand.PRIMES: run_primes,
    Subcommand.MOMENTS: run_moments,
    Subcommand.RMF_VERIFY: run_rmf_verify,
    Subcommand.MOLLIFIER_CHECK: run_mollifier_check,
    Subcommand.TRANSFER_CHECK: run_transfer_check,
}


def build_dispatcher(settings: LabSettings) -> Dispatcher:
    dispatcher = Dispatcher(settings, depends=[hecke_table, prime_list, constants, lab_settings])
    for subcommand, callback in HANDLERS.items():
        dispatcher.add_handler(SubcommandHandler(subcommand, callback))
    return dispatcher
