"""
Mollifier schedule, its constraint checks and the majorant U of R
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import special, stats

from .config import DeskScaling
from .constants import MajorantCase, ScheduleMode
from .errors import DomainError, PreconditionError, ScheduleError
from .hecke import HeckeTable
from .helpers import audited
from .primes import PrimeList
from .schemas import AuditReport, verdict_of
from .steinhaus import PhaseStream, d_coefficients, d_from_phases, mean_and_stderr, truncated_exp

logger = logging.getLogger(__name__)

FAITHFUL_LENGTH_FACTOR = 1e4
FAITHFUL_JM_DIVISOR = 1e5
EST_AJ_FACTOR = 1e4


class MollifierSchedule(BaseModel):
    """
    Prime intervals (y_{m-1}, y_m] and truncation lengths J_m

    Attributes:
        y_points: y_1 < ... < y_M = y, with y_0 = 1 implied
        J: truncation length per interval
        flags: constraint notes raised while building
    """

    model_config = ConfigDict(frozen=True)

    x: float
    k: float
    c0: float | None = None
    mode: ScheduleMode
    y: float
    M: int = Field(ge=1)
    y_points: list[float]
    J: list[int]
    scaling: DeskScaling | None = None
    flags: list[str] = Field(default_factory=list)

    @property
    def log_y(self) -> float:
        return math.log(self.y)

    def interval(self, m: int) -> tuple[float, float]:
        if not 1 <= m <= self.M:
            raise ScheduleError(f"interval {m=} outside 1..{self.M}")
        low = 1.0 if m == 1 else self.y_points[m - 2]
        return low, self.y_points[m - 1]

    def a(self, m: int) -> int:
        """a_m = 2 ceil(200 k J_m)"""
        return 2 * math.ceil(200 * self.k * self.J[m - 1])

    def shifts(self) -> list[int]:
        """Integer l with |l| <= log(y) / 2"""
        bound = math.floor(self.log_y / 2)
        return list(range(-bound, bound + 1))

    @classmethod
    def custom(
        cls,
        x: float,
        k: float,
        y_points: list[float],
        J: list[int],
        mode: ScheduleMode = ScheduleMode.DESK,
        scaling: DeskScaling | None = None,
    ) -> "MollifierSchedule":
        if len(y_points) != len(J) or not y_points:
            raise ScheduleError(f"need one J_m per y_m, got {len(y_points)} and {len(J)}")
        if any(b <= a for a, b in zip([1.0, *y_points], y_points)):
            raise ScheduleError(f"y_m must increase from 1, got {y_points}")
        if any(j < 0 for j in J):
            raise ScheduleError(f"J_m must be nonnegative, got {J}")
        return cls(
            x=x, k=k, mode=mode, y=y_points[-1], M=len(J),
            y_points=list(y_points), J=list(J), scaling=scaling,
        )


def build_schedule(
    x: float, k: float, c0: float, mode: ScheduleMode, scaling: DeskScaling | None = None
) -> MollifierSchedule:
    """
    y = x^(1/C0) (desk: x^(c0_divisor/C0), capped at x), M - 1 = ceil(log_20 (loglog y)^2),
    y_{m-1} = y_m^(1/20), J_1 = round((loglog y)^(3/2)), J_M from C0 and k,
    J_m = J_M + M - m in between
    """
    if x < 16 or k < 2 or c0 <= 1:
        raise PreconditionError(f"need x >= 16, k >= 2, C0 > 1, got {x=} {k=} {c0=}")
    scaling = scaling or DeskScaling()
    if mode == ScheduleMode.PAPER_FAITHFUL:
        exponent, jm_value = 1.0 / c0, c0 / (FAITHFUL_JM_DIVISOR * k)
    else:
        exponent, jm_value = min(1.0, scaling.c0_divisor / c0), c0 / (scaling.jm_divisor * k)

    log_y = exponent * math.log(x)
    if log_y <= 1.0:
        raise ScheduleError(f"y = e^{log_y:.3f} leaves loglog y <= 0; raise x or lower C0")
    L = math.log(log_y)
    if 20 * L * L < 1:
        raise ScheduleError(f"(loglog y)^2 = {L * L:.4f} is below 1/20; no interval count fits")

    M = 1 + max(0, math.ceil(math.log(L * L, 20) - 1e-12))
    y_points = [math.exp(log_y / 20 ** (M - m)) for m in range(1, M + 1)]

    J_M = max(1, round(jm_value))
    J_1 = max(1, round(L**1.5))
    J = [J_1] + [J_M + M - m for m in range(2, M + 1)]

    flags = []
    if M >= 2 and J[0] < J[1]:
        flags.append("J1_below_J2")
    if math.log(J_M) < 1e4 * k * k:
        flags.append("JM_below_required")
    schedule = MollifierSchedule(
        x=x, k=k, c0=c0, mode=mode, y=math.exp(log_y), M=M, y_points=y_points, J=J,
        scaling=scaling if mode == ScheduleMode.DESK else None, flags=flags,
    )
    logger.info(f"schedule {mode}: y={schedule.y:.4g} {M=} J={J}")
    if flags:
        logger.warning(f"schedule flagged: {flags=}")
    return schedule


@dataclass(slots=True, frozen=True)
class LengthCheck:
    ok: bool
    margin: float
    exponents: list[float]


def check_length_constraint(
    schedule: MollifierSchedule, q: float | None = None, cap: float | None = None
) -> LengthCheck:
    """
    Faithful mode: log x - sum 10^4 k J_m log y_m. Desk mode: log q - sum
    min(8 J_m + 2 a_m, cap) log y_m with q = x^2 unless given
    """
    logs = [math.log(y_m) for y_m in schedule.y_points]
    if schedule.mode == ScheduleMode.PAPER_FAITHFUL:
        exponents = [FAITHFUL_LENGTH_FACTOR * schedule.k * j for j in schedule.J]
        budget = math.log(schedule.x)
    else:
        exponents = [8 * j + 2 * schedule.a(m) for m, j in enumerate(schedule.J, start=1)]
        if cap is not None:
            exponents = [min(e, cap) for e in exponents]
        budget = math.log(q) if q is not None else 2 * math.log(schedule.x)
    margin = budget - sum(e * lg for e, lg in zip(exponents, logs))
    return LengthCheck(ok=margin > 0, margin=margin, exponents=exponents)


def _desk_scaling(schedule: MollifierSchedule) -> DeskScaling:
    return schedule.scaling or DeskScaling()


def A_m(schedule: MollifierSchedule, m: int, primes: PrimeList) -> float:
    """4 sum over p in (y_{m-1}, y_m] of (2/p + 3/p^2)"""
    low, high = schedule.interval(m)
    p = primes.between(low, high).astype(np.float64)
    return float(4.0 * np.sum(2.0 / p + 3.0 / (p * p)))


def check_a_bounds(schedule: MollifierSchedule, primes: PrimeList) -> list[dict]:
    """A_1 <= 12 loglog y (+ desk slack), A_m <= 40 for m >= 2"""
    slack = _desk_scaling(schedule).a1_slack if schedule.mode == ScheduleMode.DESK else 0.0
    rows = []
    for m in range(1, schedule.M + 1):
        value = A_m(schedule, m, primes)
        bound = 12 * math.log(schedule.log_y) + slack if m == 1 else 40.0
        rows.append({"m": m, "A_m": value, "bound": bound, "ok": value <= bound})
    return rows


def check_estAJ(schedule: MollifierSchedule, primes: PrimeList) -> list[dict]:
    """10^4 (k-1)^2 A_m <= J_m, with the factor divided down in desk mode"""
    factor = EST_AJ_FACTOR
    if schedule.mode == ScheduleMode.DESK:
        factor /= _desk_scaling(schedule).est_aj_divisor
    rows = []
    for m in range(1, schedule.M + 1):
        lhs = factor * (schedule.k - 1) ** 2 * A_m(schedule, m, primes)
        rows.append({"m": m, "lhs": lhs, "J_m": schedule.J[m - 1], "ok": lhs <= schedule.J[m - 1]})
    return rows


def est_aj_audit(schedule: MollifierSchedule, primes: PrimeList) -> AuditReport:
    """check_estAJ as a verdict; the largest lhs / J_m ratio is the estimate"""
    rows = check_estAJ(schedule, primes)
    worst = max(row["lhs"] / max(row["J_m"], 1) for row in rows)
    return AuditReport(
        name="est_aj",
        estimate=worst,
        tolerance=1.0,
        verdict=verdict_of(all(row["ok"] for row in rows)),
        detail=f"{schedule.mode} mode",
        extra={"rows": rows},
    )


def interval_index(value: float, J: int, k: float) -> int:
    """
    n with |value| in I_n: I_0 = [0, J/(100k)], I_n = (J/(100k)) [2^(n-1), 2^n]
    """
    if J < 1:
        raise DomainError(f"interval index needs J >= 1, got {J=}")
    base = J / (100.0 * k)
    v = abs(value)
    if v <= base:
        return 0
    n = max(1, math.ceil(math.log2(v / base)))
    while base * 2 ** (n - 1) >= v and n > 1:
        n -= 1
    while base * 2**n < v:
        n += 1
    return n


def interval_bounds(n: int, J: int, k: float) -> tuple[float, float]:
    base = J / (100.0 * k)
    if n == 0:
        return 0.0, base
    return base * 2 ** (n - 1), base * 2**n


@dataclass(slots=True, frozen=True)
class MajorantParams:
    """
    Attributes:
        n: interval index of |Re D|
        W: inf I_n
        a: exponent a_m = 2 ceil(200 k J_m)
    """

    n: int
    W: float
    a: int
    J: int
    k: float

    @property
    def case(self) -> MajorantCase:
        if self.n == 0:
            return MajorantCase.TRUNCATED
        if self.W <= 100 * self.k * self.J:
            return MajorantCase.MIDDLE
        return MajorantCase.TAIL


def majorant_params(n: int, J: int, k: float) -> MajorantParams:
    return MajorantParams(n=n, W=interval_bounds(n, J, k)[0], a=2 * math.ceil(200 * k * J), J=J, k=k)


def params_for(value: complex, J: int, k: float) -> MajorantParams:
    return majorant_params(interval_index(complex(value).real, J, k), J, k)


def log_signed_series(x: np.ndarray, J: int, scale: float) -> np.ndarray:
    """log |sum_{j <= J} (scale x)^j / j!|, stable for large |x|"""
    u = np.atleast_1d(np.asarray(x, dtype=np.float64)) * scale
    j = np.arange(J + 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_terms = j[None, :] * np.log(np.abs(u))[:, None] - special.gammaln(j + 1)[None, :]
    log_terms[:, 0] = 0.0
    signs = np.where((u[:, None] < 0) & (j[None, :] % 2 == 1), -1.0, 1.0)
    top = log_terms.max(axis=1, keepdims=True)
    total = np.sum(signs * np.exp(log_terms - top), axis=1)
    with np.errstate(divide="ignore"):
        return top[:, 0] + np.log(np.abs(total))


def log_R_ml(D: np.ndarray, k: float, J: int) -> np.ndarray:
    return 2.0 * log_signed_series(np.real(D), J, k - 1.0)


def log_U_ml(D: np.ndarray, params: MajorantParams) -> np.ndarray:
    """log U for the case fixed by params, applied to every D given"""
    D = np.atleast_1d(np.asarray(D, dtype=np.complex128))
    if params.case == MajorantCase.TRUNCATED:
        return 2.0 * log_signed_series(np.real(D), params.J, 1.0)
    if params.W <= 0:
        raise DomainError(f"power majorant needs W > 0, got {params}")
    with np.errstate(divide="ignore"):
        power = params.a * np.log(np.abs(D) / params.W)
    if params.case == MajorantCase.MIDDLE:
        return 4.0 * params.W + power
    k, J = params.k, params.J
    prefactor = math.log(2.0) + J * math.log(k - 1.0) + J * math.log(2.0 * params.W) - math.lgamma(J + 1)
    return 2.0 / (k - 1.0) * prefactor + power


def U_ml(D: complex, params: MajorantParams) -> float:
    return float(np.exp(log_U_ml(np.array([D]), params)[0]))


def case_boundary_ratio(J: int, k: float) -> float:
    """log of U_middle / U_tail at W = 100 k J; the |D/W|^a factors cancel"""
    W = 100.0 * k * J
    tail = 2.0 / (k - 1.0) * (math.log(2.0) + J * math.log(k - 1.0) + J * math.log(2.0 * W) - math.lgamma(J + 1))
    return 4.0 * W - tail


def _log_uniform_draws(rng: np.random.Generator, J: int, k: float, draws: int) -> np.ndarray:
    base = J / (100.0 * k)
    magnitudes = np.exp(rng.uniform(math.log(base * 1e-3), math.log(400.0 * k * J), size=draws))
    real = magnitudes * rng.choice([-1.0, 1.0], size=draws)
    imag = rng.normal(scale=np.maximum(magnitudes, 1e-3), size=draws)
    return real + 1j * imag


@audited
def majorization_audit(k: float, J: int, draws: int = 1000, seed: int = 0) -> AuditReport:
    """R^(1/(k-1)) <= (1 + 10 e^-J) U on random D across every interval index"""
    rng = np.random.default_rng(seed)
    values = _log_uniform_draws(rng, J, k, draws)
    slack = math.log1p(10.0 * math.exp(-J))
    worst, worst_at, cases = -math.inf, None, set()
    for D in values:
        params = params_for(D, J, k)
        cases.add(params.case.value)
        gap = log_R_ml(np.array([D]), k, J)[0] / (k - 1.0) - log_U_ml(np.array([D]), params)[0]
        if gap > worst:
            worst, worst_at = float(gap), complex(D)
    return AuditReport(
        name="majorization",
        estimate=worst,
        tolerance=slack,
        verdict=verdict_of(worst <= slack),
        detail=f"worst log R^(1/(k-1)) - log U at D={worst_at}",
        extra={"cases": sorted(cases), "draws": draws, "J": J, "k": k},
    )


@audited
def interval_partition_audit(k: float, J: int, draws: int = 1000, seed: int = 0) -> AuditReport:
    """Every |Re D| lands in the interval its index names, and a majorant case exists"""
    rng = np.random.default_rng(seed)
    values = np.concatenate([[0.0, J / (100.0 * k)], np.abs(_log_uniform_draws(rng, J, k, draws).real)])
    misses = 0
    for v in values:
        n = interval_index(v, J, k)
        low, high = interval_bounds(n, J, k)
        if not (low <= v <= high):
            misses += 1
        majorant_params(n, J, k).case
    return AuditReport(
        name="case_totality",
        estimate=float(misses),
        tolerance=0.0,
        verdict=verdict_of(misses == 0),
        extra={"checked": int(values.size)},
    )


def _interval_phases(
    schedule: MollifierSchedule, m: int, primes: PrimeList, samples: int, seed: int
) -> tuple[np.ndarray, list[np.ndarray]]:
    low, high = schedule.interval(m)
    p = primes.between(low, high)
    return p, list(PhaseStream(p, seed).blocks(samples))


def zerocase_audit(
    table: HeckeTable,
    schedule: MollifierSchedule,
    m: int,
    l1: int,
    l2: int,
    primes: PrimeList,
    samples: int,
    seed: int,
) -> AuditReport:
    """
    E|exp(2(k-1) Re D_l1 + 2 Re D_l2) - R_l1 U_l2| with U in its truncated form,
    against e^(-J_m)
    """
    k, J = schedule.k, schedule.J[m - 1]
    p, blocks = _interval_phases(schedule, m, primes, samples, seed)
    c1 = d_coefficients(p, table, l1, schedule.log_y)
    c2 = d_coefficients(p, table, l2, schedule.log_y)
    gaps = []
    for phases in blocks:
        D1, D2 = d_from_phases(phases, *c1), d_from_phases(phases, *c2)
        exact = np.exp(2 * (k - 1) * D1.real + 2 * D2.real)
        majorant = truncated_exp(D1.real, J, k - 1) ** 2 * truncated_exp(D2.real, J) ** 2
        gaps.append(np.abs(exact - majorant))
    mean, stderr = mean_and_stderr(np.concatenate(gaps)) if gaps else (0.0, 0.0)
    bound = math.exp(-J)
    return AuditReport(
        name="zerocase",
        estimate=mean,
        stderr=stderr,
        oracle=bound,
        ratio=mean / bound,
        verdict=verdict_of(mean <= bound),
        extra={"m": m, "l1": l1, "l2": l2, "J_m": J, "primes": int(p.size)},
    )


def _log_mean(log_values: np.ndarray) -> float:
    return float(special.logsumexp(log_values) - math.log(log_values.size))


def interval_decay_audit(
    table: HeckeTable,
    schedule: MollifierSchedule,
    primes: PrimeList,
    samples: int,
    seed: int,
    m: int | None = None,
    indices: list[int] | None = None,
    shift_gaps: list[int] | None = None,
) -> AuditReport:
    """
    log E R_l1 U_l2 across interval indices n (W doubling) fitted against
    log(W + 1), and the shift decay of E R_l1 U_l2 in |l1 - l2| against its
    closed form
    """
    m = schedule.M if m is None else m
    k, J = schedule.k, schedule.J[m - 1]
    if indices is None:
        first = max(1, 1 + math.ceil(math.log2(100.0 * k / J)))
        indices = list(range(first, first + 5))
    shift_gaps = [0, 1, 2, 4] if shift_gaps is None else shift_gaps
    bound = math.floor(schedule.log_y / 2)
    shift_gaps = [g for g in shift_gaps if g <= 2 * bound] or [0]

    p, blocks = _interval_phases(schedule, m, primes, samples, seed)
    phases = np.concatenate(blocks) if blocks else np.zeros((0, 0), complex)
    D0 = d_from_phases(phases, *d_coefficients(p, table, 0, schedule.log_y))
    log_r = log_R_ml(D0, k, J)

    index_rows = []
    for n in indices:
        params = majorant_params(n, J, k)
        log_estimate = _log_mean(log_r + log_U_ml(D0, params))
        index_rows.append(
            {"n": n, "W": params.W, "case": params.case.value, "log_estimate": log_estimate,
             "log_bound": -2.0 * math.log(params.W + 1.0)}
        )
    fit = stats.linregress([math.log(r["W"] + 1.0) for r in index_rows], [r["log_estimate"] for r in index_rows])

    pf = p.astype(np.float64)
    lam2 = table.lam[p] ** 2
    shift_rows = []
    for gap in shift_gaps:
        l1, l2 = -(gap // 2), gap - gap // 2
        D1 = d_from_phases(phases, *d_coefficients(p, table, l1, schedule.log_y))
        D2 = d_from_phases(phases, *d_coefficients(p, table, l2, schedule.log_y))
        values = truncated_exp(D1.real, J, k - 1) ** 2 * truncated_exp(D2.real, J) ** 2
        mean, stderr = mean_and_stderr(values)
        cosine = np.cos(gap * np.log(pf) / schedule.log_y)
        closed = math.exp(float(np.sum(((k - 1) ** 2 + 1 + 2 * (k - 1) * cosine) * lam2 / pf)))
        shift_rows.append({"gap": gap, "estimate": mean, "stderr": stderr, "closed_form": closed})

    finite = all(math.isfinite(r["estimate"]) and r["estimate"] >= 0 for r in shift_rows)
    finite &= all(not math.isnan(r["log_estimate"]) for r in index_rows)
    return AuditReport(
        name="interval_decay",
        estimate=float(fit.slope),
        stderr=float(fit.stderr),
        oracle=-2.0,
        verdict=verdict_of(finite and fit.slope <= -1.0),
        detail="slope of log E R U against log(W + 1)",
        extra={"m": m, "indices": index_rows, "shifts": shift_rows},
    )
