import os
from pathlib import Path

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from .constants import (
    LEMMA_ALIASES,
    LemmaCheck,
    PrimeSumKind,
    ScheduleMode,
    Subcommand,
    XRule,
)

DATA_DIR = Path(__file__).parent / "data"


class LabSettings(BaseSettings):
    """
    Process-wide settings, read from TML_* environment variables

    Attributes:
        threads: worker threads for sweeps (TML_THREADS)
        hecke_limit: table bound N when `hecke` gets no --limit
        max_hecke_limit: memory budget for the eta expansion
        max_sieve_bound: largest bound sieve() accepts
        sieve_segment: numbers per sieve segment
        max_modulus: largest prime modulus for the character kernel
        constants_path: fixtures file with b1, b2 and L(1, sym^2 f)
        record_runtime: fill the runtime_ms CSV column; off keeps reruns byte-identical
    """

    model_config = SettingsConfigDict(env_prefix="TML_", env_file=".env", extra="ignore")

    threads: int = Field(default_factory=lambda: os.cpu_count() or 1, ge=1)
    log_level: str = "INFO"
    hecke_limit: int = Field(default=1_000_000, ge=1)
    max_hecke_limit: int = Field(default=5_000_000, ge=1)
    max_sieve_bound: int = Field(default=10**9, ge=2)
    sieve_segment: int = Field(default=2**20, ge=1024)
    max_modulus: int = Field(default=20_000_000, ge=3)
    constants_path: Path = DATA_DIR / "constants.json"
    record_runtime: bool = False


class DeskScaling(BaseModel):
    """
    Divisors that turn the proof's constants into desk-scale surrogates

    Attributes:
        c0_divisor: y = x^(c0_divisor / C0) instead of x^(1/C0)
        jm_divisor: J_M = C0 / (jm_divisor * k) instead of C0 / (10^5 k)
        length_exponent_cap: cap on 8 J_m + 2 a_m in the polynomial length check
        est_aj_divisor: 10^4 (k-1)^2 A_m <= J_m is checked as
            (10^4 / est_aj_divisor) (k-1)^2 A_m <= J_m
        a1_slack: additive slack in A_1 <= 12 loglog y
    """

    model_config = ConfigDict(frozen=True)

    c0_divisor: float = Field(default=10.0, gt=0)
    jm_divisor: float = Field(default=10.0, gt=0)
    length_exponent_cap: float = Field(default=4.0, gt=0)
    est_aj_divisor: float = Field(default=1e4, gt=0)
    a1_slack: float = Field(default=8.0, ge=0)


class RunConfig(BaseModel):
    """Validated parameters of one CLI invocation"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    subcommand: Subcommand
    out: Path | None = None
    hecke_cache: Path | None = None
    plot: Path | None = None

    limit: int | None = Field(default=None, ge=1)
    kind: PrimeSumKind | None = None
    x_max: float | None = Field(default=None, ge=2)
    points: int = Field(default=12, ge=1)

    q_range: tuple[int, int] | None = None
    q_count: int | None = Field(default=None, ge=1)
    q: int | None = Field(default=None, ge=3)
    k: float | None = None
    x_rule: XRule = XRule.SQRT
    x: float | None = Field(default=None, ge=1)
    j: int = Field(default=1, ge=0)
    y: float | None = Field(default=None, ge=2)

    c0: float | None = None
    mode: ScheduleMode = ScheduleMode.DESK
    lemma: LemmaCheck | None = None
    samples: int = Field(default=10_000, ge=1)
    seed: int = Field(default=0, ge=0, lt=2**64)

    @field_validator("lemma", mode="before")
    @classmethod
    def parse_lemma(cls, value):
        return LEMMA_ALIASES.get(value, value) if isinstance(value, str) else value

    @field_validator("q_range", mode="before")
    @classmethod
    def parse_q_range(cls, value):
        if value is None or isinstance(value, tuple):
            return value
        low, sep, high = str(value).partition(":")
        if not sep:
            raise ValueError(f"--q-range must look like A:B, got {value!r}")
        return int(float(low)), int(float(high))

    @field_validator("q_range")
    @classmethod
    def check_q_range(cls, value):
        if value is not None:
            low, high = value
            if low < 3 or high < low:
                raise ValueError(f"--q-range needs 3 <= A <= B, got {low}:{high}")
        return value

    @model_validator(mode="after")
    def check_subcommand_parameters(self) -> "RunConfig":
        match self.subcommand:
            case Subcommand.PRIMES:
                self._require("kind", "x_max")
            case Subcommand.MOMENTS:
                self._require("q_range", "k")
                self._check_k()
                if self.x_rule == XRule.FIXED:
                    self._require("x")
            case Subcommand.RMF_VERIFY:
                self._require("lemma")
            case Subcommand.MOLLIFIER_CHECK:
                self._require("x", "k", "c0")
                self._check_k()
                if self.x is not None and self.x < 16:
                    raise ValueError(f"--x must be at least 16, got {self.x}")
                if self.c0 is not None and self.c0 <= 1:
                    raise ValueError(f"--c0 must exceed 1, got {self.c0}")
            case Subcommand.TRANSFER_CHECK:
                self._require("q", "x", "k")
                self._check_k()
        return self

    def _require(self, *names: str) -> None:
        for name in names:
            if getattr(self, name) is None:
                flag = "--" + name.replace("_", "-")
                raise ValueError(f"{self.subcommand} requires {flag}")

    def _check_k(self) -> None:
        if self.k is not None and self.k < 2:
            raise ValueError(f"--k must be at least 2, got {self.k}")

    def parameters(self) -> dict:
        return self.model_dump(
            mode="json", exclude={"subcommand", "out", "hecke_cache", "plot"}, exclude_none=True
        )
