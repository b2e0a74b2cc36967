from dataclasses import dataclass
from importlib import metadata
from typing import Any

from pydantic import BaseModel, Field

from .constants import DISTRIBUTION, FALLBACK_VERSION, ScheduleMode, Verdict


def package_version() -> str:
    try:
        return metadata.version(DISTRIBUTION)
    except metadata.PackageNotFoundError:
        return FALLBACK_VERSION


def verdict_of(passed: bool) -> Verdict:
    return Verdict.PASS if passed else Verdict.FAIL


@dataclass(slots=True, frozen=True)
class PrimeSumRow:
    x: float
    sum: float
    reference: float
    residual: float


class IdentityReport(BaseModel):
    """Worst residual of an exact identity over a finite range"""

    name: str
    max_residual: float
    tolerance: float
    worst_at: int | None = None
    checked: int = 0
    verdict: Verdict
    detail: str = ""


class AuditReport(BaseModel):
    """
    Outcome of a measured check

    Attributes:
        estimate: the computed quantity (MC mean, measured ratio, residual, ...)
        stderr: standard error of the estimate when it is random
        oracle: the independent reference value
        ratio: estimate relative to the bound or oracle, when meaningful
        extra: per-case rows and secondary numbers
    """

    name: str
    estimate: float
    stderr: float | None = None
    oracle: float | None = None
    ratio: float | None = None
    tolerance: float | None = None
    verdict: Verdict
    detail: str = ""
    extra: dict[str, Any] = Field(default_factory=dict)


class MomentReport(BaseModel):
    q: int
    x: int
    k: float
    s_k: float
    normalized: float
    principal: float
    second_moment_check: float
    beyond_sqrt: bool = False
    runtime_ms: float | None = None


class GrowthFit(BaseModel):
    slope: float
    intercept: float
    stderr: float
    ci_low: float
    ci_high: float
    reference_slope: float
    points: int


class Provenance(BaseModel):
    version: str = Field(default_factory=package_version)
    mode: ScheduleMode | None = None
    seed: int | None = None
    parameters: dict[str, Any] = Field(default_factory=dict)


class LabReport(BaseModel):
    provenance: Provenance
    audits: list[AuditReport | IdentityReport] = Field(default_factory=list)
    data: dict[str, Any] = Field(default_factory=dict)

    @property
    def verdict(self) -> Verdict:
        return verdict_of(all(audit.verdict == Verdict.PASS for audit in self.audits))

    @property
    def detail(self) -> str:
        return ", ".join(a.name for a in self.audits if a.verdict == Verdict.FAIL)

    def to_dic(self) -> dict:
        payload = self.model_dump(mode="json")
        payload["verdict"] = str(self.verdict)
        return payload
