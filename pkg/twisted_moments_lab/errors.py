class LabError(Exception):
    pass


class CapacityError(LabError):
    pass


class DomainError(LabError):
    pass


class DivergenceError(LabError):
    pass


class PreconditionError(LabError):
    pass


class LengthConditionError(PreconditionError):
    pass


class FactorRangeError(PreconditionError):
    pass


class NotPrimeError(LabError):
    pass


class SingularFactorError(LabError):
    def __init__(self, prime: int, modulus: float):
        super().__init__(f"local Euler factor at {prime=} is singular ({modulus=:.3e})")
        self.prime = prime
        self.modulus = modulus


class ScheduleError(LabError):
    pass


class CacheFormatError(LabError):
    pass


class AuditFailedError(LabError):
    def __init__(self, check: str, detail: str = ""):
        super().__init__(f"audit {check} did not meet tolerance {detail}".strip())
        self.check = check
