"""Exception hierarchy shared across the package."""


class BPRMError(Exception):
    """Base class for all package errors."""


class ConfigError(BPRMError):
    """Invalid configuration value."""


class DomainError(BPRMError, ValueError):
    """Argument outside the support of a density or generator."""


class DegenerateRange(DomainError):
    pass


class DataError(BPRMError):
    """Dataset failed validation.

    ``record_ids`` lists every offending record.
    """

    def __init__(self, message, record_ids=()):
        self.record_ids = list(record_ids)
        if self.record_ids:
            shown = ", ".join(str(r) for r in self.record_ids[:10])
            more = "" if len(self.record_ids) <= 10 else f" (+{len(self.record_ids) - 10} more)"
            message = f"{message}: {shown}{more}"
        super().__init__(message)


class NonPositiveTime(DataError):
    pass


class EntryAfterExit(DataError):
    pass


class NegativeContinuousExposure(DataError):
    pass


class BadCategoryIndex(DataError):
    pass


class CapExceeded(BPRMError):
    """The slice sampler needed more represented clusters than allowed."""


class EmptySliceSet(BPRMError):
    """No cluster passes the slice test for some individual (internal bug)."""


class EmptySample(BPRMError, ValueError):
    pass


class LengthMismatch(BPRMError, ValueError):
    pass


class DegenerateMatrix(BPRMError, ValueError):
    pass


class TooShort(BPRMError, ValueError):
    pass
