"""Exception hierarchy.

Every error raised on purpose by this package derives from ``CrowdDSSError``
so the CLI can map it to exit status 1.
"""


class CrowdDSSError(Exception):
    pass


# ingestion / validation
class ValidationError(CrowdDSSError):
    pass


class ReferentialIntegrityError(ValidationError):
    pass


class InvariantViolation(ValidationError):
    pass


class DuplicateRegistrationError(ValidationError):
    pass


class UnknownTechnologyError(ValidationError):
    pass


# labeling
class NotRegisteredError(CrowdDSSError):
    pass


class TaskStillOpenError(CrowdDSSError):
    pass


# persistence
class IoFailure(CrowdDSSError):
    pass


class FormatVersionMismatch(CrowdDSSError):
    pass


# features
class UnknownTaskError(CrowdDSSError):
    pass


class NotEnoughDataError(CrowdDSSError):
    def __init__(self, message, day=None):
        super().__init__(message)
        self.day = day


# learners
class EmptyTrainingSetError(CrowdDSSError):
    pass


class InvalidParamsError(CrowdDSSError):
    pass


class ShapeMismatchError(CrowdDSSError):
    pass


class EmptyGridError(CrowdDSSError):
    pass


# decisions
class MixedSubjectsError(CrowdDSSError):
    pass


class UnregisteredWorkerError(CrowdDSSError):
    pass


class TaskTooShortError(CrowdDSSError):
    pass


# metrics
class LengthMismatchError(CrowdDSSError):
    pass


class EmptyInputError(CrowdDSSError):
    pass


class NoWinnersError(CrowdDSSError):
    pass


class NotEnoughRankedError(CrowdDSSError):
    pass


class IncompleteCoverageError(CrowdDSSError):
    pass


class NoMonitoredTasksError(CrowdDSSError):
    pass


# generator
class InvalidConfigError(CrowdDSSError):
    pass
