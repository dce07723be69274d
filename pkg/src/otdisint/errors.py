"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class OTError(Exception):
    exit_code = 3
    kind = "error"


class InvalidParameter(OTError, ValueError):
    kind = "invalid-parameter"


class InvalidArgument(OTError, ValueError):
    kind = "invalid-argument"


class InvalidAction(OTError, ValueError):
    kind = "invalid-action"


class InvalidComparison(OTError, ValueError):
    kind = "invalid-comparison"


class NotFound(OTError, KeyError):
    kind = "not-found"

    def __str__(self):
        return Exception.__str__(self)


class CoverageFailure(OTError, ValueError):
    kind = "coverage-failure"


class MissingConditional(OTError, KeyError):
    kind = "missing-conditional"

    def __str__(self):
        return Exception.__str__(self)


class GlueMismatch(OTError, ValueError):
    kind = "glue-mismatch"


class Infeasible(OTError):
    exit_code = 2
    kind = "infeasible"


class InfeasibleClass(Infeasible):
    kind = "infeasible-class"


class ResourceLimit(OTError):
    exit_code = 4
    kind = "resource-limit"


class LoadError(OTError):
    kind = "load-error"

    def __init__(self, message, file=None, pointer=""):
        self.file = file
        self.pointer = pointer
        where = f"{file or '<memory>'}#{pointer}" if (file or pointer) else ""
        super().__init__(f"{where}: {message}" if where else message)
