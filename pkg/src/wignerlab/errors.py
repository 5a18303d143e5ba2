"""Exception hierarchy shared by every module."""


class WignerLabError(Exception):
    """Base class for all errors raised by wignerlab."""


class DuplicateLabel(WignerLabError, ValueError):
    pass


class DimTooSmall(WignerLabError, ValueError):
    pass


class TooLarge(WignerLabError, ValueError):
    pass


class ZeroVector(WignerLabError, ValueError):
    pass


class LengthMismatch(WignerLabError, ValueError):
    pass


class LabelClash(WignerLabError, ValueError):
    pass


class NotUnitary(WignerLabError, ValueError):
    pass


class NotHermitian(WignerLabError, ValueError):
    pass


class UnknownTarget(WignerLabError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "unknown target"


class InvalidBasis(WignerLabError, ValueError):
    pass


class NothingKept(WignerLabError, ValueError):
    pass


class ProbabilitySumInvalid(WignerLabError, ValueError):
    pass


class RegisterMismatch(WignerLabError, ValueError):
    pass


class InvalidScenario(WignerLabError, ValueError):
    """Raised when a scenario fails structural validation.

    ``issues`` carries the full diagnostic list from ``validate_scenario``.
    """

    def __init__(self, issues):
        self.issues = list(issues)
        text = "; ".join(str(i) for i in self.issues) or "invalid scenario"
        super().__init__(text)


class InvalidPolicy(WignerLabError, ValueError):
    pass


class PolicyHasNoOutcomes(WignerLabError, ValueError):
    pass


class MissingAgent(WignerLabError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "missing agent"


class TooManyBranches(WignerLabError, RuntimeError):
    pass
