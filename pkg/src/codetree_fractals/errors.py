"""Exception hierarchy.

Every error carries the CLI exit code it maps to: 2 config/usage,
3 resource bound, 4 numeric contract violation, 5 estimator precondition.
"""


class CodeTreeError(Exception):
    exit_code = 4


class ConfigError(CodeTreeError, ValueError):
    exit_code = 2


class SingularMatrix(CodeTreeError, ValueError):
    pass


class NegativeAlpha(CodeTreeError, ValueError):
    pass


class AlphaOutOfRange(CodeTreeError, ValueError):
    pass


class DimensionUnsupported(CodeTreeError, ValueError):
    pass


class InvalidAddress(CodeTreeError, ValueError):
    exit_code = 2


class UnknownLabel(ConfigError):
    pass


class UnknownSlot(ConfigError):
    pass


class UnknownExample(ConfigError):
    pass


class NotStochastic(ConfigError):
    pass


class NotErgodic(ConfigError):
    pass


class BadDistribution(ConfigError):
    pass


class BadRatio(ConfigError):
    pass


class NotSimilarity(ConfigError):
    pass


class NotNecked(CodeTreeError, ValueError):
    pass


class EnumerationTooLarge(CodeTreeError):
    exit_code = 3

    def __init__(self, bound, limit):
        self.bound = bound
        self.limit = limit
        super().__init__(f"enumeration of {bound:.4g} words exceeds the limit {limit:.4g}")


class NotDecreasing(CodeTreeError, ValueError):
    pass


class NoSignChange(CodeTreeError, ValueError):
    pass


class ScaleTooFine(CodeTreeError, ValueError):
    exit_code = 5
