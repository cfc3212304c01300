"""Exception hierarchy.

Each base class maps to one CLI exit code: configuration problems exit 1,
data validation problems exit 2, runtime/numeric failures exit 3.
"""


class CodeRankError(Exception):
    exit_code = 3


class ConfigError(CodeRankError, ValueError):
    exit_code = 1


class DataError(CodeRankError, ValueError):
    exit_code = 2


class NumericError(CodeRankError, ArithmeticError):
    exit_code = 3


class RuntimeStateError(CodeRankError, RuntimeError):
    exit_code = 3


# data validation
class MalformedRecord(DataError):
    pass


class UnknownLabel(DataError, KeyError):
    def __str__(self):
        # KeyError quotes its argument; keep the plain message
        return str(self.args[0]) if self.args else ""


class DuplicateId(DataError):
    pass


class EmptyTrainingSet(DataError):
    pass


class MismatchedIds(DataError):
    pass


class EmptyLabelSet(DataError):
    pass


class EmptyDescriptor(DataError):
    pass


class EmptyVocab(DataError):
    pass


class DegenerateBatch(DataError):
    pass


class NoValidLabels(DataError):
    pass


class FingerprintMismatch(DataError):
    pass


class MissingIndex(DataError):
    pass


# configuration
class InvalidSpec(ConfigError):
    pass


class InvalidPolicy(ConfigError):
    pass


# runtime / numeric
class ShapeMismatch(RuntimeStateError):
    pass


class IndexOutOfRange(RuntimeStateError, IndexError):
    pass


class NoForwardState(RuntimeStateError):
    pass


class EmptyInput(RuntimeStateError):
    pass


class EmptyPositives(RuntimeStateError):
    pass


class ZeroVector(NumericError):
    pass


class NonFiniteActivation(NumericError):
    pass


class NonFiniteLoss(NumericError):
    pass
