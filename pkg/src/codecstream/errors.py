"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command-line front end:
2 for malformed input, 3 for invalid configuration, 4 for internal
invariant violations.
"""


class CodecStreamError(Exception):
    exit_code = 4


class InputError(CodecStreamError, ValueError):
    exit_code = 2


class ConfigError(CodecStreamError, ValueError):
    exit_code = 3


class MalformedRecord(InputError):
    pass


class NonMonotonicPts(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class EmptyTrace(InputError):
    pass


class OutOfRange(InputError):
    pass


class EmptyGroundTruth(InputError):
    pass


class NoTimestampsFound(InputError):
    pass


class InvalidSpec(ConfigError):
    pass


class InsufficientBudget(ConfigError):
    pass


class MaskTooLarge(ConfigError):
    pass


class InvariantViolation(CodecStreamError):
    exit_code = 4
