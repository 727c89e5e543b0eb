"""
Exception hierarchy and CLI exit codes
"""

EXIT_OK = 0
EXIT_INPUT_ERROR = 2
EXIT_NOT_CONVERGED = 3
EXIT_INVARIANT_FAILURE = 4


class PatternMiningError(Exception):
    """Base class for every error raised by this package"""

    exit_code = EXIT_INVARIANT_FAILURE


class InputError(PatternMiningError, ValueError):
    """Unreadable, missing or malformed input"""

    exit_code = EXIT_INPUT_ERROR


class SchemaError(InputError):
    """Input readable but does not match the expected columns / layout"""


class EstimationError(PatternMiningError, ValueError):
    """Threshold estimation impossible (e.g. no gaps observed)"""

    exit_code = EXIT_INPUT_ERROR


class BuildError(PatternMiningError, ValueError):
    """Segment tree cannot be built from the given sequences"""

    exit_code = EXIT_INPUT_ERROR


class CombineError(PatternMiningError, ValueError):
    """Distance matrices that cannot be recombined"""


class QueryError(PatternMiningError, ValueError):
    """Window bounds outside the day axis"""

    exit_code = EXIT_INPUT_ERROR


class OracleError(PatternMiningError, ValueError):
    """Exhaustive search refused (instance too large)"""

    exit_code = EXIT_INPUT_ERROR


class ContractViolation(PatternMiningError, RuntimeError):
    """An internal invariant does not hold"""


class ConvergenceError(PatternMiningError, RuntimeError):
    """Affinity propagation did not converge and strict mode was requested"""

    exit_code = EXIT_NOT_CONVERGED
