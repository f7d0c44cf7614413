"""
Schur-VarPro Enums

Shared enumerations for variable kinds, solver methods and process exit codes.

The string values of the str-backed enums appear on the command line and in
report files; the integer values of ExitCode are part of the CLI contract.
Changing either breaks scripts built on top of this package.
"""
import enum

__all__ = ["BlockKind", "Method", "RecoverMode", "Termination", "PreconditionerMode", "TcgStop", "ExitCode"]


class BlockKind(enum.IntEnum):
    # Row order in X follows the integer order
    ROTATION = 0
    UNIT_VECTOR = 1
    POINT = 2

    @property
    def constrained(self) -> bool:
        return self is not BlockKind.POINT


class Method(str, enum.Enum):
    OURS = "ours"
    ORIGINAL = "original"
    ORIGINAL_VARPRO = "original-varpro"


class RecoverMode(str, enum.Enum):
    ANCHORED = "anchored"
    MIN_NORM = "min_norm"


class Termination(str, enum.Enum):
    GRADIENT = "gradient"
    MAX_ITERS = "max_iters"
    TIMEOUT = "timeout"


class PreconditionerMode(str, enum.Enum):
    REDUCED = "reduced"  # pad input with zeros, truncate output to the constrained rows
    FULL = "full"


class TcgStop(str, enum.Enum):
    NEGATIVE_CURVATURE = "negative_curvature"
    EXCEEDED_TR = "exceeded_trust_region"
    LINEAR = "reached_target_linear"
    SUPERLINEAR = "reached_target_superlinear"
    MAX_INNER = "max_inner_iterations"
    MODEL_INCREASED = "model_increased"


class ExitCode(enum.IntEnum):
    OK = 0
    ERROR = 1
    BUDGET = 2  # solve stopped on max_iters or timeout
    USAGE = 64  # sysexits EX_USAGE
    DATA = 65  # sysexits EX_DATAERR
