"""Exception hierarchy shared across the package.

Every error carries a stable ``code`` string so CLI output stays grep-able.
"""


class SinglemError(Exception):
    """Base class for all package errors."""

    code = "E_GENERIC"


# --- container I/O ---------------------------------------------------------

class MalformedHeader(SinglemError):
    code = "E_MALFORMED_HEADER"


class PayloadSizeMismatch(SinglemError):
    code = "E_PAYLOAD_SIZE"


class NonFiniteSample(SinglemError):
    code = "E_NONFINITE_SAMPLE"


class IoFailure(SinglemError):
    code = "E_IO"


class InvalidSpec(SinglemError):
    code = "E_INVALID_SPEC"


# --- dsp -------------------------------------------------------------------

class InvalidBand(SinglemError):
    code = "E_INVALID_BAND"


class SignalTooShort(SinglemError):
    code = "E_SIGNAL_TOO_SHORT"


class EmptySignal(SinglemError):
    code = "E_EMPTY_SIGNAL"


class WrongLength(SinglemError):
    code = "E_WRONG_LENGTH"


class AmplitudeOverflow(SinglemError):
    code = "E_AMPLITUDE_OVERFLOW"


# --- tensor ops ------------------------------------------------------------

class ShapeMismatch(SinglemError):
    code = "E_SHAPE_MISMATCH"


class EvenKernel(SinglemError):
    code = "E_EVEN_KERNEL"


class HeadDivisibility(SinglemError):
    code = "E_HEAD_DIVISIBILITY"


class StateShapeMismatch(SinglemError):
    code = "E_STATE_SHAPE"


# --- encoder ---------------------------------------------------------------

class EmptySequence(SinglemError):
    code = "E_EMPTY_SEQUENCE"


class SequenceTooLong(SinglemError):
    code = "E_SEQUENCE_TOO_LONG"


# --- pretraining -----------------------------------------------------------

class PlanMismatch(SinglemError):
    code = "E_PLAN_MISMATCH"


class NoValidWindow(SinglemError):
    code = "E_NO_VALID_WINDOW"


class NonFiniteLoss(SinglemError):
    code = "E_NONFINITE_LOSS"


class CheckpointIntegrity(SinglemError):
    code = "E_CHECKPOINT_INTEGRITY"


# --- downstream ------------------------------------------------------------

class SingleClass(SinglemError):
    code = "E_SINGLE_CLASS"


class NoConvergence(SinglemError):
    code = "E_NO_CONVERGENCE"


class TooFewBins(SinglemError):
    code = "E_TOO_FEW_BINS"


class LengthMismatch(SinglemError):
    code = "E_LENGTH_MISMATCH"


class EmptyInput(SinglemError):
    code = "E_EMPTY_INPUT"


class TooFewSubjects(SinglemError):
    code = "E_TOO_FEW_SUBJECTS"
