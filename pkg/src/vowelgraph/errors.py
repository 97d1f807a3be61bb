"""Exception hierarchy shared across the pipeline stages."""


class VowelGraphError(Exception):
    """Base class for all library errors."""


class WavFormatError(VowelGraphError):
    pass


class UnsupportedEncodingError(VowelGraphError):
    pass


class TooShortError(VowelGraphError):
    pass


class DegenerateSignalError(VowelGraphError):
    pass


class InvalidInputError(VowelGraphError, ValueError):
    pass


class PoleOnUnitCircleError(VowelGraphError):
    def __init__(self, bin_index: int):
        super().__init__(f"LPC denominator vanishes at bin {bin_index}")
        self.bin_index = bin_index


class DegenerateProfileError(VowelGraphError):
    def __init__(self, index: int):
        super().__init__(f"profile {index} has zero variance")
        self.index = index


class UndefinedMetricError(VowelGraphError):
    pass


class DisconnectedGraphError(VowelGraphError):
    pass


class InsufficientDataError(VowelGraphError):
    pass


class IncompleteVowelError(VowelGraphError):
    pass


class DegenerateLabelsError(VowelGraphError):
    pass


class ExactInfeasibleError(VowelGraphError):
    pass


class InvalidProfileError(VowelGraphError):
    pass


class StageError(VowelGraphError):
    """Wraps a failure inside one pipeline stage so reports can name it."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
