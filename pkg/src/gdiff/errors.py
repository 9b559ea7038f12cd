"""Exception taxonomy shared across the toolkit.

Every error carries an ``exit_code`` so the CLI can map failures onto its
contract: 1 usage, 2 data error, 3 numeric failure.
"""


class GdiffError(Exception):
    exit_code = 2


class DegenerateInput(GdiffError):
    """6D input whose raw vectors vanish or are parallel."""


class InvalidRotation(GdiffError):
    """Matrix violates the rotation invariants beyond tolerance."""


class UnsupportedOrder(GdiffError):
    """Euler axis order outside the six BVH orderings."""


class InterpretationMismatch(GdiffError):
    """Pose passed with the wrong local/global flag."""


class ShapeMismatch(GdiffError):
    pass


class DegenerateBone(GdiffError):
    """Bone whose endpoints coincide; direction undefined."""


class NonPositiveScale(GdiffError):
    pass


class SequenceTooShort(GdiffError):
    pass


class LengthMismatch(GdiffError):
    pass


class NonFiniteLoss(GdiffError):
    exit_code = 3


class BadConfig(GdiffError):
    pass


class PartitionMismatch(GdiffError):
    pass


class TapeExhausted(GdiffError):
    pass


class DimensionMismatch(GdiffError):
    pass


class NonPSD(GdiffError):
    exit_code = 3


class EmptyConditionBeats(GdiffError):
    pass


class TooFewClips(GdiffError):
    pass


class UnknownTemplate(GdiffError):
    pass


class ParseError(GdiffError):
    """Malformed input file; carries the offending line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class UnsupportedChannel(GdiffError):
    pass
