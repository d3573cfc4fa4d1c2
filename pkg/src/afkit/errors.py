"""Exception types shared across the pipeline.

Each stage raises the most specific class that applies; the CLI maps them
onto its exit-code contract (2 bad input, 3 empty pipeline, 4 training
failure, 5 artifact mismatch).
"""


class AfkitError(Exception):
    """Base class for all afkit-specific failures."""


class MissingFile(AfkitError, FileNotFoundError):
    pass


class MalformedSidecar(AfkitError, ValueError):
    pass


class SampleCountMismatch(AfkitError, ValueError):
    pass


class OverlappingAnnotations(AfkitError, ValueError):
    pass


class IoFailure(AfkitError, OSError):
    pass


class DuplicateRecordId(AfkitError, ValueError):
    pass


class UnknownSplit(AfkitError, ValueError):
    pass


class TooShort(AfkitError, ValueError):
    pass


class TooFewPeaks(AfkitError, ValueError):
    pass


class ShapeMismatch(AfkitError, ValueError):
    pass


class DegenerateBatch(AfkitError, ValueError):
    pass


class InvalidConfig(AfkitError, ValueError):
    pass


class ConfigMismatch(AfkitError, ValueError):
    pass


class EmptySplit(AfkitError, ValueError):
    pass


class NoPositives(AfkitError, ValueError):
    pass


class OneClassOnly(AfkitError, ValueError):
    pass


class LengthMismatch(AfkitError, ValueError):
    pass


class EmptyInput(AfkitError, ValueError):
    pass


class TooFewRecords(AfkitError, ValueError):
    pass


class EmptySample(AfkitError, ValueError):
    pass


class InvalidSpec(AfkitError, ValueError):
    pass


class TrainingDiverged(AfkitError, RuntimeError):
    pass
