"""Exception hierarchy shared across the package.

Three top-level families map onto the CLI exit codes: validation errors
(exit 2), I/O errors (exit 3), and checkpoint version mismatches (exit 4).
"""


class SpecAdaptError(Exception):
    """Base class for all package errors."""


class ValidationError(SpecAdaptError):
    """A precondition or input-contract violation."""


class InputOutputError(SpecAdaptError):
    """A filesystem or decoding failure."""


class CheckpointVersionMismatch(SpecAdaptError):
    """A checkpoint was written by an incompatible format version."""


# --- audio ingestion / spectrogram frontend ---

class UnreadableFile(InputOutputError):
    pass


class UnsupportedFormat(ValidationError):
    pass


class EmptyAudio(ValidationError):
    pass


class TooShort(ValidationError):
    pass


class EmptySpectrogram(ValidationError):
    pass


class GapOrOverlap(ValidationError):
    pass


class FrameCountMismatch(ValidationError):
    pass


# --- domain encoders ---

class DimMismatch(ValidationError):
    pass


class SingleClassDataset(ValidationError):
    pass


class TooFewUtterances(ValidationError):
    pass


class NoParallelData(ValidationError):
    pass


class HeldOutCoversAll(ValidationError):
    pass


class RaggedChannelSets(ValidationError):
    pass


class TooFewChannels(ValidationError):
    pass


class NegativeSigma(ValidationError):
    pass


# --- networks ---

class ShapeMismatch(ValidationError):
    pass


class EmptyBatch(ValidationError):
    pass


# --- objectives ---

class ProbabilityOutOfRange(ValidationError):
    pass


class LayerMismatch(ValidationError):
    pass


class EmptyQuerySet(ValidationError):
    pass


# --- pipeline ---

class EmptyManifest(ValidationError):
    pass


class EncoderDimMismatch(ValidationError):
    pass


class EmptyPairs(ValidationError):
    pass


# --- analysis ---

class DegenerateTable(ValidationError):
    pass


class KOutOfTabulatedRange(ValidationError):
    pass


class MissingCheckpoints(ValidationError):
    pass


class UnknownVariant(ValidationError):
    pass
