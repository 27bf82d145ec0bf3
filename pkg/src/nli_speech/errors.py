"""Exception types shared across the pipeline.

Everything raised here is a domain error: bad data, bad configuration, or a
diverged computation. The CLI maps any PipelineError to exit code 1.
"""


class PipelineError(Exception):
    """Base class for recoverable domain errors."""


class AudioFormatError(PipelineError):
    """Malformed WAV container or an encoding we do not decode."""


class EmptyClipError(PipelineError):
    """WAV file with a zero-length data chunk."""


class SegmentTooShortError(PipelineError):
    """Audio segment shorter than one analysis frame."""


class FeatureConfigError(PipelineError):
    """MFCC configuration that cannot produce a valid filterbank."""


class DatasetError(PipelineError):
    """Dataset construction, splitting, or balancing failure."""


class ShapeMismatchError(PipelineError):
    """Tensor shape incompatible with a layer's parameters."""


class ModelConfigError(PipelineError):
    """Architecture that cannot be built for the given input shape."""


class TrainingDivergedError(PipelineError):
    """Non-finite loss encountered during training."""


class ExperimentError(PipelineError):
    """Experiment grid could not produce any results."""
