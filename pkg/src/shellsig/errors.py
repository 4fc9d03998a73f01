"""Exception hierarchy shared by every stage of the pipeline."""


class SignatureError(Exception):
    """Base class for data errors raised by shellsig (CLI exit status 1)."""


# imgcore
class ConstantImage(SignatureError):
    pass


class NoInk(SignatureError):
    pass


class OutOfBounds(SignatureError):
    pass


class DimensionMismatch(SignatureError, ValueError):
    pass


# datasetkit
class EmptyDataset(SignatureError):
    pass


class UnknownLayout(SignatureError):
    pass


class TooFewWriters(SignatureError):
    pass


class InsufficientSignatures(SignatureError):
    pass


class MissingDataset(SignatureError):
    pass


# neuralcore / metriclearn
class ShapeMismatch(SignatureError, ValueError):
    pass


class BatchTooSmall(SignatureError):
    pass


class GraphNotRecorded(SignatureError):
    pass


class ZeroVector(SignatureError, ValueError):
    pass


class EmptyManifest(SignatureError):
    pass


class DivergedLoss(SignatureError):
    pass


class ArchMismatch(SignatureError):
    pass


class CheckpointError(SignatureError):
    pass


# evalkit
class EmptyInput(SignatureError, ValueError):
    pass


class OneClassOnly(SignatureError, ValueError):
    pass
