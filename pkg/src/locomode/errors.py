"""Exception types raised across the pipeline."""


class LocomodeError(Exception):
    """Base class for every error raised by this package."""


# corpus
class MissingChannel(LocomodeError):
    pass


class BadLabel(LocomodeError):
    pass


class NonMonotonicTime(LocomodeError):
    pass


class NonFiniteSample(LocomodeError):
    pass


class TooShort(LocomodeError):
    pass


class EmptyInput(LocomodeError):
    pass


class ChannelMismatch(LocomodeError):
    pass


# features / lda
class TooFewFrames(LocomodeError):
    pass


class InsufficientSamples(LocomodeError):
    pass


class DimensionMismatch(LocomodeError):
    pass


# lstm
class ShapeMismatch(LocomodeError):
    pass


class MixedShapes(LocomodeError):
    pass


class NonFiniteLoss(LocomodeError):
    pass


class NonFiniteParameter(LocomodeError):
    pass


# evaluation
class LengthMismatch(LocomodeError):
    pass


class CohortTooSmall(LocomodeError):
    pass


class TrialCountTooSmall(LocomodeError):
    pass


# synthgen
class BadCircuit(LocomodeError):
    pass


class IoFailure(LocomodeError):
    pass


# config
class ConfigError(LocomodeError):
    pass


class UnknownKey(ConfigError):
    def __init__(self, key):
        super().__init__(f"unknown config key: {key!r}")
        self.key = key


class MissingRequired(ConfigError):
    def __init__(self, key):
        super().__init__(f"missing required config key: {key!r}")
        self.key = key


class ConfigTypeError(ConfigError, TypeError):
    pass


class ModelFormatError(LocomodeError):
    pass


class SingularCovariance(LocomodeError):
    pass
