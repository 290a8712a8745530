"""Exception hierarchy shared across the package."""


class CapyError(Exception):
    """Base class for all package errors."""


# notebook
class MalformedFile(CapyError):
    pass


class UnsupportedVersion(CapyError):
    pass


# gateway
class TransportError(CapyError):
    """Network/HTTP failure; retried a bounded number of times."""

    retryable = True


class ProviderError(CapyError):
    """Non-retryable API error."""


class StubExhausted(TransportError):
    """Scripted transcript has no more entries."""

    retryable = False


class StubAssertionError(ProviderError):
    """A transcript entry's expected substring was absent from the prompt."""


class EnvelopeParseError(CapyError):
    pass


# executor
class WorkerDead(CapyError):
    pass


class SpawnError(CapyError):
    pass


# critique
class InvalidConfig(CapyError):
    pass


# insights
class ExtractionError(CapyError):
    pass


# clarifier
class UnknownCell(CapyError):
    pass


# story
class StoryParseError(CapyError):
    pass


class InvalidAnchor(CapyError):
    pass


class MissingFigure(CapyError):
    pass


class UnknownBlock(CapyError):
    pass
