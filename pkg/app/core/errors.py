"""
Error types shared by the coordinator, the device agents and the simulators.

Every failure mode that crosses a module boundary has its own class so callers
can decide between "record and continue" (agents, rounds, trials) and
"surface to the user" (CLI, HTTP endpoints).
"""


class LLMindError(Exception):
    """Base class for all framework errors."""


# Corpus


class MalformedDocumentError(LLMindError):
    """Raised when a profile document is not parseable JSON."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class CorpusValidationError(LLMindError):
    """Raised when a profile violates the corpus schema."""


class ProfileIdentityError(LLMindError):
    """Raised when a profile update targets a different device."""


# Retrieval


class ProviderUnavailableError(LLMindError):
    """Raised when an embedding, extraction or planning backend fails."""


class IncompatibleVectorsError(LLMindError):
    """Raised when vectors or index entries come from different providers or dimensions."""


class NoCandidatesError(LLMindError):
    """Raised when matching against an empty index."""


# Code generation


class ExtractionArityError(LLMindError):
    """Raised when the number of extracted values differs from the function arity."""


class ArgumentTypeError(LLMindError):
    """Raised when a value does not parse under the declared parameter type."""


class CompositionError(LLMindError):
    """Raised when a call plan cannot be composed from the given arguments."""


class ArgumentRangeError(CompositionError):
    """Raised when a numeric argument falls outside the declared range."""

    def __init__(self, parameter: str, value: str, bounds: tuple[float, float]):
        super().__init__(
            f"Argument {parameter}={value} outside range [{bounds[0]}, {bounds[1]}]"
        )
        self.parameter = parameter


class TemplateError(LLMindError):
    """Raised when a code template does not hold exactly one call-site placeholder."""


# Agent / coordinator


class AddressingError(LLMindError):
    """Raised when a subtask is delivered to the wrong device."""


class InstructionValidationError(LLMindError):
    """Raised for empty or otherwise unusable instructions."""


class ConfigurationError(LLMindError):
    """Raised when required configuration is missing or inconsistent."""


# Transport


class ProtocolError(LLMindError):
    """Raised when a wire line cannot be decoded into a message."""

    def __init__(self, message: str, raw: bytes = b""):
        super().__init__(message)
        self.raw = raw


class FramingError(ProtocolError):
    """Raised for oversized or truncated lines."""


class TransportError(LLMindError):
    """Raised when an endpoint cannot be reached."""


# Devices


class DeviceDispatchError(LLMindError):
    """Raised when a device does not expose the requested function."""


class DevicePreconditionError(LLMindError):
    """Raised when a device function is called in a state that forbids it."""


class DeviceCapabilityError(LLMindError):
    """Raised when the hardware cannot perform the requested function."""
