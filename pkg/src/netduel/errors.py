"""Error taxonomy shared across the package.

Exit-code mapping used by the CLI: configuration errors exit 2, generation
and other runtime errors exit 3, unconverged analytics under --strict exit 4.
"""


class ConfigurationError(ValueError):
    """A parameter set is invalid or inconsistent before any work starts."""


class GenerationError(RuntimeError):
    """Topology construction failed; carries the number of attempts made."""

    def __init__(self, message: str, attempts: int = 0):
        super().__init__(message)
        self.attempts = attempts
