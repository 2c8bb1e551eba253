"""Exception types shared across the toolkit."""


class ToolError(Exception):
    """Base for recoverable input failures; the CLI maps these to exit code 2."""


class FormatError(ToolError):
    """A file exists but its bytes do not parse as the expected format."""


class DataError(ToolError):
    """Parsed or supplied data violates an invariant (NaN flow, label overflow, ...)."""
