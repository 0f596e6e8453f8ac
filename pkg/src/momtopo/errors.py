"""Exception types raised across the package."""


class AliasingError(ValueError):
    """Relative rotation between two pose samples is too large to differentiate."""


class JointLimitError(ValueError):
    """A joint coordinate lies outside its configured limits."""


class DivergenceError(RuntimeError):
    """The simulator produced a non-finite state."""

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"non-finite simulator state at step {step}")


class TrialFormatError(ValueError):
    """A trial file could not be parsed or failed validation."""

    def __init__(self, message, line=None, offset=None):
        self.line = line
        self.offset = offset
        where = []
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"byte offset {offset}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
