"""Exception hierarchy shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain an operation is defined on."""


class ConfigError(ValueError):
    """Invalid experiment configuration.

    ``path`` is the dotted field path (``"power.p_max_dbm"``) and ``line`` the
    1-based source line when it is known.
    """

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = []
        if path:
            where.append(path)
        if line is not None:
            where.append(f"line {line}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class TrainingDivergence(RuntimeError):
    """Raised when a Q-network update produces a non-finite loss."""


class ActionSpaceTooLarge(RuntimeError):
    """Raised when a joint action space exceeds the configured cap."""

    def __init__(self, size, cap):
        self.size = size
        self.cap = cap
        super().__init__(f"joint action space {size} exceeds cap {cap}")


class CheckpointError(ValueError):
    """Checkpoint file is malformed, of the wrong version, or mismatched."""
