from __future__ import annotations


class ModelError(ValueError):
    """Invalid environment model or simplex point."""


class IntegrationError(RuntimeError):
    """Numerical integration left the admissible state space."""

    def __init__(self, message: str, state=None):
        super().__init__(message)
        self.state = state


class ConfigError(ValueError):
    """Configuration failed schema validation."""

    def __init__(self, message: str, pointer: str = ""):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer or "/"
