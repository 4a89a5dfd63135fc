class HypothesisViolation(ValueError):
    """A standing dissipativity/spectral assumption fails at construction time."""


class BasisMismatch(ValueError):
    """Two fields (or a field and an operator) do not share a spectral basis."""


class ConfigError(ValueError):
    """Experiment configuration is unparseable or names unknown keys."""
