class NdsLabError(Exception):
    """Base class for errors raised by ndslab."""


class ConfigError(NdsLabError):
    """Malformed or inconsistent configuration (CLI exit code 2)."""


class ModelError(ConfigError):
    """Structurally invalid model or degenerate scale index."""


class InfeasibleError(NdsLabError):
    pass


class AssumptionError(NdsLabError):
    """Heavy traffic, resource pooling or cost assumptions fail for a model."""


class InvariantViolation(NdsLabError):
    """A conservation or policy invariant failed during a debug-mode run."""


class MinimizerError(NdsLabError):
    pass


class EventCapExceeded(NdsLabError):
    pass
