"""Exception hierarchy shared across the toolkit."""


class DynlabError(Exception):
    """Base class for all toolkit errors."""


class InvalidStateError(DynlabError):
    """A state vector contains NaN/Inf or has the wrong dimension."""


class DegenerateParametersError(DynlabError):
    """Parameters make the requested operation ill-defined (e.g. E = 0)."""


class IntegrationError(DynlabError):
    """Base for integration failures; carries the last valid point."""

    def __init__(self, message, t=None, last_state=None):
        super().__init__(message)
        self.t = t
        self.last_state = last_state


class StiffnessError(IntegrationError):
    """Step-size control demanded a step below h_min."""


class BlowUpError(IntegrationError):
    """A state component exceeded the divergence threshold or went non-finite."""


class StepBudgetError(IntegrationError):
    """max_steps was exhausted before reaching the end time."""


class NotOnLimitSetError(DynlabError):
    """Initial state violates the bilinear constraint y1*y5 - y2*y4 = 0."""


class RatioInconsistencyError(DynlabError):
    """The two proportionality ratios disagree beyond tolerance."""


class DimensionMismatchError(DynlabError):
    """Trajectory or state dimension differs from what the operation expects."""


class ConfigError(DynlabError):
    """Run configuration is malformed, incomplete, or has unknown keys."""
