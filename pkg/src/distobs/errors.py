"""Exception hierarchy shared by all toolkit modules.

Every error raised on a documented failure path derives from DistObsError,
so callers can catch one base class at the boundary.  The command line
layer maps each subclass to a fixed process exit code.
"""


class DistObsError(Exception):
    """Base class for all toolkit errors."""


class ModelFormatError(DistObsError):
    """Model or gain file failed to parse or violates a structural invariant."""


class EigensolverError(DistObsError):
    """Dense eigensolver failed to converge on a finite input."""


class AssumptionError(DistObsError):
    """A structural assumption required for observer design does not hold.

    Covers failures of joint detectability across the sensor set and of the
    per-agent column independence condition.  ``agents`` and ``modes`` name
    the offending agents (1-based) and (eigenvalue, miniblock) labels.
    """

    def __init__(self, message, *, agents=(), modes=()):
        super().__init__(message)
        self.agents = tuple(agents)
        self.modes = tuple(modes)


class GainSynthesisError(DistObsError):
    """Output injection design failed to converge or to stabilize an agent."""

    def __init__(self, message, *, agent=None):
        super().__init__(message)
        self.agent = agent


class InfeasibleGainError(DistObsError):
    """No scalar coupling gain satisfies a mode's spectral inequality.

    ``modes`` lists the infeasible (eigenvalue, miniblock) labels and
    ``diagnostics`` optionally carries per-mode reachability reports.
    """

    def __init__(self, message, *, modes=(), diagnostics=None):
        super().__init__(message)
        self.modes = tuple(modes)
        self.diagnostics = diagnostics


class DivergenceError(DistObsError):
    """Simulated network state exceeded the overflow guard."""

    def __init__(self, message, *, step):
        super().__init__(message)
        self.step = step
