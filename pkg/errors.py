"""Exception hierarchy for KPR Toolkit.

Every error carries the process exit code the CLI reports for it:
2 for configuration problems, 3 for numerical failures, 4 when a
verification check does not pass and 64 for command-line usage errors.
"""


class ToolkitError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 3


class ParameterError(ToolkitError, ValueError):
    """Raised when a parameter set violates its invariants."""

    exit_code = 2


class ConfigError(ToolkitError, ValueError):
    """Raised when a configuration file cannot be loaded or validated."""

    exit_code = 2


class StructureError(ToolkitError):
    """Raised when a reaction network lacks a reaction a computation needs."""


class NoRootError(ToolkitError):
    """Raised when a root-finding problem has no solution in the admissible range."""


class UnsupportedRegimeError(ToolkitError):
    """Raised when a formula is requested outside the regime where it applies."""


class AmbiguousRegimeError(ToolkitError):
    """Raised when a classification falls on a boundary within tolerance."""


class BranchCutError(ToolkitError):
    """Raised when a Laplace-domain quantity is evaluated on the branch segment."""


class EvaluationError(ToolkitError):
    """Raised when a closed form is evaluated too close to a pole or the cut."""


class DegenerateParameterError(ToolkitError):
    """Raised when a linear system is singular for the given parameters."""


class StiffnessError(ToolkitError):
    """Raised when a time integrator fails to advance."""


class TruncationError(ToolkitError):
    """Raised when a truncated lattice is too short for the requested run."""


class InversionError(ToolkitError):
    """Raised when numerical Laplace inversion does not converge."""


class StepError(ToolkitError):
    """Raised when a time step violates the CFL or positivity restriction."""


class TransportSignError(ToolkitError):
    """Raised when the transport velocity of a PDE limit has the wrong sign."""


class TrialAbortError(ToolkitError):
    """Raised when a Monte Carlo trial exceeds its event budget."""


class VerificationError(ToolkitError):
    """Raised when one or more acceptance checks fail."""

    exit_code = 4


class UsageError(ToolkitError, ValueError):
    """Raised for an unknown subcommand or a malformed command line."""

    exit_code = 64
