"""Shared exception types.

The solvers distinguish three failure classes, which the CLI maps to exit
codes: a run that leaves the ellipticity cone (DegeneracyError, exit 2), a
run that fails to converge or overflows (NumericalFailure, exit 3), and a
diagnostic that cannot be computed from the data at hand (DiagnosticError,
treated like a numerical failure by callers that cannot skip it).
"""


class DegeneracyError(ArithmeticError):
    """The eigenvalue vector left (or reached the boundary of) Gamma_k."""


class NumericalFailure(RuntimeError):
    """An iteration did not converge, or a trajectory blew up."""


class DiagnosticError(ValueError):
    """A post-processing diagnostic is underresolved on this grid."""
