"""Exception hierarchy for the secure CRA ISAC simulator."""

from typing import Optional


class CraIsacError(Exception):
    """Base class for every error raised by this package."""


class DictionaryError(CraIsacError, ValueError):
    """Invalid EM dictionary construction or dimension mismatch."""


class SelectionError(CraIsacError, ValueError):
    """Selection matrix violates its binary or relaxed invariants."""


class ChannelError(CraIsacError, ValueError):
    """Invalid channel geometry, factor dimensions or scattering model."""


class ConicProgramError(CraIsacError, ValueError):
    """Malformed conic program (non-PSD kernel, inconsistent constraint sizes)."""


class DetectorError(CraIsacError, ValueError):
    """Invalid detector request, e.g. too few trials for the false-alarm grid."""


class OracleBudgetError(CraIsacError, ValueError):
    """Exhaustive search or dense materialization exceeds its size budget."""


class ConfigError(CraIsacError, ValueError):
    """Scenario document failed validation.

    Args:
        field_path: Dotted path of the offending field (e.g. ``algorithm.penalty_growth``)
        message: Human readable reason
    """

    def __init__(self, field_path: str, message: str) -> None:
        self.field_path = field_path
        super().__init__(f"{field_path}: {message}" if field_path else message)


class SubproblemInfeasibleError(CraIsacError):
    """A convex block update (or the feasibility phase) has no feasible point.

    Args:
        block: Name of the failing block (``feasibility``, ``fbb``, ``sf``, ``sw``)
        iteration: Outer iteration index at which the failure happened
        status: Solver status reported for the block
    """

    def __init__(self, block: str, iteration: int, status: Optional[str] = None) -> None:
        self.block = block
        self.iteration = iteration
        self.status = status
        detail = f" (status={status})" if status else ""
        super().__init__(f"{block} subproblem infeasible at outer iteration {iteration}{detail}")


class EigenSolveError(CraIsacError):
    """Generalized Hermitian eigen-solve for the combiner failed."""
