"""Exception hierarchy.

Two families matter to callers: :class:`ValidationError` covers malformed or
inconsistent inputs (CLI exit status 1), :class:`InfeasibleError` covers
configurations that are well-formed but cannot be realized, such as a cache
smaller than the working set (CLI exit status 2).
"""


class PlannerError(Exception):
    """Base class for all library errors."""


class ValidationError(PlannerError):
    """Invalid input data or arguments."""


class ProfileFormatError(ValidationError):
    """Malformed profile or plan file; the message names the offending field."""


class UncommonGraphError(ValidationError):
    """A single-use parameter is read by more than one coarse operator."""


class OracleLimitError(ValidationError):
    """Instance too large for the exhaustive replacement oracle."""


class InfeasibleError(PlannerError):
    """A requested configuration cannot be realized."""


class ChunkTooSmallError(InfeasibleError):
    """Chunk length below the largest parameter in the packing sequence."""


class InfeasibleCacheError(InfeasibleError):
    """Cache block count below the working set required by the trace."""


class NoFeasibleCandidateError(InfeasibleError):
    """No chunk-length candidate survives the packing preconditions."""


class BudgetInfeasibleError(InfeasibleError):
    """Memory budget below the working-set floor and no fallback requested."""
