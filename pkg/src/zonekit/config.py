"""Numerical tolerances and cost conventions, overridable in one place."""

from dataclasses import dataclass, replace


@dataclass(frozen=True)
class Tolerances:
    #: a limited line counts as binding when |flow| >= limit - binding * max(1, limit)
    binding: float = 1e-6
    #: slack for dual/price comparisons and LP accounting identities
    dual: float = 1e-6
    #: generation above this threshold (MW) counts as "running"
    running: float = 1e-6
    #: PTDF coefficients within +/- sign of zero are treated as zero
    sign: float = 1e-9
    #: reference-independence comparisons for PTDF operators
    ref: float = 1e-9
    #: a zone split must lower average total cost by more than this to be accepted
    welfare: float = 1e-6
    #: cost charged per scenario when a partition strands a zone sub-problem
    infeasibility_penalty: float = 1e6

    def with_(self, **kwargs) -> "Tolerances":
        return replace(self, **kwargs)


DEFAULT_TOLERANCES = Tolerances()
