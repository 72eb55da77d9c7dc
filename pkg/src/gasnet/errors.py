"""Exception types shared across the package."""


class GasnetError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(GasnetError):
    """Input document is malformed (bad JSON, missing keys, wrong types)."""


class ValidationError(GasnetError):
    """Input is well-formed but violates a model invariant.

    The ``kind`` attribute carries a short machine-readable tag such as
    ``"beta_nonpositive"`` or ``"unbalanced_component"``.
    """

    def __init__(self, kind: str, message: str = ""):
        self.kind = kind
        super().__init__(f"{kind}: {message}" if message else kind)


class DomainError(GasnetError):
    """Argument outside the mathematical domain of an operation."""


class NonConvergence(GasnetError):
    """Iterative solver exhausted its iteration budget."""

    def __init__(self, residual: float, iterations: int):
        self.residual = residual
        self.iterations = iterations
        super().__init__(
            f"no convergence after {iterations} iterations "
            f"(residual {residual:.3e})"
        )


class SizeLimit(GasnetError):
    """Instance exceeds the size cap of a brute-force routine."""


class DecodeError(GasnetError):
    """Stage potentials do not encode a valid gadget state."""


class NoFeasiblePoint(GasnetError):
    """Search finished without any start reaching feasibility."""


class ZeroFlow(GasnetError):
    """Even a vanishing flow violates the potential bounds (defensive)."""
