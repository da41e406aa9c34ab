"""Exception hierarchy shared by all modules."""


class FloquetSpecError(Exception):
    """Base class for package errors."""


class SpecError(FloquetSpecError, ValueError):
    """Malformed or inconsistent operator description.

    ``field`` names the offending JSON field (dotted path) when known.
    """

    def __init__(self, message, field=None):
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)


class NumericalError(FloquetSpecError, ArithmeticError):
    """Base class for numerical failures (CLI exit code 2)."""


class StepSizeUnderflow(NumericalError):
    def __init__(self, t):
        self.t = t
        super().__init__(f"step size underflow at t={t!r} (coefficient blow-up?)")


class InternalConsistencyError(NumericalError):
    pass


class DefectiveExponents(NumericalError):
    """Exponent eigenvector matrix too ill-conditioned (near Jordan block).

    Callers may nudge lambda by ``1e-6`` and retry.
    """

    def __init__(self, lam, condition_number):
        self.lam = lam
        self.condition_number = condition_number
        super().__init__(
            f"defective exponents at lambda={lam!r}: eigenvector condition "
            f"number {condition_number:.3e}"
        )


class CriticalExponents(NumericalError):
    """Lambda lies on the continuous spectrum and no continuation branch is set."""


class TruncationError(NumericalError):
    def __init__(self, boundary_magnitude):
        self.boundary_magnitude = boundary_magnitude
        super().__init__(
            f"input does not decay at the truncation boundary "
            f"(relative magnitude {boundary_magnitude:.3e} > 1e-10)"
        )


class SeedOnSpectrum(NumericalError):
    def __init__(self, seed, margin):
        self.seed = seed
        self.margin = margin
        super().__init__(f"branch seed {seed!r} lies on a band (margin {margin:.3e})")


class BranchAmbiguity(NumericalError):
    def __init__(self, point, gap):
        self.point = point
        self.gap = gap
        super().__init__(f"multiplicator collision near lambda={point!r} (gap {gap:.3e})")


class OutsideContinuationRegion(NumericalError):
    def __init__(self, lam, violation):
        self.lam = lam
        self.violation = violation
        super().__init__(
            f"lambda={lam!r} is outside the branch continuation region "
            f"(exponent bound violated by {violation:.3e})"
        )


class ContourTooCoarse(NumericalError):
    def __init__(self, winding, nodes):
        self.winding = winding
        self.nodes = nodes
        super().__init__(f"non-integer winding {winding!r} with {nodes} contour nodes")


class UnsupportedOrder(FloquetSpecError, ValueError):
    pass
