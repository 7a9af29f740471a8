"""Exception taxonomy shared across the package."""


class CommutreeError(Exception):
    """Base class for all library errors."""


class DegenerateSimplex(CommutreeError):
    """Simplex vertices do not affinely span (edge matrix rank deficient)."""


class DegenerateInput(CommutreeError):
    """Input polytope/program data is not full-dimensional."""


class PointOutside(CommutreeError):
    """Query point lies outside the simplex."""


class InadmissibleCommutation(CommutreeError):
    """Commutation has wrong length or violates structural constraints."""


class Exhausted(CommutreeError):
    """Enumeration/branch-and-bound budget hit before a conclusion."""


class InvalidInput(CommutreeError):
    """Arguments violate a documented precondition."""


class IterationCapExceeded(CommutreeError):
    """Partitioning loop hit its iteration cap."""


class ThetaExceedsFeasibleSet(CommutreeError):
    """The parameter set is not contained in the feasible parameter set.

    Carries a witness parameter at which the mixed-integer problem is
    infeasible.
    """

    def __init__(self, witness):
        super().__init__(f"parameter set not contained in feasible set; "
                         f"witness theta = {witness}")
        self.witness = witness


class RiccatiDivergence(CommutreeError):
    """Fixed-point Riccati iteration failed to converge."""


class NoInvariantBoxFound(CommutreeError):
    """No robust-invariant box found on the shrink schedule."""


class HorizonInfeasible(CommutreeError):
    """Assembled receding-horizon program infeasible at the region center."""


class OutsideTheta(CommutreeError):
    """Query point lies outside the partitioned region."""


class FormatError(CommutreeError):
    """Malformed serialized file."""

    def __init__(self, line, message):
        super().__init__(f"line {line}: {message}")
        self.line = line
