"""Exception types shared across the toolkit."""


class ContractError(ValueError):
    """An input violates a documented precondition (non-Hermitian, bad trace, ...)."""


class LayoutError(ContractError):
    """Matrix dimensions are inconsistent with the declared subsystem layout."""


class SingularOperator(ContractError):
    """A required inverse does not exist (an eigenvalue is numerically zero).

    Carries the offending eigenvalue so callers can surface it.
    """

    def __init__(self, message: str, eigenvalue: float | None = None):
        if eigenvalue is not None:
            message = f"{message} (offending eigenvalue {eigenvalue:.3e})"
        super().__init__(message)
        self.eigenvalue = eigenvalue


class AdmissibilityError(ContractError):
    """A perturbation strength is outside the admissible range of the Kraus family."""


class DegenerateChannel(ContractError):
    """A postselection probability is numerically zero; conditioned quantities undefined."""
