"""Exception types shared across the package."""


class ContractViolation(ValueError):
    """An operation was called with inputs outside its documented domain."""


class SolverError(RuntimeError):
    """The semi-supervised graph solver could not make progress."""


class DataError(ValueError):
    """A dataset manifest or its referenced files are malformed."""


class NumericalFailure(FloatingPointError):
    """Training produced a non-finite loss component."""

    def __init__(self, component, value):
        super().__init__(f"non-finite loss component {component!r}: {value}")
        self.component = component
        self.value = value
